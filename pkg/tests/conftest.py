"""Shared fixtures and generators for the test suite."""

import numpy as np
import pytest

from bethelearn import Graph, MinimalMarginals, message_update


@pytest.fixture
def torus33():
    from bethelearn import torus

    return torus(3, 3)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_tree(n, rng):
    """Uniform-ish random labelled tree: node i attaches to a random earlier node."""
    edges = [(int(rng.integers(0, i)), i) for i in range(1, n)]
    return Graph.from_edges(n, edges)


def random_interior_marginals(graph, rng, margin=0.02):
    """Minimal marginals whose four table entries all stay >= margin per edge."""
    mu_v = rng.uniform(0.3, 0.7, size=graph.num_nodes)
    mu_e = np.empty(graph.num_edges)
    for e, (i, j) in enumerate(graph.edges):
        lo = max(0.0, mu_v[i] + mu_v[j] - 1.0) + margin
        hi = min(mu_v[i], mu_v[j]) - margin
        mu_e[e] = rng.uniform(lo, hi)
    return MinimalMarginals(mu_v, mu_e)


def random_potentials(graph, rng, scale=2.0):
    from bethelearn import TablePotentials

    return TablePotentials(
        rng.uniform(-scale, scale, size=(graph.num_nodes, 2)),
        rng.uniform(-scale, scale, size=(graph.num_edges, 4)),
    )


def assert_fixed_point(theta, graph, messages, tol):
    """A converged message set must reproduce itself under one more sweep."""
    updated = message_update(theta, graph, messages)
    gap = np.abs(updated - messages).max() if messages.size else 0.0
    assert gap <= tol, f"fixed point violated: one sweep moved messages by {gap:.3e}"
