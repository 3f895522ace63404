"""Parameter and marginal representations for binary pairwise models.

Two marginal forms are used throughout:

* table form: per-node distributions (p(0), p(1)) and per-edge tables in
  the fixed entry order (0,0), (0,1), (1,0), (1,1);
* minimal form: one number per node, mu_i = p(x_i = 1), and one per edge,
  mu_ij = p(x_i = 1, x_j = 1).

The minimal form determines the table form through the identities
p(1,0) = mu_i - mu_ij, p(0,1) = mu_j - mu_ij, p(0,0) = 1 - mu_i - mu_j + mu_ij,
so the local polytope reduces to mu_ij >= 0, mu_ij <= mu_i, mu_ij <= mu_j,
and 1 - mu_i - mu_j + mu_ij >= 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .exceptions import BoundaryMarginalError, GraphFileError, InputError, PolytopeError
from .graphs import Graph, graph_from_obj, load_graph

__all__ = [
    "TablePotentials",
    "IsingPotentials",
    "MinimalMarginals",
    "TableMarginals",
    "homogeneous_marginals",
    "convert_marginals",
    "in_local_polytope",
    "canonical_parameters",
    "table_to_ising",
    "ising_to_table",
    "zero_potentials",
    "dot",
    "load_model",
    "save_model",
    "load_marginals",
    "save_marginals",
]

# Slack used when validating polytope inequalities that may be hit exactly,
# e.g. mu_e = 2*mu_v - 1 evaluated in floats.
_EDGE_EPS = 1e-12


def _as_array(x, shape_hint, name):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class TablePotentials:
    """Log-potentials: theta_node is (N_V, 2), theta_edge is (N_E, 4)."""

    theta_node: np.ndarray
    theta_edge: np.ndarray

    def __post_init__(self):
        tn = _as_array(self.theta_node, 2, "theta_node")
        te = _as_array(self.theta_edge, 2, "theta_edge")
        if tn.ndim != 2 or tn.shape[1] != 2:
            raise InputError(f"theta_node must have shape (N_V, 2), got {tn.shape}")
        if te.ndim != 2 or te.shape[1] != 4:
            raise InputError(f"theta_edge must have shape (N_E, 4), got {te.shape}")
        object.__setattr__(self, "theta_node", tn)
        object.__setattr__(self, "theta_edge", te)


@dataclass(frozen=True)
class IsingPotentials:
    """Spin form: energy sum_i h_i s_i + sum_ij J_ij s_i s_j with s = 2x - 1."""

    field: np.ndarray
    coupling: np.ndarray

    def __post_init__(self):
        h = _as_array(self.field, 1, "field")
        j = _as_array(self.coupling, 1, "coupling")
        if h.ndim != 1 or j.ndim != 1:
            raise InputError("field and coupling must be one-dimensional")
        object.__setattr__(self, "field", h)
        object.__setattr__(self, "coupling", j)


@dataclass(frozen=True)
class MinimalMarginals:
    """mu_node[i] = p(x_i = 1), mu_edge[e] = p(x_i = 1, x_j = 1).

    Values are only meaningful inside the local polytope; membership is
    checked by the operations that require it (see in_local_polytope), so
    out-of-polytope instances can be constructed and then rejected.
    """

    mu_node: np.ndarray
    mu_edge: np.ndarray

    def __post_init__(self):
        mn = _as_array(self.mu_node, 1, "mu_node")
        me = _as_array(self.mu_edge, 1, "mu_edge")
        if mn.ndim != 1 or me.ndim != 1:
            raise InputError("mu_node and mu_edge must be one-dimensional")
        object.__setattr__(self, "mu_node", mn)
        object.__setattr__(self, "mu_edge", me)


@dataclass(frozen=True)
class TableMarginals:
    """Per-node and per-edge distributions; each row sums to one.

    Cross-edge consistency (edge tables marginalizing to node vectors)
    depends on the graph and is not enforced here; converged BP beliefs
    satisfy it, freshly initialized or non-converged ones need not.
    """

    mu_node: np.ndarray
    mu_edge: np.ndarray

    def __post_init__(self):
        mn = _as_array(self.mu_node, 2, "mu_node")
        me = _as_array(self.mu_edge, 2, "mu_edge")
        if mn.ndim != 2 or mn.shape[1] != 2:
            raise InputError(f"mu_node must have shape (N_V, 2), got {mn.shape}")
        if me.ndim != 2 or me.shape[1] != 4:
            raise InputError(f"mu_edge must have shape (N_E, 4), got {me.shape}")
        if mn.size and mn.min() < -1e-9 or me.size and me.min() < -1e-9:
            raise InputError("table marginals must be nonnegative")
        if (mn.size and np.abs(mn.sum(axis=1) - 1.0).max() > 1e-8) or (
            me.size and np.abs(me.sum(axis=1) - 1.0).max() > 1e-8
        ):
            raise InputError("each marginal table must sum to 1")
        object.__setattr__(self, "mu_node", np.maximum(mn, 0.0))
        object.__setattr__(self, "mu_edge", np.maximum(me, 0.0))


def _check_sizes(n_node, n_edge, graph, what):
    if n_node != graph.num_nodes or n_edge != graph.num_edges:
        raise InputError(
            f"{what} sized ({n_node} nodes, {n_edge} edges) does not match graph "
            f"({graph.num_nodes} nodes, {graph.num_edges} edges)"
        )


def homogeneous_marginals(graph, mu_v, mu_e):
    """Constant marginals (mu_v per node, mu_e per edge), validated against
    the polytope: 0 <= mu_e, mu_e <= mu_v, mu_e >= 2*mu_v - 1."""
    if not 0.0 <= mu_v <= 1.0:
        raise PolytopeError(f"mu_v must lie in [0, 1], got {mu_v}")
    if mu_e < -_EDGE_EPS:
        raise PolytopeError(f"violated mu_e >= 0: mu_e = {mu_e}")
    if mu_e > mu_v + _EDGE_EPS:
        raise PolytopeError(f"violated mu_e <= mu_v: mu_e = {mu_e}, mu_v = {mu_v}")
    if mu_e < 2.0 * mu_v - 1.0 - _EDGE_EPS:
        raise PolytopeError(
            f"violated mu_e >= 2*mu_v - 1: mu_e = {mu_e}, 2*mu_v - 1 = {2 * mu_v - 1}"
        )
    return MinimalMarginals(
        np.full(graph.num_nodes, float(mu_v)), np.full(graph.num_edges, float(mu_e))
    )


def in_local_polytope(mu, graph, tol=0.0):
    """True when every polytope inequality holds with slack >= -tol."""
    if isinstance(mu, TableMarginals):
        mu = table_to_minimal(mu, graph)
    _check_sizes(len(mu.mu_node), len(mu.mu_edge), graph, "marginals")
    mn, me = mu.mu_node, mu.mu_edge
    if mn.size and (mn.min() < -tol or mn.max() > 1.0 + tol):
        return False
    for e, (i, j) in enumerate(graph.edges):
        if me[e] < -tol:
            return False
        if me[e] > min(mn[i], mn[j]) + tol:
            return False
        if 1.0 - mn[i] - mn[j] + me[e] < -tol:
            return False
    return True


def minimal_to_table(mu, graph):
    _check_sizes(len(mu.mu_node), len(mu.mu_edge), graph, "marginals")
    mn, me = mu.mu_node, mu.mu_edge
    ei = np.array([e for e in graph.edges], dtype=int).reshape(-1, 2)
    node = np.column_stack([1.0 - mn, mn])
    if graph.num_edges:
        mi = mn[ei[:, 0]]
        mj = mn[ei[:, 1]]
        edge = np.column_stack([1.0 - mi - mj + me, mj - me, mi - me, me])
    else:
        edge = np.zeros((0, 4))
    worst = min(node.min() if node.size else 0.0, edge.min() if edge.size else 0.0)
    if worst < -1e-9:
        raise PolytopeError(f"marginals violate the local polytope (entry {worst:.3e} < 0)")
    # boundary values can come out as tiny negatives in floats
    return TableMarginals(np.maximum(node, 0.0), np.maximum(edge, 0.0))


def table_to_minimal(mu, graph):
    _check_sizes(len(mu.mu_node), len(mu.mu_edge), graph, "marginals")
    return MinimalMarginals(mu.mu_node[:, 1].copy(), mu.mu_edge[:, 3].copy())


def convert_marginals(mu, graph):
    """Round-trip between minimal and table forms (direction inferred from type)."""
    if isinstance(mu, MinimalMarginals):
        return minimal_to_table(mu, graph)
    if isinstance(mu, TableMarginals):
        return table_to_minimal(mu, graph)
    raise InputError(f"cannot convert marginals of type {type(mu).__name__}")


def as_table(mu, graph):
    return mu if isinstance(mu, TableMarginals) else minimal_to_table(mu, graph)


def as_minimal(mu, graph):
    return mu if isinstance(mu, MinimalMarginals) else table_to_minimal(mu, graph)


def canonical_parameters(mu, graph, eps_interior=1e-9):
    """Parameters whose node potentials are log node marginals and whose edge
    potentials are the log pairwise-to-product ratios.

    On a tree these are the exact maximum-likelihood parameters for mu; on
    any graph, mu is a fixed point of belief propagation for them.  Requires
    every table entry to be at least eps_interior away from zero.
    """
    table = as_table(mu, graph)
    mn, me = table.mu_node, table.mu_edge
    bad = np.argwhere(mn < eps_interior)
    if bad.size:
        i, x = bad[0]
        raise BoundaryMarginalError(
            f"node {i} state {x} has marginal {mn[i, x]:.3e} < eps_interior={eps_interior}"
        )
    bad = np.argwhere(me < eps_interior)
    if bad.size:
        e, k = bad[0]
        i, j = graph.edges[e]
        raise BoundaryMarginalError(
            f"edge ({i}, {j}) entry ({k // 2}, {k % 2}) has marginal "
            f"{me[e, k]:.3e} < eps_interior={eps_interior}"
        )
    theta_node = np.log(mn)
    ei = np.array([e for e in graph.edges], dtype=int).reshape(-1, 2)
    if graph.num_edges:
        pi = mn[ei[:, 0]]  # (E, 2)
        pj = mn[ei[:, 1]]
        prod = np.column_stack(
            [pi[:, 0] * pj[:, 0], pi[:, 0] * pj[:, 1], pi[:, 1] * pj[:, 0], pi[:, 1] * pj[:, 1]]
        )
        theta_edge = np.log(me) - np.log(prod)
    else:
        theta_edge = np.zeros((0, 4))
    return TablePotentials(theta_node, theta_edge)


def table_to_ising(theta, graph):
    """Project table potentials onto the spin basis s = 2x - 1.

    The coupling of edge (i, j) is the coefficient of s_i * s_j,
    J = (theta(1,1) + theta(0,0) - theta(0,1) - theta(1,0)) / 4, and the
    per-node field collects the node term plus the linear edge remainders,
    so the represented distribution is unchanged up to a constant shift of
    the exponent.
    """
    _check_sizes(len(theta.theta_node), len(theta.theta_edge), graph, "potentials")
    tn, te = theta.theta_node, theta.theta_edge
    h = 0.5 * (tn[:, 1] - tn[:, 0])
    coupling = 0.25 * (te[:, 3] + te[:, 0] - te[:, 1] - te[:, 2])
    # linear-in-s_i and linear-in-s_j remainders of each edge table
    ui = 0.25 * (te[:, 2] + te[:, 3] - te[:, 0] - te[:, 1])
    uj = 0.25 * (te[:, 1] + te[:, 3] - te[:, 0] - te[:, 2])
    for e, (i, j) in enumerate(graph.edges):
        h[i] += ui[e]
        h[j] += uj[e]
    return IsingPotentials(h, coupling)


def ising_to_table(ising, graph):
    """Inverse embedding of spin parameters as table potentials (constant-free)."""
    _check_sizes(len(ising.field), len(ising.coupling), graph, "potentials")
    h, J = ising.field, ising.coupling
    theta_node = np.column_stack([-h, h])
    theta_edge = np.column_stack([J, -J, -J, J])
    return TablePotentials(theta_node, theta_edge)


def zero_potentials(graph):
    return TablePotentials(np.zeros((graph.num_nodes, 2)), np.zeros((graph.num_edges, 4)))


def dot(mu_table, theta):
    """Full-table inner product <mu, theta>."""
    return float(
        np.sum(mu_table.mu_node * theta.theta_node) + np.sum(mu_table.mu_edge * theta.theta_edge)
    )


# ---------------------------------------------------------------------------
# file formats


def load_model(path):
    """Model file: {"graph": <inline graph or path>, "theta_node": [[..2]],
    "theta_edge": [[..4]]}.  Returns (graph, TablePotentials)."""
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise GraphFileError(f"{path}: parse error at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise GraphFileError(f"{path}: expected a JSON object")
    for key in ("graph", "theta_node", "theta_edge"):
        if key not in obj:
            raise GraphFileError(f"{path}: missing required key {key!r}")
    g = obj["graph"]
    graph = load_graph(g) if isinstance(g, str) else graph_from_obj(g, path)
    theta = TablePotentials(obj["theta_node"], obj["theta_edge"])
    _check_sizes(len(theta.theta_node), len(theta.theta_edge), graph, f"{path}: potentials")
    return graph, theta


def save_model(graph, theta, path):
    obj = {
        "graph": {"num_nodes": graph.num_nodes, "edges": [list(e) for e in graph.edges]},
        "theta_node": theta.theta_node.tolist(),
        "theta_edge": theta.theta_edge.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(obj, fh)
        fh.write("\n")


def load_marginals(path, graph):
    """Marginals file holds the minimal form: {"mu_node": [..], "mu_edge": [..]}."""
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise GraphFileError(f"{path}: parse error at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(obj, dict) or "mu_node" not in obj or "mu_edge" not in obj:
        raise GraphFileError(f"{path}: expected an object with mu_node and mu_edge")
    mu = MinimalMarginals(obj["mu_node"], obj["mu_edge"])
    _check_sizes(len(mu.mu_node), len(mu.mu_edge), graph, f"{path}: marginals")
    return mu


def save_marginals(mu, path):
    mu_min = mu if isinstance(mu, MinimalMarginals) else None
    if mu_min is None:
        raise InputError("save_marginals expects minimal-form marginals")
    with open(path, "w") as fh:
        json.dump({"mu_node": mu_min.mu_node.tolist(), "mu_edge": mu_min.mu_edge.tolist()}, fh)
        fh.write("\n")
