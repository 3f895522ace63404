"""Sum-product belief propagation, Bethe energies, and an exact oracle.

The Bethe free energy used everywhere is

    F(mu; theta) = <mu, theta> + H_B(mu)

with the pairwise entropy approximation

    H_B(mu) = sum_i (d_i - 1) sum_x mu_i(x) log mu_i(x)
            - sum_ij sum_xy mu_ij(x, y) log mu_ij(x, y),

which equals the exact entropy on trees, so F(mu*; theta) = log Z there.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InputError, NonConvergenceError, NumericalError
from .model import TableMarginals, as_table, dot

__all__ = [
    "BPOptions",
    "BPResult",
    "FixedPoint",
    "MultiRestartResult",
    "ExactResult",
    "sum_product",
    "message_update",
    "multi_restart_bp",
    "multi_restart_bp_many",
    "bethe_entropy",
    "bethe_free_energy",
    "bethe_log_partition",
    "exact_inference",
]

DEDUPE_TOL = 1e-4


@dataclass(frozen=True)
class BPOptions:
    max_iter: int = 10_000
    tol: float = 1e-10
    damping: float = 0.5  # fraction of the old message retained
    init: str = "uniform"  # "uniform" or "random"
    seed: int | None = None

    def __post_init__(self):
        if self.max_iter < 1:
            raise InputError(f"max_iter must be >= 1, got {self.max_iter}")
        if not self.tol > 0:
            raise InputError(f"tol must be positive, got {self.tol}")
        if not 0.0 <= self.damping < 1.0:
            raise InputError(f"damping must lie in [0, 1), got {self.damping}")
        if self.init not in ("uniform", "random"):
            raise InputError(f"init must be 'uniform' or 'random', got {self.init!r}")


@dataclass(frozen=True)
class BPResult:
    converged: bool
    iterations: int
    residual: float
    messages: np.ndarray  # (2*N_E, 2) linear, each row sums to 1
    beliefs: TableMarginals


@dataclass(frozen=True)
class FixedPoint:
    beliefs: TableMarginals
    free_energy: float
    restart_index: int  # 0 is always the uniform-init run
    result: BPResult


@dataclass(frozen=True)
class MultiRestartResult:
    fixed_points: list  # distinct FixedPoints, sorted by free energy descending
    run_residuals: np.ndarray
    run_converged: np.ndarray

    @property
    def best(self):
        return self.fixed_points[0] if self.fixed_points else None


@dataclass(frozen=True)
class ExactResult:
    log_partition: float
    marginals: TableMarginals


class _BPStructure:
    """Index arrays for vectorized message passing on a fixed graph.

    Directed edge 2e runs i -> j and 2e + 1 runs j -> i for canonical edge
    e = (i, j).  Directed edges are also kept in a head-sorted permutation so
    per-node incoming sums reduce with np.add.reduceat.
    """

    def __init__(self, graph):
        n, E = graph.num_nodes, graph.num_edges
        self.n = n
        self.E = E
        tail = np.empty(2 * E, dtype=np.intp)
        head = np.empty(2 * E, dtype=np.intp)
        for e, (i, j) in enumerate(graph.edges):
            tail[2 * e], head[2 * e] = i, j
            tail[2 * e + 1], head[2 * e + 1] = j, i
        self.tail = tail
        self.head = head
        self.rev = np.arange(2 * E, dtype=np.intp) ^ 1
        order = np.argsort(head, kind="stable")
        self.by_head = order
        deg = np.asarray(graph.degrees, dtype=np.intp)
        self.active_nodes = np.flatnonzero(deg > 0)
        starts = np.zeros(len(self.active_nodes), dtype=np.intp)
        if len(self.active_nodes) > 1:
            starts[1:] = np.cumsum(deg[self.active_nodes])[:-1]
        self.starts = starts

    def incoming_sums(self, logm):
        """Sum of incoming log-messages per node: (..., 2*E, 2) -> (..., n, 2)."""
        S = np.zeros(logm.shape[:-2] + (self.n, 2))
        if self.E:
            red = np.add.reduceat(logm[..., self.by_head, :], self.starts, axis=-2)
            S[..., self.active_nodes, :] = red
        return S


_structures = {}


def _structure(graph):
    key = id(graph)
    hit = _structures.get(key)
    if hit is None or hit[0] is not graph:
        _structures[key] = (graph, _BPStructure(graph))
        if len(_structures) > 64:
            _structures.pop(next(iter(_structures)))
    return _structures[key][1]


def _psi_directed(theta_edge, struct):
    """(..., 2*E, 2, 2) edge log-potentials oriented tail -> head.  Accepts a
    shared (E, 4) table or a per-chain (B, E, 4) stack."""
    te = theta_edge.reshape(theta_edge.shape[:-1] + (2, 2))
    psi = np.empty(theta_edge.shape[:-2] + (2 * struct.E, 2, 2))
    psi[..., 0::2, :, :] = te
    psi[..., 1::2, :, :] = np.swapaxes(te, -1, -2)
    return psi


def _update(logm, tn, psi, struct):
    """One undamped synchronous sweep in the log domain; rows normalized."""
    S = struct.incoming_sums(logm)
    a = tn[..., struct.tail, :] + S[..., struct.tail, :] - logm[..., struct.rev, :]
    t0 = a[..., 0, None] + psi[..., 0, :]
    t1 = a[..., 1, None] + psi[..., 1, :]
    u = np.logaddexp(t0, t1)
    return u - np.logaddexp(u[..., 0], u[..., 1])[..., None]


def _beliefs(logm, tn, te, struct):
    S = struct.incoming_sums(logm)
    bn = tn + S
    bn = bn - bn.max(axis=-1, keepdims=True)
    bn = np.exp(bn)
    bn /= bn.sum(axis=-1, keepdims=True)
    E = struct.E
    if E:
        ti = struct.tail[0::2]
        tj = struct.tail[1::2]
        excl_i = S[..., ti, :] - logm[..., 1::2, :]  # message j -> i removed
        excl_j = S[..., tj, :] - logm[..., 0::2, :]
        te2 = te.reshape(te.shape[:-1] + (2, 2))
        be = (
            te2
            + (tn[..., ti, :] + excl_i)[..., :, None]
            + (tn[..., tj, :] + excl_j)[..., None, :]
        )
        be = be.reshape(be.shape[:-2] + (4,))
        be -= be.max(axis=-1, keepdims=True)
        be = np.exp(be)
        be /= be.sum(axis=-1, keepdims=True)
    else:
        be = np.zeros(bn.shape[:-2] + (0, 4))
    return bn, be


def _run_chains(tn, te, graph, inits, opts):
    """Run B independent damped BP chains until each converges or max_iter.

    tn/te are a shared (n, 2)/(E, 4) pair or per-chain (B, n, 2)/(B, E, 4)
    stacks.  Convergence is measured on the undamped update distance, so a
    converged message set reproduces itself to within tol under one more
    sweep.  A converged chain leaves the working batch with exactly the
    messages its residual was measured on; every chain's trajectory is
    independent of which other chains share the batch.
    """
    struct = _structure(graph)
    per_chain = tn.ndim == 3
    psi = _psi_directed(te, struct)
    B = inits.shape[0]
    out_m = inits.copy()
    converged = np.zeros(B, dtype=bool)
    iters = np.zeros(B, dtype=int)
    resid = np.full(B, np.inf)
    lam = opts.damping
    if struct.E == 0:
        converged[:] = True
        iters[:] = 1
        resid[:] = 0.0
    else:
        alive = np.arange(B)
        m = out_m.copy()
        tn_a, psi_a = tn, psi
        for it in range(1, opts.max_iter + 1):
            logm = np.log(m)
            u = _update(logm, tn_a, psi_a, struct)
            if not np.all(np.isfinite(u)):
                raise NumericalError(f"belief propagation produced NaN/Inf at sweep {it}")
            unew = np.exp(u)
            r = np.abs(unew - m).max(axis=(1, 2))
            resid[alive] = r
            iters[alive] = it
            done = r <= opts.tol
            if done.any():
                converged[alive[done]] = True
                out_m[alive[done]] = m[done]
                keep = ~done
                alive = alive[keep]
                if alive.size == 0:
                    break
                m = (1.0 - lam) * unew[keep] + lam * m[keep]
                if per_chain:
                    tn_a = tn_a[keep]
                    psi_a = psi_a[keep]
            else:
                m = (1.0 - lam) * unew + lam * m
        if alive.size:
            out_m[alive] = m
    bn, be = _beliefs(np.log(out_m), tn, te, struct)
    return out_m, converged, iters, resid, bn, be


def _run_batch(theta, graph, inits, opts):
    out_m, conv, iters, resid, bn, be = _run_chains(
        theta.theta_node, theta.theta_edge, graph, inits, opts
    )
    return [
        BPResult(
            converged=bool(conv[b]),
            iterations=int(iters[b]),
            residual=float(resid[b]),
            messages=out_m[b].copy(),
            beliefs=TableMarginals(bn[b], be[b]),
        )
        for b in range(inits.shape[0])
    ]


def _uniform_init(graph):
    return np.full((2 * graph.num_edges, 2), 0.5)


def _random_init(graph, rng):
    m = rng.uniform(0.0, 1.0, size=(2 * graph.num_edges, 2))
    return m / m.sum(axis=1, keepdims=True)


def _check_model(theta, graph):
    if len(theta.theta_node) != graph.num_nodes or len(theta.theta_edge) != graph.num_edges:
        raise InputError(
            f"potentials sized ({len(theta.theta_node)} nodes, {len(theta.theta_edge)} edges) "
            f"do not match graph ({graph.num_nodes} nodes, {graph.num_edges} edges)"
        )


def sum_product(theta, graph, opts=None, init_messages=None):
    """Damped synchronous sum-product; returns a BPResult whether or not the
    message updates converged (check .converged)."""
    opts = opts or BPOptions()
    _check_model(theta, graph)
    if init_messages is not None:
        init = np.asarray(init_messages, dtype=float)
        if init.shape != (2 * graph.num_edges, 2):
            raise InputError(
                f"init_messages must have shape (2*N_E, 2) = {(2 * graph.num_edges, 2)}"
            )
        init = init / init.sum(axis=1, keepdims=True)
    elif opts.init == "uniform":
        init = _uniform_init(graph)
    else:
        rng = np.random.default_rng(opts.seed)
        init = _random_init(graph, rng)
    return _run_batch(theta, graph, init[None], opts)[0]


def message_update(theta, graph, messages):
    """One undamped synchronous sweep applied to a linear message array."""
    _check_model(theta, graph)
    struct = _structure(graph)
    psi = _psi_directed(theta.theta_edge, struct)
    u = _update(np.log(np.asarray(messages, dtype=float)), theta.theta_node, psi, struct)
    return np.exp(u)


def _belief_distance(a, b):
    dn = np.abs(a.mu_node - b.mu_node).max() if a.mu_node.size else 0.0
    de = np.abs(a.mu_edge - b.mu_edge).max() if a.mu_edge.size else 0.0
    return max(dn, de)


def _collect_fixed_points(results, theta, graph):
    """Score converged runs by Bethe free energy, dedupe beliefs closer than
    DEDUPE_TOL (best kept), and wrap into a MultiRestartResult."""
    scored = []
    for idx, res in enumerate(results):
        if res.converged:
            scored.append((idx, res, bethe_free_energy(res.beliefs, theta, graph)))
    scored.sort(key=lambda t: (-t[2], t[0]))
    distinct = []
    for idx, res, f in scored:
        if all(_belief_distance(res.beliefs, kept.beliefs) > DEDUPE_TOL for kept in distinct):
            distinct.append(FixedPoint(res.beliefs, f, idx, res))
    return MultiRestartResult(
        fixed_points=distinct,
        run_residuals=np.array([r.residual for r in results]),
        run_converged=np.array([r.converged for r in results]),
    )


def _restart_inits(graph, n_restarts, seed):
    rng = np.random.default_rng(seed)
    inits = [_uniform_init(graph)]
    for _ in range(n_restarts - 1):
        inits.append(_random_init(graph, rng))
    return inits


def multi_restart_bp(theta, graph, n_restarts=20, seed=0, opts=None, extra_inits=None):
    """BP from a uniform init plus seeded random restarts.

    Returns the distinct converged fixed points (belief L-inf distance above
    DEDUPE_TOL) annotated with their Bethe free energies, best first.  When
    nothing converges the fixed-point list is empty and the per-run residuals
    are still reported.
    """
    if n_restarts < 1:
        raise InputError(f"n_restarts must be >= 1, got {n_restarts}")
    opts = opts or BPOptions()
    _check_model(theta, graph)
    inits = _restart_inits(graph, n_restarts, seed)
    if extra_inits:
        inits.extend(np.asarray(x, dtype=float) for x in extra_inits)
    results = _run_batch(theta, graph, np.stack(inits), opts)
    return _collect_fixed_points(results, theta, graph)


def multi_restart_bp_many(thetas, graph, n_restarts=20, seed=0, opts=None):
    """multi_restart_bp for several parameter vectors on one graph, run as a
    single batched sweep loop.

    Every theta gets the same init set (uniform plus the seeded randoms), and
    each chain's trajectory is identical to the one the per-theta call
    produces, so the returned MultiRestartResults match multi_restart_bp
    exactly.  Batching only amortizes the per-sweep cost, which matters when
    many parameter vectors leave some restarts oscillating for the whole
    sweep budget.
    """
    if n_restarts < 1:
        raise InputError(f"n_restarts must be >= 1, got {n_restarts}")
    opts = opts or BPOptions()
    thetas = list(thetas)
    for theta in thetas:
        _check_model(theta, graph)
    if not thetas:
        return []
    inits = np.stack(_restart_inits(graph, n_restarts, seed))
    P, R = len(thetas), n_restarts
    tn = np.repeat(np.stack([t.theta_node for t in thetas]), R, axis=0)
    te = np.repeat(np.stack([t.theta_edge for t in thetas]), R, axis=0)
    out_m, conv, iters, resid, bn, be = _run_chains(
        tn, te, graph, np.tile(inits, (P, 1, 1)), opts
    )
    collected = []
    for p in range(P):
        results = [
            BPResult(
                converged=bool(conv[b]),
                iterations=int(iters[b]),
                residual=float(resid[b]),
                messages=out_m[b].copy(),
                beliefs=TableMarginals(bn[b], be[b]),
            )
            for b in range(p * R, (p + 1) * R)
        ]
        collected.append(_collect_fixed_points(results, thetas[p], graph))
    return collected


def _plogp(p):
    p = np.asarray(p, dtype=float)
    return np.where(p > 0.0, p * np.log(np.where(p > 0.0, p, 1.0)), 0.0)


def bethe_entropy(mu, graph):
    """Pairwise entropy approximation; exact on trees.  Zero table entries
    contribute zero."""
    table = as_table(mu, graph)
    for arr in (table.mu_node, table.mu_edge):
        if arr.size and arr.min() < -1e-9:
            raise InputError("marginals must be nonnegative")
    deg = np.asarray(graph.degrees, dtype=float)
    node_term = float(np.sum((deg - 1.0) * _plogp(table.mu_node).sum(axis=1)))
    edge_term = float(np.sum(_plogp(table.mu_edge)))
    return node_term - edge_term


def bethe_free_energy(mu, theta, graph):
    """F(mu; theta) = <mu, theta> + H_B(mu), both in the table representation."""
    _check_model(theta, graph)
    table = as_table(mu, graph)
    return dot(table, theta) + bethe_entropy(table, graph)


def bethe_log_partition(theta, graph, opts=None, n_restarts=20, seed=0):
    """Best-effort Bethe log-partition: the largest free energy over the BP
    fixed points found by multi-restart.  A lower bound on the true Bethe
    optimum, not on log Z."""
    mr = multi_restart_bp(theta, graph, n_restarts=n_restarts, seed=seed, opts=opts)
    if not mr.fixed_points:
        raise NonConvergenceError(
            "no BP run converged; increase damping (e.g. --damping 0.9) or max_iter"
        )
    return mr.fixed_points[0].free_energy


_EXACT_LIMIT = 24
_CHUNK_BITS = 20


def exact_inference(theta, graph):
    """Brute-force partition function and marginals by enumerating all
    2**N_V assignments (N_V <= 24).  Serves as the ground-truth oracle."""
    _check_model(theta, graph)
    n = graph.num_nodes
    if n > _EXACT_LIMIT:
        raise InputError(f"exact inference supports at most {_EXACT_LIMIT} nodes, got {n}")
    tn, te = theta.theta_node, theta.theta_edge
    edges = np.array([e for e in graph.edges], dtype=np.intp).reshape(-1, 2)
    total = 1 << n
    chunk = min(total, 1 << _CHUNK_BITS)
    bit_ids = np.arange(n)

    def chunks():
        for lo in range(0, total, chunk):
            ids = np.arange(lo, min(lo + chunk, total), dtype=np.int64)
            bits = (ids[:, None] >> bit_ids) & 1  # (B, n)
            logw = bits @ tn[:, 1] + (1 - bits) @ tn[:, 0]
            for e, (i, j) in enumerate(edges):
                logw += te[e, 2 * bits[:, i] + bits[:, j]]
            yield bits, logw

    gmax = -np.inf
    for _, logw in chunks():
        gmax = max(gmax, float(logw.max()))
    z_rel = 0.0
    node_acc = np.zeros(n)
    edge_acc = np.zeros((len(edges), 4))
    for bits, logw in chunks():
        w = np.exp(logw - gmax)
        z_rel += float(w.sum())
        node_acc += w @ bits
        for e, (i, j) in enumerate(edges):
            idx = 2 * bits[:, i] + bits[:, j]
            edge_acc[e] += np.bincount(idx, weights=w, minlength=4)
    log_z = gmax + float(np.log(z_rel))
    p1 = node_acc / z_rel
    mu_node = np.column_stack([1.0 - p1, p1])
    mu_edge = edge_acc / z_rel
    if len(edges) == 0:
        mu_edge = np.zeros((0, 4))
    return ExactResult(log_partition=log_z, marginals=TableMarginals(mu_node, mu_edge))
