"""Bethe maximum-likelihood fitting and homogeneous grid analysis.

The Bethe likelihood of parameters theta for target marginals mu_bar is
<mu_bar, theta> - F(theta), with F(theta) the maximal Bethe free energy.
It is concave, and a supergradient at theta is mu_bar - mu_BP(theta) where
mu_BP is a maximizing BP fixed point, which motivates plain subgradient
ascent on theta.  The target is learnable in the Bethe sense exactly when
ascent can drive the moment residual to zero with a unique maximizer.

For homogeneous parameters (constant field h and coupling J in the spin
convention s = 2x - 1) and homogeneous marginals, the free energy restricted
to constant marginals is a two-variable function that can be maximized on a
dense grid; on node- and edge-transitive graphs this grid oracle tracks the
unrestricted optimum and provides an independent check on BP.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import InputError, NonConvergenceError, PolytopeError
from .inference import (
    BPOptions,
    FixedPoint,
    bethe_free_energy,
    bethe_log_partition,
    multi_restart_bp,
    sum_product,
)
from .model import (
    IsingPotentials,
    MinimalMarginals,
    TablePotentials,
    as_minimal,
    as_table,
    canonical_parameters,
    dot,
    in_local_polytope,
    ising_to_table,
    minimal_to_table,
)

__all__ = [
    "LearnOptions",
    "LearnTrace",
    "MomentMatchResult",
    "ThetaGrid",
    "Figure1Result",
    "bethe_likelihood",
    "learn_subgradient",
    "moment_matching_check",
    "homogeneous_potentials",
    "homogeneous_region_grid",
    "homogeneous_surface",
    "homogeneous_grid_argmax",
    "figure1_search",
    "hull_distance",
]


@dataclass(frozen=True)
class LearnOptions:
    step0: float = 0.1
    schedule: str = "inv_sqrt"  # or "constant"
    max_iter: int = 500
    match_tol: float = 0.01
    bp_opts: BPOptions = BPOptions()
    warm_start: bool = True
    cold_restart_every: int = 25  # full multi-restart cadence under warm starts
    n_restarts: int = 20
    seed: int = 0
    stall_window: int = 50
    stall_tol: float = 1e-9

    def __post_init__(self):
        if self.schedule not in ("inv_sqrt", "constant"):
            raise InputError(f"schedule must be 'inv_sqrt' or 'constant', got {self.schedule!r}")
        if self.step0 <= 0:
            raise InputError(f"step0 must be positive, got {self.step0}")
        if self.max_iter < 1:
            raise InputError(f"max_iter must be >= 1, got {self.max_iter}")


@dataclass(frozen=True)
class LearnTrace:
    records: list  # (iteration, likelihood estimate, moment residual)
    final_theta: TablePotentials
    status: str  # matched | stalled | max_iter

    @property
    def final_residual(self):
        return self.records[-1][2] if self.records else math.inf


@dataclass(frozen=True)
class MomentMatchResult:
    matched: bool
    residual: float
    top_multiplicity: int  # fixed points tied for the best free energy


def _table_residual(a, b):
    dn = np.abs(a.mu_node - b.mu_node).max() if a.mu_node.size else 0.0
    de = np.abs(a.mu_edge - b.mu_edge).max() if a.mu_edge.size else 0.0
    return float(max(dn, de))


def bethe_likelihood(theta, mu_bar, graph, opts=None, n_restarts=20, seed=0):
    """<mu_bar, theta> - F(theta) with F estimated by multi-restart BP.

    Underestimating F overestimates the likelihood, so treat the value as an
    upper-bound estimate."""
    table = as_table(mu_bar, graph)
    return dot(table, theta) - bethe_log_partition(
        theta, graph, opts=opts, n_restarts=n_restarts, seed=seed
    )


def _top_fixed_point(theta, graph, opts, warm_messages, iterate):
    """Best-known BP fixed point at theta; warm single run when allowed,
    falling back to a full multi-restart."""
    if warm_messages is not None:
        res = sum_product(theta, graph, opts.bp_opts, init_messages=warm_messages)
        if res.converged:
            f = bethe_free_energy(res.beliefs, theta, graph)
            return FixedPoint(res.beliefs, f, -1, res)
    mr = multi_restart_bp(
        theta, graph, n_restarts=opts.n_restarts, seed=opts.seed, opts=opts.bp_opts
    )
    if not mr.fixed_points:
        raise NonConvergenceError(
            f"belief propagation found no fixed point at ascent iterate {iterate}"
        )
    return mr.fixed_points[0]


def learn_subgradient(mu_bar, graph, opts=None, initial_bp=None):
    """Subgradient ascent on the Bethe likelihood from the canonical start.

    theta_{t+1} = theta_t + eta_t (mu_bar - mu_BP(theta_t)) in full table
    coordinates, where mu_BP is the best fixed point found at theta_t.  Stops
    as matched once the residual reaches match_tol, as stalled when the best
    residual stops improving, else runs out the iteration budget.

    initial_bp, when given, must be a multi_restart_bp result for the
    canonical parameters of mu_bar under the same restart schedule as opts;
    it replaces the BP run of iteration zero.
    """
    opts = opts or LearnOptions()
    mu_bar = as_minimal(mu_bar, graph)
    if not in_local_polytope(mu_bar, graph, tol=1e-9):
        raise PolytopeError("target marginals lie outside the local polytope")
    target = minimal_to_table(mu_bar, graph)
    theta = canonical_parameters(mu_bar, graph)
    warm = None
    records = []
    status = "max_iter"
    best = math.inf
    last_improve = 0
    for t in range(opts.max_iter):
        cold = (
            not opts.warm_start
            or warm is None
            or (opts.cold_restart_every > 0 and t % opts.cold_restart_every == 0)
        )
        if t == 0 and initial_bp is not None:
            if not initial_bp.fixed_points:
                raise NonConvergenceError(
                    "belief propagation found no fixed point at ascent iterate 0"
                )
            top = initial_bp.fixed_points[0]
        else:
            top = _top_fixed_point(theta, graph, opts, None if cold else warm, t)
        warm = top.result.messages
        residual = _table_residual(target, top.beliefs)
        likelihood = dot(target, theta) - top.free_energy
        records.append((t, likelihood, residual))
        if residual <= opts.match_tol:
            status = "matched"
            break
        if residual < best - opts.stall_tol:
            best = residual
            last_improve = t
        elif t - last_improve >= opts.stall_window:
            status = "stalled"
            break
        eta = opts.step0 / math.sqrt(t + 1.0) if opts.schedule == "inv_sqrt" else opts.step0
        theta = TablePotentials(
            theta.theta_node + eta * (target.mu_node - top.beliefs.mu_node),
            theta.theta_edge + eta * (target.mu_edge - top.beliefs.mu_edge),
        )
    return LearnTrace(records=records, final_theta=theta, status=status)


def moment_matching_check(theta, mu_bar, graph, tol=0.01, n_restarts=20, seed=0,
                          opts=None, tie_margin=1e-6, bp=None):
    """Moment matching holds when the best BP fixed point of theta reproduces
    mu_bar within tol AND no other found fixed point ties its free energy;
    a tie means the Bethe optimum is not unique at theta.

    bp, when given, must be a precomputed multi_restart_bp result for theta;
    the restart arguments are then ignored.
    """
    target = as_table(mu_bar, graph)
    mr = bp if bp is not None else multi_restart_bp(
        theta, graph, n_restarts=n_restarts, seed=seed, opts=opts
    )
    if not mr.fixed_points:
        raise NonConvergenceError("no BP fixed point found while checking moment matching")
    top = mr.fixed_points[0]
    residual = _table_residual(target, top.beliefs)
    ties = sum(1 for fp in mr.fixed_points if fp.free_energy >= top.free_energy - tie_margin)
    return MomentMatchResult(matched=residual < tol and ties == 1, residual=residual,
                             top_multiplicity=ties)


# ---------------------------------------------------------------------------
# homogeneous grid oracle


def homogeneous_potentials(graph, h, J):
    """Constant spin-form parameters embedded as table potentials."""
    return ising_to_table(
        IsingPotentials(np.full(graph.num_nodes, float(h)), np.full(graph.num_edges, float(J))),
        graph,
    )


def _plogp(p):
    return np.where(p > 0.0, p * np.log(np.where(p > 0.0, p, 1.0)), 0.0)


def homogeneous_region_grid(resolution):
    """All grid points (multiples of resolution) of the homogeneous marginal
    region 0 <= mu_e <= mu_v, mu_e >= 2 mu_v - 1, grouped by mu_v.

    Returns (mu_v values per group, flat mu_v, flat mu_e, group start offsets).
    """
    if not 0.0 < resolution <= 0.05:
        raise InputError(f"resolution must lie in (0, 0.05], got {resolution}")
    kmax = int(math.floor(1.0 / resolution + 1e-9))
    mv_vals = []
    mv_flat = []
    me_flat = []
    starts = []
    for k in range(kmax + 1):
        mv = k * resolution
        lo = max(0.0, 2.0 * mv - 1.0)
        jlo = int(math.ceil(lo / resolution - 1e-9))
        jhi = int(math.floor(mv / resolution + 1e-9))
        if jhi < jlo:
            continue
        starts.append(len(mv_flat))
        mv_vals.append(mv)
        for j in range(jlo, jhi + 1):
            mv_flat.append(mv)
            me_flat.append(j * resolution)
    return (
        np.array(mv_vals),
        np.array(mv_flat),
        np.array(me_flat),
        np.array(starts, dtype=np.intp),
    )


def _homogeneous_entropy(graph, mv, me):
    """Bethe entropy of homogeneous marginals, vectorized over grid arrays."""
    n, E = graph.num_nodes, graph.num_edges
    sv = _plogp(mv) + _plogp(1.0 - mv)
    p10 = np.maximum(mv - me, 0.0)
    p00 = np.maximum(1.0 - 2.0 * mv + me, 0.0)
    se = _plogp(me) + 2.0 * _plogp(p10) + _plogp(p00)
    return (2.0 * E - n) * sv - E * se


def homogeneous_free_energy(graph, h, J, mv, me):
    """F restricted to homogeneous marginals, in spin-form parameters:
    <mu, theta> = N_V h (2 mu_v - 1) + N_E J (1 - 4 mu_v + 4 mu_e)."""
    n, E = graph.num_nodes, graph.num_edges
    mv = np.asarray(mv, dtype=float)
    me = np.asarray(me, dtype=float)
    return (
        n * h * (2.0 * mv - 1.0)
        + E * J * (1.0 - 4.0 * mv + 4.0 * me)
        + _homogeneous_entropy(graph, mv, me)
    )


def homogeneous_surface(graph, h, J, resolution):
    """(flat mu_v, flat mu_e, F) over the homogeneous region grid."""
    _, mv, me, _ = homogeneous_region_grid(resolution)
    return mv, me, homogeneous_free_energy(graph, h, J, mv, me)


def homogeneous_grid_argmax(theta_h, graph, resolution):
    """Grid-local maxima of the homogeneous free energy surface.

    theta_h is the (h, J) pair.  Returns (mu_v, mu_e, F) triples sorted by F
    descending, so the first entry is the global grid maximum.  A cell is a
    local maximum when no valid 8-neighbor exceeds it.
    """
    h, J = theta_h
    mv, me, F = homogeneous_surface(graph, h, J, resolution)
    kmax = int(math.floor(1.0 / resolution + 1e-9))
    iv = np.rint(mv / resolution).astype(np.intp)
    je = np.rint(me / resolution).astype(np.intp)
    dense = np.full((kmax + 1, kmax + 1), -np.inf)
    dense[iv, je] = F
    padded = np.pad(dense, 1, constant_values=-np.inf)
    is_max = np.ones_like(dense, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            nb = padded[1 + di : kmax + 2 + di, 1 + dj : kmax + 2 + dj]
            is_max &= dense >= nb
    mask = is_max[iv, je]
    out = [(float(mv[k]), float(me[k]), float(F[k])) for k in np.flatnonzero(mask)]
    out.sort(key=lambda t: -t[2])
    return out


# ---------------------------------------------------------------------------
# exhaustive homogeneous-parameter search backing the figure1 command


@dataclass(frozen=True)
class ThetaGrid:
    h_min: float = -1.0
    h_max: float = 1.0
    j_min: float = 0.0
    j_max: float = 1.5
    resolution: float = 0.01


@dataclass(frozen=True)
class Figure1Result:
    theta_b: tuple  # (h, J) maximizing the Bethe likelihood over the grid
    maximizers: list  # (mu_v, mu_e, F) global maxima of F(.; theta_b)
    hull_contains_mu: bool
    hull_dist: float
    f_max: float
    f_at_mu: float
    likelihood: float
    surface: tuple  # (flat mu_v, flat mu_e, F at theta_b)


def _axis(lo, hi, res):
    n = int(round((hi - lo) / res))
    return lo + res * np.arange(n + 1)


def figure1_search(mu_bar, graph, theta_grid=None, mu_resolution=0.002,
                   f_tol=1e-6, hull_tol=0.02):
    """Exhaustive homogeneous-parameter fit of homogeneous target marginals.

    Scans the (h, J) grid for the Bethe-likelihood maximizer theta_B (inner
    free-energy maximization on the homogeneous marginal grid), then reports
    every global maximizer of F(.; theta_B) and whether mu_bar lies in their
    convex hull.  An unlearnable target shows multiple maximizers straddling
    mu_bar; a learnable one is itself the (single) maximizer.
    """
    grid = theta_grid or ThetaGrid()
    if isinstance(mu_bar, tuple):
        mv_bar, me_bar = map(float, mu_bar)
    else:
        mm = as_minimal(mu_bar, graph)
        if np.ptp(mm.mu_node) > 1e-12 or np.ptp(mm.mu_edge) > 1e-12:
            raise InputError("figure1_search requires homogeneous target marginals")
        mv_bar = float(mm.mu_node[0])
        me_bar = float(mm.mu_edge[0])
    if not (0.0 < mv_bar < 1.0) or not (0.0 < me_bar < mv_bar) or (
        1.0 - 2.0 * mv_bar + me_bar <= 0.0
    ):
        raise PolytopeError(
            f"target (mu_v={mv_bar}, mu_e={me_bar}) must be interior to the polytope"
        )
    n, E = graph.num_nodes, graph.num_edges

    mv_vals, mv, me, starts = homogeneous_region_grid(mu_resolution)
    S = _homogeneous_entropy(graph, mv, me)
    hs = _axis(grid.h_min, grid.h_max, grid.resolution)
    js = _axis(grid.j_min, grid.j_max, grid.resolution)

    # inner max of F over mu_e for every (J, mu_v) group, then over mu_v per h
    # F = n h (2 mv - 1) + E J - 4 E J mv + 4 E J me + S(mv, me)
    per_h = n * (2.0 * mv_vals - 1.0)  # multiplied by h later
    best = -np.inf
    theta_b = (float(hs[0]), float(js[0]))
    s_bar = float(_homogeneous_entropy(graph, np.array([mv_bar]), np.array([me_bar]))[0])
    h_term = np.outer(hs, per_h)  # (n_h, n_mv)
    for J in js:
        t = 4.0 * E * J * me + S
        group_max = np.maximum.reduceat(t, starts)
        a = group_max - 4.0 * E * J * mv_vals
        f_max_per_h = (h_term + a).max(axis=1) + E * J  # (n_h,)
        lb = (
            n * hs * (2.0 * mv_bar - 1.0)
            + E * J * (1.0 - 4.0 * mv_bar + 4.0 * me_bar)
            + s_bar
            - f_max_per_h
        )
        k = int(np.argmax(lb))
        if lb[k] > best:
            best = float(lb[k])
            theta_b = (float(hs[k]), float(J))

    hB, jB = theta_b
    F = homogeneous_free_energy(graph, hB, jB, mv, me)
    f_max = float(F.max())
    sel = np.flatnonzero(F >= f_max - f_tol)
    maximizers = [(float(mv[k]), float(me[k]), float(F[k])) for k in sel]
    f_at_mu = float(
        homogeneous_free_energy(graph, hB, jB, np.array([mv_bar]), np.array([me_bar]))[0]
    )
    dist = hull_distance([(p[0], p[1]) for p in maximizers], (mv_bar, me_bar))
    return Figure1Result(
        theta_b=theta_b,
        maximizers=maximizers,
        hull_contains_mu=dist <= hull_tol,
        hull_dist=dist,
        f_max=f_max,
        f_at_mu=f_at_mu,
        likelihood=best,
        surface=(mv, me, F),
    )


# ---------------------------------------------------------------------------
# small 2-D convex hull utilities (maximizer sets are tiny)


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _hull(points):
    pts = sorted(set((float(x), float(y)) for x, y in points))
    if len(pts) <= 2:
        return pts
    lower = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    return hull if len(hull) >= 3 else [pts[0], pts[-1]]


def _segment_distance(q, a, b):
    ax, ay = a
    bx, by = b
    qx, qy = q
    dx, dy = bx - ax, by - ay
    L2 = dx * dx + dy * dy
    if L2 == 0.0:
        return math.hypot(qx - ax, qy - ay)
    t = max(0.0, min(1.0, ((qx - ax) * dx + (qy - ay) * dy) / L2))
    return math.hypot(qx - (ax + t * dx), qy - (ay + t * dy))


def hull_distance(points, q):
    """Euclidean distance from q to the convex hull of points (0 inside)."""
    if not points:
        raise InputError("hull_distance needs at least one point")
    hp = _hull(points)
    if len(hp) == 1:
        return math.hypot(q[0] - hp[0][0], q[1] - hp[0][1])
    if len(hp) == 2:
        return _segment_distance(q, hp[0], hp[1])
    inside = True
    for i in range(len(hp)):
        if _cross(hp[i], hp[(i + 1) % len(hp)], q) < 0.0:
            inside = False
            break
    if inside:
        return 0.0
    return min(_segment_distance(q, hp[i], hp[(i + 1) % len(hp)]) for i in range(len(hp)))
