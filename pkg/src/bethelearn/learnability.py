"""Learnability tests: can a set of pseudo-marginals be made the unique
maximizer of the Bethe free energy by some choice of parameters?

Three outer tests certify "no" (lemma1/lemma2/lemma3 in order of decreasing
cost), a spectral condition certifies "yes" (inner bound), and an empirical
stage tries to moment-match by subgradient ascent when nothing else decides.

The lemma2/lemma3 tests inspect the Hessian of the Bethe entropy in minimal
coordinates (nodes first, then edges): since the free energy is linear in
theta, a direction of positive curvature at mu rules out mu being a unique
maximizer for every theta.  lemma3 specializes to homogeneous marginals,
where positivity of the quadratic form along a one-parameter family of
directions reduces to a closed-form sign test.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InputError, NonConvergenceError, PolytopeError
from .inference import (
    BPOptions,
    bethe_free_energy,
    multi_restart_bp,
    multi_restart_bp_many,
)
from .model import (
    MinimalMarginals,
    as_minimal,
    canonical_parameters,
    in_local_polytope,
    table_to_ising,
)

__all__ = [
    "VerdictStatus",
    "Verdict",
    "bethe_entropy_hessian",
    "homogeneous_hessian_coeffs",
    "homogeneous_hessian",
    "lemma2_test",
    "lemma3_test",
    "lemma3_threshold",
    "lemma1_test",
    "inner_bound_unique",
    "classify",
    "classify_grid",
    "EIG_TOL",
    "LEMMA1_MARGIN",
]

EIG_TOL = 1e-9
LEMMA1_MARGIN = 1e-6


class VerdictStatus(str, enum.Enum):
    UNLEARNABLE_LEMMA3 = "UnlearnableLemma3"
    UNLEARNABLE_LEMMA2 = "UnlearnableLemma2"
    UNLEARNABLE_LEMMA1 = "UnlearnableLemma1"
    LEARNABLE_INNER = "LearnableInnerBound"
    EMPIRICAL_MATCH = "EmpiricalMatch"
    EMPIRICAL_NO_MATCH = "EmpiricalNoMatch"
    UNDETERMINED = "Undetermined"


@dataclass
class Verdict:
    status: VerdictStatus
    # evidence fields are populated iff the corresponding test ran
    lemma3_lhs: float | None = None
    max_eigenvalue: float | None = None
    spectral_radius: float | None = None
    witnesses: list = field(default_factory=list)  # (free_energy, restart_index) pairs
    reference_free_energy: float | None = None
    matching_residual: float | None = None
    # per-test outcomes: True/False = ran, None = skipped
    tests: dict = field(default_factory=dict)

    def flag(self, name):
        v = self.tests.get(name)
        return "skipped" if v is None else ("yes" if v else "no")


def _validated_minimal(mu, graph, tol=1e-9):
    mu = as_minimal(mu, graph)
    if not in_local_polytope(mu, graph, tol=tol):
        raise PolytopeError("marginals lie outside the local polytope")
    return mu


def bethe_entropy_hessian(mu, graph):
    """Dense Hessian of the Bethe entropy in minimal coordinates.

    Coordinate order is node marginals 0..N_V-1 followed by edge marginals in
    canonical edge order; the matrix is symmetric of size N_V + N_E.  All
    table entries of mu must be strictly positive.
    """
    mu = _validated_minimal(mu, graph)
    mn, me = mu.mu_node, mu.mu_edge
    n, E = graph.num_nodes, graph.num_edges
    entries = np.concatenate([np.column_stack([mn, 1.0 - mn]).ravel(), me])
    if entries.size and entries.min() <= 0.0:
        raise PolytopeError("Hessian requires interior marginals (positive table entries)")
    deg = np.asarray(graph.degrees, dtype=float)
    A = np.zeros((n + E, n + E))
    A[np.arange(n), np.arange(n)] = (deg - 1.0) * (1.0 / mn + 1.0 / (1.0 - mn))
    for e, (i, j) in enumerate(graph.edges):
        p11 = me[e]
        p10 = mn[i] - me[e]
        p01 = mn[j] - me[e]
        p00 = 1.0 - mn[i] - mn[j] + me[e]
        if min(p11, p10, p01, p00) <= 0.0:
            raise PolytopeError(
                f"Hessian requires interior marginals; edge ({i}, {j}) has a zero table entry"
            )
        A[i, i] -= 1.0 / p10 + 1.0 / p00
        A[j, j] -= 1.0 / p01 + 1.0 / p00
        A[i, j] -= 1.0 / p00
        A[j, i] -= 1.0 / p00
        k = n + e
        A[i, k] = A[k, i] = 1.0 / p10 + 1.0 / p00
        A[j, k] = A[k, j] = 1.0 / p01 + 1.0 / p00
        A[k, k] = -1.0 / p11 - 1.0 / p10 - 1.0 / p01 - 1.0 / p00
    return A


def homogeneous_hessian_coeffs(mu_v, mu_e):
    """Scalar entries (a_hat, b, c, d) of the homogeneous-marginal Hessian.

    Node diagonals become (d_i - 1) * a_hat - d_i * c; node-node entries on
    edges are b; node-edge incidences are c; edge diagonals are d.
    """
    p10 = mu_v - mu_e
    p00 = 1.0 - 2.0 * mu_v + mu_e
    if min(mu_e, p10, p00, mu_v, 1.0 - mu_v) <= 0.0:
        raise PolytopeError("homogeneous Hessian coefficients require interior marginals")
    a_hat = 1.0 / mu_v + 1.0 / (1.0 - mu_v)
    b = -1.0 / p00
    c = 1.0 / p10 + 1.0 / p00
    d = -1.0 / mu_e - 1.0 / p10 - c
    return a_hat, b, c, d


def homogeneous_hessian(graph, mu_v, mu_e):
    """Assemble the Hessian directly from the homogeneous coefficients."""
    a_hat, b, c, d = homogeneous_hessian_coeffs(mu_v, mu_e)
    n, E = graph.num_nodes, graph.num_edges
    deg = np.asarray(graph.degrees, dtype=float)
    A = np.zeros((n + E, n + E))
    A[np.arange(n), np.arange(n)] = (deg - 1.0) * a_hat - deg * c
    for e, (i, j) in enumerate(graph.edges):
        A[i, j] = A[j, i] = b
        k = n + e
        A[i, k] = A[k, i] = c
        A[j, k] = A[k, j] = c
        A[k, k] = d
    return A


@dataclass(frozen=True)
class Lemma2Result:
    unlearnable: bool
    max_eigenvalue: float


def lemma2_test(mu, graph, eig_tol=EIG_TOL):
    """Unlearnable when the entropy Hessian has a direction of positive
    curvature (largest eigenvalue above eig_tol)."""
    A = bethe_entropy_hessian(mu, graph)
    lam = float(np.linalg.eigvalsh(A)[-1])
    return Lemma2Result(unlearnable=lam > eig_tol, max_eigenvalue=lam)


@dataclass(frozen=True)
class Lemma3Result:
    unlearnable: bool
    lhs: float


def lemma3_test(n_nodes, n_edges, mu_v, mu_e):
    """Closed-form homogeneous test.  Positive lhs of

        (mu_e - mu_v^2) * (1 - N_V / (2 N_E)) - (N_V / (2 N_E)) * mu_v * (1 - mu_v)

    certifies a positive-curvature direction, hence unlearnable.  Evaluated in
    this product form to stay meaningful when 1 - N_V/(2 N_E) is zero."""
    if n_edges < 1:
        raise InputError("lemma3_test requires at least one edge")
    if not (0.0 < mu_v < 1.0):
        raise PolytopeError(f"mu_v must lie strictly inside (0, 1), got {mu_v}")
    if mu_e < 0.0 or mu_e > mu_v or mu_e < 2.0 * mu_v - 1.0:
        raise PolytopeError(
            f"(mu_v={mu_v}, mu_e={mu_e}) violates the homogeneous polytope constraints"
        )
    r = n_nodes / (2.0 * n_edges)
    lhs = (mu_e - mu_v * mu_v) * (1.0 - r) - r * mu_v * (1.0 - mu_v)
    return Lemma3Result(unlearnable=lhs > 0.0, lhs=lhs)


def lemma3_threshold(n_nodes, n_edges, mu_v):
    """Critical mu_e above which the homogeneous test fires, or None when no
    valid mu_e in the polytope can fire it."""
    if n_edges < 1:
        raise InputError("lemma3_threshold requires at least one edge")
    if not (0.0 < mu_v < 1.0):
        raise PolytopeError(f"mu_v must lie strictly inside (0, 1), got {mu_v}")
    r = n_nodes / (2.0 * n_edges)
    denom = 1.0 - r
    if denom <= 0.0:
        return None
    t = ((1.0 - n_nodes / n_edges) * mu_v * mu_v + r * mu_v) / denom
    if t >= mu_v:
        return None
    return t


@dataclass(frozen=True)
class Lemma1Result:
    unlearnable: bool
    reference_free_energy: float
    witnesses: list  # FixedPoints with free energy above the reference + margin
    fixed_points: list


def lemma1_test(mu, graph, n_restarts=20, seed=0, opts=None, margin=LEMMA1_MARGIN, bp=None):
    """Search for a BP fixed point of the canonical parameters whose free
    energy beats F(mu) by more than margin; finding one proves mu is not the
    unique Bethe optimizer of any theta.

    bp, when given, must be a precomputed multi_restart_bp result for the
    canonical parameters of mu; the restart arguments are then ignored.
    """
    mu = _validated_minimal(mu, graph)
    theta = canonical_parameters(mu, graph)
    f_ref = bethe_free_energy(mu, theta, graph)
    mr = bp if bp is not None else multi_restart_bp(
        theta, graph, n_restarts=n_restarts, seed=seed, opts=opts
    )
    witnesses = [fp for fp in mr.fixed_points if fp.free_energy > f_ref + margin]
    return Lemma1Result(
        unlearnable=bool(witnesses),
        reference_free_energy=f_ref,
        witnesses=witnesses,
        fixed_points=mr.fixed_points,
    )


@dataclass(frozen=True)
class InnerBoundResult:
    certified: bool
    spectral_radius: float


_POWER_MAX_STEPS = 10_000
_POWER_TOL = 1e-11


def inner_bound_unique(theta, graph, max_steps=_POWER_MAX_STEPS):
    """BP-uniqueness certificate: build the directed-edge matrix with entry
    tanh|J_jk| from (i -> j) to (j -> k), k != i, and certify when its
    spectral radius is strictly below one.  Uniqueness of the BP fixed point
    implies the canonical fixed point is the unique Bethe maximizer.

    The radius comes from power iteration bracketed by Collatz quotients;
    an all-zero iterate short-circuits to radius zero (trees, J = 0).
    """
    ising = table_to_ising(theta, graph)
    E = graph.num_edges
    if E == 0:
        return InnerBoundResult(certified=True, spectral_radius=0.0)
    t = np.tanh(np.abs(ising.coupling))
    # directed edge d: 2e = i->j, 2e+1 = j->i; M[d1, d2] propagates d1 into d2
    heads = np.empty(2 * E, dtype=np.intp)
    tails = np.empty(2 * E, dtype=np.intp)
    weight = np.empty(2 * E)
    for e, (i, j) in enumerate(graph.edges):
        tails[2 * e], heads[2 * e] = i, j
        tails[2 * e + 1], heads[2 * e + 1] = j, i
        weight[2 * e] = weight[2 * e + 1] = t[e]
    M = np.zeros((2 * E, 2 * E))
    for d1 in range(2 * E):
        cont = (tails == heads[d1]) & (heads != tails[d1])
        M[d1, cont] = weight[cont]
    if not M.any():
        return InnerBoundResult(certified=True, spectral_radius=0.0)
    x = np.full(2 * E, 1.0 / np.sqrt(2 * E))
    radius = None
    for _ in range(max_steps):
        y = M.T @ x  # grow along directed paths
        ny = np.linalg.norm(y)
        if ny == 0.0:
            radius = 0.0
            break
        pos = x > 1e-300
        quot = y[pos] / x[pos]
        lo, hi = quot.min(), quot.max()
        x = y / ny
        if hi - lo <= _POWER_TOL * max(1.0, hi):
            radius = float(hi)
            break
    if radius is None:
        raise NonConvergenceError(
            f"power iteration did not converge within {max_steps} steps"
        )
    return InnerBoundResult(certified=radius < 1.0, spectral_radius=radius)


def _is_homogeneous(mu):
    mn, me = mu.mu_node, mu.mu_edge
    if me.size == 0:
        return False
    return float(np.ptp(mn)) <= 1e-12 and float(np.ptp(me)) <= 1e-12


def classify(
    mu,
    graph,
    *,
    empirical=True,
    eig_tol=EIG_TOL,
    margin=LEMMA1_MARGIN,
    n_restarts=20,
    seed=0,
    bp_opts=None,
    learn_opts=None,
    match_tol=0.01,
    lemma1_bp=None,
    _cheap_only=False,
):
    """Run the decision pipeline cheapest-first and return the first verdict:

    lemma3 (homogeneous only) -> lemma2 -> inner bound on the canonical
    parameters -> lemma1 -> empirical moment matching (optional).

    lemma1_bp, when given, must be a precomputed multi_restart_bp result for
    the canonical parameters of mu (classify_grid batches these).
    """
    from .learning import LearnOptions, learn_subgradient, moment_matching_check

    mu = _validated_minimal(mu, graph)
    v = Verdict(status=VerdictStatus.UNDETERMINED)
    v.tests = {"lemma3": None, "lemma2": None, "inner": None, "lemma1": None,
               "empirical_match": None}

    if _is_homogeneous(mu):
        r3 = lemma3_test(graph.num_nodes, graph.num_edges, mu.mu_node[0], mu.mu_edge[0])
        v.lemma3_lhs = r3.lhs
        v.tests["lemma3"] = r3.unlearnable
        if r3.unlearnable:
            v.status = VerdictStatus.UNLEARNABLE_LEMMA3
            return v

    r2 = lemma2_test(mu, graph, eig_tol=eig_tol)
    v.max_eigenvalue = r2.max_eigenvalue
    v.tests["lemma2"] = r2.unlearnable
    if r2.unlearnable:
        v.status = VerdictStatus.UNLEARNABLE_LEMMA2
        return v

    theta_c = canonical_parameters(mu, graph)
    ri = inner_bound_unique(theta_c, graph)
    v.spectral_radius = ri.spectral_radius
    v.tests["inner"] = ri.certified
    if ri.certified:
        v.status = VerdictStatus.LEARNABLE_INNER
        return v

    if _cheap_only:
        return v

    mr1 = lemma1_bp if lemma1_bp is not None else multi_restart_bp(
        theta_c, graph, n_restarts=n_restarts, seed=seed, opts=bp_opts
    )
    r1 = lemma1_test(mu, graph, margin=margin, bp=mr1)
    v.reference_free_energy = r1.reference_free_energy
    v.witnesses = [(fp.free_energy, fp.restart_index) for fp in r1.witnesses]
    v.tests["lemma1"] = r1.unlearnable
    if r1.unlearnable:
        v.status = VerdictStatus.UNLEARNABLE_LEMMA1
        return v

    if not empirical:
        return v

    # mr1 doubles as the BP run at the ascent start (canonical theta) as long
    # as the learn options carry the same restart schedule
    reuse = learn_opts is None
    opts = learn_opts or LearnOptions(
        bp_opts=bp_opts or BPOptions(), n_restarts=n_restarts, seed=seed, match_tol=match_tol
    )
    try:
        trace = learn_subgradient(mu, graph, opts, initial_bp=mr1 if reuse else None)
        final_is_canonical = (
            len(trace.records) == 1 and trace.status in ("matched", "stalled")
        )
        check = moment_matching_check(
            trace.final_theta, mu, graph, tol=match_tol,
            n_restarts=n_restarts, seed=seed, opts=bp_opts,
            bp=mr1 if reuse and final_is_canonical else None,
        )
    except NonConvergenceError:
        v.status = VerdictStatus.UNDETERMINED
        return v
    v.matching_residual = check.residual
    v.tests["empirical_match"] = check.matched
    v.status = (
        VerdictStatus.EMPIRICAL_MATCH if check.matched else VerdictStatus.EMPIRICAL_NO_MATCH
    )
    return v


_GRID_BP_CHUNK = 512  # pending points per batched BP call, caps working memory


def classify_grid(
    mus,
    graph,
    *,
    empirical=False,
    eig_tol=EIG_TOL,
    margin=LEMMA1_MARGIN,
    n_restarts=20,
    seed=0,
    bp_opts=None,
    learn_opts=None,
    match_tol=0.01,
):
    """Classify many marginal vectors on one graph.

    Verdicts equal classify() applied point by point with the same options;
    the lemma1 BP runs of every point the cheap tests leave undecided are
    batched through multi_restart_bp_many, which is what makes dense scans
    affordable when oscillating restarts eat the whole sweep budget.
    """
    mus = [_validated_minimal(mu, graph) for mu in mus]
    kwargs = dict(
        eig_tol=eig_tol, margin=margin, n_restarts=n_restarts, seed=seed,
        bp_opts=bp_opts, learn_opts=learn_opts, match_tol=match_tol,
    )
    verdicts = [None] * len(mus)
    pending = []
    for k, mu in enumerate(mus):
        v = classify(mu, graph, _cheap_only=True, **kwargs)
        if v.status is VerdictStatus.UNDETERMINED:
            pending.append(k)
        else:
            verdicts[k] = v
    for lo in range(0, len(pending), _GRID_BP_CHUNK):
        chunk = pending[lo:lo + _GRID_BP_CHUNK]
        thetas = [canonical_parameters(mus[k], graph) for k in chunk]
        mrs = multi_restart_bp_many(
            thetas, graph, n_restarts=n_restarts, seed=seed, opts=bp_opts
        )
        for k, mr in zip(chunk, mrs):
            verdicts[k] = classify(mus[k], graph, empirical=empirical,
                                   lemma1_bp=mr, **kwargs)
    return verdicts
