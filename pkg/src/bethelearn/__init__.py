"""Learnability analysis for binary pairwise Markov random fields under the
Bethe approximation: belief-propagation inference, curvature and uniqueness
certificates, and moment-matching by subgradient ascent."""

from .exceptions import (
    BoundaryMarginalError,
    GraphConstructionError,
    GraphFileError,
    InputError,
    NonConvergenceError,
    NumericalError,
    PolytopeError,
)
from .graphs import Graph, build_graph, chain, complete, cycle, load_graph, save_graph, torus
from .inference import (
    BPOptions,
    BPResult,
    ExactResult,
    FixedPoint,
    MultiRestartResult,
    bethe_entropy,
    bethe_free_energy,
    bethe_log_partition,
    exact_inference,
    message_update,
    multi_restart_bp,
    multi_restart_bp_many,
    sum_product,
)
from .learnability import (
    EIG_TOL,
    Verdict,
    VerdictStatus,
    bethe_entropy_hessian,
    classify,
    classify_grid,
    homogeneous_hessian,
    homogeneous_hessian_coeffs,
    inner_bound_unique,
    lemma1_test,
    lemma2_test,
    lemma3_test,
    lemma3_threshold,
)
from .learning import (
    Figure1Result,
    LearnOptions,
    LearnTrace,
    MomentMatchResult,
    ThetaGrid,
    bethe_likelihood,
    figure1_search,
    homogeneous_grid_argmax,
    homogeneous_potentials,
    homogeneous_region_grid,
    homogeneous_surface,
    hull_distance,
    learn_subgradient,
    moment_matching_check,
)
from .model import (
    IsingPotentials,
    MinimalMarginals,
    TableMarginals,
    TablePotentials,
    as_minimal,
    as_table,
    canonical_parameters,
    convert_marginals,
    dot,
    homogeneous_marginals,
    in_local_polytope,
    ising_to_table,
    load_marginals,
    load_model,
    minimal_to_table,
    save_marginals,
    save_model,
    table_to_ising,
    table_to_minimal,
    zero_potentials,
)

__version__ = "0.1.0"
