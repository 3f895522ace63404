"""Error types shared across the package.

The CLI maps these onto distinct exit codes, so raising the right class
matters more than the message wording.
"""


class InputError(ValueError):
    """Invalid user-supplied data: bad flags, malformed files, bad shapes."""


class GraphConstructionError(InputError):
    """A graph builder was called with parameters below its minimum."""


class GraphFileError(InputError):
    """A graph/model/marginals file failed to parse or validate."""


class PolytopeError(InputError):
    """Marginals violate a local-polytope inequality."""


class BoundaryMarginalError(InputError):
    """Marginals sit on (or too close to) the polytope boundary where logs blow up."""


class NumericalError(RuntimeError):
    """NaN/Inf appeared, or an iterative numerical routine broke down."""


class NonConvergenceError(RuntimeError):
    """An iterative procedure exhausted its step budget without converging."""
