"""Exception types shared across the library."""


class DomainError(ValueError):
    """Input outside the mathematical domain of an operation."""


class ResourceError(RuntimeError):
    """A configured size or memory cap would be exceeded."""


class MeshError(RuntimeError):
    """Mesh construction or validation failure."""


class ConvergenceWarning(UserWarning):
    """A truncated series increment is larger than requested."""


class NonConvergence(RuntimeError):
    """Newton iteration hit its cap before reaching tolerance."""

    def __init__(self, iterations, residual):
        super().__init__(
            f"no convergence after {iterations} iterations (residual {residual:.3e})"
        )
        self.iterations = iterations
        self.residual = residual


class SolverError(RuntimeError):
    """A Newton linear system could not be solved."""


class GraphError(RuntimeError):
    """Cover-graph construction or connectivity failure."""


class InsufficientData(RuntimeError):
    """Too few orbit points below the fit window for an estimate."""


class IoError(OSError):
    """Report emission failed (unwritable path or empty input)."""
