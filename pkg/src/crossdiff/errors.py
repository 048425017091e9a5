"""Exception types shared across the package."""


class CrossDiffError(Exception):
    """Base class for all package-specific failures."""


class DomainError(CrossDiffError, ValueError):
    """A point or parameter lies outside its admissible domain."""


class ConfigError(CrossDiffError, ValueError):
    """Invalid configuration document or experiment specification."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class BoundaryEscapeError(CrossDiffError, RuntimeError):
    """A particle left the simulation box; the run must abort."""


class BoundaryMassError(CrossDiffError, RuntimeError):
    """Too much density accumulated near the box boundary."""


class StepSizeError(CrossDiffError, RuntimeError):
    """The time step violates the CFL bound."""


class SchemeFailureError(CrossDiffError, RuntimeError):
    """The finite-volume update produced an inadmissible state."""


class StatisticsError(CrossDiffError, ValueError):
    """Not enough samples/replicas to evaluate an estimator."""


class SupportSizeError(CrossDiffError, ValueError):
    """Discrete-measure support too large for the exact solver."""
