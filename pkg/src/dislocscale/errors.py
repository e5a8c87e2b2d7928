"""Exception hierarchy shared by the solvers and the command-line harness."""


class DislocScaleError(Exception):
    """Base class for every error raised by the package."""


class DomainError(DislocScaleError, ValueError):
    """An argument lies outside the domain where a formula is defined."""


class ArgumentError(DislocScaleError, ValueError):
    pass


class ClosureError(DislocScaleError, ValueError):
    """A LineField lacks the far-field or gradient-period data an operator needs."""


class ExtrapolationError(DislocScaleError, ValueError):
    pass


class ConventionError(DislocScaleError, ValueError):
    pass


class StabilityError(DislocScaleError, ValueError):
    """Requested time step exceeds the scheme's monotonicity bound."""


class SolverError(DislocScaleError, RuntimeError):
    pass


class DivergenceError(SolverError):
    pass


class ExtractionError(DislocScaleError, RuntimeError):
    pass


class CollisionError(SolverError):
    """Two particles changed order during an accepted integration step."""


class StiffnessError(SolverError):
    pass


class AveragingError(SolverError):
    pass


class SchemeError(SolverError):
    pass


class TableError(DislocScaleError, RuntimeError):
    pass


class RangeError(DislocScaleError, ValueError):
    pass


class ConfigError(DislocScaleError, ValueError):
    """Bad or incomplete run configuration (exit status 2 in the CLI)."""
