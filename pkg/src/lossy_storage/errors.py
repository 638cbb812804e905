"""Exception hierarchy shared across the package."""


class LossyStorageError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(LossyStorageError, ValueError):
    """A storage parameter or bound violates its documented invariant."""


class InvalidEfficiency(ValidationError):
    """Efficiency-like factor (eta_c, eta_d or the self-discharge rate) outside (0, 1]."""


class InvalidBound(ValidationError):
    """Negative power/energy bound, or an energy lower bound above its upper bound."""


class InvalidHorizon(ValidationError):
    """Horizon is not a positive integer."""


class LengthMismatch(ValidationError):
    """A time-series vector does not have one entry per period."""


class NoSubgradientOracle(LossyStorageError):
    """A custom cost was asked for a subgradient but declared no oracle for it."""


class ProjectionError(LossyStorageError, RuntimeError):
    """Alternating-projection failure; carries the final residual."""

    def __init__(self, message: str, residual: float, cycles: int):
        super().__init__(message)
        self.residual = residual
        self.cycles = cycles


class NotConverged(ProjectionError):
    """Projection residual still above tolerance after the cycle budget."""


class EmptyIntersectionSuspected(ProjectionError):
    """Residual stagnated above tolerance: the two boxes likely do not intersect."""


class InfeasibleProblem(LossyStorageError, RuntimeError):
    """The feasible energy set appears to be empty."""


class HorizonTooLarge(LossyStorageError, ValueError):
    """Brute-force enumeration refused: horizon exceeds the grid cap."""


class GridTooLarge(LossyStorageError, ValueError):
    """Brute-force enumeration refused: total grid size exceeds the guard."""


class NoFeasiblePoint(LossyStorageError, RuntimeError):
    """No grid point was feasible; either the set is empty or the grid is too coarse."""


class InstanceMismatch(LossyStorageError, ValueError):
    """Refused to compare results computed on different problem instances."""


class ParseError(LossyStorageError, ValueError):
    """Scenario file is not well-formed JSON."""


class SchemaError(LossyStorageError, ValueError):
    """Scenario file is valid JSON but does not match the scenario schema."""


class HorizonNot2(LossyStorageError, ValueError):
    """Feasible-set sampling is only defined for two-period instances."""
