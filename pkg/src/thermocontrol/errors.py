"""Exception hierarchy shared by all modules."""


class ThermoControlError(Exception):
    """Base class for every error raised by this package."""


class DomainError(ThermoControlError, ValueError):
    """Input lies outside the domain of a model or coordinate map."""


class RangeError(ThermoControlError, OverflowError):
    """A quantity overflowed double precision."""


class InfeasibleError(ThermoControlError, ValueError):
    """Moment target is not strictly inside the convex hull of the data."""


class ConvergenceError(ThermoControlError, RuntimeError):
    """An iterative solver did not reach its tolerance."""


class UnreachableError(ConvergenceError):
    """No extremal connects the requested endpoints."""


class NumericalInconsistencyError(ThermoControlError, ArithmeticError):
    """An identity that must hold analytically failed numerically."""


class NearSingularError(ThermoControlError, ArithmeticError):
    """A denominator is too close to zero for a stable evaluation."""


class ChartError(ThermoControlError, ValueError):
    """A point or interval is not covered by the requested chart."""


class DegenerateLevelError(ChartError):
    """Integral levels produce a multiple root of the discriminant."""


class ValidationError(ThermoControlError, ValueError):
    """A scenario document failed schema validation."""
