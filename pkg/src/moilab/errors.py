"""Exception types shared across the package."""


class MoiLabError(Exception):
    """Base class for all moi-lab errors."""


class OrderLimitError(MoiLabError):
    """A derivative or divided-difference order exceeds the family's max_order."""


class DomainError(MoiLabError):
    """An evaluation point lies outside a function family's declared domain."""


class DimensionMismatchError(MoiLabError):
    """Matrix dimensions, operand counts, or symbol arity do not line up."""


class ParameterError(MoiLabError):
    """An invalid numeric parameter (exponent, tolerance, grid spec)."""


class NumericalError(MoiLabError):
    """An iterative routine failed to reach its accuracy target."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class WindowError(MoiLabError):
    """The discretization window [-N/m, N/m] does not cover the spectra."""


class ConsistencyError(MoiLabError):
    """Two evaluation paths that must agree disagreed beyond tolerance.

    Carries both values so the caller can inspect the disagreement.
    """

    def __init__(self, message, lhs=None, rhs=None, deviation=None):
        super().__init__(message)
        self.lhs = lhs
        self.rhs = rhs
        self.deviation = deviation


class ToleranceError(ConsistencyError):
    """A residual that the contract asserts small exceeded its bound."""


class InversionQualityError(MoiLabError):
    """Fourier inversion produced an untrustworthy imaginary residue."""


class ConfigError(MoiLabError):
    """Invalid experiment configuration."""
