"""Exception types shared across the package."""


class MaxcohError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(MaxcohError):
    """A shape or index parameter is out of range."""


class ConstantColumn(MaxcohError):
    """A data column has zero sample variance, so correlations are undefined."""

    def __init__(self, column: int):
        self.column = column
        super().__init__(f"column {column} has zero sample variance")


class DomainError(MaxcohError):
    """A scalar argument lies outside the mathematical domain of an operation."""


class EmptyInput(MaxcohError):
    """An operation that needs at least one sample received none."""


class NoAdmissibleRegion(MaxcohError):
    """Neither {theta >= theta0+eps} nor {theta <= theta0-eps} meets the parameter domain."""


class QuadratureFailure(MaxcohError):
    """A numerical integral did not converge or two integration routes disagree."""


class MonotonicityViolation(MaxcohError):
    """An interior parameter beat both boundary values where boundary minimality was assumed."""


class NonpositiveDrift(MaxcohError):
    """The log-likelihood-ratio drift under the sampling density is not positive."""


class NotPositiveDefinite(MaxcohError):
    """A matrix that must be positive definite is not."""


class ConfigError(MaxcohError):
    """A run configuration or config file is invalid."""
