"""Exception types raised across the package."""


class CovPriorError(Exception):
    """Base class for all package errors."""


class DomainError(CovPriorError, ValueError):
    """An argument lies outside the domain of a density or transform."""


class NotPositiveDefinite(CovPriorError, ValueError):
    pass


class InvalidDegreesOfFreedom(DomainError):
    pass


class LayoutMismatch(CovPriorError, ValueError):
    """Parameter vector length does not match the prior's layout."""


class NonFiniteGradient(CovPriorError, FloatingPointError):
    pass


class AdaptationFailure(CovPriorError, RuntimeError):
    pass


class ZeroVariance(CovPriorError, ValueError):
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class ParseError(CovPriorError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NegativeCount(ParseError):
    pass


class ConfigError(CovPriorError, ValueError):
    """Invalid or unknown run configuration."""
