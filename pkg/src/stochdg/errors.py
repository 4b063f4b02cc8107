"""Exception hierarchy shared across the package."""


class StochDGError(Exception):
    """Base class for all errors raised by stochdg."""


class ContractViolation(StochDGError, ValueError):
    """An argument violates a documented precondition."""


class InvalidDomainError(ContractViolation):
    """Degenerate or malformed computational domain."""


class NumericFailure(StochDGError, ArithmeticError):
    """A numerical procedure failed (non-finite data, singular factorization, ...)."""


class ResourceLimitError(StochDGError, RuntimeError):
    """A size or rank guard was exceeded."""
