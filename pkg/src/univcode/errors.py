"""Exception types raised across the package."""


class UnivCodeError(Exception):
    """Base class for all library errors."""


class DomainError(UnivCodeError, ValueError):
    """A parameter lies outside the region where an operation is defined."""


class QuadratureError(UnivCodeError, ArithmeticError):
    """A numerical integral failed to converge or produced a non-finite value."""


class DivergenceUndefined(UnivCodeError, ArithmeticError):
    """A divergence or moment does not exist (infinite expectation)."""


class CapacityError(UnivCodeError):
    """A requested enumeration or code size exceeds a configured cap."""


class DesignError(UnivCodeError):
    """No candidate satisfies the requirements of a code-design rule."""
