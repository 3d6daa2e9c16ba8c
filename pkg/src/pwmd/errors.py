"""Exception types shared across modules."""


class ModelError(ValueError):
    """A model or distribution violates its structural invariants."""


class SizingError(ValueError):
    """A requested enumeration or dense computation is too large."""


class CapabilityError(RuntimeError):
    """The requested method is not available for this model or distribution."""


class RangeError(ValueError):
    """A numerical target lies outside the admissible range."""


class DivergenceError(ArithmeticError):
    """An expectation is infinite for every admissible parameter."""


class DependencyError(LookupError):
    """A required auxiliary input is missing.

    The message names the operation that produces the missing input.
    """
