"""Exception types raised by countcopula."""


class ConvergenceError(RuntimeError):
    """A numerical routine failed to converge."""


class DataError(ValueError):
    """Input data or schema failed validation."""
