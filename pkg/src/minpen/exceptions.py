"""Exception types shared across the package.

The CLI maps each class to a process exit code, so keep the hierarchy flat.
"""


class InputError(ValueError):
    """Malformed or out-of-contract input (exit code 2)."""


class NoJumpError(RuntimeError):
    """The minimal-penalty path shows no usable dimensionality jump (exit code 3)."""

    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path


class NumericalError(ArithmeticError):
    """A linear-algebra routine failed or produced non-finite values (exit code 4)."""
