"""Exceptions raised across rankspec.

Every class derives from a built-in exception so callers that only know about
``ValueError`` or ``ArithmeticError`` keep working. The CLI maps them to exit codes.
"""


class ArgumentError(ValueError):
    """Invalid argument, shape mismatch or malformed input."""

    exit_code = 1


class TieError(ArgumentError):
    """Strict pass-to-ranks was asked to rank tied values.

    Attributes:
        pair (tuple): 0-based node pair (i, j), i < j, holding one of the tied values
        value (float): the tied value
    """

    exit_code = 2

    def __init__(self, pair: tuple, value: float):
        self.pair = tuple(int(i) for i in pair)
        self.value = value
        super().__init__(
            f"Tied entries in strict mode: value {value!r} at node pair {self.pair}"
            " occurs more than once (use midrank ties)"
        )


class NumericalError(ArithmeticError):
    """A numerical routine failed to reach its tolerance.

    Attributes:
        achieved (float or None): error estimate actually reached
    """

    exit_code = 2

    def __init__(self, message: str, achieved: float = None):
        self.achieved = achieved
        if achieved is not None:
            message = f"{message} (achieved tolerance {achieved:.3g})"
        super().__init__(message)


class ModelError(ValueError):
    """Invalid or degenerate block model."""

    exit_code = 1


class VerificationError(AssertionError):
    """A Monte Carlo check fell outside its band."""

    exit_code = 3
