class InputError(ValueError):
    """Raised for malformed datasets, dimension mismatches and bad options."""


class NumericalError(ArithmeticError):
    """Raised when an objective produces a non-finite value or gradient."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point
