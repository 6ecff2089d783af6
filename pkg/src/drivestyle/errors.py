"""Exception types shared across the toolkit."""


class DriveStyleError(Exception):
    """Base class for toolkit errors."""


class InvalidArgument(DriveStyleError, ValueError):
    pass


class ParseError(DriveStyleError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(DriveStyleError, ValueError):
    pass


class FeasibilityError(DriveStyleError, ValueError):
    pass


class NumericError(DriveStyleError, ArithmeticError):
    pass


class NotFound(DriveStyleError, LookupError):
    pass
