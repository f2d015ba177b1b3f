from typing import Optional


class DataError(ValueError):
    """
    Raised for malformed or inconsistent trajectory data.

    When the problem was found while parsing a file, `line` holds the
    1-based line number and is prefixed to the message.
    """
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DegenerateInputError(ValueError):
    """Raised when a quantity is mathematically undefined for the given input."""


class TrainingDivergedError(RuntimeError):
    """Raised when classifier training produces a non-finite loss."""
