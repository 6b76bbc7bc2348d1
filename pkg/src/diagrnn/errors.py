"""Exception hierarchy shared across the package."""


class DiagRNNError(Exception):
    """Base class for every error raised by diagrnn."""


class DimensionError(DiagRNNError, ValueError):
    pass


class ConfigError(DiagRNNError, ValueError):
    pass


class DomainError(DiagRNNError, ValueError):
    pass


class UsageError(DiagRNNError, ValueError):
    pass


class DataError(DiagRNNError, ValueError):
    pass


class ParseError(DataError):
    """Malformed interchange file; the message carries the line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
