"""Exception types raised across the package."""


class PrefOptError(Exception):
    """Base class for all package errors."""


class InvalidArgument(PrefOptError, ValueError):
    pass


class InvalidTour(PrefOptError, ValueError):
    pass


class ParseError(PrefOptError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnsupportedFormat(PrefOptError, ValueError):
    pass


class TooLarge(PrefOptError, ValueError):
    pass


class WrongModel(PrefOptError, ValueError):
    pass


class InvalidConfig(PrefOptError, ValueError):
    """Raised with the list of offending keys in ``keys``."""

    def __init__(self, message: str, keys: list[str] | None = None):
        self.keys = list(keys or [])
        super().__init__(message)


class UndefinedMetric(PrefOptError, ValueError):
    pass
