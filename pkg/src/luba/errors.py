"""Exception hierarchy shared by all modules."""


class LubaError(Exception):
    """Base class for every error raised by this package."""


class DomainError(LubaError, ValueError):
    """An argument lies outside the domain of the operation."""


class TruncationError(LubaError):
    """The support did not close before ``k_max``; ``partial`` holds what was computed."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class InfeasibleError(LubaError):
    pass


class ConvergenceError(LubaError):
    pass


class SchemaError(LubaError):
    """Malformed dataset or strategy file. ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EmptyDatasetError(SchemaError):
    pass


class SelectionError(LubaError):
    """A filter selected no auctions."""
