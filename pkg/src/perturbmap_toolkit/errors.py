class ToolkitError(Exception):
    """Base class for every error raised by the toolkit."""


class ModelFormatError(ToolkitError, ValueError):
    pass


class EnumerationCapError(ToolkitError):
    def __init__(self, size: int, cap: int) -> None:
        super().__init__(f"configuration space of size {size} exceeds enumeration cap {cap}")
        self.size = size
        self.cap = cap


class TrickDomainError(ToolkitError, ValueError):
    def __init__(self, message: str, raw_mean: float | None = None) -> None:
        if raw_mean is not None:
            message = f"{message} (raw mean {raw_mean!r})"
        super().__init__(message)
        self.raw_mean = raw_mean


class SupportError(ToolkitError, ValueError):
    pass


class NormalizationError(ToolkitError, ValueError):
    pass
