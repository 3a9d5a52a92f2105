"""Exception types shared across the package."""


class VhfStreamError(Exception):
    """Base class for all package errors."""


class PayloadTooLongError(VhfStreamError, ValueError):
    pass


class MalformedHeaderError(VhfStreamError, ValueError):
    pass


class TruncatedError(VhfStreamError, ValueError):
    pass


class GeometryMismatchError(VhfStreamError, ValueError):
    pass


class UndefinedMetricError(VhfStreamError, ArithmeticError):
    """Raised when a ratio metric (BER, APSNR) has an empty denominator."""


class FormatError(VhfStreamError, ValueError):
    """A persisted file violates its format; ``offset`` is the byte position."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ConfigError(VhfStreamError, ValueError):
    pass
