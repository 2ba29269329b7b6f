"""Error types shared across the store, log, protocol, and CLI.

Every error carries a short machine-readable code; the wire protocol
reports errors as ``-ERR <code> <message>``.
"""


class GdprKvError(Exception):
    """Base class; ``code`` is the stable identifier clients match on."""

    code = "ERROR"

    def __init__(self, message: str = ""):
        super().__init__(message or self.code)
        self.message = message or self.code


class AccessDenied(GdprKvError):
    code = "ACCESS_DENIED"


class PurposeDenied(GdprKvError):
    code = "PURPOSE_DENIED"


class RegionDenied(GdprKvError):
    code = "REGION_DENIED"


class NotFound(GdprKvError):
    code = "NOT_FOUND"


class BadMeta(GdprKvError):
    code = "BAD_META"


class BadTtl(GdprKvError):
    code = "BAD_TTL"


class BadSpec(GdprKvError):
    code = "BAD_SPEC"


class IoError(GdprKvError):
    # Raised when the audit log cannot be written. The engine fail-stops:
    # an operation that cannot be logged must not execute.
    code = "IO_ERROR"


class CorruptLog(GdprKvError):
    code = "CORRUPT_LOG"

    def __init__(self, message: str = "", last_good_seq: int = 0):
        super().__init__(message)
        self.last_good_seq = last_good_seq


class ProtocolError(GdprKvError):
    code = "PROTO_ERROR"


class NoAuth(GdprKvError):
    code = "NOAUTH"


class ArityError(GdprKvError):
    code = "ARITY"


class ConnectError(GdprKvError):
    code = "CONNECT_ERROR"


class ConfigError(GdprKvError):
    code = "BAD_CONFIG"


_BY_CODE = {
    cls.code: cls
    for cls in (
        AccessDenied, PurposeDenied, RegionDenied, NotFound, BadMeta, BadTtl,
        BadSpec, IoError, CorruptLog, ProtocolError, NoAuth, ArityError,
        ConnectError, ConfigError,
    )
}


def error_for(code: str, message: str = "") -> GdprKvError:
    """Rebuild the typed error a wire-level '-ERR <code>' reply stands for."""
    cls = _BY_CODE.get(code, GdprKvError)
    exc = cls(message)
    if cls is GdprKvError:
        exc.code = code
    return exc
