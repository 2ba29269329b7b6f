"""Length-prefixed wire protocol, binary-safe for arbitrary values.

Requests are arrays of bulk strings:

    *<n>\r\n  then n of:  $<len>\r\n<bytes>\r\n

Replies are one of:

    +<status>\r\n
    -ERR <code> <message>\r\n
    :<integer>\r\n
    $<len>\r\n<bytes>\r\n
    *<n>\r\n followed by n replies (arrays may nest)

Framing violations raise ProtocolError; the server closes the
connection on those, since resynchronization is impossible.
"""

from dataclasses import dataclass

from .errors import ProtocolError

MAX_ARGS = 1024
MAX_BULK = 64 * 1024 * 1024
_MAX_LINE = 64


@dataclass(frozen=True)
class Status:
    text: str


@dataclass(frozen=True)
class Error:
    code: str
    message: str = ""


OK = Status("OK")


def encode_command(args: list[bytes]) -> bytes:
    parts = [b"*%d\r\n" % len(args)]
    for arg in args:
        parts.append(b"$%d\r\n" % len(arg))
        parts.append(arg)
        parts.append(b"\r\n")
    return b"".join(parts)


def encode_reply(value) -> bytes:
    if isinstance(value, Status):
        return b"+" + value.text.encode() + b"\r\n"
    if isinstance(value, Error):
        msg = f"-ERR {value.code}"
        if value.message:
            msg += f" {value.message}"
        return msg.encode() + b"\r\n"
    if isinstance(value, bool):
        return b":%d\r\n" % int(value)
    if isinstance(value, int):
        return b":%d\r\n" % value
    if isinstance(value, (bytes, bytearray)):
        return b"$%d\r\n" % len(value) + bytes(value) + b"\r\n"
    if isinstance(value, (list, tuple)):
        return b"*%d\r\n" % len(value) + b"".join(encode_reply(v) for v in value)
    raise TypeError(f"cannot encode reply of type {type(value).__name__}")


def _read_line(f) -> bytes:
    line = f.readline(_MAX_LINE)
    if not line:
        raise EOFError
    if not line.endswith(b"\r\n"):
        raise ProtocolError("missing CRLF or oversized header line")
    return line[:-2]


def _read_int_line(f, marker: bytes) -> int:
    line = _read_line(f)
    if not line.startswith(marker):
        raise ProtocolError(f"expected {marker!r} line, got {line[:16]!r}")
    try:
        return int(line[1:])
    except ValueError:
        raise ProtocolError("bad integer in header line") from None


def _read_bulk(f) -> bytes:
    n = _read_int_line(f, b"$")
    if n < 0 or n > MAX_BULK:
        raise ProtocolError(f"bulk length {n} out of range")
    data = f.read(n + 2)
    if len(data) < n + 2 or data[-2:] != b"\r\n":
        raise ProtocolError("truncated bulk string")
    return data[:-2]


def read_command(f) -> list[bytes] | None:
    """One request array from a file-like; None on clean EOF before any
    byte of a new command."""
    try:
        n = _read_int_line(f, b"*")
    except EOFError:
        return None
    if n < 1 or n > MAX_ARGS:
        raise ProtocolError(f"argument count {n} out of range")
    try:
        return [_read_bulk(f) for _ in range(n)]
    except EOFError:
        raise ProtocolError("connection closed mid-command") from None


def read_reply(f):
    try:
        first = f.read(1)
    except EOFError:
        first = b""
    if not first:
        raise EOFError("connection closed")
    if first == b"+":
        return Status(_read_line(f).decode())
    if first == b"-":
        text = _read_line(f).decode()
        parts = text.split(" ", 2)  # "ERR <code> <message>"
        if len(parts) >= 2 and parts[0] == "ERR":
            return Error(parts[1], parts[2] if len(parts) > 2 else "")
        return Error("ERROR", text)
    if first == b":":
        try:
            return int(_read_line(f))
        except ValueError:
            raise ProtocolError("bad integer reply") from None
    if first == b"$":
        line = _read_line(f)
        try:
            n = int(line)
        except ValueError:
            raise ProtocolError("bad bulk length") from None
        if n < 0 or n > MAX_BULK:
            raise ProtocolError(f"bulk length {n} out of range")
        data = f.read(n + 2)
        if len(data) < n + 2 or data[-2:] != b"\r\n":
            raise ProtocolError("truncated bulk reply")
        return data[:-2]
    if first == b"*":
        try:
            n = int(_read_line(f))
        except ValueError:
            raise ProtocolError("bad array length") from None
        if n < 0 or n > MAX_ARGS:
            raise ProtocolError(f"array length {n} out of range")
        return [read_reply(f) for _ in range(n)]
    raise ProtocolError(f"unknown reply marker {first!r}")
