"""Binary layout of the audit log and its payloads.

Log file layout (all integers little-endian):

    Header:
        | Magic   | 4 bytes | "GKVL"            |
        | Version | u16     | 1                 |

    Frame, repeated to EOF:
        | frame_len   | u32 | length of everything after this field |
        | seq         | u64 | strictly increases by 1               |
        | ts          | u64 | microseconds since epoch, non-decreasing |
        | opcode      | u8  | see OP_* table; 0x80 bit = redacted   |
        | outcome     | u8  | OK=0 DENIED=1 NOT_FOUND=2 ERROR=3     |
        | actor_len   | u16 | + actor bytes (UTF-8)                 |
        | purpose_len | u16 | + purpose bytes (UTF-8, may be empty) |
        | key_len     | u32 | + key bytes (empty = no key)          |
        | payload_len | u32 | + payload bytes                       |
        | crc32       | u32 | IEEE CRC over seq..payload            |

When an at-rest cipher is enabled, everything after frame_len (the frame
body including its CRC) is replaced by the cipher transform of those
bytes; frame_len then counts the transformed bytes.

Payloads:
  * Mutations carry the full post-image needed for replay; see
    encode_record_image / encode_grant.
  * Reads and queries carry a 32-byte SHA-256 digest of the returned
    content, never the content itself.
  * TTLSET carries the new expiry as a u64; REVOKE carries the revoked
    actor token.

Subject-level operations (OBJECT, FORGET, EXPORT, ACCESSRPT, and AUDITQ
with a subject filter) put the subject token in the key field.
"""

import hashlib
import struct
import zlib
from dataclasses import dataclass

from .errors import CorruptLog
from .model import AclGrant, Record

MAGIC = b"GKVL"
VERSION = 1
HEADER = MAGIC + struct.pack("<H", VERSION)

OP_PUT = 1
OP_GET = 2
OP_DEL = 3
OP_TTLSET = 4
OP_TTLCLEAR = 5
OP_GRANT = 6
OP_REVOKE = 7
OP_OBJECT = 8
OP_FORGET = 9
OP_EXPIRE_ERASE = 10
OP_COMPACT = 11
OP_EXPORT = 12
OP_ACCESSRPT = 13
OP_AUDITQ = 14

OP_NAMES = {
    OP_PUT: "PUT",
    OP_GET: "GET",
    OP_DEL: "DEL",
    OP_TTLSET: "TTLSET",
    OP_TTLCLEAR: "TTLCLEAR",
    OP_GRANT: "GRANT",
    OP_REVOKE: "REVOKE",
    OP_OBJECT: "OBJECT",
    OP_FORGET: "FORGET",
    OP_EXPIRE_ERASE: "EXPIRE_ERASE",
    OP_COMPACT: "COMPACT",
    OP_EXPORT: "EXPORT",
    OP_ACCESSRPT: "ACCESSRPT",
    OP_AUDITQ: "AUDITQ",
}

# Opcodes whose replay mutates state. Redacted frames are never applied.
MUTATION_OPS = frozenset(
    {OP_PUT, OP_DEL, OP_TTLSET, OP_TTLCLEAR, OP_GRANT, OP_REVOKE,
     OP_OBJECT, OP_FORGET, OP_EXPIRE_ERASE}
)

# Subject-level opcodes: the frame's key field holds the subject token.
SUBJECT_OPS = frozenset({OP_OBJECT, OP_FORGET, OP_EXPORT, OP_ACCESSRPT, OP_AUDITQ})

REDACTED_BIT = 0x80

OUT_OK = 0
OUT_DENIED = 1
OUT_NOT_FOUND = 2
OUT_ERROR = 3

OUT_NAMES = {OUT_OK: "OK", OUT_DENIED: "DENIED", OUT_NOT_FOUND: "NOT_FOUND", OUT_ERROR: "ERROR"}

_FIXED = struct.Struct("<QQBB")  # seq, ts, opcode, outcome
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")


@dataclass(slots=True)
class AuditEntry:
    seq: int
    ts: int
    opcode: int
    outcome: int
    actor: str
    purpose: str | None = None
    key: bytes | None = None
    payload: bytes = b""

    @property
    def redacted(self) -> bool:
        return bool(self.opcode & REDACTED_BIT)

    @property
    def base_opcode(self) -> int:
        return self.opcode & ~REDACTED_BIT

    def describe(self) -> str:
        """One-line text rendering used by query output and the CLI."""
        op = OP_NAMES.get(self.base_opcode, str(self.base_opcode))
        if self.redacted:
            op += "*"
        key = self.key.hex() if self.key else "-"
        return (
            f"seq={self.seq} ts={self.ts} op={op} outcome={OUT_NAMES.get(self.outcome, '?')} "
            f"actor={self.actor} purpose={self.purpose or '-'} key={key} payload_len={len(self.payload)}"
        )


def digest(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def salted_digest(salt: bytes, data: bytes) -> bytes:
    return hashlib.sha256(salt + data).digest()


def encode_frame_body(e: AuditEntry) -> bytes:
    actor = e.actor.encode()
    purpose = e.purpose.encode() if e.purpose else b""
    key = e.key or b""
    body = b"".join(
        (
            _FIXED.pack(e.seq, e.ts, e.opcode, e.outcome),
            _U16.pack(len(actor)),
            actor,
            _U16.pack(len(purpose)),
            purpose,
            _U32.pack(len(key)),
            key,
            _U32.pack(len(e.payload)),
            e.payload,
        )
    )
    return body + _U32.pack(zlib.crc32(body))


def encode_frame(e: AuditEntry, cipher=None) -> bytes:
    body = encode_frame_body(e)
    if cipher is not None:
        body = cipher.encrypt(body)
    return _U32.pack(len(body)) + body


def decode_frame_body(body: bytes) -> AuditEntry:
    """Parse one frame body (CRC included). Raises CorruptLog on bad CRC
    or malformed lengths."""
    if len(body) < _FIXED.size + 4:
        raise CorruptLog("frame too short")
    crc_stored = _U32.unpack_from(body, len(body) - 4)[0]
    if zlib.crc32(body[:-4]) != crc_stored:
        raise CorruptLog("crc mismatch")
    try:
        seq, ts, opcode, outcome = _FIXED.unpack_from(body, 0)
        off = _FIXED.size
        alen = _U16.unpack_from(body, off)[0]
        off += 2
        actor = body[off : off + alen].decode()
        off += alen
        plen = _U16.unpack_from(body, off)[0]
        off += 2
        purpose = body[off : off + plen].decode() if plen else None
        off += plen
        klen = _U32.unpack_from(body, off)[0]
        off += 4
        key = bytes(body[off : off + klen]) if klen else None
        off += klen
        paylen = _U32.unpack_from(body, off)[0]
        off += 4
        payload = bytes(body[off : off + paylen])
        off += paylen
    except (struct.error, UnicodeDecodeError) as exc:
        raise CorruptLog(f"malformed frame: {exc}") from exc
    if off + 4 != len(body):
        raise CorruptLog("frame length mismatch")
    return AuditEntry(seq, ts, opcode, outcome, actor, purpose, key, payload)


# -- token / set / record payload encoding --------------------------------


def _enc_token(s: str) -> bytes:
    b = s.encode()
    return _U16.pack(len(b)) + b


def _enc_tokset(items) -> bytes:
    toks = sorted(items)
    return _U16.pack(len(toks)) + b"".join(_enc_token(t) for t in toks)


def _enc_bytes(b: bytes) -> bytes:
    return _U32.pack(len(b)) + b


class _Reader:
    __slots__ = ("buf", "off")

    def __init__(self, buf: bytes):
        self.buf = buf
        self.off = 0

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.buf):
            raise CorruptLog("truncated payload")
        out = self.buf[self.off : self.off + n]
        self.off += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return _U16.unpack(self.take(2))[0]

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]

    def u64(self) -> int:
        return _U64.unpack(self.take(8))[0]

    def token(self) -> str:
        return self.take(self.u16()).decode()

    def tokset(self) -> frozenset:
        return frozenset(self.token() for _ in range(self.u16()))

    def blob(self) -> bytes:
        return bytes(self.take(self.u32()))

    def done(self) -> bool:
        return self.off == len(self.buf)


def encode_record_image(rec: Record) -> bytes:
    """Post-image of a record: everything replay needs except the key,
    which lives in the frame."""
    return b"".join(
        (
            b"\x01",
            _enc_bytes(rec.value),
            _enc_token(rec.owner),
            _enc_tokset(rec.purposes),
            _enc_tokset(rec.objections),
            (b"\x01" + _U64.pack(rec.expiry)) if rec.expiry is not None else b"\x00" + _U64.pack(0),
            _enc_tokset(rec.recipients),
            _enc_token(rec.origin),
            _enc_tokset(rec.allowed_regions),
            _U64.pack(rec.created_at),
        )
    )


def decode_record_image(key: bytes, payload: bytes) -> Record:
    r = _Reader(payload)
    if r.u8() != 1:
        raise CorruptLog("unknown record image version")
    value = r.blob()
    owner = r.token()
    purposes = r.tokset()
    objections = r.tokset()
    has_expiry = r.u8()
    expiry_raw = r.u64()
    recipients = r.tokset()
    origin = r.token()
    regions = r.tokset()
    created_at = r.u64()
    return Record(
        key=key,
        value=value,
        owner=owner,
        purposes=purposes,
        objections=objections,
        expiry=expiry_raw if has_expiry else None,
        recipients=recipients,
        origin=origin,
        allowed_regions=regions,
        created_at=created_at,
    )


def encode_grant(g: AclGrant) -> bytes:
    return b"".join(
        (
            b"\x01",
            _enc_token(g.actor),
            _enc_tokset(g.allowed_ops),
            _enc_tokset(g.allowed_purposes),
            (b"\x01" + _U64.pack(g.valid_until)) if g.valid_until is not None else b"\x00" + _U64.pack(0),
        )
    )


def decode_grant(payload: bytes) -> AclGrant:
    r = _Reader(payload)
    if r.u8() != 1:
        raise CorruptLog("unknown grant version")
    actor = r.token()
    ops = r.tokset()
    purposes = r.tokset()
    has_until = r.u8()
    until = r.u64()
    return AclGrant(actor, ops, purposes, until if has_until else None)


def encode_ttl(expiry_us: int) -> bytes:
    return _U64.pack(expiry_us)


def decode_ttl(payload: bytes) -> int:
    return _U64.unpack(payload)[0]


def encode_revoked(actor: str) -> bytes:
    return _enc_token(actor)


def decode_revoked(payload: bytes) -> str:
    return _Reader(payload).token()


DUMP_MAGIC = b"GKVD1"


def state_dump(records: dict, grants: dict) -> bytes:
    """Deterministic serialization of keyspace + grant table (TTLs ride
    in the record images). Byte-equal dumps mean equal state."""
    parts = [DUMP_MAGIC, _U32.pack(len(records))]
    for key in sorted(records):
        rec = records[key]
        parts.append(_enc_bytes(key))
        parts.append(_enc_bytes(encode_record_image(rec)))
    parts.append(_U32.pack(len(grants)))
    for actor in sorted(grants):
        parts.append(_enc_bytes(encode_grant(grants[actor])))
    return b"".join(parts)
