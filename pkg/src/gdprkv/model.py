"""Domain types: records with protection metadata, access grants, decisions.

A record is the unit of personal data: an opaque value plus the metadata
needed to enforce purpose limitation, objections, retention, disclosure
tracking, and residency. Tokens (owner, purpose, actor, origin, region,
recipient) are non-empty UTF-8 strings without whitespace, commas, or '='
so they can appear verbatim in text renderings and wire arguments.
"""

from dataclasses import dataclass, field

from .errors import BadMeta

READ = "read"
WRITE = "write"
DELETE = "delete"
ADMIN = "admin"
OP_KINDS = frozenset({READ, WRITE, DELETE, ADMIN})

_TOKEN_BAD_CHARS = set(" \t\r\n,=")

INDEFINITE_STORAGE = "indefinite-pending-policy"


def is_token(s: str) -> bool:
    return bool(s) and isinstance(s, str) and not (_TOKEN_BAD_CHARS & set(s))


def require_token(s: str, what: str) -> str:
    if not is_token(s):
        raise BadMeta(f"invalid {what} token: {s!r}")
    return s


def require_token_set(items, what: str) -> frozenset:
    out = frozenset(items)
    for t in out:
        require_token(t, what)
    return out


@dataclass(frozen=True)
class RecordMeta:
    """Caller-supplied metadata attached to a record at write time."""

    owner: str
    purposes: frozenset = frozenset()
    objections: frozenset = frozenset()
    expiry: int | None = None
    recipients: frozenset = frozenset()
    origin: str = "direct"
    allowed_regions: frozenset = frozenset()

    def validated(self) -> "RecordMeta":
        require_token(self.owner, "owner")
        require_token(self.origin, "origin")
        return RecordMeta(
            owner=self.owner,
            purposes=require_token_set(self.purposes, "purpose"),
            objections=require_token_set(self.objections, "objection"),
            expiry=self.expiry,
            recipients=require_token_set(self.recipients, "recipient"),
            origin=self.origin,
            allowed_regions=require_token_set(self.allowed_regions, "region"),
        )


@dataclass(slots=True)
class Record:
    key: bytes
    value: bytes
    owner: str
    purposes: frozenset
    objections: frozenset
    expiry: int | None
    recipients: frozenset
    origin: str
    allowed_regions: frozenset
    created_at: int

    def meta(self) -> RecordMeta:
        return RecordMeta(
            owner=self.owner,
            purposes=self.purposes,
            objections=self.objections,
            expiry=self.expiry,
            recipients=self.recipients,
            origin=self.origin,
            allowed_regions=self.allowed_regions,
        )

    def storage_period(self) -> str:
        # Records without a TTL report an explicit "no policy yet" marker
        # rather than pretending a retention period exists.
        return str(self.expiry) if self.expiry is not None else INDEFINITE_STORAGE


@dataclass(frozen=True)
class AclGrant:
    """Per-actor permission: operation kinds, purpose scope, optional expiry.

    No grant means no access; an expired grant behaves as absent.
    """

    actor: str
    allowed_ops: frozenset
    allowed_purposes: frozenset = frozenset()
    valid_until: int | None = None

    def expired(self, now_us: int) -> bool:
        return self.valid_until is not None and now_us > self.valid_until


@dataclass(frozen=True)
class Decision:
    allowed: bool
    reason: str | None = None  # error code when denied

    def __bool__(self) -> bool:
        return self.allowed


ALLOW = Decision(True)


def deny(reason: str) -> Decision:
    return Decision(False, reason)


@dataclass
class SubjectReportEntry:
    key: bytes
    purposes: tuple
    objections: tuple
    recipients: tuple
    origin: str
    storage_period: str
    created_at: int


@dataclass
class SubjectReport:
    """Everything held about one subject, one entry per live record."""

    subject: str
    generated_at: int
    entries: list = field(default_factory=list)
