"""In-memory keyspace with secondary indices and access decisions.

The store is a plain state machine: it holds records, grants, and three
indices (owner, purpose, expiry) and keeps them consistent across every
mutation. It performs no auditing and no authentication by itself; the
engine wraps every public operation with those concerns. Expired records
are physically present until an expiry path erases them, but every
read-side helper here treats them as absent.
"""

import random

from sortedcontainers import SortedList

from .model import READ, AclGrant, Decision, Record, ALLOW, deny


class SampleSet:
    """Set of keys supporting O(1) add/discard/uniform-choice.

    Backs the probabilistic expiry sampler: holds every key with an
    expiry flag set.
    """

    __slots__ = ("_items", "_pos")

    def __init__(self):
        self._items: list[bytes] = []
        self._pos: dict[bytes, int] = {}

    def __len__(self) -> int:
        return len(self._items)

    def __contains__(self, key: bytes) -> bool:
        return key in self._pos

    def add(self, key: bytes) -> None:
        if key not in self._pos:
            self._pos[key] = len(self._items)
            self._items.append(key)

    def discard(self, key: bytes) -> None:
        i = self._pos.pop(key, None)
        if i is None:
            return
        last = self._items.pop()
        if i < len(self._items):
            self._items[i] = last
            self._pos[last] = i

    def sample(self, rng: random.Random, k: int) -> list[bytes]:
        """k keys, without replacement when the set is large enough,
        with replacement otherwise."""
        n = len(self._items)
        if n == 0:
            return []
        if n >= k:
            return rng.sample(self._items, k)
        items = self._items
        return [items[rng.randrange(n)] for _ in range(k)]


class Store:
    """Keyspace + grant table + indices, serialized by the caller."""

    def __init__(self, server_region: str = "local"):
        self.server_region = server_region
        self.records: dict[bytes, Record] = {}
        self.grants: dict[str, AclGrant] = {}
        self.by_owner: dict[str, set[bytes]] = {}
        self.by_purpose: dict[str, set[bytes]] = {}
        self.by_expiry: SortedList = SortedList()  # (expiry_us, key) pairs
        self.expire_flagged = SampleSet()

    # -- record mutations ------------------------------------------------

    def insert(self, rec: Record) -> bool:
        """Store a record, replacing any previous version. True if created."""
        old = self.records.get(rec.key)
        if old is not None:
            self._unindex(old)
        self.records[rec.key] = rec
        self._index(rec)
        return old is None

    def remove(self, key: bytes) -> Record | None:
        rec = self.records.pop(key, None)
        if rec is not None:
            self._unindex(rec)
        return rec

    def set_expiry(self, key: bytes, expiry_us: int | None) -> None:
        rec = self.records[key]
        if rec.expiry is not None:
            self.by_expiry.discard((rec.expiry, key))
            self.expire_flagged.discard(key)
        rec.expiry = expiry_us
        if expiry_us is not None:
            self.by_expiry.add((expiry_us, key))
            self.expire_flagged.add(key)

    def add_objection(self, key: bytes, purpose: str) -> None:
        rec = self.records[key]
        rec.objections = rec.objections | {purpose}

    def _index(self, rec: Record) -> None:
        self.by_owner.setdefault(rec.owner, set()).add(rec.key)
        for p in rec.purposes:
            self.by_purpose.setdefault(p, set()).add(rec.key)
        if rec.expiry is not None:
            self.by_expiry.add((rec.expiry, rec.key))
            self.expire_flagged.add(rec.key)

    def _unindex(self, rec: Record) -> None:
        owned = self.by_owner.get(rec.owner)
        if owned is not None:
            owned.discard(rec.key)
            if not owned:
                del self.by_owner[rec.owner]
        for p in rec.purposes:
            keys = self.by_purpose.get(p)
            if keys is not None:
                keys.discard(rec.key)
                if not keys:
                    del self.by_purpose[p]
        if rec.expiry is not None:
            self.by_expiry.discard((rec.expiry, rec.key))
            self.expire_flagged.discard(rec.key)

    # -- grants ----------------------------------------------------------

    def set_grant(self, grant: AclGrant) -> None:
        self.grants[grant.actor] = grant

    def drop_grant(self, actor: str) -> bool:
        return self.grants.pop(actor, None) is not None

    # -- lookups ---------------------------------------------------------

    def get_record(self, key: bytes) -> Record | None:
        return self.records.get(key)

    def is_expired(self, rec: Record, now_us: int) -> bool:
        return rec.expiry is not None and rec.expiry < now_us

    def keys_by_owner(self, owner: str, now_us: int) -> list[bytes]:
        """Live keys of one owner, bytewise ascending; expired keys excluded
        even if not yet physically erased."""
        keys = self.by_owner.get(owner, ())
        return sorted(k for k in keys if not self.is_expired(self.records[k], now_us))

    def keys_by_purpose(self, purpose: str, now_us: int) -> list[bytes]:
        keys = self.by_purpose.get(purpose, ())
        return sorted(k for k in keys if not self.is_expired(self.records[k], now_us))

    def owned_keys_raw(self, owner: str) -> list[bytes]:
        """All physically present keys of an owner, including expired ones.
        Erasure paths must cover those too."""
        return sorted(self.by_owner.get(owner, ()))

    def pending_expired(self, now_us: int) -> int:
        """Number of expired records still physically present."""
        return self.by_expiry.bisect_left((now_us, b""))

    # -- access decisions --------------------------------------------------

    def check_access(
        self,
        actor: str,
        op_kind: str,
        purpose: str | None = None,
        record: Record | None = None,
        now_us: int = 0,
    ) -> Decision:
        """Deny-by-default decision for one operation.

        Grant-level failures (missing, expired, op not covered, purpose not
        granted) deny with ACCESS_DENIED. Record-level purpose failures
        (not whitelisted, or objected) deny with PURPOSE_DENIED; an
        objection wins even when the purpose is whitelisted.
        """
        grant = self.grants.get(actor)
        if grant is None or grant.expired(now_us):
            return deny("ACCESS_DENIED")
        if op_kind not in grant.allowed_ops:
            return deny("ACCESS_DENIED")
        if purpose is not None and purpose not in grant.allowed_purposes:
            return deny("ACCESS_DENIED")
        if op_kind == READ and record is not None:
            if purpose not in record.purposes:
                return deny("PURPOSE_DENIED")
            if purpose in record.objections:
                return deny("PURPOSE_DENIED")
        return ALLOW

    def region_allowed(self, allowed_regions: frozenset) -> bool:
        # Empty set means unrestricted; a non-empty set is a whitelist the
        # server's own region must be on, or the record is never stored.
        return not allowed_regions or self.server_region in allowed_regions
