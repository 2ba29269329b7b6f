"""The command executor: one serialized front door for every operation.

All commands — client calls, expiry ticks, compaction — run under one
lock, so state transitions are totally ordered and the audit sequence
reflects that order. Every client-visible operation appends exactly one
audit entry (with its outcome) before the call returns, and every
internal erasure appends its own entry; under fsync=always the entry is
durable before the acknowledgment.

Opening an engine on an existing log replays it first, so the audit log
doubles as the persistence journal.
"""

import os
import random
import threading

from . import compliance
from .auditlog import AuditLog, QueryFilter, query as log_query
from .cipher import make_cipher
from .clock import Clock, system_clock
from .config import ComplianceConfig
from .errors import (
    AccessDenied,
    BadMeta,
    BadTtl,
    GdprKvError,
    IoError,
    NotFound,
    PurposeDenied,
    RegionDenied,
)
from .expiry import LAZY, ExpiryManager
from .framing import (
    OP_ACCESSRPT,
    OP_AUDITQ,
    OP_DEL,
    OP_EXPIRE_ERASE,
    OP_EXPORT,
    OP_FORGET,
    OP_GET,
    OP_GRANT,
    OP_OBJECT,
    OP_PUT,
    OP_REVOKE,
    OP_TTLCLEAR,
    OP_TTLSET,
    OUT_DENIED,
    OUT_ERROR,
    OUT_NOT_FOUND,
    OUT_OK,
    AuditEntry,
    digest,
    encode_grant,
    encode_record_image,
    encode_revoked,
    encode_ttl,
    state_dump,
)
from .model import (
    ADMIN,
    DELETE,
    OP_KINDS,
    READ,
    WRITE,
    AclGrant,
    Record,
    RecordMeta,
    require_token,
    require_token_set,
)
from .replay import replay, replace_log, rewrite_compacted
from .store import Store

SYSTEM_ACTOR = "system"

_OUTCOME_OF = {
    "ACCESS_DENIED": OUT_DENIED,
    "PURPOSE_DENIED": OUT_DENIED,
    "REGION_DENIED": OUT_DENIED,
    "NOT_FOUND": OUT_NOT_FOUND,
}


class Engine:
    def __init__(
        self,
        config: ComplianceConfig | None = None,
        *,
        clock: Clock | None = None,
        rng: random.Random | None = None,
        auto_flush: bool = True,
    ):
        self.config = (config or ComplianceConfig()).validate()
        self.clock = clock or system_clock
        self.rng = rng or random.Random()
        self._lock = threading.RLock()
        self._failed = False
        self._last_ts = 0
        self._auto_flush = auto_flush

        self.store = Store(self.config.server_region)
        self.cipher = make_cipher(self.config.cipher, self.config.key_file)
        self._forgotten: dict[str, int] = {}

        path = self.config.log_file
        resume = None
        if os.path.exists(path) and os.path.getsize(path) > 0:
            replayed = replay(path, self.cipher)
            for rec in replayed.records.values():
                self.store.insert(rec)
            for grant in replayed.grants.values():
                self.store.set_grant(grant)
            self._forgotten.update(replayed.forgotten)
            resume = (replayed.last_seq, replayed.entry_count)
        self.log = AuditLog(
            path, self.config.fsync_policy(), self.cipher,
            auto_flush=auto_flush, resume=resume,
        )

        self.ops_total = 0
        self.denied_total = 0
        self.internal_erasures = 0
        self.compactions = 0
        self.last_compact_us = self.clock()

        self.expiry = ExpiryManager(self.store, self._on_expire_erase, self.config.lazy_params())

        self.bootstrap_entries = 0
        for admin in self.config.admins:
            existing = self.store.grants.get(admin)
            if existing is not None and ADMIN in existing.allowed_ops:
                continue
            grant = AclGrant(admin, frozenset({ADMIN}))
            self._append(OP_GRANT, OUT_OK, SYSTEM_ACTOR, payload=encode_grant(grant))
            self.store.set_grant(grant)
            self.bootstrap_entries += 1

    # -- plumbing ----------------------------------------------------------

    def _ts(self) -> int:
        # Audit timestamps must be non-decreasing even if the wall clock
        # steps backwards.
        now = self.clock()
        if now < self._last_ts:
            now = self._last_ts
        self._last_ts = now
        return now

    def _append(self, opcode, outcome, actor, purpose=None, key=None, payload=b"") -> int:
        entry = AuditEntry(
            self.log.next_seq(), self._ts(), opcode, outcome, actor, purpose, key, payload
        )
        try:
            self.log.append(entry)
        except IoError:
            self._failed = True
            raise
        return entry.seq

    def _command(self, opcode, outcome, actor, purpose=None, key=None, payload=b"") -> int:
        seq = self._append(opcode, outcome, actor, purpose, key, payload)
        self.ops_total += 1
        if outcome == OUT_DENIED:
            self.denied_total += 1
        return seq

    def _fail_with(self, exc: GdprKvError, opcode, actor, purpose=None, key=None):
        self._command(opcode, _OUTCOME_OF.get(exc.code, OUT_ERROR), actor, purpose, key)
        raise exc

    def _check_open(self) -> None:
        if self._failed:
            raise IoError("engine is fail-stopped: audit log unwritable")

    def _on_expire_erase(self, key: bytes, rec: Record, now_us: int) -> None:
        self._append(OP_EXPIRE_ERASE, OUT_OK, SYSTEM_ACTOR, key=key)
        self.internal_erasures += 1

    def _is_admin(self, actor: str, now_us: int) -> bool:
        return bool(self.store.check_access(actor, ADMIN, now_us=now_us))

    # -- data path -----------------------------------------------------------

    def put(self, key: bytes, value: bytes, meta: RecordMeta, actor: str, purpose: str) -> str:
        with self._lock:
            self._check_open()
            now = self.clock()
            try:
                if not key:
                    raise BadMeta("empty key")
                vmeta = meta.validated()
                if vmeta.expiry is not None and vmeta.expiry <= now:
                    raise BadMeta("expiry must lie in the future")
                decision = self.store.check_access(actor, WRITE, purpose, now_us=now)
                if not decision:
                    raise AccessDenied(f"{actor} may not write with purpose {purpose}")
                if not self.store.region_allowed(vmeta.allowed_regions):
                    raise RegionDenied(
                        f"server region {self.store.server_region} not in allowed set"
                    )
            except GdprKvError as exc:
                # Rejected writes carry no payload: a value refused on
                # region or access grounds must not enter the log either.
                self._fail_with(exc, OP_PUT, actor, purpose, key)
            self.expiry.passive_check(key, now)
            rec = Record(
                key=key,
                value=value,
                owner=vmeta.owner,
                purposes=vmeta.purposes,
                objections=vmeta.objections,
                expiry=vmeta.expiry,
                recipients=vmeta.recipients,
                origin=vmeta.origin,
                allowed_regions=vmeta.allowed_regions,
                created_at=now,
            )
            created = key not in self.store.records
            # Mutations audit before they apply; a log failure must leave
            # no unaudited state change behind.
            self._command(OP_PUT, OUT_OK, actor, purpose, key, encode_record_image(rec))
            self.store.insert(rec)
            return "created" if created else "updated"

    def _read_record(self, key: bytes, actor: str, purpose: str, opcode, now: int) -> Record:
        decision = self.store.check_access(actor, READ, purpose, now_us=now)
        if not decision:
            raise AccessDenied(f"{actor} has no read grant for purpose {purpose}")
        rec = self.store.get_record(key)
        if rec is None:
            raise NotFound("no such key")
        if self.expiry.passive_check(key, now):
            raise NotFound("key expired")
        decision = self.store.check_access(actor, READ, purpose, rec, now)
        if not decision:
            raise PurposeDenied(f"purpose {purpose} not permitted for this record")
        return rec

    def get(self, key: bytes, actor: str, purpose: str) -> tuple[bytes, RecordMeta]:
        with self._lock:
            self._check_open()
            now = self.clock()
            try:
                rec = self._read_record(key, actor, purpose, OP_GET, now)
            except GdprKvError as exc:
                self._fail_with(exc, OP_GET, actor, purpose, key)
            self._command(OP_GET, OUT_OK, actor, purpose, key, digest(rec.value))
            return rec.value, rec.meta()

    def getmeta(self, key: bytes, actor: str, purpose: str) -> tuple[RecordMeta, int]:
        with self._lock:
            self._check_open()
            now = self.clock()
            try:
                rec = self._read_record(key, actor, purpose, OP_GET, now)
            except GdprKvError as exc:
                self._fail_with(exc, OP_GET, actor, purpose, key)
            rendered = compliance.render_meta_line(rec.meta(), rec.created_at).encode()
            self._command(OP_GET, OUT_OK, actor, purpose, key, digest(rendered))
            return rec.meta(), rec.created_at

    def delete(self, key: bytes, actor: str) -> bool:
        with self._lock:
            self._check_open()
            now = self.clock()
            if not self.store.check_access(actor, DELETE, now_us=now):
                self._fail_with(AccessDenied(f"{actor} has no delete grant"), OP_DEL, actor, key=key)
            if self.expiry.passive_check(key, now):
                # Expired keys are client-invisible; erasure was audited.
                self._command(OP_DEL, OUT_NOT_FOUND, actor, key=key)
                return False
            existed = key in self.store.records
            self._command(OP_DEL, OUT_OK if existed else OUT_NOT_FOUND, actor, key=key)
            self.store.remove(key)
            return existed

    def set_ttl(self, key: bytes, expiry_us: int, actor: str) -> None:
        with self._lock:
            self._check_open()
            now = self.clock()
            try:
                if not self.store.check_access(actor, WRITE, now_us=now):
                    raise AccessDenied(f"{actor} has no write grant")
                self.expiry.passive_check(key, now)
                if self.store.get_record(key) is None:
                    raise NotFound("no such key")
                if expiry_us <= now:
                    raise BadTtl("expiry must lie in the future")
            except GdprKvError as exc:
                self._fail_with(exc, OP_TTLSET, actor, key=key)
            self._command(OP_TTLSET, OUT_OK, actor, key=key, payload=encode_ttl(expiry_us))
            self.store.set_expiry(key, expiry_us)

    def clear_ttl(self, key: bytes, actor: str) -> None:
        with self._lock:
            self._check_open()
            now = self.clock()
            try:
                if not self.store.check_access(actor, WRITE, now_us=now):
                    raise AccessDenied(f"{actor} has no write grant")
                self.expiry.passive_check(key, now)
                if self.store.get_record(key) is None:
                    raise NotFound("no such key")
            except GdprKvError as exc:
                self._fail_with(exc, OP_TTLCLEAR, actor, key=key)
            self._command(OP_TTLCLEAR, OUT_OK, actor, key=key)
            self.store.set_expiry(key, None)

    # -- control path --------------------------------------------------------

    def grant(self, actor, allowed_ops, allowed_purposes, valid_until, admin_actor) -> None:
        with self._lock:
            self._check_open()
            now = self.clock()
            try:
                if not self.store.check_access(admin_actor, ADMIN, now_us=now):
                    raise AccessDenied(f"{admin_actor} lacks the admin grant")
                require_token(actor, "actor")
                ops = frozenset(allowed_ops)
                if not ops <= OP_KINDS:
                    raise BadMeta(f"unknown op kinds: {sorted(ops - OP_KINDS)}")
                purposes = require_token_set(allowed_purposes, "purpose")
            except GdprKvError as exc:
                self._fail_with(exc, OP_GRANT, admin_actor)
            g = AclGrant(actor, ops, purposes, valid_until)
            self._command(OP_GRANT, OUT_OK, admin_actor, payload=encode_grant(g))
            self.store.set_grant(g)

    def revoke(self, actor: str, admin_actor: str) -> None:
        with self._lock:
            self._check_open()
            now = self.clock()
            if not self.store.check_access(admin_actor, ADMIN, now_us=now):
                self._fail_with(AccessDenied(f"{admin_actor} lacks the admin grant"), OP_REVOKE, admin_actor)
            self._command(OP_REVOKE, OUT_OK, admin_actor, payload=encode_revoked(actor))
            self.store.drop_grant(actor)

    def check_access(self, actor, op_kind, purpose=None, record=None):
        return self.store.check_access(actor, op_kind, purpose, record, self.clock())

    def keys_by_owner(self, subject: str) -> list[bytes]:
        with self._lock:
            return self.store.keys_by_owner(subject, self.clock())

    def keys_by_purpose(self, purpose: str) -> list[bytes]:
        with self._lock:
            return self.store.keys_by_purpose(purpose, self.clock())

    # -- subject rights --------------------------------------------------------

    def _subject_gate(self, subject: str, actor: str, opcode, now: int) -> None:
        if actor != subject and not self._is_admin(actor, now):
            self._fail_with(
                AccessDenied("only the subject or an admin may do this"),
                opcode, actor, key=subject.encode(),
            )

    def subject_access(self, subject: str, actor: str):
        with self._lock:
            self._check_open()
            now = self.clock()
            self._subject_gate(subject, actor, OP_ACCESSRPT, now)
            report = compliance.build_subject_report(self.store, subject, now)
            rendered = compliance.render_report(report)
            self._command(OP_ACCESSRPT, OUT_OK, actor, key=subject.encode(), payload=digest(rendered))
            return report

    def export_portable(self, subject: str, actor: str) -> bytes:
        with self._lock:
            self._check_open()
            now = self.clock()
            self._subject_gate(subject, actor, OP_EXPORT, now)
            data = compliance.export_records(self.store, subject, now)
            self._command(OP_EXPORT, OUT_OK, actor, key=subject.encode(), payload=digest(data))
            return data

    def forget_subject(self, subject: str, actor: str) -> int:
        """Erase every record of the subject (expired leftovers included)
        and queue its log history for redaction at compaction."""
        with self._lock:
            self._check_open()
            now = self.clock()
            self._subject_gate(subject, actor, OP_FORGET, now)
            keys = self.store.owned_keys_raw(subject)
            self._command(OP_FORGET, OUT_OK, actor, key=subject.encode())
            for key in keys:
                self._append(OP_DEL, OUT_OK, actor, key=key)
                self.store.remove(key)
                self.internal_erasures += 1
            # Everything up to and including the erasure entries themselves
            # is subject history and gets redacted at compaction.
            self._forgotten[subject] = self.log.last_seq
            if self.config.forget_compaction == "immediate":
                self._compact_locked(actor)
            return len(keys)

    def object_subject(self, subject: str, purpose: str, actor: str) -> int:
        with self._lock:
            self._check_open()
            now = self.clock()
            try:
                self._subject_gate(subject, actor, OP_OBJECT, now)
                require_token(purpose, "purpose")
            except BadMeta as exc:
                self._fail_with(exc, OP_OBJECT, actor, purpose=None, key=subject.encode())
            live = len(self.store.keys_by_owner(subject, now))
            self._command(OP_OBJECT, OUT_OK, actor, purpose, subject.encode())
            # Objections land on every physically present record (even
            # expired leftovers) so replay converges to the same state.
            for key in self.store.owned_keys_raw(subject):
                self.store.add_objection(key, purpose)
            return live

    def breach_trail(self, flt: QueryFilter, actor: str) -> list[AuditEntry]:
        with self._lock:
            self._check_open()
            now = self.clock()
            if not self._is_admin(actor, now):
                self._fail_with(
                    AccessDenied("audit queries need the admin grant"),
                    OP_AUDITQ, actor,
                    key=flt.subject.encode() if flt.subject else None,
                )
            self.log.sync()
            entries = log_query(self.log.path, flt, self.cipher)
            rendered = "\n".join(e.describe() for e in entries).encode()
            self._command(
                OP_AUDITQ, OUT_OK, actor,
                key=flt.subject.encode() if flt.subject else None,
                payload=digest(rendered),
            )
            return entries

    # -- bulk import (portability round-trip) ---------------------------------

    def load_records(self, items, actor: str) -> int:
        """Import (key, value, meta, created_at) tuples as audited PUTs,
        preserving created_at. Used by the portability importer."""
        count = 0
        with self._lock:
            self._check_open()
            now = self.clock()
            if not self.store.check_access(actor, WRITE, now_us=now):
                self._fail_with(AccessDenied(f"{actor} has no write grant"), OP_PUT, actor)
            for key, value, meta, created_at in items:
                if not key:
                    raise BadMeta("empty key")
                vmeta = meta.validated()
                if not self.store.region_allowed(vmeta.allowed_regions):
                    raise RegionDenied("server region not in allowed set")
                rec = Record(
                    key=key, value=value, owner=vmeta.owner,
                    purposes=vmeta.purposes, objections=vmeta.objections,
                    expiry=vmeta.expiry, recipients=vmeta.recipients,
                    origin=vmeta.origin, allowed_regions=vmeta.allowed_regions,
                    created_at=created_at,
                )
                self._command(OP_PUT, OUT_OK, actor, None, key, encode_record_image(rec))
                self.store.insert(rec)
                count += 1
        return count

    # -- maintenance -----------------------------------------------------------

    def tick(self) -> int:
        """One expiry pass under the configured strategy."""
        with self._lock:
            self._check_open()
            now = self.clock()
            if self.config.expiry_strategy == LAZY:
                return self.expiry.lazy_tick(now, self.rng)
            return self.expiry.eager_tick(now)

    def compact(self, actor: str = SYSTEM_ACTOR) -> None:
        with self._lock:
            self._check_open()
            self._compact_locked(actor)

    def _compact_locked(self, actor: str) -> None:
        now = self._ts()
        # Expired-but-present records must not ride into the snapshot;
        # erase (and audit) them first so replay equals live state.
        self.expiry.eager_tick(now)
        self.log.sync()
        tmp = self.log.path + ".compact"
        salt = self.rng.randbytes(16)
        try:
            count, _ = rewrite_compacted(
                self.log.path, tmp,
                self.store.records, self.store.grants, self._forgotten,
                now, actor, salt, self.cipher,
            )
        except OSError as exc:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise IoError(f"compaction failed, old log retained: {exc}") from exc
        self.log.close()
        replace_log(tmp, self.log.path)
        self.log = AuditLog(
            self.log.path, self.config.fsync_policy(), self.cipher,
            auto_flush=self._auto_flush, resume=(count, count),
        )
        self._forgotten.clear()
        self.compactions += 1
        self.last_compact_us = now

    def maybe_compact(self) -> bool:
        """Periodic compaction hook for the scheduler."""
        with self._lock:
            now = self.clock()
            if now - self.last_compact_us >= self.config.compaction_interval_s * 1_000_000:
                self._compact_locked(SYSTEM_ACTOR)
                return True
            return False

    def info(self) -> dict:
        with self._lock:
            now = self.clock()
            return {
                "ops_total": self.ops_total,
                "denied_total": self.denied_total,
                "expired_erased": self.expiry.stats.erased,
                "pending_expired": self.store.pending_expired(now),
                "log_entries": self.log.entry_count,
                "log_bytes": self.log.byte_size,
                "compactions": self.compactions,
                "fsync_mode": self.log.policy.describe(),
                "expiry_strategy": self.config.expiry_strategy,
                "server_region": self.store.server_region,
                "cipher": self.config.cipher,
            }

    def dump_state(self) -> bytes:
        with self._lock:
            return state_dump(self.store.records, self.store.grants)

    def verify_log(self):
        with self._lock:
            self.log.sync()
            from .auditlog import verify

            return verify(self.log.path, self.cipher)

    def close(self) -> None:
        with self._lock:
            self.log.close()
