"""Log replay and compaction.

Replay applies mutation entries in seq order to rebuild the keyspace,
grant table, and TTL state that produced the log; reads, markers, and
redacted frames are skipped. Identical logs replay to byte-identical
state dumps.

Compaction rewrites the log so that it carries only a snapshot of live
state: a COMPACT marker, the grant table, and one synthetic PUT per live
record, renumbered from seq 1. Bytes of deleted, forgotten, or expired
values never survive the rewrite. Historical entries about forgotten
subjects are not dropped outright: they are carried forward as redacted
stubs (key and payload replaced by salted digests, opcode/ts/outcome
retained, opcode tagged with the redaction bit) so operation counts
remain demonstrable after erasure.
"""

import os
from dataclasses import dataclass, field

from .errors import CorruptLog
from .framing import (
    HEADER,
    OP_COMPACT,
    OP_DEL,
    OP_EXPIRE_ERASE,
    OP_FORGET,
    OP_GRANT,
    OP_OBJECT,
    OP_PUT,
    OP_REVOKE,
    OP_TTLCLEAR,
    OP_TTLSET,
    OUT_OK,
    REDACTED_BIT,
    SUBJECT_OPS,
    AuditEntry,
    decode_grant,
    decode_record_image,
    decode_revoked,
    decode_ttl,
    encode_frame,
    encode_grant,
    encode_record_image,
    salted_digest,
    state_dump,
)
from .auditlog import read_entries


@dataclass
class ReplayedState:
    records: dict = field(default_factory=dict)
    grants: dict = field(default_factory=dict)
    # subject -> seq of the latest FORGET; entries at or before that seq
    # are due for redaction at the next compaction
    forgotten: dict = field(default_factory=dict)
    last_seq: int = 0
    entry_count: int = 0

    def dump(self) -> bytes:
        return state_dump(self.records, self.grants)


def replay(path: str, cipher=None) -> ReplayedState:
    st = ReplayedState()
    owned: dict[str, set[bytes]] = {}

    def _drop(key: bytes) -> None:
        rec = st.records.pop(key, None)
        if rec is not None:
            keys = owned.get(rec.owner)
            if keys:
                keys.discard(key)

    for entry in read_entries(path, cipher):
        if entry.seq != st.last_seq + 1:
            raise CorruptLog(
                f"seq discontinuity: {st.last_seq} -> {entry.seq}",
                last_good_seq=st.last_seq,
            )
        st.last_seq = entry.seq
        st.entry_count += 1
        if entry.redacted or entry.outcome != OUT_OK:
            continue
        op = entry.opcode
        if op == OP_PUT:
            rec = decode_record_image(entry.key, entry.payload)
            _drop(entry.key)
            st.records[entry.key] = rec
            owned.setdefault(rec.owner, set()).add(entry.key)
        elif op in (OP_DEL, OP_EXPIRE_ERASE):
            _drop(entry.key)
        elif op == OP_TTLSET:
            rec = st.records.get(entry.key)
            if rec is not None:
                rec.expiry = decode_ttl(entry.payload)
        elif op == OP_TTLCLEAR:
            rec = st.records.get(entry.key)
            if rec is not None:
                rec.expiry = None
        elif op == OP_GRANT:
            g = decode_grant(entry.payload)
            st.grants[g.actor] = g
        elif op == OP_REVOKE:
            st.grants.pop(decode_revoked(entry.payload), None)
        elif op == OP_OBJECT:
            subject = entry.key.decode()
            for key in owned.get(subject, ()):
                rec = st.records[key]
                rec.objections = rec.objections | {entry.purpose}
        elif op == OP_FORGET:
            subject = entry.key.decode()
            for key in list(owned.get(subject, ())):
                st.records.pop(key, None)
            owned.pop(subject, None)
            st.forgotten[subject] = entry.seq
        # reads, COMPACT markers, and query ops carry no state
    return st


def _redact(entry: AuditEntry, salt: bytes) -> AuditEntry:
    return AuditEntry(
        seq=entry.seq,
        ts=entry.ts,
        opcode=entry.opcode | REDACTED_BIT,
        outcome=entry.outcome,
        actor=entry.actor,
        purpose=entry.purpose,
        key=salted_digest(salt, entry.key) if entry.key else None,
        payload=salted_digest(salt, entry.payload) if entry.payload else b"",
    )


def rewrite_compacted(
    old_path: str,
    tmp_path: str,
    records: dict,
    grants: dict,
    forgotten: dict,
    now_us: int,
    actor: str,
    salt: bytes,
    cipher=None,
) -> tuple[int, int]:
    """Write the compacted form of ``old_path`` to ``tmp_path``.

    Returns (entry_count, byte_size) of the new log. The caller swaps the
    files and owns serialization (no appends may run during the rewrite).
    """
    stubs: list[AuditEntry] = []
    owner_of: dict[bytes, str] = {}
    last_ts = 0
    for entry in read_entries(old_path, cipher):
        last_ts = max(last_ts, entry.ts)
        if entry.redacted:
            stubs.append(entry)  # already digests; carry forward
            continue
        op = entry.opcode
        if op == OP_PUT and entry.outcome == OUT_OK and entry.key:
            try:
                owner_of[entry.key] = decode_record_image(entry.key, entry.payload).owner
            except CorruptLog:
                pass
        if op in SUBJECT_OPS and entry.key:
            subject = entry.key.decode()
        elif entry.key is not None:
            subject = owner_of.get(entry.key)
        else:
            subject = None
        fseq = forgotten.get(subject) if subject is not None else None
        if fseq is not None and entry.seq <= fseq:
            stubs.append(_redact(entry, salt))

    snapshot_ts = max(now_us, last_ts)
    seq = 0
    byte_size = 0
    fd = open(tmp_path, "wb")
    try:
        fd.write(HEADER)

        def emit(e: AuditEntry) -> None:
            nonlocal seq, byte_size
            seq += 1
            e.seq = seq
            frame = encode_frame(e, cipher)
            fd.write(frame)
            byte_size += len(frame)

        for stub in stubs:
            emit(stub)
        emit(AuditEntry(0, snapshot_ts, OP_COMPACT, OUT_OK, actor))
        for name in sorted(grants):
            emit(
                AuditEntry(
                    0, snapshot_ts, OP_GRANT, OUT_OK, actor,
                    payload=encode_grant(grants[name]),
                )
            )
        for key in sorted(records):
            emit(
                AuditEntry(
                    0, snapshot_ts, OP_PUT, OUT_OK, actor,
                    key=key, payload=encode_record_image(records[key]),
                )
            )
        fd.flush()
        os.fsync(fd.fileno())
    finally:
        fd.close()
    return seq, byte_size + len(HEADER)


def replace_log(tmp_path: str, path: str) -> None:
    """Atomically swap the compacted file into place and persist the
    rename itself."""
    os.replace(tmp_path, path)
    dirfd = os.open(os.path.dirname(os.path.abspath(path)) or ".", os.O_RDONLY)
    try:
        os.fsync(dirfd)
    finally:
        os.close(dirfd)
