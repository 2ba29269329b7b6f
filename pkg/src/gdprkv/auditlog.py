"""Append-only audit log with configurable durability.

Fsync policies:
  * always    — append returns only after write+flush+fsync; an
                acknowledged command's entry survives any crash.
  * every(i)  — appends are handed to a background flusher through a
                FIFO queue; the flusher streams them to the file and
                performs flush+fsync once per interval, bounding losses
                to the final window.
  * none      — library-buffered writes, flushed on sync points and
                close, never fsynced.

If an append cannot be written the log marks itself failed and every
later append raises IO_ERROR; the engine fail-stops on that, because an
operation that cannot be audited must not execute.

``durable_bytes`` / ``flushed_bytes`` expose how much of the file is
guaranteed to survive a power crash / a process crash; the crash tests
cut the file at those offsets instead of pulling power.
"""

import io
import os
import queue
import struct
import threading
import time
from dataclasses import dataclass
from typing import Iterator

from .errors import CorruptLog, IoError
from .framing import (
    HEADER,
    MAGIC,
    SUBJECT_OPS,
    AuditEntry,
    OP_PUT,
    decode_frame_body,
    decode_record_image,
    encode_frame,
)

_U32 = struct.Struct("<I")

_STOP = object()


@dataclass(frozen=True)
class FsyncPolicy:
    mode: str = "every"  # always | every | none
    interval_ms: int = 1000

    def __post_init__(self):
        if self.mode not in ("always", "every", "none"):
            raise ValueError(f"unknown fsync mode: {self.mode}")
        if self.mode == "every" and self.interval_ms <= 0:
            raise ValueError("fsync interval must be positive")

    def describe(self) -> str:
        return f"every({self.interval_ms}ms)" if self.mode == "every" else self.mode


@dataclass
class VerifyReport:
    entries: int
    ok: bool
    violation: str | None = None
    violation_seq: int | None = None
    last_good_seq: int = 0

    def describe(self) -> str:
        if self.ok:
            return f"ok entries={self.entries}"
        return (
            f"CORRUPT entries={self.entries} last_good_seq={self.last_good_seq} "
            f"violation={self.violation}"
        )


class AuditLog:
    def __init__(
        self,
        path: str,
        policy: FsyncPolicy | None = None,
        cipher=None,
        auto_flush: bool = True,
        resume: tuple[int, int] | None = None,
    ):
        """Open ``path`` for appending, creating it with a header if new.

        ``resume`` is (last_seq, entry_count) when the caller has already
        scanned the file (the engine replays before opening); without it a
        non-empty file is scanned once to recover those counters.
        ``auto_flush=False`` suppresses the every-mode background thread;
        tests then drive interval fsyncs via fsync_now().
        """
        self.path = path
        self.policy = policy or FsyncPolicy()
        self.cipher = cipher
        self._failed = False
        self._lock = threading.Lock()

        existing = os.path.exists(path) and os.path.getsize(path) > 0
        if existing and resume is None:
            last_seq = count = 0
            for entry in read_entries(path, cipher):
                last_seq, count = entry.seq, count + 1
            resume = (last_seq, count)

        self._file = open(path, "ab", buffering=io.DEFAULT_BUFFER_SIZE)
        if not existing:
            self._file.write(HEADER)
            self._file.flush()
            os.fsync(self._file.fileno())
        self.last_seq, self.entry_count = resume or (0, 0)
        self.byte_size = self._file.tell()
        self.flushed_bytes = self.byte_size
        self.durable_bytes = self.byte_size

        self._queue: queue.SimpleQueue | None = None
        self._flusher: threading.Thread | None = None
        if self.policy.mode == "every" and auto_flush:
            self._queue = queue.SimpleQueue()
            self._flusher = threading.Thread(target=self._flush_loop, daemon=True)
            self._flusher.start()

    # -- append path -------------------------------------------------------

    def next_seq(self) -> int:
        return self.last_seq + 1

    def append(self, entry: AuditEntry) -> None:
        if self._failed:
            raise IoError("audit log failed; refusing writes")
        if entry.seq != self.last_seq + 1:
            raise ValueError(f"seq {entry.seq} breaks contiguity after {self.last_seq}")
        frame = encode_frame(entry, self.cipher)
        try:
            if self._queue is not None:
                self._queue.put(frame)
            else:
                self._file.write(frame)
                if self.policy.mode == "always":
                    self._file.flush()
                    os.fsync(self._file.fileno())
                    self.flushed_bytes = self.durable_bytes = self.byte_size + len(frame)
        except OSError as exc:
            self._failed = True
            raise IoError(f"audit append failed: {exc}") from exc
        self.last_seq = entry.seq
        self.entry_count += 1
        self.byte_size += len(frame)

    def fsync_now(self) -> None:
        """flush+fsync everything written so far (manual interval tick)."""
        if self._queue is not None:
            self.sync()
            return
        with self._lock:
            self._file.flush()
            os.fsync(self._file.fileno())
            self.flushed_bytes = self.durable_bytes = self._file.tell()

    def sync(self) -> None:
        """Barrier: all appended entries are in the OS (and fsynced except
        under mode=none). Readers call this before touching the file."""
        if self._failed:
            raise IoError("audit log failed")
        if self._queue is not None:
            done = threading.Event()
            self._queue.put(done)
            if not done.wait(timeout=30):
                raise IoError("flusher stalled")
            if self._failed:
                raise IoError("audit log failed")
            return
        self._file.flush()
        self.flushed_bytes = self._file.tell()
        if self.policy.mode == "always":
            self.durable_bytes = self.flushed_bytes

    def close(self) -> None:
        if self._queue is not None:
            self._queue.put(_STOP)
            self._flusher.join(timeout=30)
            self._queue = None
        if not self._file.closed:
            self._file.flush()
            self._file.close()

    def _flush_loop(self) -> None:
        interval = self.policy.interval_ms / 1000.0
        deadline = time.monotonic() + interval
        stop = False
        while not stop:
            timeout = max(0.0, deadline - time.monotonic())
            barrier = None
            try:
                item = self._queue.get(timeout=timeout)
            except queue.Empty:
                item = None
            try:
                if item is _STOP:
                    stop = True
                elif isinstance(item, threading.Event):
                    barrier = item
                elif item is not None:
                    self._file.write(item)
                due = stop or barrier is not None or time.monotonic() >= deadline
                if due:
                    with self._lock:
                        self._file.flush()
                        os.fsync(self._file.fileno())
                        self.flushed_bytes = self.durable_bytes = self._file.tell()
                    deadline = time.monotonic() + interval
            except OSError:
                self._failed = True
                stop = True
            finally:
                if barrier is not None:
                    barrier.set()


# -- reading ----------------------------------------------------------------


def read_frames(path: str, cipher=None) -> Iterator[tuple[AuditEntry, int]]:
    """Yield (entry, byte_offset) pairs; structural damage raises CorruptLog
    carrying the last cleanly decoded seq."""
    last_good = 0
    with open(path, "rb") as f:
        header = f.read(len(HEADER))
        if len(header) < len(HEADER) or header[:4] != MAGIC:
            raise CorruptLog("bad log header", last_good_seq=0)
        offset = len(HEADER)
        while True:
            lenb = f.read(4)
            if not lenb:
                return
            if len(lenb) < 4:
                raise CorruptLog("truncated frame length", last_good_seq=last_good)
            (flen,) = _U32.unpack(lenb)
            body = f.read(flen)
            if len(body) < flen:
                raise CorruptLog("truncated frame body", last_good_seq=last_good)
            if cipher is not None:
                body = cipher.decrypt(body)
            try:
                entry = decode_frame_body(body)
            except CorruptLog as exc:
                raise CorruptLog(exc.message, last_good_seq=last_good) from exc
            last_good = entry.seq
            offset += 4 + flen
            yield entry, offset


def read_entries(path: str, cipher=None) -> Iterator[AuditEntry]:
    for entry, _ in read_frames(path, cipher):
        yield entry


def verify(path: str, cipher=None) -> VerifyReport:
    """Check framing CRCs, seq contiguity from 1, and ts monotonicity.
    Violations are report content, not exceptions."""
    count = 0
    last_seq = 0
    last_ts = 0
    try:
        for entry, _ in read_frames(path, cipher):
            if entry.seq != last_seq + 1:
                return VerifyReport(
                    count, False, f"seq discontinuity: {last_seq} -> {entry.seq}",
                    entry.seq, last_seq,
                )
            if entry.ts < last_ts:
                return VerifyReport(
                    count, False, f"ts regression at seq {entry.seq}", entry.seq, last_seq
                )
            last_seq, last_ts = entry.seq, entry.ts
            count += 1
    except CorruptLog as exc:
        return VerifyReport(count, False, exc.message, None, exc.last_good_seq)
    return VerifyReport(count, True, last_good_seq=last_seq)


@dataclass(frozen=True)
class QueryFilter:
    subject: str | None = None
    key: bytes | None = None
    actor: str | None = None
    since_us: int | None = None
    until_us: int | None = None


def query(path: str, flt: QueryFilter, cipher=None) -> list[AuditEntry]:
    """All entries matching the conjunction of the provided filters, in seq
    order. The subject filter resolves data keys through the key->owner
    mapping carried by PUT post-images."""
    subject_key = flt.subject.encode() if flt.subject else None
    owner_of: dict[bytes, str] = {}
    out = []
    for entry in read_entries(path, cipher):
        op = entry.base_opcode
        if op == OP_PUT and entry.outcome == 0 and not entry.redacted and entry.key:
            try:
                owner_of[entry.key] = decode_record_image(entry.key, entry.payload).owner
            except CorruptLog:
                pass
        if flt.actor is not None and entry.actor != flt.actor:
            continue
        if flt.key is not None and entry.key != flt.key:
            continue
        if flt.since_us is not None and entry.ts < flt.since_us:
            continue
        if flt.until_us is not None and entry.ts > flt.until_us:
            continue
        if flt.subject is not None:
            if op in SUBJECT_OPS:
                if entry.key != subject_key:
                    continue
            elif entry.key is None or owner_of.get(entry.key) != flt.subject:
                continue
        out.append(entry)
    return out
