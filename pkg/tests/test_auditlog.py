"""Log file behavior: sequencing, verification, corruption reporting,
durability bookkeeping per fsync policy, and fail-stop."""

import os

import pytest

from gdprkv.auditlog import AuditLog, FsyncPolicy, QueryFilter, query, read_entries, verify
from gdprkv.errors import CorruptLog, IoError
from gdprkv.framing import (
    HEADER,
    OP_DEL,
    OP_GET,
    OP_PUT,
    OUT_OK,
    AuditEntry,
    encode_record_image,
)
from test_framing import sample_record


def entry(seq, ts=None, opcode=OP_GET, key=b"k", actor="svc", payload=b"", purpose=None):
    return AuditEntry(seq, ts if ts is not None else seq * 10, opcode, OUT_OK,
                      actor, purpose, key, payload)


def fresh_log(tmp_path, mode="none", name="t.aoflog", **kw):
    return AuditLog(str(tmp_path / name), FsyncPolicy(mode, 1000), **kw)


def test_seq_is_exactly_one_to_n(tmp_path):
    log = fresh_log(tmp_path)
    for i in range(1, 10_001):
        log.append(entry(i))
    log.sync()
    seqs = [e.seq for e in read_entries(log.path)]
    assert seqs == list(range(1, 10_001))
    assert log.entry_count == 10_000
    log.close()


def test_append_rejects_seq_gap(tmp_path):
    log = fresh_log(tmp_path)
    log.append(entry(1))
    with pytest.raises(ValueError):
        log.append(entry(3))
    log.close()


def test_verify_clean_log(tmp_path):
    log = fresh_log(tmp_path)
    for i in range(1, 6):
        log.append(entry(i))
    log.sync()
    report = verify(log.path)
    assert report.ok and report.entries == 5 and report.last_good_seq == 5
    log.close()


def test_verify_reports_flipped_byte(tmp_path):
    log = fresh_log(tmp_path)
    for i in range(1, 4):
        log.append(entry(i))
    log.sync()
    log.close()
    data = bytearray(open(log.path, "rb").read())
    data[-3] ^= 0x40  # inside the last frame body
    open(log.path, "wb").write(bytes(data))
    report = verify(log.path)
    assert not report.ok
    assert report.last_good_seq == 2
    assert "crc" in report.violation


def test_verify_reports_seq_discontinuity_on_concatenation(tmp_path):
    log1 = fresh_log(tmp_path, name="a.aoflog")
    for i in range(1, 4):
        log1.append(entry(i))
    log1.sync()
    log1.close()
    log2 = fresh_log(tmp_path, name="b.aoflog")
    for i in range(1, 3):
        log2.append(entry(i))
    log2.sync()
    log2.close()
    combined = tmp_path / "cat.aoflog"
    with open(combined, "wb") as out:
        out.write(open(log1.path, "rb").read())
        out.write(open(log2.path, "rb").read()[len(HEADER):])
    report = verify(str(combined))
    assert not report.ok
    assert "discontinuity" in report.violation
    assert report.last_good_seq == 3


def test_verify_reports_ts_regression(tmp_path):
    log = fresh_log(tmp_path)
    log.append(entry(1, ts=100))
    log.append(entry(2, ts=50))
    log.sync()
    log.close()
    report = verify(log.path)
    assert not report.ok and "ts regression" in report.violation


def test_truncated_mid_frame_names_last_good_seq(tmp_path):
    log = fresh_log(tmp_path)
    for i in range(1, 5):
        log.append(entry(i))
    log.sync()
    log.close()
    data = open(log.path, "rb").read()
    open(log.path, "wb").write(data[:-7])
    with pytest.raises(CorruptLog) as exc_info:
        list(read_entries(log.path))
    assert exc_info.value.last_good_seq == 3
    report = verify(log.path)
    assert not report.ok and report.last_good_seq == 3


def test_reopen_resumes_seq(tmp_path):
    log = fresh_log(tmp_path)
    for i in range(1, 4):
        log.append(entry(i))
    log.sync()
    log.close()
    log2 = fresh_log(tmp_path)  # same path, scan-on-open
    assert log2.next_seq() == 4
    log2.append(entry(4))
    log2.sync()
    assert verify(log2.path).ok
    log2.close()


# -- fsync policies -----------------------------------------------------------


def test_always_mode_is_durable_per_append(tmp_path):
    log = fresh_log(tmp_path, mode="always")
    for i in range(1, 4):
        log.append(entry(i))
        assert log.durable_bytes == log.byte_size  # durable before ack
    # power-crash survivor contains everything acknowledged
    survivor = open(log.path, "rb").read()[: log.durable_bytes]
    crash_path = str(tmp_path / "crash.aoflog")
    open(crash_path, "wb").write(survivor)
    assert [e.seq for e in read_entries(crash_path)] == [1, 2, 3]
    log.close()


def test_every_mode_bounds_loss_to_window(tmp_path):
    log = fresh_log(tmp_path, mode="every", auto_flush=False)
    for i in range(1, 6):
        log.append(entry(i))
    log.fsync_now()  # the interval flusher fires
    durable_at_tick = log.durable_bytes
    for i in range(6, 9):
        log.append(entry(i))  # acknowledged inside the final window
    assert log.durable_bytes == durable_at_tick
    crash_path = str(tmp_path / "crash.aoflog")
    open(crash_path, "wb").write(open(log.path, "rb").read()[:durable_at_tick])
    report = verify(crash_path)
    assert report.ok  # entry may be absent, the log still verifies
    assert report.entries == 5
    log.close()


def test_every_mode_background_flusher_syncs(tmp_path):
    log = fresh_log(tmp_path, mode="every")
    for i in range(1, 51):
        log.append(entry(i))
    log.sync()
    assert log.durable_bytes == log.byte_size
    assert [e.seq for e in read_entries(log.path)] == list(range(1, 51))
    log.close()
    assert verify(log.path).ok


def test_none_mode_never_fsyncs(tmp_path):
    log = fresh_log(tmp_path, mode="none")
    base = log.durable_bytes
    for i in range(1, 20):
        log.append(entry(i))
    assert log.durable_bytes == base  # no durability work on the append path
    log.sync()
    assert [e.seq for e in read_entries(log.path)] == list(range(1, 20))
    log.close()


def test_append_failure_fail_stops(tmp_path, monkeypatch):
    log = fresh_log(tmp_path, mode="none")
    log.append(entry(1))

    def boom(_):
        raise OSError("disk gone")

    monkeypatch.setattr(log._file, "write", boom)
    with pytest.raises(IoError):
        log.append(entry(2))
    monkeypatch.undo()
    with pytest.raises(IoError):  # refuses further writes even after heal
        log.append(entry(2))
    log.close()


# -- query --------------------------------------------------------------------


def build_query_log(tmp_path):
    """Three keys over two owners plus subject-level entries; the test
    keeps its own notion of which entry belongs to which subject."""
    log = fresh_log(tmp_path, name="q.aoflog")
    alice_rec = sample_record(key=b"ka", owner="alice")
    bob_rec = sample_record(key=b"kb", owner="bob")
    ops = [
        entry(1, ts=100, opcode=OP_PUT, key=b"ka", payload=encode_record_image(alice_rec)),
        entry(2, ts=200, opcode=OP_PUT, key=b"kb", payload=encode_record_image(bob_rec)),
        entry(3, ts=300, opcode=OP_GET, key=b"ka", actor="reader"),
        entry(4, ts=400, opcode=OP_DEL, key=b"ka"),
        entry(5, ts=500, opcode=OP_GET, key=b"kb"),
    ]
    expected_subject = {1: "alice", 2: "bob", 3: "alice", 4: "alice", 5: "bob"}
    for e in ops:
        log.append(e)
    log.sync()
    log.close()
    return log.path, ops, expected_subject


def test_query_by_key_and_actor(tmp_path):
    path, ops, _ = build_query_log(tmp_path)
    assert [e.seq for e in query(path, QueryFilter(key=b"ka"))] == [1, 3, 4]
    assert [e.seq for e in query(path, QueryFilter(actor="reader"))] == [3]
    assert query(path, QueryFilter(subject="nobody")) == []


def test_query_subject_resolves_via_put_payloads(tmp_path):
    path, ops, expected_subject = build_query_log(tmp_path)
    for subject in ("alice", "bob"):
        oracle = [seq for seq, s in expected_subject.items() if s == subject]
        assert [e.seq for e in query(path, QueryFilter(subject=subject))] == oracle


def test_query_time_range_equals_linear_scan(tmp_path):
    path, ops, _ = build_query_log(tmp_path)
    since, until = 150, 450
    oracle = [e.seq for e in ops if since <= e.ts <= until]
    got = [e.seq for e in query(path, QueryFilter(since_us=since, until_us=until))]
    assert got == oracle == [2, 3, 4]
