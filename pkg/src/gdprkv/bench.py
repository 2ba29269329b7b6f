"""Benchmark harness: embedded or TCP runs, plus the two standing
experiments (fsync policy cost, lazy vs eager erasure delay)."""

import os
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .client import Client
from .config import ComplianceConfig
from .engine import Engine
from .expiry import LazyParams, simulate_lazy
from .model import DELETE, READ, WRITE, RecordMeta
from .workload import READ_OP, WorkloadSpec, generate, key_bytes, value_bytes

BENCH_ACTOR = "bench"
BENCH_ADMIN = "root"


@dataclass
class BenchReport:
    name: str
    ops: int
    seconds: float
    throughput: float
    p50_us: float
    p95_us: float
    p99_us: float
    config_desc: str
    baseline_name: str | None = None
    relative: float | None = None

    def machine_lines(self) -> str:
        lines = [
            f"bench.name={self.name}",
            f"bench.ops={self.ops}",
            f"bench.seconds={self.seconds:.3f}",
            f"bench.throughput={self.throughput:.1f}",
            f"bench.p50_us={self.p50_us:.1f}",
            f"bench.p95_us={self.p95_us:.1f}",
            f"bench.p99_us={self.p99_us:.1f}",
            f"bench.config={self.config_desc}",
        ]
        if self.relative is not None:
            lines.append(f"bench.baseline={self.baseline_name}")
            lines.append(f"bench.relative={self.relative:.4f}")
        return "\n".join(lines)

    def table(self) -> str:
        rel = f"  ({self.relative:.2%} of {self.baseline_name})" if self.relative is not None else ""
        return (
            f"{self.name}: {self.throughput:,.0f} ops/s over {self.ops} ops "
            f"in {self.seconds:.2f}s | p50 {self.p50_us:.0f}us p95 {self.p95_us:.0f}us "
            f"p99 {self.p99_us:.0f}us | {self.config_desc}{rel}"
        )

    def with_baseline(self, baseline: "BenchReport") -> "BenchReport":
        self.baseline_name = baseline.name
        self.relative = self.throughput / baseline.throughput if baseline.throughput else None
        return self


def _report(name, latencies_us, seconds, config_desc) -> BenchReport:
    lat = np.asarray(latencies_us, dtype=np.float64)
    p50, p95, p99 = np.percentile(lat, [50, 95, 99]) if len(lat) else (0.0, 0.0, 0.0)
    return BenchReport(
        name=name,
        ops=len(lat),
        seconds=seconds,
        throughput=len(lat) / seconds if seconds > 0 else 0.0,
        p50_us=float(p50),
        p95_us=float(p95),
        p99_us=float(p99),
        config_desc=config_desc,
    )


def owner_for(index: int, record_count: int) -> str:
    # ~100 keys per subject keeps subject-level operations meaningful
    # without exploding the owner index.
    return "u%d" % (index % max(1, record_count // 100))


def bench_meta(spec: WorkloadSpec, index: int) -> RecordMeta:
    return RecordMeta(owner=owner_for(index, spec.record_count), purposes=frozenset(spec.purpose_mix))


def prepare_engine(config: ComplianceConfig, **kwargs) -> Engine:
    """Engine whose config is guaranteed to carry the bench admin."""
    if BENCH_ADMIN not in config.admins:
        from dataclasses import replace

        config = replace(config, admins=config.admins + (BENCH_ADMIN,))
    return Engine(config, **kwargs)


def run_embedded(spec: WorkloadSpec, config: ComplianceConfig, name: str = "embedded") -> BenchReport:
    spec = spec.validate()
    engine = prepare_engine(config)
    engine.grant(BENCH_ACTOR, {READ, WRITE, DELETE}, set(spec.purpose_mix), None, BENCH_ADMIN)
    try:
        purposes = spec.purpose_mix
        load_purpose = purposes[0]
        for i in range(spec.record_count):
            engine.put(key_bytes(i), value_bytes(spec, i), bench_meta(spec, i), BENCH_ACTOR, load_purpose)
        stream = generate(spec)
        lat = np.empty(len(stream), dtype=np.int64)
        put, get = engine.put, engine.get
        clock = time.perf_counter_ns
        j = 0
        t_start = time.perf_counter()
        for kind, key_index, purpose in stream:
            key = key_bytes(key_index)
            t0 = clock()
            if kind == READ_OP:
                get(key, BENCH_ACTOR, purpose)
            else:
                put(key, value_bytes(spec, j), bench_meta(spec, key_index), BENCH_ACTOR, purpose)
            lat[j] = clock() - t0
            j += 1
        elapsed = time.perf_counter() - t_start
    finally:
        engine.close()
    desc = f"embedded fsync={config.fsync_policy().describe()} cipher={config.cipher} dist={spec.distribution} seed={spec.seed}"
    return _report(name, lat / 1000.0, elapsed, desc)


def _tcp_worker(host, port, actor, secret, spec, stream_slice, out, slot):
    client = Client(host, port)
    try:
        client.auth(actor, secret)
        lats = np.empty(len(stream_slice), dtype=np.int64)
        clock = time.perf_counter_ns
        for n, (kind, key_index, purpose, j) in enumerate(stream_slice):
            key = key_bytes(key_index)
            t0 = clock()
            if kind == READ_OP:
                client.execute("GET", key, f"purpose={purpose}")
            else:
                client.execute(
                    "PUT", key, value_bytes(spec, j),
                    f"owner={owner_for(key_index, spec.record_count)}",
                    f"purpose={purpose}",
                    f"purposes={','.join(sorted(spec.purpose_mix))}",
                )
            lats[n] = clock() - t0
        out[slot] = lats
    finally:
        client.close()


def run_tcp(
    spec: WorkloadSpec,
    host: str,
    port: int,
    actor: str = BENCH_ACTOR,
    secret: str = BENCH_ACTOR,
    connections: int = 8,
    name: str = "tcp",
) -> BenchReport:
    spec = spec.validate()
    load_purpose = spec.purpose_mix[0]
    loader = Client(host, port)
    try:
        loader.auth(actor, secret)
        purposes_csv = ",".join(sorted(spec.purpose_mix))
        for i in range(spec.record_count):
            loader.execute(
                "PUT", key_bytes(i), value_bytes(spec, i),
                f"owner={owner_for(i, spec.record_count)}",
                f"purpose={load_purpose}",
                f"purposes={purposes_csv}",
            )
    finally:
        loader.close()

    stream = generate(spec)
    ops = [
        (kind, key_index, purpose, j)
        for j, (kind, key_index, purpose) in enumerate(stream)
    ]
    chunks = [ops[i::connections] for i in range(connections)]
    out: list = [None] * connections
    threads = [
        threading.Thread(
            target=_tcp_worker, args=(host, port, actor, secret, spec, chunks[i], out, i)
        )
        for i in range(connections)
    ]
    t_start = time.perf_counter()
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    elapsed = time.perf_counter() - t_start
    lat = np.concatenate([x for x in out if x is not None and len(x)])
    desc = f"tcp {host}:{port} conns={connections} dist={spec.distribution} seed={spec.seed}"
    return _report(name, lat / 1000.0, elapsed, desc)


# -- experiment 1: logging durability cost ---------------------------------


def experiment_fsync(
    record_count: int,
    op_count: int,
    work_dir: str,
    seed: int = 42,
    fsync_interval_ms: int = 1000,
    value_size: int = 100,
) -> dict[str, BenchReport]:
    """Same workload under fsync none / every(i) / always; reports carry
    throughput relative to the unsynced baseline."""
    spec = WorkloadSpec(
        record_count=record_count, op_count=op_count, value_size=value_size, seed=seed
    )
    reports: dict[str, BenchReport] = {}
    for mode in ("none", "every", "always"):
        config = ComplianceConfig(
            fsync_mode=mode,
            fsync_interval_ms=fsync_interval_ms,
            expiry_strategy="eager",
            log_file=os.path.join(work_dir, f"bench-{mode}.aoflog"),
            forget_compaction="periodic",
        )
        label = "every(%dms)" % fsync_interval_ms if mode == "every" else mode
        reports[mode] = run_embedded(spec, config, name=f"fsync={label}")
    baseline = reports["none"]
    for mode in ("every", "always"):
        reports[mode].with_baseline(baseline)
    return reports


# -- experiment 2: erasure delay, eager vs lazy ------------------------------


@dataclass
class ExpiryRow:
    keyspace: int
    short_keys: int
    eager_max_delay_s: float
    eager_mean_delay_s: float
    eager_clear_s: float
    lazy_virtual_s: float

    def machine_line(self) -> str:
        return (
            f"expiry.keyspace={self.keyspace} expiry.short={self.short_keys} "
            f"expiry.eager_max_delay_s={self.eager_max_delay_s:.3f} "
            f"expiry.eager_clear_s={self.eager_clear_s:.3f} "
            f"expiry.lazy_virtual_s={self.lazy_virtual_s:.1f}"
        )


def run_eager_expiry(
    size: int,
    short_fraction: float,
    work_dir: str,
    short_ttl_s: float = 5.0,
    long_ttl_s: float = 300.0,
    value_size: int = 16,
    tick_s: float = 0.1,
    purpose: str = "retention",
) -> tuple[ExpiryRow, Engine]:
    """Load ``size`` keys with insert-relative TTLs (a short_fraction of
    them short-lived), run cooperative eager ticks until every short key
    is erased, and report the observed erasure delays."""
    config = ComplianceConfig(
        fsync_mode="none",
        expiry_strategy="eager",
        log_file=os.path.join(work_dir, f"expiry-{size}.aoflog"),
        forget_compaction="periodic",
    )
    engine = prepare_engine(config)
    engine.grant(BENCH_ACTOR, {READ, WRITE, DELETE}, {purpose}, None, BENCH_ADMIN)
    stride = max(1, round(1.0 / short_fraction))
    n_short = len(range(0, size, stride))
    short_us = int(short_ttl_s * 1e6)
    long_us = int(long_ttl_s * 1e6)
    meta_purposes = frozenset({purpose})

    put = engine.put
    clock = engine.clock
    next_tick = time.perf_counter() + tick_s
    for i in range(size):
        ttl = short_us if i % stride == 0 else long_us
        meta = RecordMeta(
            owner=owner_for(i, size), purposes=meta_purposes, expiry=clock() + ttl
        )
        put(b"exp%010d" % i, b"x" * value_size, meta, BENCH_ACTOR, purpose)
        if time.perf_counter() >= next_tick:
            engine.tick()
            next_tick += tick_s

    t_wait_start = time.perf_counter()
    deadline = t_wait_start + short_ttl_s + 120.0
    while engine.expiry.stats.erased < n_short:
        if time.perf_counter() > deadline:
            raise RuntimeError(
                f"eager run stalled: {engine.expiry.stats.erased}/{n_short} erased"
            )
        time.sleep(tick_s / 2)
        engine.tick()
    clear_s = max(0.0, time.perf_counter() - t_wait_start - short_ttl_s)
    stats = engine.expiry.stats
    row = ExpiryRow(
        keyspace=size,
        short_keys=n_short,
        eager_max_delay_s=stats.max_delay_us / 1e6,
        eager_mean_delay_s=stats.mean_delay_us / 1e6,
        eager_clear_s=clear_s,
        lazy_virtual_s=0.0,
    )
    return row, engine


def experiment_expiry(
    sizes: list[int],
    short_fraction: float,
    work_dir: str,
    seed: int = 0,
    short_ttl_s: float = 5.0,
    params: LazyParams | None = None,
) -> list[ExpiryRow]:
    rows = []
    for size in sizes:
        row, engine = run_eager_expiry(size, short_fraction, work_dir, short_ttl_s=short_ttl_s)
        engine.close()
        row.lazy_virtual_s = simulate_lazy(size, short_fraction, params, seed) / 1e6
        rows.append(row)
    return rows


def format_expiry_table(rows: list[ExpiryRow]) -> str:
    header = f"{'keys':>10} {'short':>9} {'eager max delay':>16} {'eager clear':>12} {'lazy virtual':>13}"
    lines = [header]
    for r in rows:
        lines.append(
            f"{r.keyspace:>10} {r.short_keys:>9} {r.eager_max_delay_s:>15.3f}s "
            f"{r.eager_clear_s:>11.3f}s {r.lazy_virtual_s:>12.1f}s"
        )
    return "\n".join(lines)
