"""Command line entry points.

    gdprkv serve --config server.conf
    gdprkv bench --records 100000 --ops 500000 --read 0.95 --dist zipfian --seed 42 [--target host:port]
    gdprkv compact --log store.aoflog
    gdprkv audit verify --log store.aoflog
    gdprkv audit query --log store.aoflog [--subject S] [--key K] [--actor A] [--since US] [--until US]
    gdprkv export --subject S (--log FILE | --target host:port --actor A --secret SEC)
    gdprkv simulate-expiry --keys 131072 --expired-frac 0.2 --seed 0
    gdprkv experiment-fsync --records 100000 --ops 500000 --dir /tmp
    gdprkv experiment-expiry --sizes 16384,32768,65536,131072 --short-frac 0.2
"""

import argparse
import os
import random
import signal
import sys
import tempfile
import time

from . import bench as benchmod
from .auditlog import QueryFilter, query as log_query, verify as log_verify
from .cipher import make_cipher
from .client import Client
from .compliance import export_records
from .config import load_config
from .engine import Engine
from .errors import GdprKvError
from .expiry import LazyParams, simulate_lazy
from .replay import replace_log, replay, rewrite_compacted
from .server import Server
from .store import Store
from .workload import WorkloadSpec


def _cipher_from_args(args):
    return make_cipher(getattr(args, "cipher", "none"), getattr(args, "key_file", None))


def cmd_serve(args) -> int:
    config = load_config(args.config)
    engine = Engine(config)
    server = Server(engine, config)
    port = server.start()
    print(f"gdprkv serving on {config.host}:{port} (log: {config.log_file})")
    stop = []
    signal.signal(signal.SIGINT, lambda *_: stop.append(1))
    signal.signal(signal.SIGTERM, lambda *_: stop.append(1))
    try:
        while not stop:
            time.sleep(0.2)
    finally:
        server.stop()
        engine.close()
    return 0


def cmd_bench(args) -> int:
    spec = WorkloadSpec(
        record_count=args.records,
        op_count=args.ops,
        read_fraction=args.read,
        update_fraction=round(1.0 - args.read, 9),
        value_size=args.value_size,
        distribution=args.dist,
        zipf_exponent=args.zipf_exponent,
        purpose_mix=tuple(args.purposes.split(",")),
        seed=args.seed,
    )
    if args.target:
        host, _, port = args.target.partition(":")
        report = benchmod.run_tcp(
            spec, host, int(port or 7979),
            actor=args.actor, secret=args.secret, connections=args.connections,
        )
    else:
        from .config import ComplianceConfig

        log_file = args.log or os.path.join(tempfile.mkdtemp(prefix="gdprkv-bench-"), "bench.aoflog")
        config = ComplianceConfig(
            fsync_mode=args.fsync,
            fsync_interval_ms=args.fsync_interval_ms,
            log_file=log_file,
            forget_compaction="periodic",
        )
        report = benchmod.run_embedded(spec, config, name=f"fsync={args.fsync}")
    if args.baseline:
        with open(args.baseline) as f:
            base_tp = base_name = None
            for line in f:
                if line.startswith("bench.throughput="):
                    base_tp = float(line.split("=", 1)[1])
                elif line.startswith("bench.name="):
                    base_name = line.split("=", 1)[1].strip()
        if base_tp:
            report.baseline_name = base_name or args.baseline
            report.relative = report.throughput / base_tp
    print(report.table())
    print(report.machine_lines())
    if args.out:
        with open(args.out, "w") as f:
            f.write(report.machine_lines() + "\n")
    return 0


def cmd_compact(args) -> int:
    cipher = _cipher_from_args(args)
    replayed = replay(args.log, cipher)
    tmp = args.log + ".compact"
    count, size = rewrite_compacted(
        args.log, tmp,
        replayed.records, replayed.grants, replayed.forgotten,
        time.time_ns() // 1000, "cli", random.Random().randbytes(16), cipher,
    )
    replace_log(tmp, args.log)
    print(f"compacted: entries={count} bytes={size}")
    return 0


def cmd_audit_verify(args) -> int:
    report = log_verify(args.log, _cipher_from_args(args))
    print(f"audit.entries={report.entries}")
    print(f"audit.ok={'yes' if report.ok else 'no'}")
    if not report.ok:
        print(f"audit.last_good_seq={report.last_good_seq}")
        print(f"audit.violation={report.violation}")
        return 1
    return 0


def cmd_audit_query(args) -> int:
    flt = QueryFilter(
        subject=args.subject,
        key=args.key.encode() if args.key else None,
        actor=args.actor,
        since_us=args.since,
        until_us=args.until,
    )
    for entry in log_query(args.log, flt, _cipher_from_args(args)):
        print(entry.describe())
    return 0


def cmd_export(args) -> int:
    if args.log:
        replayed = replay(args.log, _cipher_from_args(args))
        store = Store()
        for rec in replayed.records.values():
            store.insert(rec)
        data = export_records(store, args.subject, time.time_ns() // 1000)
    elif args.target:
        host, _, port = args.target.partition(":")
        with Client(host, int(port or 7979)) as client:
            client.auth(args.actor, args.secret)
            data = client.execute("SUBJEXPORT", args.subject)
    else:
        print("export needs --log or --target", file=sys.stderr)
        return 2
    sys.stdout.buffer.write(data)
    return 0


def cmd_simulate_expiry(args) -> int:
    params = LazyParams(args.tick_ms, args.sample_size, args.repeat_threshold)
    elapsed_us = simulate_lazy(args.keys, args.expired_frac, params, args.seed)
    print(
        f"simulate.keys={args.keys} simulate.expired_frac={args.expired_frac} "
        f"simulate.seed={args.seed}"
    )
    print(f"simulate.virtual_seconds={elapsed_us / 1e6:.1f}")
    return 0


def cmd_experiment_fsync(args) -> int:
    work_dir = args.dir or tempfile.mkdtemp(prefix="gdprkv-fsync-")
    reports = benchmod.experiment_fsync(args.records, args.ops, work_dir, seed=args.seed)
    for mode in ("none", "every", "always"):
        print(reports[mode].table())
    print()
    for mode in ("none", "every", "always"):
        print(reports[mode].machine_lines())
        print()
    return 0


def cmd_experiment_expiry(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",")]
    work_dir = args.dir or tempfile.mkdtemp(prefix="gdprkv-expiry-")
    rows = benchmod.experiment_expiry(
        sizes, args.short_frac, work_dir, seed=args.seed, short_ttl_s=args.short_ttl_s
    )
    print(benchmod.format_expiry_table(rows))
    print()
    for row in rows:
        print(row.machine_line())
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gdprkv", description=__doc__.strip().splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("serve", help="run the TCP server")
    sp.add_argument("--config", required=True)
    sp.set_defaults(fn=cmd_serve)

    bp = sub.add_parser("bench", help="run a workload and report throughput/latency")
    bp.add_argument("--records", type=int, default=100_000)
    bp.add_argument("--ops", type=int, default=1_000_000)
    bp.add_argument("--read", type=float, default=0.95)
    bp.add_argument("--value-size", type=int, default=100)
    bp.add_argument("--dist", choices=("uniform", "zipfian"), default="zipfian")
    bp.add_argument("--zipf-exponent", type=float, default=0.99)
    bp.add_argument("--purposes", default="analytics")
    bp.add_argument("--seed", type=int, default=42)
    bp.add_argument("--target", help="host:port of a running server (default: embedded)")
    bp.add_argument("--connections", type=int, default=8)
    bp.add_argument("--actor", default=benchmod.BENCH_ACTOR)
    bp.add_argument("--secret", default=benchmod.BENCH_ACTOR)
    bp.add_argument("--fsync", choices=("none", "every", "always"), default="none")
    bp.add_argument("--fsync-interval-ms", type=int, default=1000)
    bp.add_argument("--log", help="embedded mode log path")
    bp.add_argument("--baseline", help="machine-readable report to compare against")
    bp.add_argument("--out", help="write machine-readable report here")
    bp.set_defaults(fn=cmd_bench)

    cp = sub.add_parser("compact", help="rewrite a log to live state only")
    cp.add_argument("--log", required=True)
    cp.add_argument("--cipher", default="none")
    cp.add_argument("--key-file", dest="key_file")
    cp.set_defaults(fn=cmd_compact)

    ap = sub.add_parser("audit", help="audit log tools")
    asub = ap.add_subparsers(dest="audit_command", required=True)
    avp = asub.add_parser("verify", help="check CRCs, seq contiguity, ts order")
    avp.add_argument("--log", required=True)
    avp.add_argument("--cipher", default="none")
    avp.add_argument("--key-file", dest="key_file")
    avp.set_defaults(fn=cmd_audit_verify)
    aqp = asub.add_parser("query", help="filter entries")
    aqp.add_argument("--log", required=True)
    aqp.add_argument("--subject")
    aqp.add_argument("--key")
    aqp.add_argument("--actor")
    aqp.add_argument("--since", type=int)
    aqp.add_argument("--until", type=int)
    aqp.add_argument("--cipher", default="none")
    aqp.add_argument("--key-file", dest="key_file")
    aqp.set_defaults(fn=cmd_audit_query)

    ep = sub.add_parser("export", help="portable dump of one subject's records")
    ep.add_argument("--subject", required=True)
    ep.add_argument("--log")
    ep.add_argument("--target")
    ep.add_argument("--actor", default="admin")
    ep.add_argument("--secret", default="")
    ep.add_argument("--cipher", default="none")
    ep.add_argument("--key-file", dest="key_file")
    ep.set_defaults(fn=cmd_export)

    xp = sub.add_parser("simulate-expiry", help="virtual-clock lazy erasure timing")
    xp.add_argument("--keys", type=int, required=True)
    xp.add_argument("--expired-frac", type=float, default=0.2)
    xp.add_argument("--seed", type=int, default=0)
    xp.add_argument("--tick-ms", type=int, default=100)
    xp.add_argument("--sample-size", type=int, default=20)
    xp.add_argument("--repeat-threshold", type=int, default=5)
    xp.set_defaults(fn=cmd_simulate_expiry)

    fp = sub.add_parser("experiment-fsync", help="throughput under the three fsync policies")
    fp.add_argument("--records", type=int, default=100_000)
    fp.add_argument("--ops", type=int, default=500_000)
    fp.add_argument("--seed", type=int, default=42)
    fp.add_argument("--dir")
    fp.set_defaults(fn=cmd_experiment_fsync)

    xxp = sub.add_parser("experiment-expiry", help="eager vs lazy erasure delay by keyspace size")
    xxp.add_argument("--sizes", default="16384,32768,65536,131072")
    xxp.add_argument("--short-frac", type=float, default=0.2)
    xxp.add_argument("--short-ttl-s", type=float, default=5.0)
    xxp.add_argument("--seed", type=int, default=0)
    xxp.add_argument("--dir")
    xxp.set_defaults(fn=cmd_experiment_expiry)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except GdprKvError as exc:
        print(f"error: {exc.code}: {exc.message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
