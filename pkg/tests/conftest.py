import random

import pytest

from gdprkv import ComplianceConfig, Engine, ManualClock
from gdprkv.model import RecordMeta

US = 1_000_000  # microseconds per second


@pytest.fixture
def clock():
    return ManualClock(1_000_000_000)  # t0 = 1000 s


@pytest.fixture
def make_engine(tmp_path, clock):
    """Factory for engines on fresh logs; returns (engine, config)."""
    engines = []
    counter = [0]

    def build(clock_=None, rng_seed=7, **overrides):
        counter[0] += 1
        defaults = dict(
            log_file=str(tmp_path / f"log{counter[0]}.aoflog"),
            admins=("root",),
            fsync_mode="none",
            forget_compaction="periodic",
            expiry_strategy="eager",
        )
        defaults.update(overrides)
        config = ComplianceConfig(**defaults)
        engine = Engine(config, clock=clock_ or clock, rng=random.Random(rng_seed))
        engines.append(engine)
        return engine

    yield build
    for e in engines:
        try:
            e.close()
        except Exception:
            pass


@pytest.fixture
def engine(make_engine):
    """Engine with a ready-to-use service actor (read/write/delete on
    purposes ads, mail, analytics)."""
    e = make_engine()
    e.grant("svc", {"read", "write", "delete"}, {"ads", "mail", "analytics"}, None, "root")
    return e


def meta(owner="alice", purposes=("ads",), objections=(), expiry=None,
         recipients=(), origin="direct", regions=()):
    return RecordMeta(
        owner=owner,
        purposes=frozenset(purposes),
        objections=frozenset(objections),
        expiry=expiry,
        recipients=frozenset(recipients),
        origin=origin,
        allowed_regions=frozenset(regions),
    )
