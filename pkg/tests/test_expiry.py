"""Erasure strategies: sampler loop behavior, the eager sweep, passive
checks, and the counting simulator (including its fidelity to the real
sampler)."""

import random
import statistics

import pytest

from conftest import US, meta
from gdprkv.auditlog import read_entries
from gdprkv.expiry import LazyParams, LazySimulator, simulate_lazy
from gdprkv.framing import OP_EXPIRE_ERASE


def load_keys(engine, clock, n, expired, prefix=b"k"):
    """n keys with TTLs; the first ``expired`` of them already past due
    once the clock advances by 10s."""
    t_soon = clock.now_us + 5 * US
    t_far = clock.now_us + 10_000 * US
    for i in range(n):
        expiry = t_soon if i < expired else t_far
        engine.put(prefix + b"%06d" % i, b"v", meta(expiry=expiry), "svc", "ads")
    clock.advance(10 * US)


# -- lazy ticks ---------------------------------------------------------------


def test_lazy_tick_empty_flagged_set(make_engine):
    e = make_engine(expiry_strategy="lazy")
    e.grant("svc", {"read", "write"}, {"ads"}, None, "root")
    assert e.tick() == 0


def test_lazy_tick_six_expired_of_twenty_repeats_immediately(make_engine, clock):
    # 20 flagged keys, 6 expired: one sample covers the whole set, erases
    # all 6 (>= threshold 5), repeats, second round erases 0, stops.
    e = make_engine(expiry_strategy="lazy")
    e.grant("svc", {"read", "write"}, {"ads"}, None, "root")
    load_keys(e, clock, 20, 6)
    rounds = []
    orig = e.expiry.__class__._erase

    assert e.tick() == 6
    assert e.store.pending_expired(clock.now_us) == 0
    assert len(e.store.expire_flagged) == 14


def test_lazy_tick_three_expired_of_twenty_stops_after_one_round(make_engine, clock):
    # 3 erased < threshold 5: wait for the next tick.
    e = make_engine(expiry_strategy="lazy")
    e.grant("svc", {"read", "write"}, {"ads"}, None, "root")
    load_keys(e, clock, 20, 3)
    assert e.tick() == 3
    assert len(e.store.expire_flagged) == 17


def test_lazy_repeat_loop_drains_fully_expired_set(make_engine, clock):
    # Every flagged key expired: rounds keep erasing >= threshold and the
    # loop drains the whole set within a single tick.
    e = make_engine(expiry_strategy="lazy")
    e.grant("svc", {"read", "write"}, {"ads"}, None, "root")
    load_keys(e, clock, 100, 100)
    assert e.tick() == 100
    assert len(e.store.expire_flagged) == 0


def test_lazy_leaves_keys_behind_across_ticks(make_engine, clock):
    # 20% of 2000 expired: a handful of ticks cannot finish the cohort.
    e = make_engine(expiry_strategy="lazy", rng_seed=11)
    e.grant("svc", {"read", "write"}, {"ads"}, None, "root")
    load_keys(e, clock, 2000, 400)
    for _ in range(5):
        e.tick()
    assert e.store.pending_expired(clock.now_us) > 0


def test_erasures_audited_exactly_once(make_engine, clock):
    e = make_engine(expiry_strategy="lazy")
    e.grant("svc", {"read", "write"}, {"ads"}, None, "root")
    load_keys(e, clock, 20, 20)
    e.tick()
    e.tick()  # nothing left; must not re-erase
    e.log.sync()
    erase_keys = [
        en.key for en in read_entries(e.log.path) if en.opcode == OP_EXPIRE_ERASE
    ]
    assert len(erase_keys) == 20
    assert len(set(erase_keys)) == 20
    assert e.expiry.stats.erased == 20


# -- passive checks -----------------------------------------------------------


def test_passive_erase_then_lazy_never_re_erases(make_engine, clock):
    e = make_engine(expiry_strategy="lazy")
    e.grant("svc", {"read", "write"}, {"ads"}, None, "root")
    e.put(b"k", b"v", meta(expiry=clock.now_us + US), "svc", "ads")
    clock.advance(2 * US)
    from gdprkv.errors import NotFound

    with pytest.raises(NotFound):
        e.get(b"k", "svc", "ads")
    assert e.expiry.stats.erased == 1
    assert e.tick() == 0
    assert e.expiry.stats.erased == 1


def test_key_without_ttl_lives_forever(make_engine, clock):
    e = make_engine()
    e.grant("svc", {"read", "write"}, {"ads"}, None, "root")
    e.put(b"k", b"v", meta(), "svc", "ads")
    clock.advance(10_000_000 * US)
    e.tick()
    assert e.get(b"k", "svc", "ads")[0] == b"v"


def test_boundary_instant_is_served(make_engine, clock):
    # expiry == now is not yet past due for reads (strict <)
    e = make_engine()
    e.grant("svc", {"read", "write"}, {"ads"}, None, "root")
    t = clock.now_us + US
    e.put(b"k", b"v", meta(expiry=t), "svc", "ads")
    clock.now_us = t
    assert e.get(b"k", "svc", "ads")[0] == b"v"


# -- eager sweeps ---------------------------------------------------------------


def test_eager_tick_erases_exactly_the_due_set(make_engine, clock):
    e = make_engine(expiry_strategy="eager")
    e.grant("svc", {"read", "write"}, {"ads"}, None, "root")
    load_keys(e, clock, 500, 120)
    due_oracle = {
        key for key, r in e.store.records.items()
        if r.expiry is not None and r.expiry <= clock.now_us
    }
    before = set(e.store.records)
    assert e.tick() == 120
    erased = before - set(e.store.records)
    assert erased == due_oracle
    assert e.tick() == 0


def test_eager_tick_duplicate_timestamps_erase_in_key_order(make_engine, clock):
    e = make_engine(expiry_strategy="eager")
    e.grant("svc", {"read", "write"}, {"ads"}, None, "root")
    t = clock.now_us + US
    for key in (b"b", b"a", b"c"):
        e.put(key, b"v", meta(expiry=t), "svc", "ads")
    clock.advance(2 * US)
    e.tick()
    e.log.sync()
    order = [en.key for en in read_entries(e.log.path) if en.opcode == OP_EXPIRE_ERASE]
    assert order == [b"a", b"b", b"c"]


# -- simulator -------------------------------------------------------------------


def test_simulator_deterministic_per_seed():
    assert simulate_lazy(5_000, 0.2, seed=3) == simulate_lazy(5_000, 0.2, seed=3)
    assert simulate_lazy(5_000, 0.2, seed=3) != simulate_lazy(5_000, 0.2, seed=4)


def test_simulator_saturated_set_completes_in_one_tick():
    params = LazyParams()
    sim = LazySimulator(10_000, 10_000, params, seed=1)
    elapsed = sim.run()
    # every round erases a full sample (>= threshold), so the loop drains
    # everything within O(n/sample) rounds of the first tick
    assert sim.ticks <= 2
    assert elapsed == sim.ticks * params.tick_interval_ms * 1000


def test_simulator_leaves_pending_after_ten_virtual_seconds():
    sim = LazySimulator(128_000, round(128_000 * 0.2), seed=0)
    while sim.elapsed_us < 10 * US:
        sim.tick()
    assert sim.pending > 0


def test_simulator_monotone_in_keyspace_at_fixed_expired_count():
    fixed_expired = 1_000
    medians = []
    for size in (4_000, 8_000, 16_000):
        times = [LazySimulator(size, fixed_expired, seed=s).run() for s in range(15)]
        medians.append(statistics.median(times))
    assert medians == sorted(medians)


def test_simulator_rejects_oversized_cohort():
    with pytest.raises(ValueError):
        LazySimulator(10, 11)


def test_simulator_matches_real_sampler_distribution(make_engine, clock):
    """Dual-route check: drive the real lazy ticks on a real store and the
    counting simulator on the same cohort; their time-to-erasure medians
    must agree (both are the same stochastic process)."""
    size, expired, seeds = 400, 120, 25
    params = LazyParams()

    real_ticks = []
    for seed in range(seeds):
        e = make_engine(expiry_strategy="lazy", rng_seed=1000 + seed)
        e.grant("svc", {"read", "write"}, {"ads"}, None, "root")
        load_keys(e, clock, size, expired, prefix=b"s%d-" % seed)
        ticks = 0
        while e.store.pending_expired(clock.now_us) > 0:
            e.tick()
            ticks += 1
            assert ticks < 100_000
        real_ticks.append(ticks)
        e.close()

    sim_ticks = []
    for seed in range(seeds):
        sim = LazySimulator(size, expired, params, seed=seed)
        sim.run()
        sim_ticks.append(sim.ticks)

    real_med, sim_med = statistics.median(real_ticks), statistics.median(sim_ticks)
    assert 0.5 <= real_med / sim_med <= 2.0, (real_med, sim_med)
