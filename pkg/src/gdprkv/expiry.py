"""Timely deletion: probabilistic sampling, index sweep, on-access checks.

Two switchable strategies erase expired records:

  * lazy  — every tick, sample ``sample_size`` random keys from the
            expire-flagged set and erase the expired ones; if at least
            ``repeat_threshold`` were erased, repeat immediately,
            otherwise wait for the next tick. As the expired fraction
            grows, so does the chance keys linger.
  * eager — pop everything at or below ``now`` from the time-ordered
            expiry index; cost proportional to the number expired, not
            to keyspace size.

Independently of strategy, every read passes through ``passive_check``
so an expired record is never served.

``LazySimulator`` reproduces the lazy rounds on a counting state with
the exact same per-round erasure distribution (hypergeometric while the
flagged set is at least one sample wide, with-replacement draws below
that), on virtual time. That makes hours-long erasure tails measurable
in milliseconds, deterministically per seed.
"""

import random
from dataclasses import dataclass

import numpy as np

from .store import Store

LAZY = "lazy"
EAGER = "eager"
STRATEGIES = (LAZY, EAGER)


@dataclass(frozen=True)
class LazyParams:
    tick_interval_ms: int = 100
    sample_size: int = 20
    repeat_threshold: int = 5

    def __post_init__(self):
        if not (self.sample_size >= self.repeat_threshold >= 1):
            raise ValueError("need sample_size >= repeat_threshold >= 1")


@dataclass
class ErasureStats:
    erased: int = 0
    max_delay_us: int = 0
    total_delay_us: int = 0

    def record(self, delay_us: int) -> None:
        self.erased += 1
        self.total_delay_us += delay_us
        if delay_us > self.max_delay_us:
            self.max_delay_us = delay_us

    @property
    def mean_delay_us(self) -> float:
        return self.total_delay_us / self.erased if self.erased else 0.0


class ExpiryManager:
    """Runs the erasure strategies over a store.

    ``on_erase(key, record, now_us)`` is invoked after each physical
    removal; the engine uses it to append the erasure audit entry.
    """

    def __init__(self, store: Store, on_erase, params: LazyParams | None = None):
        self.store = store
        self.on_erase = on_erase
        self.params = params or LazyParams()
        self.stats = ErasureStats()

    def _erase(self, key: bytes, now_us: int) -> None:
        # Audit first: if the log rejects the entry the record must stay,
        # so replay always matches live state.
        rec = self.store.records[key]
        self.on_erase(key, rec, now_us)
        self.store.remove(key)
        self.stats.record(max(0, now_us - rec.expiry))

    def lazy_tick(self, now_us: int, rng: random.Random) -> int:
        total = 0
        sample_size = self.params.sample_size
        flagged = self.store.expire_flagged
        records = self.store.records
        while True:
            batch = flagged.sample(rng, sample_size)
            if not batch:
                break
            erased = 0
            seen = set()
            for key in batch:
                if key in seen:
                    continue
                seen.add(key)
                rec = records.get(key)
                if rec is not None and rec.expiry is not None and rec.expiry < now_us:
                    self._erase(key, now_us)
                    erased += 1
            total += erased
            if erased < self.params.repeat_threshold:
                break
        return total

    def eager_tick(self, now_us: int) -> int:
        # The index orders by (ts, key), so equal timestamps erase in key
        # order. store.remove drops the index entry, hence re-peek at [0].
        count = 0
        by_expiry = self.store.by_expiry
        while by_expiry and by_expiry[0][0] <= now_us:
            self._erase(by_expiry[0][1], now_us)
            count += 1
        return count

    def passive_check(self, key: bytes, now_us: int) -> bool:
        """Erase the record if it sits past its expiry; True if erased.
        Runs inside every read so expired data is never served, whichever
        strategy is active."""
        rec = self.store.records.get(key)
        if rec is not None and rec.expiry is not None and rec.expiry < now_us:
            self._erase(key, now_us)
            return True
        return False


class LazySimulator:
    """Virtual-time model of the lazy strategy on one expired cohort.

    State is just (pending expired, flagged total); each round draws how
    many of the sampled keys were expired from the same distribution the
    real sampler induces, so erasure trajectories are statistically
    faithful while running millions of virtual ticks per second.
    """

    def __init__(self, total_flagged: int, expired: int, params: LazyParams | None = None, seed: int = 0):
        if expired > total_flagged:
            raise ValueError("expired cohort larger than flagged set")
        self.params = params or LazyParams()
        self.rng = np.random.default_rng(seed)
        self.total = total_flagged
        self.pending = expired
        self.ticks = 0

    @property
    def elapsed_us(self) -> int:
        return self.ticks * self.params.tick_interval_ms * 1_000

    def _round(self) -> int:
        k = self.params.sample_size
        if self.total <= 0 or self.pending <= 0:
            return 0
        if self.total >= k:
            erased = int(self.rng.hypergeometric(self.pending, self.total - self.pending, k))
        else:
            draws = self.rng.integers(0, self.total, size=k)
            erased = int(np.unique(draws[draws < self.pending]).size)
        self.pending -= erased
        self.total -= erased
        return erased

    def tick(self) -> int:
        total = 0
        while True:
            erased = self._round()
            total += erased
            if erased < self.params.repeat_threshold:
                break
        self.ticks += 1
        return total

    def run(self, max_ticks: int = 200_000_000) -> int:
        """Tick until the expired cohort is fully erased; virtual µs."""
        while self.pending > 0:
            if self.ticks >= max_ticks:
                raise RuntimeError(f"no full erasure within {max_ticks} ticks")
            self.tick()
        return self.elapsed_us


def simulate_lazy(
    keyspace_size: int,
    expired_fraction: float,
    params: LazyParams | None = None,
    seed: int = 0,
) -> int:
    """Virtual time until every expired key is erased, given a keyspace
    where ``expired_fraction`` of the expire-flagged keys are past due."""
    expired = round(keyspace_size * expired_fraction)
    return LazySimulator(keyspace_size, expired, params, seed).run()
