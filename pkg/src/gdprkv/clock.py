"""Time sources. All timestamps are microseconds since the Unix epoch.

The store takes a clock callable so tests can run on virtual time.
"""

import time
from typing import Callable

Clock = Callable[[], int]


def system_clock() -> int:
    return time.time_ns() // 1_000


class ManualClock:
    """A settable clock for deterministic tests and simulations."""

    def __init__(self, start_us: int = 0):
        self.now_us = start_us

    def __call__(self) -> int:
        return self.now_us

    def advance(self, delta_us: int) -> int:
        self.now_us += delta_us
        return self.now_us

    def advance_ms(self, delta_ms: int) -> int:
        return self.advance(delta_ms * 1_000)
