"""Injectable clocks.

All time the service observes flows through a Clock instance, so expiry
behavior is deterministic under test. Internal timestamps are integer
microseconds since the Unix epoch; durations configured in seconds are
converted once at the edge.
"""

from __future__ import annotations

import threading
import time


def s_to_us(seconds: float) -> int:
    return int(round(seconds * 1_000_000))


def us_to_s(us: int) -> float:
    return us / 1_000_000


class Clock:
    def now_us(self) -> int:
        raise NotImplementedError


class SystemClock(Clock):
    def now_us(self) -> int:
        return time.time_ns() // 1_000


class ManualClock(Clock):
    """Test clock advanced explicitly. Thread-safe; never moves on its own."""

    def __init__(self, start_us: int = 1_600_000_000_000_000):
        self._now_us = start_us
        self._lock = threading.Lock()

    def now_us(self) -> int:
        with self._lock:
            return self._now_us

    def advance(self, seconds: float) -> int:
        with self._lock:
            self._now_us += s_to_us(seconds)
            return self._now_us

    def set_us(self, us: int) -> None:
        with self._lock:
            if us < self._now_us:
                raise ValueError("clock cannot move backwards")
            self._now_us = us
