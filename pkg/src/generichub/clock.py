"""Injectable time source.

Everything that stamps or schedules against event time goes through a Clock,
so tests can drive scenarios on a virtual timeline and get byte-identical
output run to run.
"""

from __future__ import annotations

import threading
import time


class Clock:
    def now_ms(self) -> int:
        raise NotImplementedError

    def sleep_ms(self, ms: float) -> None:
        raise NotImplementedError


class RealClock(Clock):
    """Wall clock, UTC milliseconds since the Unix epoch."""

    def now_ms(self) -> int:
        return time.time_ns() // 1_000_000

    def sleep_ms(self, ms: float) -> None:
        if ms > 0:
            time.sleep(ms / 1000.0)


class VirtualClock(Clock):
    """Manually advanced clock; sleep_ms advances instead of blocking."""

    def __init__(self, start_ms: int = 0):
        self._now = int(start_ms)
        self._lock = threading.Lock()

    def now_ms(self) -> int:
        with self._lock:
            return self._now

    def sleep_ms(self, ms: float) -> None:
        self.advance(ms)

    def advance(self, ms: float) -> None:
        if ms < 0:
            raise ValueError("clock cannot go backwards")
        with self._lock:
            self._now += int(ms)
