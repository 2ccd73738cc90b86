"""Injectable time source.

Expiry logic (strict-mode entries, cache TTLs) reads the clock through
this interface so tests can step logical time deterministically. The
emulated transport does NOT use it: wire delays are real sleeps by design.
"""

from __future__ import annotations

import threading
import time

__all__ = ["Clock", "SystemClock", "ManualClock"]


class Clock:
    def now(self) -> float:
        raise NotImplementedError


class SystemClock(Clock):
    def now(self) -> float:
        return time.time()


class ManualClock(Clock):
    """Clock that only moves when told to. Thread-safe."""

    def __init__(self, start: float = 0.0):
        self._now = float(start)
        self._lock = threading.Lock()

    def now(self) -> float:
        with self._lock:
            return self._now

    def advance(self, seconds: float) -> None:
        if seconds < 0:
            raise ValueError("cannot move time backwards")
        with self._lock:
            self._now += seconds

    def set(self, t: float) -> None:
        with self._lock:
            if t < self._now:
                raise ValueError("cannot move time backwards")
            self._now = float(t)
