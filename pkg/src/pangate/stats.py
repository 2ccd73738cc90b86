"""Path-usage and performance accounting.

Per-host outcome counters plus per-path usage with an EWMA latency
estimate. In-memory for the session; snapshots feed the control API and
the optional JSON export on shutdown.
"""

from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass

from .clock import Clock, SystemClock
from .core import DomainError, Path
from .plan import BLOCKED, LEGACY, PAN, RequestPlan

__all__ = ["Timing", "StatsBook", "path_fingerprint", "DEFAULT_ALPHA"]

DEFAULT_ALPHA = 0.3


def path_fingerprint(path: Path) -> str:
    """Stable id for a hop sequence; identical sequences collide, distinct don't."""
    text = ">".join(str(h.id) for h in path.hops)
    return hashlib.sha256(text.encode("ascii")).hexdigest()[:16]


@dataclass(frozen=True)
class Timing:
    connect_ms: float
    total_ms: float

    def __post_init__(self):
        if self.connect_ms < 0 or self.total_ms < 0:
            raise DomainError("timings must be non-negative")


class _HostCounters:
    __slots__ = ("requests_pan", "requests_legacy", "requests_blocked", "non_compliant")

    def __init__(self):
        self.requests_pan = 0
        self.requests_legacy = 0
        self.requests_blocked = 0
        self.non_compliant = 0


class _PathCounters:
    __slots__ = ("hops", "uses", "ewma_latency_ms", "bytes")

    def __init__(self, hops: str):
        self.hops = hops
        self.uses = 0
        self.ewma_latency_ms: float | None = None
        self.bytes = 0


class StatsBook:
    """Thread-safe accounting; snapshots are consistent copies."""

    def __init__(self, alpha: float = DEFAULT_ALPHA, clock: Clock | None = None):
        if not (0.0 < alpha <= 1.0):
            raise DomainError(f"EWMA alpha must be in (0, 1], got {alpha}")
        self.alpha = alpha
        self._clock = clock or SystemClock()
        self._since = self._clock.now()
        self._hosts: dict[str, _HostCounters] = {}
        self._paths: dict[str, _PathCounters] = {}
        self._records = 0
        self._lock = threading.Lock()

    def record(self, plan: RequestPlan, timing: Timing, n_bytes: int = 0) -> None:
        with self._lock:
            self._records += 1
            host = self._hosts.setdefault(plan.host, _HostCounters())
            if plan.decision == PAN:
                host.requests_pan += 1
            elif plan.decision == LEGACY:
                host.requests_legacy += 1
            elif plan.decision == BLOCKED:
                host.requests_blocked += 1
            if not plan.policy_compliant:
                host.non_compliant += 1
            if plan.decision == PAN and plan.path is not None:
                fp = path_fingerprint(plan.path)
                pc = self._paths.setdefault(fp, _PathCounters(str(plan.path)))
                pc.uses += 1
                pc.bytes += max(0, n_bytes)
                if pc.ewma_latency_ms is None:
                    pc.ewma_latency_ms = timing.total_ms
                else:
                    pc.ewma_latency_ms = (self.alpha * timing.total_ms
                                          + (1.0 - self.alpha) * pc.ewma_latency_ms)

    def snapshot(self) -> dict:
        """Point-in-time copy, shaped for JSON."""
        with self._lock:
            return {
                "since": self._since,
                "records": self._records,
                "per_host": {
                    h: {
                        "requests_pan": c.requests_pan,
                        "requests_legacy": c.requests_legacy,
                        "requests_blocked": c.requests_blocked,
                        "non_compliant": c.non_compliant,
                    }
                    for h, c in sorted(self._hosts.items())
                },
                "per_path": {
                    fp: {
                        "hops": c.hops,
                        "uses": c.uses,
                        "ewma_latency_ms": c.ewma_latency_ms,
                        "bytes": c.bytes,
                    }
                    for fp, c in sorted(self._paths.items())
                },
            }
