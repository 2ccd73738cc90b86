"""Request planning vocabulary: modes, per-request plans, page coverage.

A plan is the routing decision for one proxied request: relay over a
policy-compliant PAN path, fall back to legacy IP, or block. Page-level
aggregation turns plans into the all/some/none coverage indicator.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

from .core import DomainError, Path
from .resolver import ScionAddress

__all__ = [
    "OPPORTUNISTIC",
    "STRICT",
    "ORIGIN_GLOBAL",
    "ORIGIN_USER",
    "ORIGIN_HEADER",
    "PAN",
    "LEGACY",
    "BLOCKED",
    "Mode",
    "RequestPlan",
    "PageReport",
    "PageAggregator",
]

OPPORTUNISTIC = "opportunistic"
STRICT = "strict"

ORIGIN_GLOBAL = "global-default"
ORIGIN_USER = "per-site-user"
ORIGIN_HEADER = "header-imposed"

PAN = "pan"
LEGACY = "legacy"
BLOCKED = "blocked"


@dataclass(frozen=True)
class Mode:
    """Effective mode for one request, with where it came from.

    Precedence when computing it: an unexpired header-imposed strict entry
    beats the per-site user setting, which beats the global default.
    """

    value: str
    origin: str = ORIGIN_GLOBAL

    def __post_init__(self):
        if self.value not in (OPPORTUNISTIC, STRICT):
            raise DomainError(f"unknown mode {self.value!r}")
        if self.origin not in (ORIGIN_GLOBAL, ORIGIN_USER, ORIGIN_HEADER):
            raise DomainError(f"unknown mode origin {self.origin!r}")
        if self.origin == ORIGIN_HEADER and self.value != STRICT:
            raise DomainError("header-imposed mode can only be strict")

    @property
    def strict(self) -> bool:
        return self.value == STRICT


@dataclass(frozen=True)
class RequestPlan:
    """The routing decision for one request.

    ``policy_compliant`` is False exactly when the policy was the reason
    PAN could not be used as configured (compliant set empty while raw
    paths existed); it stays vacuously True when no PAN connectivity or no
    path existed at all.
    """

    decision: str
    mode: Mode
    host: str
    page_id: str
    policy_compliant: bool = True
    path: Path | None = None
    address: ScionAddress | None = None
    reason: str | None = None

    def __post_init__(self):
        if self.decision not in (PAN, LEGACY, BLOCKED):
            raise DomainError(f"unknown decision {self.decision!r}")
        if self.decision == BLOCKED and not self.mode.strict:
            raise DomainError("blocking is only legal in strict mode")
        if self.decision == BLOCKED and not self.reason:
            raise DomainError("blocked plan needs a reason")
        if self.decision == PAN and (self.path is None or self.address is None):
            raise DomainError("PAN plan needs a path and a destination address")
        if self.decision != PAN and (self.path is not None or self.address is not None):
            raise DomainError(f"{self.decision} plan must not carry a path")

    @classmethod
    def pan_via(cls, path: Path, address: ScionAddress, mode: Mode, host: str,
                page_id: str, compliant: bool = True) -> "RequestPlan":
        return cls(decision=PAN, mode=mode, host=host, page_id=page_id,
                   policy_compliant=compliant, path=path, address=address)

    @classmethod
    def legacy(cls, mode: Mode, host: str, page_id: str,
               compliant: bool = True) -> "RequestPlan":
        return cls(decision=LEGACY, mode=mode, host=host, page_id=page_id,
                   policy_compliant=compliant)

    @classmethod
    def blocked(cls, reason: str, mode: Mode, host: str, page_id: str,
                compliant: bool = True) -> "RequestPlan":
        return cls(decision=BLOCKED, mode=mode, host=host, page_id=page_id,
                   policy_compliant=compliant, reason=reason)


INDICATOR_ALL = "all"
INDICATOR_SOME = "some"
INDICATOR_NONE = "none"


@dataclass(frozen=True)
class PageReport:
    """Coverage summary for one page: how its requests were fetched."""

    page_id: str
    total: int
    via_pan: int
    via_legacy: int
    blocked: int
    non_compliant: int
    indicator: str = field(init=False)

    def __post_init__(self):
        counts = (self.total, self.via_pan, self.via_legacy, self.blocked, self.non_compliant)
        if any(c < 0 for c in counts):
            raise DomainError("page report counters must be non-negative")
        if self.total != self.via_pan + self.via_legacy + self.blocked:
            raise DomainError("page report counters do not add up")
        if self.via_pan == self.total and self.total > 0:
            indicator = INDICATOR_ALL
        elif self.via_pan == 0:
            indicator = INDICATOR_NONE
        else:
            indicator = INDICATOR_SOME
        object.__setattr__(self, "indicator", indicator)

    def as_dict(self) -> dict:
        return {
            "page_id": self.page_id,
            "total": self.total,
            "via_pan": self.via_pan,
            "via_legacy": self.via_legacy,
            "blocked": self.blocked,
            "non_compliant": self.non_compliant,
            "indicator": self.indicator,
        }


class _PageCounts:
    __slots__ = ("via_pan", "via_legacy", "blocked", "non_compliant")

    def __init__(self):
        self.via_pan = 0
        self.via_legacy = 0
        self.blocked = 0
        self.non_compliant = 0


class PageAggregator:
    """Thread-safe per-page outcome counters."""

    def __init__(self):
        self._pages: dict[str, _PageCounts] = {}
        self._lock = threading.Lock()

    def record(self, plan: RequestPlan) -> None:
        with self._lock:
            counts = self._pages.setdefault(plan.page_id, _PageCounts())
            if plan.decision == PAN:
                counts.via_pan += 1
            elif plan.decision == LEGACY:
                counts.via_legacy += 1
            else:
                counts.blocked += 1
            if not plan.policy_compliant:
                counts.non_compliant += 1

    def classify_page(self, page_id: str) -> PageReport:
        with self._lock:
            counts = self._pages.get(page_id)
            if counts is None:
                return PageReport(page_id=page_id, total=0, via_pan=0,
                                  via_legacy=0, blocked=0, non_compliant=0)
            return PageReport(
                page_id=page_id,
                total=counts.via_pan + counts.via_legacy + counts.blocked,
                via_pan=counts.via_pan,
                via_legacy=counts.via_legacy,
                blocked=counts.blocked,
                non_compliant=counts.non_compliant,
            )

    def pages(self) -> list[str]:
        with self._lock:
            return sorted(self._pages)
