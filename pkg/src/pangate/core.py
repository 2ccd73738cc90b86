"""Core domain types for path-aware routing.

ISD/AS identities, per-hop decorations, and paths with aggregated
end-to-end metadata. Everything here is immutable after construction and
safe to share across request handler threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

__all__ = [
    "DomainError",
    "ParseError",
    "IsdAs",
    "HopMeta",
    "PathMetadata",
    "Path",
    "parse_isd_as",
    "aggregate_metadata",
    "matches",
]

WILDCARD = 0


class DomainError(ValueError):
    """An operation was applied to values outside its domain."""


class ParseError(ValueError):
    """Malformed textual input. Carries a 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True, order=True)
class IsdAs:
    """ISD and AS numbers identifying one autonomous system.

    Zero in either position is a wildcard, legal only in policy patterns;
    concrete path hops require both components >= 1. Canonical text form
    is ``<isd>-<as>``, e.g. ``3-12``.
    """

    isd: int
    as_id: int

    def __post_init__(self):
        if self.isd < 0 or self.as_id < 0:
            raise DomainError(
                f"ISD-AS components must be non-negative, got {self.isd}-{self.as_id}"
            )

    @property
    def is_concrete(self) -> bool:
        return self.isd >= 1 and self.as_id >= 1

    @property
    def has_wildcard(self) -> bool:
        return self.isd == WILDCARD or self.as_id == WILDCARD

    def __str__(self) -> str:
        return f"{self.isd}-{self.as_id}"


def parse_isd_as(text: str) -> IsdAs:
    """Parse the canonical ``<isd>-<as>`` form.

    Wildcard 0 is accepted in either position; whether a wildcard is legal
    in context is the caller's concern (policy patterns yes, hops no).
    """
    if not text:
        raise ParseError("empty ISD-AS")
    isd_part, sep, as_part = text.partition("-")
    if not sep:
        raise ParseError(f"ISD-AS {text!r} is missing the '-' separator")
    if not (isd_part.isascii() and isd_part.isdigit()):
        raise ParseError(f"ISD component {isd_part!r} is not a non-negative integer")
    if not (as_part.isascii() and as_part.isdigit()):
        raise ParseError(f"AS component {as_part!r} is not a non-negative integer")
    return IsdAs(int(isd_part), int(as_part))


@dataclass(frozen=True)
class HopMeta:
    """Decoration of one AS hop: identity plus the metadata announced for it.

    ``latency_ms`` is the one-way contribution of this hop; a path's
    round-trip time is twice the summed hop latency.
    """

    id: IsdAs
    latency_ms: float = 0.0
    bandwidth_mbps: float = 1000.0
    mtu_bytes: int = 1500
    geo: tuple[float, float] | None = None
    carbon_g_per_gb: float = 0.0

    def __post_init__(self):
        if not self.id.is_concrete:
            raise DomainError(f"concrete hop {self.id} must not contain wildcards")
        if self.latency_ms < 0:
            raise DomainError(f"hop {self.id}: negative latency {self.latency_ms}")
        if self.bandwidth_mbps <= 0:
            raise DomainError(f"hop {self.id}: bandwidth must be positive")
        if self.mtu_bytes < 576:
            raise DomainError(f"hop {self.id}: MTU {self.mtu_bytes} below the 576-byte minimum")
        if self.carbon_g_per_gb < 0:
            raise DomainError(f"hop {self.id}: negative carbon figure")
        if self.geo is not None:
            lat, lon = self.geo
            if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
                raise DomainError(f"hop {self.id}: geo ({lat}, {lon}) out of range")


@dataclass(frozen=True)
class PathMetadata:
    """End-to-end aggregate of per-hop decorations.

    Latency and carbon add up along the path; bandwidth and MTU are the
    bottleneck (minimum) values.
    """

    latency_ms: float
    bandwidth_mbps: float
    mtu_bytes: int
    carbon_g_per_gb: float
    hop_count: int
    isds: frozenset[int]


def aggregate_metadata(hops: Iterable[HopMeta]) -> PathMetadata:
    """Combine per-hop decorations into end-to-end path metadata."""
    hops = list(hops)
    if not hops:
        raise DomainError("cannot aggregate an empty hop list")
    return PathMetadata(
        latency_ms=sum(h.latency_ms for h in hops),
        bandwidth_mbps=min(h.bandwidth_mbps for h in hops),
        mtu_bytes=min(h.mtu_bytes for h in hops),
        carbon_g_per_gb=sum(h.carbon_g_per_gb for h in hops),
        hop_count=len(hops),
        isds=frozenset(h.id.isd for h in hops),
    )


@dataclass(frozen=True)
class Path:
    """An ordered AS-hop sequence, source AS first, destination last.

    Simple by construction (no AS appears twice) and immutable; ``meta``
    always equals ``aggregate_metadata(hops)``.
    """

    hops: tuple[HopMeta, ...]
    meta: PathMetadata = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        hops = tuple(self.hops)
        object.__setattr__(self, "hops", hops)
        ids = [h.id for h in hops]
        if len(set(ids)) != len(ids):
            raise DomainError("path revisits an AS: " + " ".join(str(i) for i in ids))
        object.__setattr__(self, "meta", aggregate_metadata(hops))

    @property
    def key(self) -> tuple[IsdAs, ...]:
        """Hop identity sequence; the lexicographic tie-break used everywhere."""
        return tuple(h.id for h in self.hops)

    def __str__(self) -> str:
        return ">".join(str(h.id) for h in self.hops)


def matches(pattern: IsdAs, concrete: IsdAs) -> bool:
    """First-match ACL primitive: wildcard 0 in the pattern matches anything."""
    if not concrete.is_concrete:
        raise DomainError(f"match target {concrete} must be concrete")
    return (pattern.isd in (WILDCARD, concrete.isd)) and (
        pattern.as_id in (WILDCARD, concrete.as_id)
    )
