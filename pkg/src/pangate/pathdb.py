"""Emulated local AS path service.

Loads a declarative AS-level topology (JSON), enumerates decorated simple
paths between ASes, and serves them through a TTL cache. This stands in
for beaconing and path-segment dissemination: a static topology plus
exhaustive enumeration reproduces the observable product of those
processes, a decorated candidate path set.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from typing import IO

from .clock import Clock, SystemClock
from .core import DomainError, HopMeta, IsdAs, ParseError, Path, parse_isd_as

__all__ = [
    "LinkMeta",
    "Topology",
    "PathSet",
    "load_topology",
    "enumerate_paths",
    "PathDb",
    "DEFAULT_MAX_HOPS",
    "DEFAULT_MAX_PATHS",
    "DEFAULT_TTL_S",
]

DEFAULT_MAX_HOPS = 8
DEFAULT_MAX_PATHS = 128
DEFAULT_TTL_S = 60.0


@dataclass(frozen=True)
class LinkMeta:
    """Decoration of one undirected inter-AS link."""

    latency_ms: float = 0.0
    bandwidth_mbps: float = 1000.0
    mtu_bytes: int = 1500

    def __post_init__(self):
        if self.latency_ms < 0:
            raise DomainError(f"link latency must be non-negative, got {self.latency_ms}")
        if self.bandwidth_mbps <= 0:
            raise DomainError("link bandwidth must be positive")
        if self.mtu_bytes < 576:
            raise DomainError(f"link MTU {self.mtu_bytes} below the 576-byte minimum")


def _link_key(a: IsdAs, b: IsdAs) -> tuple[IsdAs, IsdAs]:
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class Topology:
    """Validated AS-level topology. Immutable after load.

    ``ases`` maps each AS to its base decoration, stored as a HopMeta so
    the first hop of a path (which has no incoming link) can use it
    directly.
    """

    local_as: IsdAs
    ases: dict[IsdAs, HopMeta]
    links: dict[tuple[IsdAs, IsdAs], LinkMeta]

    def __post_init__(self):
        for as_id in self.ases:
            if not as_id.is_concrete:
                raise DomainError(f"AS id {as_id} must not contain wildcards")
        if self.local_as not in self.ases:
            raise DomainError(f"local_as {self.local_as} is not a declared AS")
        for (a, b) in self.links:
            if a == b:
                raise DomainError(f"self-link on {a}")
            if _link_key(a, b) != (a, b):
                raise DomainError(f"link key ({a}, {b}) is not normalized")
            for end in (a, b):
                if end not in self.ases:
                    raise DomainError(f"link endpoint {end} is not a declared AS")

    def neighbors(self, as_id: IsdAs) -> tuple[IsdAs, ...]:
        found = []
        for (a, b) in self.links:
            if a == as_id:
                found.append(b)
            elif b == as_id:
                found.append(a)
        return tuple(sorted(found))

    def link(self, a: IsdAs, b: IsdAs) -> LinkMeta:
        return self.links[_link_key(a, b)]


def _num(obj: dict, key: str, default: float, ctx: str) -> float:
    value = obj.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise DomainError(f"{ctx}: field {key!r} must be a number")
    return float(value)


_AS_KEYS = {"latency_ms", "bandwidth_mbps", "mtu_bytes", "carbon_g_per_gb", "geo"}
_LINK_KEYS = {"a", "b", "latency_ms", "bandwidth_mbps", "mtu_bytes"}


def _parse_as_entry(key: str, obj: object) -> HopMeta:
    as_id = parse_isd_as(key)
    if not as_id.is_concrete:
        raise DomainError(f"AS id {key!r} must not contain wildcards")
    if not isinstance(obj, dict):
        raise DomainError(f"AS {key}: decoration must be an object")
    unknown = set(obj) - _AS_KEYS
    if unknown:
        raise DomainError(f"AS {key}: unknown fields {sorted(unknown)}")
    geo = None
    if "geo" in obj:
        raw = obj["geo"]
        if (not isinstance(raw, list) or len(raw) != 2
                or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in raw)):
            raise DomainError(f"AS {key}: geo must be [lat, lon]")
        geo = (float(raw[0]), float(raw[1]))
    return HopMeta(
        id=as_id,
        latency_ms=_num(obj, "latency_ms", 0.0, f"AS {key}"),
        bandwidth_mbps=_num(obj, "bandwidth_mbps", 1000.0, f"AS {key}"),
        mtu_bytes=int(_num(obj, "mtu_bytes", 1500, f"AS {key}")),
        geo=geo,
        carbon_g_per_gb=_num(obj, "carbon_g_per_gb", 0.0, f"AS {key}"),
    )


def load_topology(source: IO[bytes] | bytes | str) -> Topology:
    """Parse and validate a topology document.

    Accepts a binary stream, bytes, or str. Syntax errors carry the JSON
    line number; semantic errors (dangling endpoints, wildcards, duplicate
    links) raise DomainError.
    """
    data = source.read() if hasattr(source, "read") else source
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as e:
        raise ParseError(f"topology is not valid JSON: {e.msg}", line=e.lineno) from None
    if not isinstance(doc, dict):
        raise DomainError("topology document must be a JSON object")
    unknown = set(doc) - {"local_as", "ases", "links"}
    if unknown:
        raise DomainError(f"topology: unknown top-level keys {sorted(unknown)}")
    if "local_as" not in doc:
        raise DomainError("topology: missing local_as")
    if not isinstance(doc.get("ases"), dict) or not doc["ases"]:
        raise DomainError("topology: 'ases' must be a non-empty object")

    ases: dict[IsdAs, HopMeta] = {}
    for key, obj in doc["ases"].items():
        meta = _parse_as_entry(key, obj)
        if meta.id in ases:
            raise DomainError(f"duplicate AS entry {meta.id}")
        ases[meta.id] = meta

    links: dict[tuple[IsdAs, IsdAs], LinkMeta] = {}
    for i, raw in enumerate(doc.get("links", [])):
        ctx = f"links[{i}]"
        if not isinstance(raw, dict):
            raise DomainError(f"{ctx}: must be an object")
        unknown = set(raw) - _LINK_KEYS
        if unknown:
            raise DomainError(f"{ctx}: unknown fields {sorted(unknown)}")
        if "a" not in raw or "b" not in raw:
            raise DomainError(f"{ctx}: missing endpoint 'a' or 'b'")
        a, b = parse_isd_as(str(raw["a"])), parse_isd_as(str(raw["b"]))
        if a == b:
            raise DomainError(f"{ctx}: self-link on {a}")
        key = _link_key(a, b)
        if key in links:
            raise DomainError(f"{ctx}: duplicate link {a} — {b}")
        links[key] = LinkMeta(
            latency_ms=_num(raw, "latency_ms", 0.0, ctx),
            bandwidth_mbps=_num(raw, "bandwidth_mbps", 1000.0, ctx),
            mtu_bytes=int(_num(raw, "mtu_bytes", 1500, ctx)),
        )

    local_as = parse_isd_as(str(doc["local_as"]))
    if not local_as.is_concrete:
        raise DomainError(f"local_as {local_as} must not contain wildcards")
    return Topology(local_as=local_as, ases=ases, links=links)


def _decorate(topo: Topology, hop_ids: list[IsdAs]) -> Path:
    hops = [topo.ases[hop_ids[0]]]
    for prev, cur in zip(hop_ids, hop_ids[1:]):
        base = topo.ases[cur]
        link = topo.link(prev, cur)
        # One HopMeta per hop: the AS decoration absorbs the incoming link
        # (latency adds, bandwidth/MTU bottleneck).
        hops.append(HopMeta(
            id=base.id,
            latency_ms=base.latency_ms + link.latency_ms,
            bandwidth_mbps=min(base.bandwidth_mbps, link.bandwidth_mbps),
            mtu_bytes=min(base.mtu_bytes, link.mtu_bytes),
            geo=base.geo,
            carbon_g_per_gb=base.carbon_g_per_gb,
        ))
    return Path(tuple(hops))


def enumerate_paths(topo: Topology, src: IsdAs, dst: IsdAs,
                    max_hops: int = DEFAULT_MAX_HOPS,
                    max_paths: int = DEFAULT_MAX_PATHS) -> list[Path]:
    """All simple src→dst paths of at most max_hops ASes, decorated.

    Deterministic: ordered by (aggregate latency asc, hop sequence), then
    truncated to max_paths.
    """
    if src not in topo.ases:
        raise DomainError(f"unknown source AS {src}")
    if dst not in topo.ases:
        raise DomainError(f"unknown destination AS {dst}")
    if max_hops < 1 or max_paths < 1:
        raise DomainError("max_hops and max_paths must be >= 1")
    if src == dst:
        return [_decorate(topo, [src])]

    found: list[list[IsdAs]] = []
    trail: list[IsdAs] = [src]
    visited: set[IsdAs] = {src}

    def walk(node: IsdAs) -> None:
        if node == dst:
            found.append(list(trail))
            return
        if len(trail) >= max_hops:
            return
        for nxt in topo.neighbors(node):
            if nxt in visited:
                continue
            visited.add(nxt)
            trail.append(nxt)
            walk(nxt)
            trail.pop()
            visited.remove(nxt)

    walk(src)
    paths = [_decorate(topo, ids) for ids in found]
    paths.sort(key=lambda p: (p.meta.latency_ms, p.key))
    return paths[:max_paths]


@dataclass(frozen=True)
class PathSet:
    """One cache entry: the decorated candidate paths for a src/dst pair."""

    src: IsdAs
    dst: IsdAs
    paths: tuple[Path, ...]
    fetched_at: float

    def __post_init__(self):
        object.__setattr__(self, "paths", tuple(self.paths))
        for p in self.paths:
            if p.hops[0].id != self.src or p.hops[-1].id != self.dst:
                raise DomainError(f"path {p} does not run {self.src} → {self.dst}")


class PathDb:
    """TTL-cached path lookups over one topology.

    Thread-safe. A lookup that races a recomputation may briefly serve the
    stale PathSet; it never serves a torn one (PathSet is immutable).
    ``enumerations`` counts actual recomputations, for cache-contract
    tests.
    """

    def __init__(self, topology: Topology, clock: Clock | None = None,
                 ttl_s: float = DEFAULT_TTL_S,
                 max_hops: int = DEFAULT_MAX_HOPS,
                 max_paths: int = DEFAULT_MAX_PATHS):
        self.topology = topology
        self.ttl_s = ttl_s
        self.max_hops = max_hops
        self.max_paths = max_paths
        self._clock = clock or SystemClock()
        self._cache: dict[tuple[IsdAs, IsdAs], PathSet] = {}
        self._lock = threading.Lock()
        self.enumerations = 0

    def lookup_paths(self, src: IsdAs, dst: IsdAs) -> PathSet:
        now = self._clock.now()
        key = (src, dst)
        with self._lock:
            cached = self._cache.get(key)
            if cached is not None and now - cached.fetched_at < self.ttl_s:
                return cached
        # Unknown destination is not an error: the host may simply lack
        # PAN connectivity. Unknown source is a wiring bug and raises.
        if dst not in self.topology.ases:
            paths: list[Path] = []
        else:
            paths = enumerate_paths(self.topology, src, dst,
                                    max_hops=self.max_hops, max_paths=self.max_paths)
        fresh = PathSet(src=src, dst=dst, paths=tuple(paths), fetched_at=now)
        with self._lock:
            self.enumerations += 1
            self._cache[key] = fresh
        return fresh

    def invalidate(self) -> None:
        with self._lock:
            self._cache.clear()
