"""Path policy language: geofencing ACLs and multi-criteria path ordering.

Grammar (line-oriented, `#` starts a comment):

    + <isd>-<as>          allow paths whose hops match the pattern
    - <isd>-<as>          deny them (0 is a wildcard in either position)
    order <metric> <asc|desc>

ACL evaluation is first-match-wins per hop; a path survives only if every
hop's first-matching entry allows it. A full-wildcard default entry is
guaranteed at the end of every ACL (``+ 0-0`` is appended when the source
text omits one). Policies never leave the process except over the loopback
control API.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .core import DomainError, IsdAs, ParseError, Path, matches, parse_isd_as

__all__ = [
    "ALLOW",
    "DENY",
    "METRICS",
    "AclEntry",
    "OrderKey",
    "Policy",
    "parse_policy",
    "render_policy",
    "evaluate",
    "combine",
    "allow_all",
]

ALLOW = "allow"
DENY = "deny"

# Metric name -> extractor over PathMetadata. All metrics are total here
# because pathdb always decorates every hop.
METRICS = {
    "latency": lambda m: m.latency_ms,
    "bandwidth": lambda m: m.bandwidth_mbps,
    "hops": lambda m: m.hop_count,
    "carbon": lambda m: m.carbon_g_per_gb,
    "mtu": lambda m: m.mtu_bytes,
}

_ACTION_MARK = {ALLOW: "+", DENY: "-"}
_MARK_ACTION = {"+": ALLOW, "-": DENY}

_FULL_WILDCARD = IsdAs(0, 0)


@dataclass(frozen=True)
class AclEntry:
    action: str
    pattern: IsdAs

    def __post_init__(self):
        if self.action not in (ALLOW, DENY):
            raise DomainError(f"unknown ACL action {self.action!r}")

    @property
    def is_default(self) -> bool:
        return self.pattern == _FULL_WILDCARD

    def __str__(self) -> str:
        return f"{_ACTION_MARK[self.action]} {self.pattern}"


@dataclass(frozen=True)
class OrderKey:
    metric: str
    direction: str

    def __post_init__(self):
        if self.metric not in METRICS:
            raise DomainError(f"unknown order metric {self.metric!r}")
        if self.direction not in ("asc", "desc"):
            raise DomainError(f"unknown order direction {self.direction!r}")

    def __str__(self) -> str:
        return f"order {self.metric} {self.direction}"


@dataclass(frozen=True)
class Policy:
    """Immutable parsed policy; safe for unsynchronized concurrent use."""

    acl: tuple[AclEntry, ...]
    orderings: tuple[OrderKey, ...] = ()
    name: str | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "acl", tuple(self.acl))
        object.__setattr__(self, "orderings", tuple(self.orderings))
        if not self.acl:
            raise DomainError("policy ACL must not be empty")
        if not self.acl[-1].is_default:
            raise DomainError("policy ACL must end with a full-wildcard default entry")
        metrics = [k.metric for k in self.orderings]
        if len(set(metrics)) != len(metrics):
            raise DomainError("policy orderings contain a duplicate metric")


def allow_all(name: str | None = None) -> Policy:
    return Policy(acl=(AclEntry(ALLOW, _FULL_WILDCARD),), name=name)


def parse_policy(text: str, name: str | None = None) -> Policy:
    acl: list[AclEntry] = []
    orderings: list[OrderKey] = []
    seen_metrics: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.partition("#")[0].strip()
        if not line:
            continue
        tokens = line.split()
        if tokens[0] in _MARK_ACTION:
            if len(tokens) != 2:
                raise ParseError(f"expected '{tokens[0]} <isd>-<as>'", line=lineno)
            try:
                pattern = parse_isd_as(tokens[1])
            except ParseError as e:
                raise ParseError(str(e), line=lineno) from None
            acl.append(AclEntry(_MARK_ACTION[tokens[0]], pattern))
        elif tokens[0] == "order":
            if len(tokens) != 3:
                raise ParseError("expected 'order <metric> <asc|desc>'", line=lineno)
            metric, direction = tokens[1], tokens[2]
            if metric not in METRICS:
                raise ParseError(f"unknown order metric {metric!r}", line=lineno)
            if direction not in ("asc", "desc"):
                raise ParseError(f"order direction must be 'asc' or 'desc', got {direction!r}",
                                 line=lineno)
            if metric in seen_metrics:
                raise ParseError(f"duplicate order metric {metric!r}", line=lineno)
            seen_metrics.add(metric)
            orderings.append(OrderKey(metric, direction))
        else:
            raise ParseError(f"unknown directive {tokens[0]!r}", line=lineno)
    if not acl or not acl[-1].is_default:
        acl.append(AclEntry(ALLOW, _FULL_WILDCARD))
    return Policy(acl=tuple(acl), orderings=tuple(orderings), name=name)


def render_policy(policy: Policy) -> str:
    """Canonical text form; reparses to an equal Policy."""
    lines = [str(e) for e in policy.acl]
    lines += [str(k) for k in policy.orderings]
    return "\n".join(lines) + "\n"


def _hop_allowed(acl: Sequence[AclEntry], hop_id: IsdAs) -> bool:
    for entry in acl:
        if matches(entry.pattern, hop_id):
            return entry.action == ALLOW
    # Unreachable: the Policy invariant guarantees a trailing default entry.
    raise DomainError(f"no ACL entry matched {hop_id}")


def _sort_key(policy: Policy):
    extractors = [(METRICS[k.metric], k.direction == "desc") for k in policy.orderings]

    def key(path: Path):
        parts: list[float] = []
        for extract, descending in extractors:
            value = extract(path.meta)
            parts.append(-value if descending else value)
        return (tuple(parts), path.key)

    return key


def evaluate(policy: Policy, paths: Sequence[Path]) -> list[Path]:
    """Filter, then order, a path set.

    Keeps paths where every hop's first-matching ACL entry allows it, then
    sorts by the ordering keys (first key dominates), breaking remaining
    ties by hop sequence so the result is deterministic regardless of
    input order. Pure function; idempotent.
    """
    kept = [p for p in paths if all(_hop_allowed(policy.acl, h.id) for h in p.hops)]
    kept.sort(key=_sort_key(policy))
    return kept


def combine(policies: Sequence[Policy]) -> Policy:
    """Concatenate policies into one.

    Earlier policies' default entries are dropped so they cannot shadow
    later ACLs; only the last policy's default survives. Order keys keep
    first occurrence per metric.
    """
    policies = list(policies)
    if not policies:
        raise DomainError("combine requires at least one policy")
    acl: list[AclEntry] = []
    for i, p in enumerate(policies):
        last_policy = i == len(policies) - 1
        for j, entry in enumerate(p.acl):
            if entry.is_default and not (last_policy and j == len(p.acl) - 1):
                continue
            acl.append(entry)
    orderings: list[OrderKey] = []
    seen: set[str] = set()
    for p in policies:
        for k in p.orderings:
            if k.metric not in seen:
                seen.add(k.metric)
                orderings.append(k)
    names = [p.name for p in policies if p.name]
    return Policy(acl=tuple(acl), orderings=tuple(orderings),
                  name=" + ".join(names) if names else None)
