"""Gateway planning core.

Owns the live policy, modes, and subsystem wiring, and turns each
incoming proxied request into a RequestPlan: relay over the first
policy-compliant PAN path, fall back to legacy IP, or block. The proxy
and control servers stay thin around this class, which also makes the
decision table directly testable without sockets.
"""

from __future__ import annotations

import logging
import threading

from .clock import Clock, SystemClock
from .core import DomainError
from .pathdb import PathDb, Topology
from .plan import (
    LEGACY,
    OPPORTUNISTIC,
    ORIGIN_GLOBAL,
    ORIGIN_HEADER,
    ORIGIN_USER,
    PAN,
    STRICT,
    Mode,
    PageAggregator,
    PageReport,
    RequestPlan,
)
from .policy import Policy, evaluate, parse_policy, render_policy
from .resolver import Resolver, ScionAddress, StrictStore, _normalize_host
from .stats import StatsBook, Timing, path_fingerprint
from .emu import EmuTransport

__all__ = ["Gateway"]

log = logging.getLogger("pangate.gateway")


class Gateway:
    """Planning and state hub shared by the proxy and control servers."""

    def __init__(self, topology: Topology, policy: Policy, resolver: Resolver,
                 strict_store: StrictStore, transport: EmuTransport,
                 clock: Clock | None = None, global_mode: str = OPPORTUNISTIC,
                 path_ttl_s: float | None = None):
        if global_mode not in (OPPORTUNISTIC, STRICT):
            raise DomainError(f"unknown mode {global_mode!r}")
        self.clock = clock or SystemClock()
        self.topology = topology
        self.resolver = resolver
        self.strict_store = strict_store
        self.transport = transport
        kwargs = {} if path_ttl_s is None else {"ttl_s": path_ttl_s}
        self.pathdb = PathDb(topology, clock=self.clock, **kwargs)
        self.pages = PageAggregator()
        self.stats = StatsBook(clock=self.clock)
        self._policy = policy
        self._global_mode = global_mode
        self._site_modes: dict[str, str] = {}
        self._mutate = threading.Lock()

    # -- policy ------------------------------------------------------------

    @property
    def policy(self) -> Policy:
        return self._policy

    def set_policy(self, text: str) -> Policy:
        """Parse and atomically swap the active policy.

        A parse error propagates and leaves the old policy active;
        in-flight requests keep the plan they were given.
        """
        fresh = parse_policy(text)
        with self._mutate:
            self._policy = fresh
        return fresh

    def policy_text(self) -> str:
        return render_policy(self._policy)

    # -- modes -------------------------------------------------------------

    def effective_mode(self, host: str, now: float | None = None) -> Mode:
        if now is None:
            now = self.clock.now()
        host = _normalize_host(host)
        if self.strict_store.is_strict(host, now):
            return Mode(STRICT, ORIGIN_HEADER)
        site = self._site_modes.get(host)
        if site is not None:
            return Mode(site, ORIGIN_USER)
        return Mode(self._global_mode, ORIGIN_GLOBAL)

    def set_mode(self, value: str, host: str | None = None) -> None:
        if value not in (OPPORTUNISTIC, STRICT):
            raise DomainError(f"unknown mode {value!r}")
        with self._mutate:
            if host is None:
                self._global_mode = value
            else:
                self._site_modes[_normalize_host(host)] = value

    def mode_info(self, host: str | None = None) -> dict:
        if host is None:
            return {"scope": "global", "value": self._global_mode}
        mode = self.effective_mode(host)
        info = {"scope": "host", "host": _normalize_host(host),
                "value": mode.value, "origin": mode.origin}
        if mode.origin == ORIGIN_HEADER:
            entry = self.strict_store.entry(host)
            if entry is not None:
                info["expires_at"] = entry.expires_at
        return info

    # -- planning ----------------------------------------------------------

    def plan_request(self, host: str, page_id: str,
                     now: float | None = None) -> RequestPlan:
        """Decide how to carry one request. Never raises."""
        if now is None:
            now = self.clock.now()
        try:
            mode = self.effective_mode(host, now)
        except Exception:
            log.exception("mode computation failed for %s", host)
            mode = Mode(self._global_mode, ORIGIN_GLOBAL)
        try:
            return self._plan(host, page_id, mode, now)
        except Exception:
            log.exception("planning failed for %s", host)
            if mode.strict:
                return RequestPlan.blocked("internal", mode, host, page_id)
            return RequestPlan.legacy(mode, host, page_id)

    def _plan(self, host: str, page_id: str, mode: Mode, now: float) -> RequestPlan:
        policy = self._policy  # one read: swaps affect later requests only
        resolution = self.resolver.resolve(host, now)
        if not resolution.scion_capable:
            if mode.strict:
                return RequestPlan.blocked("no-pan-connectivity", mode, host, page_id)
            return RequestPlan.legacy(mode, host, page_id)
        address = resolution.address
        pathset = self.pathdb.lookup_paths(self.topology.local_as, address.id)
        if not pathset.paths:
            if mode.strict:
                return RequestPlan.blocked("no-path", mode, host, page_id)
            return RequestPlan.legacy(mode, host, page_id)
        compliant = evaluate(policy, pathset.paths)
        if compliant:
            return RequestPlan.pan_via(compliant[0], address, mode, host, page_id)
        # Paths exist but the policy excludes them all. PAN is never used
        # off-policy: strict blocks, opportunistic falls back to legacy
        # and flags the non-compliance.
        if mode.strict:
            return RequestPlan.blocked("no-compliant-path", mode, host, page_id,
                                       compliant=False)
        return RequestPlan.legacy(mode, host, page_id, compliant=False)

    # -- outcomes ----------------------------------------------------------

    def record_outcome(self, plan: RequestPlan, timing: Timing, n_bytes: int = 0) -> None:
        self.pages.record(plan)
        self.stats.record(plan, timing, n_bytes)

    def classify_page(self, page_id: str) -> PageReport:
        return self.pages.classify_page(page_id)

    def observe_strict_header(self, host: str, value: str, address: ScionAddress,
                              now: float | None = None) -> None:
        """Feed one Strict-SCION header seen on a PAN channel.

        Trust-on-PAN is enforced by the caller: headers from legacy
        responses must never reach this method.
        """
        if now is None:
            now = self.clock.now()
        self.strict_store.record_strict_header(host, value, now)
        # Either way the header proves the host speaks PAN right now.
        self.resolver.record_header_hint(host, address, now)

    # -- reporting ---------------------------------------------------------

    def paths_report(self, host: str, now: float | None = None) -> dict:
        """Candidate paths with metadata and compliance flags, for the UI."""
        if now is None:
            now = self.clock.now()
        policy = self._policy
        mode = self.effective_mode(host, now)
        resolution = self.resolver.resolve(host, now)
        report = {
            "host": _normalize_host(host),
            "scion_capable": resolution.scion_capable,
            "source": resolution.source,
            "address": str(resolution.address) if resolution.address else None,
            "error": resolution.error,
            "mode": {"value": mode.value, "origin": mode.origin},
            "paths": [],
        }
        if not resolution.scion_capable:
            return report
        pathset = self.pathdb.lookup_paths(self.topology.local_as, resolution.address.id)
        compliant = evaluate(policy, pathset.paths)
        compliant_keys = {p.key for p in compliant}
        chosen_key = compliant[0].key if compliant else None
        ordered = compliant + [p for p in pathset.paths if p.key not in compliant_keys]
        for p in ordered:
            report["paths"].append({
                "fingerprint": path_fingerprint(p),
                "hops": [str(h.id) for h in p.hops],
                "latency_ms": p.meta.latency_ms,
                "bandwidth_mbps": p.meta.bandwidth_mbps,
                "mtu_bytes": p.meta.mtu_bytes,
                "carbon_g_per_gb": p.meta.carbon_g_per_gb,
                "hop_count": p.meta.hop_count,
                "isds": sorted(p.meta.isds),
                "compliant": p.key in compliant_keys,
                "chosen": p.key == chosen_key,
            })
        return report
