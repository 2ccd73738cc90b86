"""Planning layer: mode precedence, the decision table, page coverage."""

import pytest

from pangate.clock import ManualClock
from pangate.core import DomainError, ParseError
from pangate.emu import EmuTransport
from pangate.gateway import Gateway
from pangate.plan import (
    BLOCKED,
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
from pangate.policy import parse_policy
from pangate.resolver import (
    FixtureTxtSource,
    Resolver,
    StrictStore,
    parse_scion_address,
)
from pangate.stats import Timing

from helpers import hop_ids, make_topology

OPP = Mode(OPPORTUNISTIC)
STR = Mode(STRICT)


def make_gateway(topology, policy_text="+ 0-0\n", static_hosts=None,
                 mode=OPPORTUNISTIC, clock=None, txt_entries=None,
                 resolver=None, strict_store=None):
    clock = clock or ManualClock(1_000.0)
    if resolver is None:
        resolver = Resolver(
            static_hosts={h: parse_scion_address(v)
                          for h, v in (static_hosts or {}).items()},
            txt_source=FixtureTxtSource(txt_entries or {}),
            clock=clock,
        )
    strict_store = strict_store or StrictStore(path=None, clock=clock)
    return Gateway(topology=topology, policy=parse_policy(policy_text),
                   resolver=resolver, strict_store=strict_store,
                   transport=EmuTransport(topology), clock=clock,
                   global_mode=mode)


STATIC = {"origin.test": "2-5,127.0.0.1:9"}


class TestMode:
    def test_values_validated(self):
        assert Mode(STRICT).strict
        assert not Mode(OPPORTUNISTIC).strict
        with pytest.raises(DomainError):
            Mode("fast")
        with pytest.raises(DomainError):
            Mode(STRICT, origin="decree")

    def test_header_imposed_is_always_strict(self):
        Mode(STRICT, ORIGIN_HEADER)
        with pytest.raises(DomainError):
            Mode(OPPORTUNISTIC, ORIGIN_HEADER)


class TestRequestPlanInvariants:
    def test_blocked_requires_strict(self):
        with pytest.raises(DomainError):
            RequestPlan.blocked("no-path", OPP, "h", "p")
        plan = RequestPlan.blocked("no-path", STR, "h", "p")
        assert plan.decision == BLOCKED and plan.reason == "no-path"

    def test_blocked_requires_reason(self):
        with pytest.raises(DomainError):
            RequestPlan(decision=BLOCKED, mode=STR, host="h", page_id="p")

    def test_pan_requires_path_and_address(self, two_as_topology):
        with pytest.raises(DomainError):
            RequestPlan(decision=PAN, mode=OPP, host="h", page_id="p")

    def test_legacy_must_not_carry_path(self, two_as_topology):
        from helpers import path_for
        path = path_for(two_as_topology, "1-1", "2-5")
        with pytest.raises(DomainError):
            RequestPlan(decision=LEGACY, mode=OPP, host="h", page_id="p", path=path)

    def test_unknown_decision(self):
        with pytest.raises(DomainError):
            RequestPlan(decision="teleport", mode=OPP, host="h", page_id="p")


class TestPageReport:
    def test_counters_must_add_up(self):
        with pytest.raises(DomainError):
            PageReport(page_id="p", total=3, via_pan=1, via_legacy=1,
                       blocked=0, non_compliant=0)
        with pytest.raises(DomainError):
            PageReport(page_id="p", total=-1, via_pan=0, via_legacy=0,
                       blocked=-1, non_compliant=0)

    @pytest.mark.parametrize("pan,legacy,blocked,expected", [
        (5, 0, 0, "all"),
        (3, 2, 0, "some"),
        (3, 0, 2, "some"),
        (0, 4, 0, "none"),
        (0, 2, 2, "none"),
        (0, 0, 0, "none"),
        (1, 0, 0, "all"),
    ])
    def test_indicator(self, pan, legacy, blocked, expected):
        report = PageReport(page_id="p", total=pan + legacy + blocked,
                            via_pan=pan, via_legacy=legacy, blocked=blocked,
                            non_compliant=0)
        assert report.indicator == expected

    def test_as_dict_round_trip(self):
        report = PageReport(page_id="p", total=2, via_pan=1, via_legacy=1,
                            blocked=0, non_compliant=1)
        d = report.as_dict()
        assert d == {"page_id": "p", "total": 2, "via_pan": 1, "via_legacy": 1,
                     "blocked": 0, "non_compliant": 1, "indicator": "some"}


class TestPageAggregator:
    def test_mixed_page(self):
        agg = PageAggregator()
        for _ in range(3):
            agg.record(RequestPlan.legacy(OPP, "h", "page"))
        agg.record(RequestPlan.blocked("no-path", STR, "h", "page"))
        report = agg.classify_page("page")
        assert (report.total, report.via_legacy, report.blocked) == (4, 3, 1)
        assert report.indicator == "none"

    def test_unknown_page_is_empty_none(self):
        report = PageAggregator().classify_page("nobody")
        assert report.total == 0 and report.indicator == "none"

    def test_non_compliant_tracked_across_decisions(self):
        agg = PageAggregator()
        agg.record(RequestPlan.legacy(OPP, "h", "pg", compliant=False))
        agg.record(RequestPlan.blocked("no-compliant-path", STR, "h", "pg",
                                       compliant=False))
        assert agg.classify_page("pg").non_compliant == 2

    def test_pages_listing_sorted(self):
        agg = PageAggregator()
        agg.record(RequestPlan.legacy(OPP, "h", "zeta"))
        agg.record(RequestPlan.legacy(OPP, "h", "alpha"))
        assert agg.pages() == ["alpha", "zeta"]


class TestDecisionTable:
    def test_happy_path_pan(self, two_as_topology):
        gw = make_gateway(two_as_topology, static_hosts=STATIC)
        plan = gw.plan_request("origin.test", "pg")
        assert plan.decision == PAN
        assert hop_ids(plan.path) == ("1-1", "2-5")
        assert str(plan.address) == "2-5,127.0.0.1:9"
        assert plan.policy_compliant

    def test_unresolvable_host(self, two_as_topology):
        opp = make_gateway(two_as_topology)
        plan = opp.plan_request("nowhere.test", "pg")
        assert plan.decision == LEGACY and plan.policy_compliant

        strict = make_gateway(two_as_topology, mode=STRICT)
        plan = strict.plan_request("nowhere.test", "pg")
        assert plan.decision == BLOCKED
        assert plan.reason == "no-pan-connectivity"
        assert plan.policy_compliant  # the policy never entered into it

    def test_no_path_to_destination(self):
        isolated = make_topology("1-1", ["1-1", "2-5", "2-6"],
                                 [("1-1", "2-6", 0)])
        opp = make_gateway(isolated, static_hosts=STATIC)
        assert opp.plan_request("origin.test", "pg").decision == LEGACY

        strict = make_gateway(isolated, static_hosts=STATIC, mode=STRICT)
        plan = strict.plan_request("origin.test", "pg")
        assert plan.decision == BLOCKED and plan.reason == "no-path"

    def test_destination_as_not_in_topology(self, two_as_topology):
        gw = make_gateway(two_as_topology, mode=STRICT,
                          static_hosts={"origin.test": "9-9,127.0.0.1:9"})
        plan = gw.plan_request("origin.test", "pg")
        assert plan.decision == BLOCKED and plan.reason == "no-path"

    def test_policy_excludes_everything(self, two_as_topology):
        text = "- 2-0\n+ 0-0\n"
        opp = make_gateway(two_as_topology, policy_text=text, static_hosts=STATIC)
        plan = opp.plan_request("origin.test", "pg")
        assert plan.decision == LEGACY
        assert not plan.policy_compliant

        strict = make_gateway(two_as_topology, policy_text=text,
                              static_hosts=STATIC, mode=STRICT)
        plan = strict.plan_request("origin.test", "pg")
        assert plan.decision == BLOCKED
        assert plan.reason == "no-compliant-path"
        assert not plan.policy_compliant

    def test_policy_orders_choice(self, diamond_topology):
        gw = make_gateway(diamond_topology, policy_text="+ 0-0\norder latency asc\n",
                          static_hosts=STATIC)
        plan = gw.plan_request("origin.test", "pg")
        assert hop_ids(plan.path) == ("1-1", "3-3", "2-5")

        gw.set_policy("- 3-0\n+ 0-0\norder latency asc\n")
        plan = gw.plan_request("origin.test", "pg")
        assert hop_ids(plan.path) == ("1-1", "2-2", "2-5")

    def test_internal_failure_never_raises(self, two_as_topology):
        class _BrokenResolver:
            def resolve(self, host, now):
                raise RuntimeError("boom")

        opp = make_gateway(two_as_topology, resolver=_BrokenResolver())
        plan = opp.plan_request("origin.test", "pg")
        assert plan.decision == LEGACY

        strict = make_gateway(two_as_topology, resolver=_BrokenResolver(),
                              mode=STRICT)
        plan = strict.plan_request("origin.test", "pg")
        assert plan.decision == BLOCKED and plan.reason == "internal"

    def test_mode_lookup_failure_falls_back_to_global(self, two_as_topology):
        class _BrokenStore:
            def is_strict(self, host, now):
                raise RuntimeError("boom")

        gw = make_gateway(two_as_topology, static_hosts=STATIC,
                          strict_store=_BrokenStore())
        plan = gw.plan_request("origin.test", "pg")
        assert plan.decision == PAN
        assert plan.mode.origin == ORIGIN_GLOBAL


class TestModePrecedence:
    def test_global_default(self, two_as_topology):
        gw = make_gateway(two_as_topology)
        mode = gw.effective_mode("origin.test")
        assert (mode.value, mode.origin) == (OPPORTUNISTIC, ORIGIN_GLOBAL)

    def test_site_overrides_global(self, two_as_topology):
        gw = make_gateway(two_as_topology)
        gw.set_mode(STRICT, host="origin.test")
        mode = gw.effective_mode("origin.test")
        assert (mode.value, mode.origin) == (STRICT, ORIGIN_USER)
        # other hosts unaffected
        assert gw.effective_mode("other.test").origin == ORIGIN_GLOBAL

    def test_header_beats_site_setting(self, two_as_topology):
        clock = ManualClock(1_000.0)
        gw = make_gateway(two_as_topology, static_hosts=STATIC, clock=clock)
        gw.set_mode(OPPORTUNISTIC, host="origin.test")
        addr = parse_scion_address("2-5,127.0.0.1:9")
        gw.observe_strict_header("origin.test", "max-age=60", addr)
        mode = gw.effective_mode("origin.test")
        assert (mode.value, mode.origin) == (STRICT, ORIGIN_HEADER)
        clock.advance(61)
        mode = gw.effective_mode("origin.test")
        assert (mode.value, mode.origin) == (OPPORTUNISTIC, ORIGIN_USER)

    def test_max_age_zero_clears_header_mode(self, two_as_topology):
        clock = ManualClock(1_000.0)
        gw = make_gateway(two_as_topology, static_hosts=STATIC, clock=clock)
        addr = parse_scion_address("2-5,127.0.0.1:9")
        gw.observe_strict_header("origin.test", "max-age=60", addr)
        assert gw.effective_mode("origin.test").origin == ORIGIN_HEADER
        gw.observe_strict_header("origin.test", "max-age=0", addr)
        assert gw.effective_mode("origin.test").origin == ORIGIN_GLOBAL

    def test_set_mode_validates(self, two_as_topology):
        gw = make_gateway(two_as_topology)
        with pytest.raises(DomainError):
            gw.set_mode("yolo")
        with pytest.raises(DomainError):
            make_gateway(two_as_topology, mode="yolo")

    def test_mode_info_shapes(self, two_as_topology):
        clock = ManualClock(1_000.0)
        gw = make_gateway(two_as_topology, static_hosts=STATIC, clock=clock)
        assert gw.mode_info() == {"scope": "global", "value": OPPORTUNISTIC}

        info = gw.mode_info("origin.test")
        assert info["scope"] == "host" and info["origin"] == ORIGIN_GLOBAL
        assert "expires_at" not in info

        addr = parse_scion_address("2-5,127.0.0.1:9")
        gw.observe_strict_header("origin.test", "max-age=120", addr)
        info = gw.mode_info("origin.test")
        assert info["origin"] == ORIGIN_HEADER
        assert info["expires_at"] == pytest.approx(1_000.0 + 120)


class TestPolicySwap:
    def test_bad_policy_rejected_and_old_retained(self, two_as_topology):
        gw = make_gateway(two_as_topology, policy_text="+ 2-0\n+ 0-0\n",
                          static_hosts=STATIC)
        before = gw.policy_text()
        with pytest.raises(ParseError):
            gw.set_policy("order latency sideways\n+ 0-0\n")
        assert gw.policy_text() == before
        assert gw.plan_request("origin.test", "pg").decision == PAN

    def test_swap_changes_subsequent_plans(self, two_as_topology):
        gw = make_gateway(two_as_topology, static_hosts=STATIC)
        assert gw.plan_request("origin.test", "pg").decision == PAN
        gw.set_policy("- 2-0\n+ 0-0\n")
        plan = gw.plan_request("origin.test", "pg")
        assert plan.decision == LEGACY and not plan.policy_compliant


class TestOutcomeWiring:
    def test_record_outcome_feeds_pages_and_stats(self, two_as_topology):
        gw = make_gateway(two_as_topology, static_hosts=STATIC)
        plan = gw.plan_request("origin.test", "pg")
        gw.record_outcome(plan, Timing(connect_ms=1.0, total_ms=5.0), n_bytes=100)
        assert gw.classify_page("pg").via_pan == 1
        snap = gw.stats.snapshot()
        assert snap["per_host"]["origin.test"]["requests_pan"] == 1


class TestPathsReport:
    def test_report_orders_compliant_first(self, diamond_topology):
        gw = make_gateway(diamond_topology,
                          policy_text="- 3-0\n+ 0-0\norder latency asc\n",
                          static_hosts=STATIC)
        report = gw.paths_report("origin.test")
        assert report["scion_capable"] and report["source"] == "static"
        assert report["address"] == "2-5,127.0.0.1:9"
        flags = [(p["compliant"], p["chosen"]) for p in report["paths"]]
        assert flags[0] == (True, True)
        assert all(not c for c, _ in flags[1:])
        assert report["paths"][0]["hops"] == ["1-1", "2-2", "2-5"]
        banned = [p for p in report["paths"] if 3 in p["isds"]]
        assert banned and all(not p["compliant"] for p in banned)

    def test_report_for_ip_only_host(self, two_as_topology):
        gw = make_gateway(two_as_topology)
        report = gw.paths_report("plain.test")
        assert not report["scion_capable"]
        assert report["paths"] == [] and report["address"] is None
