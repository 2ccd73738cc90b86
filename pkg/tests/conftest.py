"""Shared fixtures: deterministic clock, test origins, full gateway stacks."""

from __future__ import annotations

from types import SimpleNamespace

import pytest

from pangate.clock import ManualClock, SystemClock
from pangate.control import serve_control
from pangate.emu import EmuTransport
from pangate.gateway import Gateway
from pangate.origin import OriginConfig, serve
from pangate.pathdb import Topology
from pangate.plan import OPPORTUNISTIC
from pangate.policy import parse_policy
from pangate.proxy import serve_proxy
from pangate.resolver import FixtureTxtSource, Resolver, StrictStore, parse_scion_address

from helpers import FIXTURES, make_topology


@pytest.fixture
def manual_clock():
    return ManualClock(start=1_000.0)


@pytest.fixture
def diamond_topology() -> Topology:
    """1-1 local; two branches to 2-5: via 3-3 (ISD 3, faster) or 2-2."""
    from pangate.pathdb import load_topology

    return load_topology((FIXTURES / "topologies" / "diamond.json").read_bytes())


@pytest.fixture
def origin_factory():
    """Start static/reverse origins on ephemeral ports; auto-shutdown."""
    servers = []

    def start(root=None, upstream=None, strict_max_age=None):
        config = OriginConfig(listen=("127.0.0.1", 0), root=root, upstream=upstream,
                              strict_max_age_s=strict_max_age)
        server = serve(config)
        servers.append(server)
        return server

    yield start
    for server in servers:
        server.shutdown()


@pytest.fixture
def gateway_factory():
    """Build a full gateway stack (proxy + control) on ephemeral ports.

    static_hosts values are "isd-as,host:port" strings; txt_entries is a
    FixtureTxtSource table. Every stack gets its own transport so audit
    logs stay per-test.
    """
    stacks = []

    def start(topology: Topology, policy_text: str = "+ 0-0\n",
              static_hosts: dict[str, str] | None = None,
              txt_entries: dict | None = None,
              mode: str = OPPORTUNISTIC, clock=None,
              strict_store_path=None, path_ttl_s=None, ui_dir=None):
        clock = clock or SystemClock()
        resolver = Resolver(
            static_hosts={h: parse_scion_address(v) for h, v in (static_hosts or {}).items()},
            txt_source=FixtureTxtSource(txt_entries or {}),
            clock=clock,
        )
        strict_store = StrictStore(path=strict_store_path, clock=clock)
        transport = EmuTransport(topology)
        gateway = Gateway(topology=topology, policy=parse_policy(policy_text),
                          resolver=resolver, strict_store=strict_store,
                          transport=transport, clock=clock, global_mode=mode,
                          path_ttl_s=path_ttl_s)
        proxy = serve_proxy(("127.0.0.1", 0), gateway)
        control = serve_control(("127.0.0.1", 0), gateway, ui_dir=ui_dir)
        stack = SimpleNamespace(
            gateway=gateway,
            transport=transport,
            resolver=resolver,
            strict_store=strict_store,
            clock=clock,
            proxy=proxy,
            control=control,
            proxy_addr=("127.0.0.1", proxy.port),
            control_addr=("127.0.0.1", control.port),
        )
        stacks.append(stack)
        return stack

    yield start
    for stack in stacks:
        stack.proxy.shutdown()
        stack.control.shutdown()


@pytest.fixture
def two_as_topology() -> Topology:
    return make_topology("1-1", ["1-1", "2-5"], [("1-1", "2-5", 0)])
