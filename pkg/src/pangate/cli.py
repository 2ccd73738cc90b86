"""pan-gate entry point: wire the subsystems and run both servers."""

from __future__ import annotations

import argparse
import json
import logging
import os
import threading

from .control import serve_control
from .core import DomainError, ParseError
from .emu import DEFAULT_TOLERANCE_MS, EmuTransport
from .gateway import Gateway
from .httpcommon import parse_host_port
from .pathdb import load_topology
from .plan import OPPORTUNISTIC, STRICT
from .policy import allow_all, parse_policy
from .proxy import serve_proxy
from .resolver import DnsTxtSource, FixtureTxtSource, Resolver, StrictStore, load_static_hosts

__all__ = ["main", "build_gateway"]

log = logging.getLogger("pangate.cli")

DEFAULT_PROXY = ("127.0.0.1", 8808)
DEFAULT_CONTROL = ("127.0.0.1", 8809)


def _addr(text: str) -> tuple[str, int]:
    host, port = parse_host_port(text, 0)
    if not host or port == 0:
        raise argparse.ArgumentTypeError(f"address {text!r} must be host:port")
    return host, port


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pan-gate",
        description="Path-aware browsing gateway: a local forward proxy that "
                    "picks policy-compliant inter-domain paths per request, "
                    "falls back to legacy IP, and reports page coverage.")
    parser.add_argument("--topology", required=True, metavar="FILE",
                        help="AS-level topology JSON")
    parser.add_argument("--policy", metavar="FILE",
                        help="path policy file (default: allow everything)")
    parser.add_argument("--static-hosts", metavar="FILE",
                        help="JSON map hostname -> 'isd-as,host[:port]'")
    parser.add_argument("--listen", type=_addr, default=DEFAULT_PROXY,
                        metavar="HOST:PORT", help="proxy listener (default 127.0.0.1:8808)")
    parser.add_argument("--control", type=_addr, default=DEFAULT_CONTROL,
                        metavar="HOST:PORT", help="control API listener (default 127.0.0.1:8809)")
    parser.add_argument("--mode", choices=[OPPORTUNISTIC, STRICT],
                        default=OPPORTUNISTIC, help="global default mode")
    parser.add_argument("--dns-fixtures", metavar="FILE",
                        help="fixtures file replacing live DNS TXT lookups")
    parser.add_argument("--strict-store", metavar="FILE",
                        help="persistence file for strict-mode obligations")
    parser.add_argument("--stats-export", metavar="FILE",
                        help="write a stats JSON snapshot on shutdown")
    parser.add_argument("--emu-tolerance-ms", type=float, default=DEFAULT_TOLERANCE_MS,
                        help="scheduling tolerance the emulation advertises to tests")
    parser.add_argument("--emu-shaping", choices=["on", "off"], default="off",
                        help="token-bucket bandwidth shaping on channels")
    parser.add_argument("--ui-dir", metavar="DIR",
                        help="built dashboard assets to serve at / on the control port")
    return parser


def build_gateway(args) -> Gateway:
    with open(args.topology, "rb") as f:
        topology = load_topology(f)
    if args.policy:
        with open(args.policy, encoding="utf-8") as f:
            policy = parse_policy(f.read())
    else:
        policy = allow_all()
    static_hosts = {}
    if args.static_hosts:
        with open(args.static_hosts, "rb") as f:
            static_hosts = load_static_hosts(f)
    if args.dns_fixtures:
        with open(args.dns_fixtures, "rb") as f:
            txt_source = FixtureTxtSource.from_stream(f)
    else:
        txt_source = DnsTxtSource()
    resolver = Resolver(static_hosts=static_hosts, txt_source=txt_source)
    strict_store = StrictStore(path=args.strict_store)
    transport = EmuTransport(topology, tolerance_ms=args.emu_tolerance_ms,
                             shaping=args.emu_shaping == "on")
    return Gateway(topology=topology, policy=policy, resolver=resolver,
                   strict_store=strict_store, transport=transport,
                   global_mode=args.mode)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=os.environ.get("PAN_GATE_LOG", "INFO").upper(),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        gateway = build_gateway(args)
    except (OSError, DomainError, ParseError) as e:
        build_parser().error(str(e))
    proxy = serve_proxy(args.listen, gateway)
    control = serve_control(args.control, gateway, ui_dir=args.ui_dir)
    log.info("proxy on %s:%d, control on %s:%d",
             args.listen[0], proxy.port, args.control[0], control.port)
    try:
        threading.Event().wait()
    except KeyboardInterrupt:
        log.info("shutting down")
    finally:
        proxy.shutdown()
        control.shutdown()
        if args.stats_export:
            with open(args.stats_export, "w", encoding="utf-8") as f:
                json.dump(gateway.stats.snapshot(), f, indent=2)
            log.info("stats written to %s", args.stats_export)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
