"""Path-aware browsing gateway.

A local forward HTTP proxy that detects per-destination path-aware
connectivity, selects inter-domain paths under a user policy (geofencing
ACLs plus multi-criteria ordering), enforces opportunistic or strict
mode with legacy-IP fallback, and reports per-page coverage - all against
an emulated path-aware data plane so path choices have measurable timing
consequences.
"""

from .clock import Clock, ManualClock, SystemClock
from .core import DomainError, HopMeta, IsdAs, ParseError, Path, PathMetadata, parse_isd_as
from .emu import Channel, EmuTransport, EndpointDown, EmulationRefused
from .gateway import Gateway
from .pathdb import PathDb, PathSet, Topology, enumerate_paths, load_topology
from .plan import Mode, PageReport, RequestPlan
from .policy import Policy, combine, evaluate, parse_policy, render_policy
from .resolver import Resolution, Resolver, ScionAddress, StrictStore, parse_txt

__version__ = "0.1.0"

__all__ = [
    "Clock",
    "ManualClock",
    "SystemClock",
    "DomainError",
    "ParseError",
    "IsdAs",
    "HopMeta",
    "Path",
    "PathMetadata",
    "parse_isd_as",
    "Channel",
    "EmuTransport",
    "EndpointDown",
    "EmulationRefused",
    "Gateway",
    "PathDb",
    "PathSet",
    "Topology",
    "enumerate_paths",
    "load_topology",
    "Mode",
    "PageReport",
    "RequestPlan",
    "Policy",
    "combine",
    "evaluate",
    "parse_policy",
    "render_policy",
    "Resolution",
    "Resolver",
    "ScionAddress",
    "StrictStore",
    "parse_txt",
    "__version__",
]
