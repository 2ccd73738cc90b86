"""Per-host PAN availability detection and the strict-mode obligation cache.

Detection sources, in lookup order: fresh cache entry, the static host
list, then a DNS TXT query for the exact hostname (payload
``scion=<isd>-<as>,<host>[:<port>]``). A miss everywhere means the host is
reachable over legacy IP only.

Strict-mode obligations arrive via the ``Strict-SCION: max-age=<s>``
response header. Entries are host-scoped, renewable, cleared by
``max-age=0``, and persisted across restarts. Only headers seen on a PAN
channel may be recorded; the caller enforces that (a legacy-IP attacker
must not be able to force strict mode).
"""

from __future__ import annotations

import json
import logging
import os
import random
import socket
import struct
import threading
from dataclasses import dataclass
from typing import IO, Protocol

from .clock import Clock, SystemClock
from .core import DomainError, IsdAs, ParseError, parse_isd_as

__all__ = [
    "ScionAddress",
    "Resolution",
    "StrictEntry",
    "TxtRecord",
    "TxtLookupError",
    "TxtSource",
    "FixtureTxtSource",
    "DnsTxtSource",
    "Resolver",
    "StrictStore",
    "parse_scion_address",
    "parse_txt",
    "parse_max_age",
    "load_static_hosts",
    "SOURCE_STATIC",
    "SOURCE_DNS",
    "SOURCE_HEADER",
]

log = logging.getLogger("pangate.resolver")

SOURCE_STATIC = "static"
SOURCE_DNS = "dns-txt"
SOURCE_HEADER = "header"

TXT_TTL_MIN_S = 10
TXT_TTL_MAX_S = 3600
STATIC_TTL_S = 3600
NEGATIVE_TTL_S = 300
FAILURE_TTL_S = 30


@dataclass(frozen=True)
class ScionAddress:
    """Where a host lives inside the path-aware network."""

    id: IsdAs
    host: str
    port: int | None = None

    def __post_init__(self):
        if not self.id.is_concrete:
            raise DomainError(f"SCION address AS {self.id} must not contain wildcards")
        if not self.host:
            raise DomainError("SCION address host must be non-empty")
        if self.port is not None and not (1 <= self.port <= 65535):
            raise DomainError(f"port {self.port} out of range")

    def __str__(self) -> str:
        host = f"[{self.host}]" if ":" in self.host else self.host
        return f"{self.id},{host}" + (f":{self.port}" if self.port is not None else "")


def _split_host_port(text: str) -> tuple[str, int | None]:
    # Bracketed IPv6 may carry a port; bare IPv6 (2+ colons) never does.
    if text.startswith("["):
        inside, sep, rest = text[1:].partition("]")
        if not sep or not inside:
            raise ParseError(f"unbalanced brackets in {text!r}")
        if not rest:
            return inside, None
        if not rest.startswith(":"):
            raise ParseError(f"junk after ']' in {text!r}")
        port_s = rest[1:]
    elif text.count(":") == 1:
        host, _, port_s = text.partition(":")
        inside = host
    else:
        return text, None
    if not (port_s.isascii() and port_s.isdigit()):
        raise ParseError(f"port {port_s!r} is not a number")
    port = int(port_s)
    if not (1 <= port <= 65535):
        raise ParseError(f"port {port} out of range")
    return inside, port


def parse_scion_address(text: str) -> ScionAddress:
    """Parse ``<isd>-<as>,<host>[:<port>]`` (IPv6 hosts bracketed)."""
    id_part, sep, addr_part = text.strip().partition(",")
    if not sep:
        raise ParseError(f"SCION address {text!r} is missing the ',' separator")
    isd_as = parse_isd_as(id_part.strip())
    if not isd_as.is_concrete:
        raise ParseError(f"SCION address AS {isd_as} must not contain wildcards")
    host, port = _split_host_port(addr_part.strip())
    if not host:
        raise ParseError(f"SCION address {text!r} has an empty host")
    try:
        return ScionAddress(id=isd_as, host=host, port=port)
    except DomainError as e:
        raise ParseError(str(e)) from None


def parse_txt(record: str) -> ScionAddress:
    """Parse a detection TXT payload; rejects anything not ``scion=...``."""
    if not record.startswith("scion="):
        raise ParseError(f"TXT payload {record!r} lacks the 'scion=' prefix")
    return parse_scion_address(record[len("scion="):])


@dataclass(frozen=True)
class Resolution:
    """One detection verdict. ``address`` None means legacy IP only."""

    host: str
    address: ScionAddress | None
    source: str
    resolved_at: float
    ttl_s: int
    error: str | None = None

    def __post_init__(self):
        if self.ttl_s <= 0:
            raise DomainError("resolution TTL must be positive")
        if self.source not in (SOURCE_STATIC, SOURCE_DNS, SOURCE_HEADER):
            raise DomainError(f"unknown resolution source {self.source!r}")

    @property
    def scion_capable(self) -> bool:
        return self.address is not None

    def fresh(self, now: float) -> bool:
        return now - self.resolved_at < self.ttl_s


@dataclass(frozen=True)
class TxtRecord:
    strings: tuple[str, ...]
    ttl_s: int

    @property
    def text(self) -> str:
        # Multi-string TXT payloads concatenate, per common resolver practice.
        return "".join(self.strings)


class TxtLookupError(Exception):
    """The TXT query itself failed (timeout, refused, network error)."""


class TxtSource(Protocol):
    def lookup_txt(self, name: str) -> list[TxtRecord]:
        """Return TXT records for name ([] when none). Raise TxtLookupError on failure."""
        ...


class FixtureTxtSource:
    """Fixtures-backed TXT source for tests and offline demos.

    File format: JSON map of name to TXT strings, where the value is a
    string, a list of strings, or an extended object
    ``{"records": [...], "ttl": <s>}`` / ``{"fail": "<message>"}`` (the
    object forms exist so tests can pin TTLs and inject lookup failures).
    """

    def __init__(self, entries: dict, default_ttl_s: int = 300):
        self.entries = dict(entries)
        self.default_ttl_s = default_ttl_s

    @classmethod
    def from_stream(cls, source: IO[bytes] | bytes | str) -> "FixtureTxtSource":
        data = source.read() if hasattr(source, "read") else source
        try:
            doc = json.loads(data)
        except json.JSONDecodeError as e:
            raise ParseError(f"DNS fixtures file is not valid JSON: {e.msg}", line=e.lineno) from None
        if not isinstance(doc, dict):
            raise DomainError("DNS fixtures file must be a JSON object")
        return cls(doc)

    def lookup_txt(self, name: str) -> list[TxtRecord]:
        value = self.entries.get(name.lower().rstrip("."))
        if value is None:
            return []
        ttl = self.default_ttl_s
        if isinstance(value, dict):
            if "fail" in value:
                raise TxtLookupError(str(value["fail"]))
            ttl = int(value.get("ttl", ttl))
            value = value.get("records", [])
        if isinstance(value, str):
            value = [value]
        return [TxtRecord(strings=(str(s),), ttl_s=ttl) for s in value]


# --- Minimal RFC 1035 TXT client ------------------------------------------
# dnspython is the natural choice here but is not available on the package
# mirror, so the handful of wire-format bits needed for a TXT query over
# UDP live here instead.

_QTYPE_TXT = 16
_QTYPE_CNAME = 5
_QCLASS_IN = 1


def _encode_name(name: str) -> bytes:
    out = bytearray()
    for label in name.rstrip(".").split("."):
        raw = label.encode("idna") if not label.isascii() else label.encode("ascii")
        if not 0 < len(raw) < 64:
            raise TxtLookupError(f"bad label {label!r} in {name!r}")
        out.append(len(raw))
        out += raw
    out.append(0)
    return bytes(out)


def _skip_name(buf: bytes, pos: int) -> int:
    while True:
        if pos >= len(buf):
            raise TxtLookupError("truncated DNS name")
        length = buf[pos]
        if length == 0:
            return pos + 1
        if length & 0xC0 == 0xC0:  # compression pointer ends the name
            return pos + 2
        pos += 1 + length


def _parse_txt_response(buf: bytes, query_id: int) -> list[TxtRecord]:
    if len(buf) < 12:
        raise TxtLookupError("short DNS response")
    rid, flags, qd, an, _ns, _ar = struct.unpack("!6H", buf[:12])
    if rid != query_id:
        raise TxtLookupError("DNS response id mismatch")
    if not flags & 0x8000:
        raise TxtLookupError("DNS response without QR bit")
    rcode = flags & 0x000F
    if rcode == 3:  # NXDOMAIN: a definite "no such name"
        return []
    if rcode != 0:
        raise TxtLookupError(f"DNS server returned rcode {rcode}")
    pos = 12
    for _ in range(qd):
        pos = _skip_name(buf, pos) + 4
    records: list[TxtRecord] = []
    for _ in range(an):
        pos = _skip_name(buf, pos)
        if pos + 10 > len(buf):
            raise TxtLookupError("truncated DNS answer")
        rtype, rclass, ttl, rdlen = struct.unpack("!HHIH", buf[pos:pos + 10])
        pos += 10
        rdata = buf[pos:pos + rdlen]
        if len(rdata) != rdlen:
            raise TxtLookupError("truncated DNS rdata")
        pos += rdlen
        if rtype != _QTYPE_TXT or rclass != _QCLASS_IN:
            continue  # tolerate CNAMEs and other records in the answer
        strings: list[str] = []
        i = 0
        while i < len(rdata):
            n = rdata[i]
            chunk = rdata[i + 1:i + 1 + n]
            if len(chunk) != n:
                raise TxtLookupError("truncated TXT character-string")
            strings.append(chunk.decode("utf-8", "replace"))
            i += 1 + n
        records.append(TxtRecord(strings=tuple(strings), ttl_s=int(ttl)))
    return records


def _system_nameservers() -> list[str]:
    servers: list[str] = []
    try:
        with open("/etc/resolv.conf", encoding="utf-8", errors="replace") as f:
            for line in f:
                parts = line.split()
                if len(parts) >= 2 and parts[0] == "nameserver":
                    servers.append(parts[1])
    except OSError:
        pass
    return servers or ["127.0.0.53"]


class DnsTxtSource:
    """TXT lookups over plain UDP against the system resolvers."""

    def __init__(self, servers: list[str] | None = None, port: int = 53,
                 timeout_s: float = 2.0):
        self.servers = servers if servers is not None else _system_nameservers()
        self.port = port
        self.timeout_s = timeout_s

    def lookup_txt(self, name: str) -> list[TxtRecord]:
        query_id = random.randrange(0x10000)
        header = struct.pack("!6H", query_id, 0x0100, 1, 0, 0, 0)  # RD set
        question = _encode_name(name) + struct.pack("!HH", _QTYPE_TXT, _QCLASS_IN)
        packet = header + question
        last_error: Exception | None = None
        for server in self.servers:
            family = socket.AF_INET6 if ":" in server else socket.AF_INET
            try:
                with socket.socket(family, socket.SOCK_DGRAM) as sock:
                    sock.settimeout(self.timeout_s)
                    sock.sendto(packet, (server, self.port))
                    buf, _ = sock.recvfrom(4096)
                return _parse_txt_response(buf, query_id)
            except (OSError, TxtLookupError) as e:
                last_error = e
        raise TxtLookupError(f"all DNS servers failed: {last_error}")


def load_static_hosts(source: IO[bytes] | bytes | str) -> dict[str, ScionAddress]:
    """Load the static host list: JSON map hostname -> "isd-as,host[:port]"."""
    data = source.read() if hasattr(source, "read") else source
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as e:
        raise ParseError(f"static hosts file is not valid JSON: {e.msg}", line=e.lineno) from None
    if not isinstance(doc, dict):
        raise DomainError("static hosts file must be a JSON object")
    table: dict[str, ScionAddress] = {}
    for name, value in doc.items():
        if not isinstance(value, str):
            raise DomainError(f"static host {name!r}: value must be a string address")
        table[_normalize_host(name)] = parse_scion_address(value)
    return table


def _normalize_host(host: str) -> str:
    return host.strip().rstrip(".").lower()


class Resolver:
    """Cached per-host availability detection. Thread-safe.

    A stale entry may be refreshed concurrently by two handlers; both
    writes are full Resolution values, so readers never observe a torn
    entry, only a possibly twice-computed fresh one.
    """

    def __init__(self, static_hosts: dict[str, ScionAddress] | None = None,
                 txt_source: TxtSource | None = None,
                 clock: Clock | None = None):
        self.static_hosts = {_normalize_host(h): a for h, a in (static_hosts or {}).items()}
        self.txt_source = txt_source if txt_source is not None else DnsTxtSource()
        self._clock = clock or SystemClock()
        self._cache: dict[str, Resolution] = {}
        self._lock = threading.Lock()

    def resolve(self, host: str, now: float | None = None) -> Resolution:
        if not host:
            raise DomainError("cannot resolve an empty host name")
        host = _normalize_host(host)
        if now is None:
            now = self._clock.now()
        with self._lock:
            cached = self._cache.get(host)
        if cached is not None and cached.fresh(now):
            return cached

        static = self.static_hosts.get(host)
        if static is not None:
            result = Resolution(host=host, address=static, source=SOURCE_STATIC,
                                resolved_at=now, ttl_s=STATIC_TTL_S)
        else:
            result = self._resolve_txt(host, now)
        with self._lock:
            self._cache[host] = result
        return result

    def _resolve_txt(self, host: str, now: float) -> Resolution:
        try:
            records = self.txt_source.lookup_txt(host)
        except TxtLookupError as e:
            # Lookup failure is not evidence of IP-only status; keep the
            # verdict short-lived and carry the error for diagnostics.
            return Resolution(host=host, address=None, source=SOURCE_DNS,
                              resolved_at=now, ttl_s=FAILURE_TTL_S, error=str(e))
        for record in records:
            payload = record.text
            if not payload.startswith("scion="):
                continue
            try:
                address = parse_txt(payload)
            except ParseError as e:
                log.debug("ignoring malformed TXT payload for %s: %s", host, e)
                continue
            ttl = min(max(record.ttl_s, TXT_TTL_MIN_S), TXT_TTL_MAX_S)
            return Resolution(host=host, address=address, source=SOURCE_DNS,
                              resolved_at=now, ttl_s=ttl)
        return Resolution(host=host, address=None, source=SOURCE_DNS,
                          resolved_at=now, ttl_s=NEGATIVE_TTL_S)

    def record_header_hint(self, host: str, address: ScionAddress,
                           now: float | None = None) -> None:
        """Re-affirm capability learned from a header seen on a PAN channel."""
        host = _normalize_host(host)
        if now is None:
            now = self._clock.now()
        entry = Resolution(host=host, address=address, source=SOURCE_HEADER,
                           resolved_at=now, ttl_s=STATIC_TTL_S)
        with self._lock:
            self._cache[host] = entry

    def flush(self) -> None:
        with self._lock:
            self._cache.clear()


# --- Strict-mode obligations ----------------------------------------------

@dataclass(frozen=True)
class StrictEntry:
    host: str
    expires_at: float


def parse_max_age(value: str) -> int | None:
    """Extract max-age seconds from a Strict-SCION header value.

    Returns None when unparseable (callers ignore the header then).
    Directives after a ';' are ignored for forward compatibility.
    """
    directive = value.split(";", 1)[0].strip()
    name, sep, seconds = directive.partition("=")
    if not sep or name.strip().lower() != "max-age":
        return None
    seconds = seconds.strip().strip('"')
    if not (seconds.isascii() and seconds.isdigit()):
        return None
    return int(seconds)


class StrictStore:
    """Host-scoped strict-mode obligations with append/compact persistence.

    On-disk format: one ``<host> <expires_at_unix_seconds>`` line per
    entry. Upserts append; removals and loads compact (rewrite live
    entries only), so duplicate host lines can exist between compactions
    and the last one wins.
    """

    def __init__(self, path: str | os.PathLike | None = None,
                 clock: Clock | None = None):
        self.path = os.fspath(path) if path is not None else None
        self._clock = clock or SystemClock()
        self._entries: dict[str, StrictEntry] = {}
        self._lock = threading.Lock()
        if self.path is not None and os.path.exists(self.path):
            self._load()

    def _load(self) -> None:
        with open(self.path, encoding="utf-8") as f:
            for lineno, raw in enumerate(f, start=1):
                line = raw.strip()
                if not line:
                    continue
                parts = line.split()
                if len(parts) != 2:
                    log.warning("strict store %s:%d: malformed line skipped", self.path, lineno)
                    continue
                try:
                    expires_at = float(parts[1])
                except ValueError:
                    log.warning("strict store %s:%d: bad timestamp skipped", self.path, lineno)
                    continue
                host = _normalize_host(parts[0])
                self._entries[host] = StrictEntry(host=host, expires_at=expires_at)
        self._compact_locked()

    def _append_line(self, entry: StrictEntry) -> None:
        if self.path is None:
            return
        with open(self.path, "a", encoding="utf-8") as f:
            f.write(f"{entry.host} {entry.expires_at:.3f}\n")

    def _compact_locked(self) -> None:
        if self.path is None:
            return
        now = self._clock.now()
        live = [e for e in self._entries.values() if e.expires_at > now]
        tmp = self.path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as f:
            for e in sorted(live, key=lambda e: e.host):
                f.write(f"{e.host} {e.expires_at:.3f}\n")
        os.replace(tmp, self.path)

    def record_strict_header(self, host: str, header_value: str,
                             now: float | None = None) -> StrictEntry | None:
        """Apply one Strict-SCION header value received over a PAN channel.

        Returns the entry written, or None when the header cleared an
        entry or was unparseable.
        """
        host = _normalize_host(host)
        if now is None:
            now = self._clock.now()
        max_age = parse_max_age(header_value)
        if max_age is None:
            log.warning("ignoring unparseable Strict-SCION value %r from %s",
                        header_value, host)
            return None
        with self._lock:
            if max_age == 0:
                if self._entries.pop(host, None) is not None:
                    self._compact_locked()
                return None
            entry = StrictEntry(host=host, expires_at=now + max_age)
            self._entries[host] = entry
            self._append_line(entry)
            return entry

    def is_strict(self, host: str, now: float | None = None) -> bool:
        if now is None:
            now = self._clock.now()
        with self._lock:
            entry = self._entries.get(_normalize_host(host))
        return entry is not None and entry.expires_at > now

    def entry(self, host: str) -> StrictEntry | None:
        with self._lock:
            return self._entries.get(_normalize_host(host))

    def entries(self) -> list[StrictEntry]:
        with self._lock:
            return sorted(self._entries.values(), key=lambda e: e.host)

    def compact(self) -> None:
        with self._lock:
            now = self._clock.now()
            for host in [h for h, e in self._entries.items() if e.expires_at <= now]:
                del self._entries[host]
            self._compact_locked()
