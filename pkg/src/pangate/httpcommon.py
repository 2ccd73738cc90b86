"""Small HTTP plumbing shared by the proxy and the test origins."""

from __future__ import annotations

from email.message import Message

__all__ = ["HOP_BY_HOP", "end_to_end_headers", "parse_host_port"]

# RFC 9110/7230 connection-scoped headers; never forwarded.
HOP_BY_HOP = frozenset({
    "connection",
    "keep-alive",
    "proxy-authenticate",
    "proxy-authorization",
    "proxy-connection",
    "te",
    "trailer",
    "trailers",
    "transfer-encoding",
    "upgrade",
})


def end_to_end_headers(headers: Message) -> list[tuple[str, str]]:
    """Headers minus hop-by-hop ones, including those named by Connection."""
    drop = set(HOP_BY_HOP)
    for value in headers.get_all("Connection", []):
        for token in value.split(","):
            token = token.strip().lower()
            if token:
                drop.add(token)
    return [(k, v) for k, v in headers.items() if k.lower() not in drop]


def parse_host_port(netloc: str, default_port: int) -> tuple[str, int]:
    """Split an authority into (host, port); IPv6 hosts come bracketed."""
    if netloc.startswith("["):
        host, _, rest = netloc[1:].partition("]")
        if rest.startswith(":") and rest[1:].isdigit():
            return host, int(rest[1:])
        return host, default_port
    host, sep, port = netloc.rpartition(":")
    if sep and port.isdigit():
        return host, int(port)
    return netloc, default_port
