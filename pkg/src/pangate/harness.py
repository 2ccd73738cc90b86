"""Page-load measurement harness.

Fetches a page the way a simple browser would: get the document, pull out
its subresource URLs, fetch each one, and report the wall-clock page load
time (PLT). Every request uses a fresh connection with
``Connection: close`` so per-request costs (handshakes, injected path
latency) are fully visible, which is what the latency experiments need.
"""

from __future__ import annotations

import http.client
import re
import socket
import statistics
import time
from urllib.parse import urljoin, urlsplit

from .httpcommon import parse_host_port

__all__ = [
    "fetch_via_proxy",
    "fetch_direct",
    "extract_resources",
    "load_page",
    "measure_plt",
]

_RESOURCE_RE = re.compile(
    r"""<(?:img|script)\b[^>]*?\bsrc\s*=\s*["']([^"']+)["']"""
    r"""|<link\b[^>]*?\bhref\s*=\s*["']([^"']+)["']""",
    re.IGNORECASE,
)


def extract_resources(html: str, base_url: str) -> list[str]:
    """Subresource URLs referenced by img/script src and link href."""
    found = []
    for m in _RESOURCE_RE.finditer(html):
        ref = m.group(1) or m.group(2)
        if ref:
            found.append(urljoin(base_url, ref))
    return found


def _request_over(sock: socket.socket, method: str, target: str, host: str,
                  headers: dict[str, str] | None) -> tuple[int, dict, bytes]:
    lines = [f"{method} {target} HTTP/1.1", f"Host: {host}", "Connection: close"]
    for k, v in (headers or {}).items():
        lines.append(f"{k}: {v}")
    sock.sendall(("\r\n".join(lines) + "\r\n\r\n").encode("latin-1"))
    resp = http.client.HTTPResponse(sock, method=method)
    resp.begin()
    body = resp.read()
    status = resp.status
    hdrs = dict(resp.headers.items())
    resp.close()
    return status, hdrs, body


def fetch_via_proxy(proxy: tuple[str, int], url: str,
                    headers: dict[str, str] | None = None,
                    timeout_s: float = 30.0) -> tuple[int, dict, bytes]:
    """One absolute-form GET through a forward proxy, fresh connection."""
    parts = urlsplit(url)
    with socket.create_connection(proxy, timeout=timeout_s) as sock:
        return _request_over(sock, "GET", url, parts.netloc, headers)


def fetch_direct(url: str, headers: dict[str, str] | None = None,
                 timeout_s: float = 30.0) -> tuple[int, dict, bytes]:
    """One origin-form GET straight to the origin, fresh connection."""
    parts = urlsplit(url)
    host, port = parse_host_port(parts.netloc, 443 if parts.scheme == "https" else 80)
    target = (parts.path or "/") + (f"?{parts.query}" if parts.query else "")
    with socket.create_connection((host, port), timeout=timeout_s) as sock:
        return _request_over(sock, "GET", target, parts.netloc, headers)


def load_page(fetch, url: str, headers: dict[str, str] | None = None) -> dict:
    """Fetch a document plus its subresources; returns timing and counts.

    ``fetch`` is fetch_via_proxy partially applied or fetch_direct; all
    fetches are sequential, as a single-connection browser would issue
    them.
    """
    started = time.monotonic()
    status, _, body = fetch(url, headers)
    resources = extract_resources(body.decode("utf-8", "replace"), url) if status == 200 else []
    statuses = [status]
    for resource in resources:
        r_status, _, _ = fetch(resource, headers)
        statuses.append(r_status)
    return {
        "plt_s": time.monotonic() - started,
        "requests": 1 + len(resources),
        "statuses": statuses,
    }


def measure_plt(fetch, url: str, trials: int,
                headers: dict[str, str] | None = None) -> dict:
    """Median PLT over n trials (plus the raw samples)."""
    samples = []
    requests = 0
    for _ in range(trials):
        result = load_page(fetch, url, headers)
        samples.append(result["plt_s"])
        requests = result["requests"]
    return {
        "median_plt_s": statistics.median(samples),
        "samples_s": samples,
        "requests_per_page": requests,
    }
