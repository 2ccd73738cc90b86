"""Forward HTTP proxy that routes by plan.

Accepts standard absolute-form requests and CONNECT tunnels, asks the
gateway for a plan per request, then relays over an emulated PAN channel,
falls back to direct legacy TCP, or synthesizes a 502 block.

Responses are annotated for the UI (loopback trust boundary, nothing is
stripped): ``X-PAN-Status: pan|legacy|blocked``, ``X-PAN-Compliant:
true|false``, ``X-PAN-Blocked: <reason>`` on synthesized blocks, and
``X-PAN-Path`` naming the hop sequence used. Page grouping comes from the
``X-PAN-Page`` request header when the UI injects one, else the Referer
host, else the target host.

``Strict-SCION`` response headers are honored only when the response
arrived over a PAN channel; a legacy-IP attacker must not be able to
force strict mode. Inside CONNECT tunnels the header is invisible (TLS),
a documented limitation.
"""

from __future__ import annotations

import dataclasses
import http.client
import logging
import socket
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import urlsplit

from .emu import EndpointDown, EmulationRefused, _copy_until_eof, relay
from .gateway import Gateway
from .httpcommon import end_to_end_headers, parse_host_port
from .plan import BLOCKED, PAN, RequestPlan
from .stats import Timing

__all__ = ["ProxyServer", "serve_proxy", "host_key", "page_id_for"]

log = logging.getLogger("pangate.proxy")

UPSTREAM_TIMEOUT_S = 10.0
IO_TIMEOUT_S = 30.0

STATUS_HEADER = "X-PAN-Status"
COMPLIANT_HEADER = "X-PAN-Compliant"
BLOCKED_HEADER = "X-PAN-Blocked"
PATH_HEADER = "X-PAN-Path"
PAGE_HEADER = "X-PAN-Page"
STRICT_HEADER = "Strict-SCION"


def host_key(hostname: str, port: int, scheme: str = "http") -> str:
    """Host identity for detection, policy, and strict scoping.

    The URL authority with default ports dropped: a hostname alone for
    80/443, ``host:port`` otherwise, so origins sharing an IP on
    different ports stay distinct.
    """
    hostname = hostname.lower().rstrip(".")
    default = 443 if scheme in ("https", "connect") else 80
    if port == default:
        return hostname
    return f"{hostname}:{port}"


def page_id_for(headers, target_host_key: str) -> str:
    explicit = headers.get(PAGE_HEADER)
    if explicit:
        return explicit.strip()
    referer = headers.get("Referer")
    if referer:
        parts = urlsplit(referer)
        if parts.hostname:
            return host_key(parts.hostname, parts.port or
                            (443 if parts.scheme == "https" else 80), parts.scheme)
    return target_host_key


class _ProxyHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "pan-gate/0.1"

    def log_message(self, fmt, *args):
        log.debug("%s %s", self.address_string(), fmt % args)

    @property
    def gateway(self) -> Gateway:
        return self.server.gateway

    # -- plumbing ----------------------------------------------------------

    def _refuse(self, status: int, message: str,
                extra: list[tuple[str, str]] | None = None) -> None:
        body = (message.rstrip("\n") + "\n").encode()
        self.send_response(status)
        self.send_header("Content-Type", "text/plain")
        for k, v in extra or []:
            self.send_header(k, v)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        try:
            self.wfile.write(body)
        except OSError:
            pass

    def _read_body(self) -> bytes | None:
        if "chunked" in (self.headers.get("Transfer-Encoding") or "").lower():
            raise _BadRequest("chunked request bodies are not supported")
        raw = self.headers.get("Content-Length")
        if raw is None:
            return None
        try:
            length = int(raw)
        except ValueError:
            raise _BadRequest(f"bad Content-Length {raw!r}") from None
        if length < 0:
            raise _BadRequest("negative Content-Length")
        return self.rfile.read(length)

    def _exchange(self, sock: socket.socket, authority: str, origin_path: str,
                  body: bytes | None):
        """Send this request over an established socket, return the parsed
        upstream response with its body fully read."""
        lines = [f"{self.command} {origin_path} HTTP/1.1"]
        lines.append(f"Host: {authority}")
        for k, v in end_to_end_headers(self.headers):
            if k.lower() in ("host", "content-length"):
                continue
            lines.append(f"{k}: {v}")
        if body is not None:
            lines.append(f"Content-Length: {len(body)}")
        lines.append("Connection: close")
        payload = ("\r\n".join(lines) + "\r\n\r\n").encode("latin-1")
        if body:
            payload += body
        sock.settimeout(IO_TIMEOUT_S)
        sock.sendall(payload)
        resp = http.client.HTTPResponse(sock, method=self.command)
        resp.begin()
        data = resp.read()
        return resp, data

    def _send_upstream_response(self, resp, data: bytes,
                                annotations: list[tuple[str, str]]) -> None:
        self.send_response_only(resp.status, resp.reason)
        for k, v in end_to_end_headers(resp.headers):
            if k.lower() in ("content-length",):
                continue
            self.send_header(k, v)
        for k, v in annotations:
            self.send_header(k, v)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        if self.command != "HEAD" and data:
            self.wfile.write(data)

    # -- request entry points ----------------------------------------------

    def _handle(self) -> None:
        try:
            url = urlsplit(self.path)
            if url.scheme != "http" or not url.hostname:
                self._refuse(400, "proxy requests must use absolute http:// form")
                return
            body = self._read_body()
        except _BadRequest as e:
            self._refuse(400, str(e))
            return
        except (BrokenPipeError, ConnectionResetError):
            return
        port = url.port or 80
        key = host_key(url.hostname, port, url.scheme)
        page_id = page_id_for(self.headers, key)
        plan = self.gateway.plan_request(key, page_id)
        origin_path = url.path or "/"
        if url.query:
            origin_path += "?" + url.query
        authority = url.netloc
        started = time.monotonic()
        try:
            if plan.decision == BLOCKED:
                self._send_block(plan, started)
            elif plan.decision == PAN:
                self._via_pan(plan, authority, origin_path, body,
                              url.hostname, port, started)
            else:
                self._via_legacy(plan, authority, origin_path, body,
                                 url.hostname, port, started)
        except (BrokenPipeError, ConnectionResetError):
            pass

    do_GET = do_HEAD = do_POST = do_PUT = do_DELETE = do_OPTIONS = do_PATCH = _handle

    def _send_block(self, plan: RequestPlan, started: float) -> None:
        # record first: a client that has the 502 must see it in reports
        elapsed = (time.monotonic() - started) * 1000.0
        self.gateway.record_outcome(plan, Timing(0.0, elapsed), 0)
        self._refuse(502, f"blocked by strict mode: {plan.reason}", extra=[
            (STATUS_HEADER, "blocked"),
            (COMPLIANT_HEADER, "true" if plan.policy_compliant else "false"),
            (BLOCKED_HEADER, plan.reason or "unknown"),
        ])

    def _annotations(self, plan: RequestPlan) -> list[tuple[str, str]]:
        notes = [
            (STATUS_HEADER, "pan" if plan.decision == PAN else "legacy"),
            (COMPLIANT_HEADER, "true" if plan.policy_compliant else "false"),
        ]
        if plan.path is not None:
            notes.append((PATH_HEADER, str(plan.path)))
        return notes

    def _via_pan(self, plan: RequestPlan, authority: str, origin_path: str,
                 body: bytes | None, url_host: str, url_port: int,
                 started: float) -> None:
        remote = plan.address
        if remote.port is None:
            remote = dataclasses.replace(remote, port=url_port)
        try:
            channel = self.gateway.transport.open_channel(plan.path, remote)
        except (EndpointDown, EmulationRefused) as e:
            self._pan_dial_failed(plan, e, authority, origin_path, body,
                                  url_host, url_port, started)
            return
        connect_ms = (time.monotonic() - started) * 1000.0
        try:
            resp, data = self._exchange(channel.sock, authority, origin_path, body)
            strict_value = resp.headers.get(STRICT_HEADER)
            if strict_value is not None:
                # Header received over a PAN channel: safe to trust.
                self.gateway.observe_strict_header(plan.host, strict_value, plan.address)
            self._send_upstream_response(resp, data, self._annotations(plan))
        except (OSError, http.client.HTTPException) as e:
            log.warning("PAN relay to %s failed: %s", authority, e)
            self._refuse(502, f"upstream error over PAN channel: {e}",
                         extra=[(STATUS_HEADER, "pan")])
            data = b""
        finally:
            channel.close()
        total_ms = (time.monotonic() - started) * 1000.0
        self.gateway.record_outcome(plan, Timing(connect_ms, total_ms), len(data))

    def _pan_dial_failed(self, plan, error, authority, origin_path, body,
                         url_host, url_port, started) -> None:
        """The plan said PAN but the channel could not be opened."""
        log.warning("PAN channel to %s failed: %s", plan.address, error)
        if plan.mode.strict:
            blocked = RequestPlan.blocked("endpoint-down", plan.mode, plan.host,
                                          plan.page_id, compliant=plan.policy_compliant)
            self._send_block(blocked, started)
            return
        fallback = RequestPlan.legacy(plan.mode, plan.host, plan.page_id,
                                      compliant=plan.policy_compliant)
        self._via_legacy(fallback, authority, origin_path, body,
                         url_host, url_port, started)

    def _via_legacy(self, plan: RequestPlan, authority: str, origin_path: str,
                    body: bytes | None, url_host: str, url_port: int,
                    started: float) -> None:
        try:
            sock = socket.create_connection((url_host, url_port),
                                            timeout=UPSTREAM_TIMEOUT_S)
        except TimeoutError:
            self._refuse(504, f"legacy connect to {authority} timed out")
            return
        except OSError as e:
            self._refuse(502, f"legacy connect to {authority} failed: {e}")
            return
        connect_ms = (time.monotonic() - started) * 1000.0
        try:
            resp, data = self._exchange(sock, authority, origin_path, body)
            # No Strict-SCION processing here: legacy responses are not
            # trusted to impose strict mode.
            self._send_upstream_response(resp, data, self._annotations(plan))
        except (OSError, http.client.HTTPException) as e:
            log.warning("legacy relay to %s failed: %s", authority, e)
            self._refuse(502, f"upstream error: {e}")
            data = b""
        finally:
            sock.close()
        total_ms = (time.monotonic() - started) * 1000.0
        self.gateway.record_outcome(plan, Timing(connect_ms, total_ms), len(data))

    # -- CONNECT tunnels ---------------------------------------------------

    def do_CONNECT(self) -> None:
        target = self.path.strip()
        try:
            hostname, port = parse_host_port(target, 443)
        except ValueError:
            hostname = ""
        # colons in an unbracketed host mean the authority never parsed
        if not hostname or (":" in hostname and not target.startswith("[")):
            self._refuse(400, f"bad CONNECT target {self.path!r}")
            return
        key = host_key(hostname, port, "connect")
        page_id = page_id_for(self.headers, key)
        plan = self.gateway.plan_request(key, page_id)
        started = time.monotonic()
        if plan.decision == BLOCKED:
            self._send_block(plan, started)
            return
        if plan.decision == PAN:
            self._tunnel_pan(plan, hostname, port, started)
        else:
            self._tunnel_legacy(plan, hostname, port, started)

    def _established(self) -> None:
        self.send_response_only(200, "Connection Established")
        self.end_headers()

    def _tunnel_pan(self, plan: RequestPlan, hostname: str, port: int,
                    started: float) -> None:
        remote = plan.address
        if remote.port is None:
            remote = dataclasses.replace(remote, port=port)
        try:
            channel = self.gateway.transport.open_channel(plan.path, remote)
        except (EndpointDown, EmulationRefused) as e:
            if plan.mode.strict:
                blocked = RequestPlan.blocked("endpoint-down", plan.mode, plan.host,
                                              plan.page_id, compliant=plan.policy_compliant)
                self._send_block(blocked, started)
            else:
                fallback = RequestPlan.legacy(plan.mode, plan.host, plan.page_id,
                                              compliant=plan.policy_compliant)
                log.warning("PAN tunnel to %s failed (%s); using legacy", plan.address, e)
                self._tunnel_legacy(fallback, hostname, port, started)
            return
        connect_ms = (time.monotonic() - started) * 1000.0
        self._established()
        summary = relay(channel, self.connection)
        channel.close()
        total_ms = (time.monotonic() - started) * 1000.0
        self.gateway.record_outcome(plan, Timing(connect_ms, total_ms),
                                    summary["from_remote"])
        self.close_connection = True

    def _tunnel_legacy(self, plan: RequestPlan, hostname: str, port: int,
                       started: float) -> None:
        try:
            upstream = socket.create_connection((hostname, port),
                                                timeout=UPSTREAM_TIMEOUT_S)
        except TimeoutError:
            self._refuse(504, f"legacy connect to {hostname}:{port} timed out")
            return
        except OSError as e:
            self._refuse(502, f"legacy connect to {hostname}:{port} failed: {e}")
            return
        connect_ms = (time.monotonic() - started) * 1000.0
        self._established()
        upstream.settimeout(None)
        moved = {}

        def pump_up():
            moved["up"], _ = _copy_until_eof(self.connection, upstream)

        up = threading.Thread(target=pump_up, name="tunnel-up", daemon=True)
        up.start()
        down, _ = _copy_until_eof(upstream, self.connection)
        up.join()
        upstream.close()
        total_ms = (time.monotonic() - started) * 1000.0
        self.gateway.record_outcome(plan, Timing(connect_ms, total_ms), down)
        self.close_connection = True


class _BadRequest(Exception):
    pass


class ProxyServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, listen: tuple[str, int], gateway: Gateway):
        super().__init__(listen, _ProxyHandler)
        self.gateway = gateway

    @property
    def port(self) -> int:
        return self.server_address[1]


def serve_proxy(listen: tuple[str, int], gateway: Gateway) -> ProxyServer:
    server = ProxyServer(listen, gateway)
    thread = threading.Thread(target=server.serve_forever,
                              name=f"proxy-{server.port}", daemon=True)
    thread.start()
    return server
