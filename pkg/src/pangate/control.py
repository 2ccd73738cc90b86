"""Loopback control API and dashboard host.

The UI (and curl) steer the gateway through this server: read/replace the
policy text, toggle modes, watch page coverage, inspect candidate paths
and stats. `GET /` serves the built dashboard assets when configured.

Only loopback peers are accepted. Mutations are PUT-only on purpose:
browsers preflight cross-origin PUTs, and this server answers no CORS
preflight, so a hostile web page running in the local browser cannot
rewrite the policy; the dashboard works because it is served from this
same origin.
"""

from __future__ import annotations

import ipaddress
import json
import logging
import mimetypes
import os
import posixpath
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlsplit

from .core import DomainError, ParseError
from .gateway import Gateway

__all__ = ["ControlServer", "serve_control"]

log = logging.getLogger("pangate.control")

MAX_BODY = 1 << 20


class _ControlHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "pan-gate-control/0.1"

    def log_message(self, fmt, *args):
        log.debug("%s %s", self.address_string(), fmt % args)

    @property
    def gateway(self) -> Gateway:
        return self.server.gateway

    def _reply(self, status: int, body: bytes, content_type: str) -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Cache-Control", "no-store")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        if self.command != "HEAD":
            try:
                self.wfile.write(body)
            except OSError:
                pass

    def _json(self, payload, status: int = 200) -> None:
        self._reply(status, json.dumps(payload, indent=2).encode() + b"\n",
                    "application/json")

    def _text(self, text: str, status: int = 200) -> None:
        self._reply(status, text.encode(), "text/plain; charset=utf-8")

    def _loopback_only(self) -> bool:
        try:
            peer = ipaddress.ip_address(self.client_address[0])
        except ValueError:
            peer = None
        if peer is None or not peer.is_loopback:
            self._text("control API is loopback-only\n", status=403)
            return False
        return True

    def _read_body(self) -> str | None:
        raw = self.headers.get("Content-Length")
        try:
            length = int(raw or 0)
        except ValueError:
            self._text("bad Content-Length\n", status=400)
            return None
        if length > MAX_BODY:
            self._text("body too large\n", status=413)
            return None
        return self.rfile.read(length).decode("utf-8", "replace")

    # -- HTTP methods ------------------------------------------------------

    def do_GET(self) -> None:
        if not self._loopback_only():
            return
        url = urlsplit(self.path)
        query = parse_qs(url.query)
        route = url.path.rstrip("/") or "/"
        try:
            if route == "/api/policy":
                self._text(self.gateway.policy_text())
            elif route == "/api/mode":
                host = query.get("host", [None])[0]
                self._json(self.gateway.mode_info(host))
            elif route == "/api/status":
                page = query.get("page", [None])[0]
                if not page:
                    self._text("missing ?page=<id>\n", status=400)
                    return
                self._json(self.gateway.classify_page(page).as_dict())
            elif route == "/api/pages":
                self._json({"pages": self.gateway.pages.pages()})
            elif route == "/api/stats":
                self._json(self.gateway.stats.snapshot())
            elif route == "/api/paths":
                host = query.get("host", [None])[0]
                if not host:
                    self._text("missing ?host=<name>\n", status=400)
                    return
                self._json(self.gateway.paths_report(host))
            elif route.startswith("/api/"):
                self._text("unknown API route\n", status=404)
            else:
                self._serve_asset(url.path)
        except (BrokenPipeError, ConnectionResetError):
            pass
        except Exception:
            log.exception("control GET %s failed", self.path)
            self._text("internal error\n", status=500)

    do_HEAD = do_GET

    def do_PUT(self) -> None:
        if not self._loopback_only():
            return
        url = urlsplit(self.path)
        query = parse_qs(url.query)
        route = url.path.rstrip("/")
        body = self._read_body()
        if body is None:
            return
        try:
            if route == "/api/policy":
                self.gateway.set_policy(body)
                self._json({"ok": True})
            elif route == "/api/mode":
                host = query.get("host", [None])[0]
                value = body.strip().lower()
                self.gateway.set_mode(value, host)
                self._json({"ok": True, "mode": self.gateway.mode_info(host)})
            else:
                self._text("unknown API route\n", status=404)
        except ParseError as e:
            self._text(f"policy rejected: {e}\n", status=422)
        except DomainError as e:
            self._text(f"{e}\n", status=400)
        except (BrokenPipeError, ConnectionResetError):
            pass
        except Exception:
            log.exception("control PUT %s failed", self.path)
            self._text("internal error\n", status=500)

    # -- dashboard assets --------------------------------------------------

    def _serve_asset(self, path: str) -> None:
        ui_dir = self.server.ui_dir
        if ui_dir is None:
            self._json({
                "service": "pan-gate control API",
                "endpoints": [
                    "GET /api/policy", "PUT /api/policy",
                    "GET /api/mode[?host=]", "PUT /api/mode[?host=]",
                    "GET /api/status?page=<id>", "GET /api/pages",
                    "GET /api/stats", "GET /api/paths?host=<name>",
                ],
                "ui": "not configured (start with --ui-dir <frontend/dist>)",
            })
            return
        clean = posixpath.normpath(path)
        if clean.startswith(".."):
            self._text("not found\n", status=404)
            return
        full = os.path.join(ui_dir, clean.lstrip("/"))
        if os.path.isdir(full):
            full = os.path.join(full, "index.html")
        if not os.path.isfile(full):
            self._text("not found\n", status=404)
            return
        with open(full, "rb") as f:
            body = f.read()
        ctype = mimetypes.guess_type(full)[0] or "application/octet-stream"
        self._reply(200, body, ctype)


class ControlServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, listen: tuple[str, int], gateway: Gateway,
                 ui_dir: str | None = None):
        super().__init__(listen, _ControlHandler)
        self.gateway = gateway
        self.ui_dir = ui_dir

    @property
    def port(self) -> int:
        return self.server_address[1]


def serve_control(listen: tuple[str, int], gateway: Gateway,
                  ui_dir: str | None = None) -> ControlServer:
    server = ControlServer(listen, gateway, ui_dir=ui_dir)
    thread = threading.Thread(target=server.serve_forever,
                              name=f"control-{server.port}", daemon=True)
    thread.start()
    return server
