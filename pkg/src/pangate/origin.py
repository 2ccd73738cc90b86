"""Test origin infrastructure.

Two server personalities behind one config: a static file server rooted at
a fixture directory, and a reverse proxy that fronts an existing legacy
origin. Both can stamp every response with ``Strict-SCION: max-age=<s>``,
which is how an operator advertises the strict-mode obligation. The
max-age is runtime-mutable so lifecycle tests can re-arm or clear it.
"""

from __future__ import annotations

import argparse
import http.client
import logging
import mimetypes
import os
import posixpath
import ssl
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import urlsplit

from .core import DomainError, IsdAs, parse_isd_as
from .httpcommon import end_to_end_headers, parse_host_port

__all__ = ["OriginConfig", "OriginServer", "serve", "main"]

log = logging.getLogger("pangate.origin")

STRICT_HEADER = "Strict-SCION"


@dataclass
class OriginConfig:
    listen: tuple[str, int]
    root: str | None = None
    upstream: str | None = None
    strict_max_age_s: int | None = None
    as_identity: IsdAs | None = None
    tls_cert: str | None = None
    tls_key: str | None = None

    def __post_init__(self):
        if (self.root is None) == (self.upstream is None):
            raise DomainError("exactly one of root/upstream must be set")
        if self.strict_max_age_s is not None and self.strict_max_age_s < 0:
            raise DomainError("strict_max_age_s must be >= 0")
        if self.root is not None and not os.path.isdir(self.root):
            raise DomainError(f"root {self.root!r} is not a directory")
        if (self.tls_cert is None) != (self.tls_key is None):
            raise DomainError("TLS needs both cert and key")


class _OriginHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "pan-origin/0.1"

    def log_message(self, fmt, *args):  # route through logging, not stderr
        log.debug("%s %s", self.address_string(), fmt % args)

    def _finish(self, status: int, body: bytes, content_type: str | None = None,
                extra: list[tuple[str, str]] | None = None,
                send_body: bool = True) -> None:
        # record before writing so a client that saw the response sees the log
        self.server.log_access(self.command, self.path, status, len(body))
        self.send_response(status)
        if content_type:
            self.send_header("Content-Type", content_type)
        for k, v in extra or []:
            self.send_header(k, v)
        max_age = self.server.strict_max_age_s
        if max_age is not None:
            self.send_header(STRICT_HEADER, f"max-age={max_age}")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        if send_body and self.command != "HEAD":
            self.wfile.write(body)

    # -- static mode -------------------------------------------------------

    def _resolve_file(self) -> str | None:
        path = urlsplit(self.path).path
        clean = posixpath.normpath(path)
        if clean.startswith("..") or "/../" in clean:
            return None
        full = os.path.join(self.server.config.root, clean.lstrip("/"))
        if os.path.isdir(full):
            full = os.path.join(full, "index.html")
        return full if os.path.isfile(full) else None

    def _serve_static(self) -> None:
        if self.command not in ("GET", "HEAD"):
            self._finish(405, b"method not allowed\n", "text/plain")
            return
        full = self._resolve_file()
        if full is None:
            self._finish(404, b"not found\n", "text/plain")
            return
        with open(full, "rb") as f:
            body = f.read()
        ctype = mimetypes.guess_type(full)[0] or "application/octet-stream"
        self._finish(200, body, ctype)

    # -- reverse mode ------------------------------------------------------

    def _serve_reverse(self) -> None:
        up = urlsplit(self.server.config.upstream)
        host, port = parse_host_port(up.netloc, 443 if up.scheme == "https" else 80)
        conn_cls = (http.client.HTTPSConnection if up.scheme == "https"
                    else http.client.HTTPConnection)
        length = int(self.headers.get("Content-Length") or 0)
        body = self.rfile.read(length) if length else None
        target = up.path.rstrip("/") + self.path
        try:
            conn = conn_cls(host, port, timeout=10)
            conn.putrequest(self.command, target or "/", skip_host=True,
                            skip_accept_encoding=True)
            for k, v in end_to_end_headers(self.headers):
                if k.lower() == "host":
                    continue
                conn.putheader(k, v)
            conn.putheader("Host", up.netloc)
            if body is not None:
                conn.putheader("Content-Length", str(len(body)))
            conn.endheaders()
            if body:
                conn.send(body)
            resp = conn.getresponse()
            payload = resp.read()
            # Forward end-to-end headers unmodified; only Strict-SCION is
            # injected (by _finish), and only framing is recomputed.
            extra = [(k, v) for k, v in end_to_end_headers(resp.headers)
                     if k.lower() not in ("content-length", "content-type", STRICT_HEADER.lower())]
            self._finish(resp.status, payload, resp.headers.get("Content-Type"), extra)
            conn.close()
        except OSError as e:
            log.warning("upstream %s unreachable: %s", self.server.config.upstream, e)
            self._finish(502, b"upstream unreachable\n", "text/plain")

    def _dispatch(self) -> None:
        try:
            if self.server.config.root is not None:
                self._serve_static()
            else:
                self._serve_reverse()
        except (BrokenPipeError, ConnectionResetError):
            pass

    do_GET = do_HEAD = do_POST = do_PUT = do_DELETE = do_OPTIONS = _dispatch


class OriginServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, config: OriginConfig):
        super().__init__(config.listen, _OriginHandler)
        self.config = config
        self.strict_max_age_s = config.strict_max_age_s
        self.access_records: list[tuple[str, str, int, int]] = []
        self._access_lock = threading.Lock()
        if config.tls_cert:
            ctx = ssl.SSLContext(ssl.PROTOCOL_TLS_SERVER)
            ctx.load_cert_chain(config.tls_cert, config.tls_key)
            self.socket = ctx.wrap_socket(self.socket, server_side=True)

    def log_access(self, method: str, path: str, status: int, n_bytes: int) -> None:
        with self._access_lock:
            self.access_records.append((method, path, status, n_bytes))
        log.info("%s %s %d %d", method, path, status, n_bytes)

    @property
    def port(self) -> int:
        return self.server_address[1]


def serve(config: OriginConfig) -> OriginServer:
    """Bind and start serving in a background thread; caller owns shutdown."""
    server = OriginServer(config)
    thread = threading.Thread(target=server.serve_forever,
                              name=f"origin-{server.port}", daemon=True)
    thread.start()
    return server


def _parse_listen(text: str) -> tuple[str, int]:
    host, port = parse_host_port(text, 0)
    if port == 0:
        raise argparse.ArgumentTypeError(f"listen address {text!r} needs a port")
    return host, port


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="pan-origin",
        description="Static or reverse-proxy test origin that can advertise "
                    "a Strict-SCION obligation.")
    parser.add_argument("--listen", type=_parse_listen, required=True,
                        metavar="HOST:PORT")
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("--root", help="serve files from this directory")
    group.add_argument("--upstream", help="reverse-proxy to this origin URL")
    parser.add_argument("--strict-max-age", type=int, default=None, metavar="SECONDS",
                        help="attach Strict-SCION: max-age=<s> to every response")
    parser.add_argument("--as", dest="as_identity", type=parse_isd_as, default=None,
                        metavar="ISD-AS", help="AS identity this origin claims")
    args = parser.parse_args(argv)

    logging.basicConfig(level=os.environ.get("PAN_GATE_LOG", "INFO").upper(),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        config = OriginConfig(listen=args.listen, root=args.root,
                              upstream=args.upstream,
                              strict_max_age_s=args.strict_max_age,
                              as_identity=args.as_identity)
    except DomainError as e:
        parser.error(str(e))
    server = serve(config)
    log.info("origin listening on %s:%d (%s)", *server.server_address[:2],
             "static" if config.root else "reverse")
    try:
        threading.Event().wait()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
