"""Emulated path-aware data plane.

A Channel is a reliable bidirectional byte stream to a destination whose
observable timing is derived from the selected path's metadata: opening
costs one emulated round trip, and every byte in each direction is
delayed by the path's one-way latency. Underneath it is plain local TCP;
the delay pumps sit between a socketpair end handed to the caller and the
real upstream socket.

Delays use real wall-clock sleeps on purpose: the rest of the gateway can
run on a logical test clock, but timing measurements over channels must
be physically real to mean anything.

Every channel appends an audit record to the transport; the records count
every relayed byte per direction, which lets geofencing tests assert "no
bytes ever crossed ISD k" from the transport alone.
"""

from __future__ import annotations

import queue
import random
import socket
import threading
import time
from dataclasses import dataclass, field

from .core import DomainError, Path
from .pathdb import Topology
from .resolver import ScionAddress

__all__ = [
    "EmulationRefused",
    "EndpointDown",
    "ChannelAudit",
    "Channel",
    "EmuTransport",
    "relay",
    "DEFAULT_TOLERANCE_MS",
]

DEFAULT_TOLERANCE_MS = 15.0
_CHUNK = 65536


class EmulationRefused(ConnectionError):
    """The emulation cannot carry this channel (AS not in the topology)."""


class EndpointDown(ConnectionError):
    """The destination endpoint did not accept the connection."""


@dataclass
class ChannelAudit:
    """Append-only accounting for one channel. Mutated under its lock."""

    path: str
    fingerprint_isds: frozenset[int]
    remote: str
    opened_at: float
    bytes_to_remote: int = 0
    bytes_from_remote: int = 0
    closed: bool = False
    abnormal: bool = False
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def as_dict(self) -> dict:
        with self.lock:
            return {
                "path": self.path,
                "isds": sorted(self.fingerprint_isds),
                "remote": self.remote,
                "opened_at": self.opened_at,
                "bytes_to_remote": self.bytes_to_remote,
                "bytes_from_remote": self.bytes_from_remote,
                "closed": self.closed,
                "abnormal": self.abnormal,
            }


class _TokenBucket:
    """Debt-model rate limiter: oversized chunks borrow and sleep off the debt."""

    def __init__(self, rate_bytes_s: float, burst_bytes: float):
        self.rate = max(rate_bytes_s, 1.0)
        self.burst = burst_bytes
        self.tokens = burst_bytes
        self.stamp = time.monotonic()
        self.lock = threading.Lock()

    def consume(self, n: int) -> None:
        with self.lock:
            now = time.monotonic()
            self.tokens = min(self.burst, self.tokens + (now - self.stamp) * self.rate)
            self.stamp = now
            self.tokens -= n
            debt = -self.tokens / self.rate if self.tokens < 0 else 0.0
        if debt > 0:
            time.sleep(debt)


class _DelayedPipe:
    """One direction of a channel: src -> fixed delay -> dst.

    Separate reader and writer threads around a queue so that a sustained
    stream sees each chunk delayed by the one-way latency from its own
    arrival time, instead of chunks serializing behind each other's
    sleeps.
    """

    def __init__(self, name: str, src: socket.socket, dst: socket.socket,
                 delay_s: float, on_bytes, bucket: _TokenBucket | None,
                 loss_rate: float, loss_penalty_s: float, rng: random.Random):
        self.name = name
        self.src = src
        self.dst = dst
        self.delay_s = delay_s
        self.on_bytes = on_bytes
        self.bucket = bucket
        self.loss_rate = loss_rate
        self.loss_penalty_s = loss_penalty_s
        self.rng = rng
        self.queue: queue.Queue = queue.Queue(maxsize=256)
        self.abnormal = False
        self.done = threading.Event()
        self._reader = threading.Thread(target=self._read_loop,
                                        name=f"emu-{name}-r", daemon=True)
        self._writer = threading.Thread(target=self._write_loop,
                                        name=f"emu-{name}-w", daemon=True)

    def start(self) -> None:
        self._reader.start()
        self._writer.start()

    def _read_loop(self) -> None:
        while True:
            try:
                chunk = self.src.recv(_CHUNK)
            except OSError:
                self.abnormal = True
                chunk = b""
            if not chunk:
                self.queue.put((None, b""))
                return
            self.on_bytes(len(chunk))
            deliver_at = time.monotonic() + self.delay_s
            if self.loss_rate > 0 and self.rng.random() < self.loss_rate:
                # A "lost" chunk is retransmitted below the reliable
                # stream: same data, one extra round trip of delay.
                deliver_at += self.loss_penalty_s
            self.queue.put((deliver_at, chunk))

    def _write_loop(self) -> None:
        while True:
            deliver_at, chunk = self.queue.get()
            if deliver_at is None:
                try:
                    self.dst.shutdown(socket.SHUT_WR)
                except OSError:
                    pass
                self.done.set()
                return
            lag = deliver_at - time.monotonic()
            if lag > 0:
                time.sleep(lag)
            if self.bucket is not None:
                self.bucket.consume(len(chunk))
            try:
                self.dst.sendall(chunk)
            except OSError:
                self.abnormal = True
                # Stop the feeding reader, then drain so it never blocks
                # on a full queue.
                try:
                    self.src.shutdown(socket.SHUT_RD)
                except OSError:
                    pass
                while True:
                    deliver_at, _ = self.queue.get()
                    if deliver_at is None:
                        self.done.set()
                        return


class Channel:
    """One open emulated stream. ``sock`` is the caller-facing end."""

    def __init__(self, path: Path, remote: ScionAddress, audit: ChannelAudit,
                 upstream: socket.socket, shaping: bool,
                 loss_rate: float, rng: random.Random):
        self.path = path
        self.remote = remote
        self.audit = audit
        self._upstream = upstream
        delay_s = path.meta.latency_ms / 1000.0
        penalty_s = 2.0 * delay_s
        self.sock, inner = socket.socketpair()
        bucket_out = bucket_in = None
        if shaping:
            rate = path.meta.bandwidth_mbps * 1e6 / 8.0
            bucket_out = _TokenBucket(rate, burst_bytes=max(rate * 0.05, 4 * _CHUNK))
            bucket_in = _TokenBucket(rate, burst_bytes=max(rate * 0.05, 4 * _CHUNK))
        self._out = _DelayedPipe("out", inner, upstream, delay_s,
                                 self._count_out, bucket_out, loss_rate, penalty_s, rng)
        self._in = _DelayedPipe("in", upstream, inner, delay_s,
                                self._count_in, bucket_in, loss_rate, penalty_s, rng)
        self._inner = inner
        self._closed = False
        self._close_lock = threading.Lock()
        self._out.start()
        self._in.start()

    def _count_out(self, n: int) -> None:
        with self.audit.lock:
            self.audit.bytes_to_remote += n

    def _count_in(self, n: int) -> None:
        with self.audit.lock:
            self.audit.bytes_from_remote += n

    def wait(self, timeout: float | None = None) -> bool:
        """Block until both directions drained (EOF or failure both ways)."""
        deadline = None if timeout is None else time.monotonic() + timeout
        for pipe in (self._out, self._in):
            remaining = None if deadline is None else max(0.0, deadline - time.monotonic())
            if not pipe.done.wait(remaining):
                return False
        return True

    def close(self) -> None:
        with self._close_lock:
            if self._closed:
                return
            self._closed = True
        for sock in (self.sock, self._inner, self._upstream):
            try:
                sock.close()
            except OSError:
                pass
        with self.audit.lock:
            self.audit.closed = True
            self.audit.abnormal = self.audit.abnormal or self._out.abnormal or self._in.abnormal

    def __enter__(self) -> "Channel":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


class EmuTransport:
    """Channel factory bound to one topology; keeps the audit log."""

    def __init__(self, topology: Topology, tolerance_ms: float = DEFAULT_TOLERANCE_MS,
                 shaping: bool = False, loss_rate: float = 0.0,
                 connect_timeout_s: float = 10.0, rng_seed: int | None = None):
        if not (0.0 <= loss_rate < 1.0):
            raise DomainError(f"loss rate {loss_rate} out of [0, 1)")
        self.topology = topology
        self.tolerance_ms = tolerance_ms
        self.shaping = shaping
        self.loss_rate = loss_rate
        self.connect_timeout_s = connect_timeout_s
        self._rng = random.Random(rng_seed)
        self.audit_log: list[ChannelAudit] = []
        self._audit_lock = threading.Lock()

    def open_channel(self, path: Path, remote: ScionAddress) -> Channel:
        """Dial the remote through the given path.

        Raises EmulationRefused when the topology cannot carry the channel
        and EndpointDown when the endpoint itself does not answer.
        """
        if remote.port is None:
            raise DomainError(f"remote {remote} has no port to dial")
        if remote.id not in self.topology.ases:
            raise EmulationRefused(f"AS {remote.id} is not part of the emulated topology")
        if path.hops[-1].id != remote.id:
            raise EmulationRefused(
                f"path ends at {path.hops[-1].id}, cannot deliver to {remote.id}")
        try:
            upstream = socket.create_connection((remote.host, remote.port),
                                                timeout=self.connect_timeout_s)
        except OSError as e:
            raise EndpointDown(f"{remote.host}:{remote.port}: {e}") from e
        upstream.settimeout(None)
        audit = ChannelAudit(
            path=str(path),
            fingerprint_isds=path.meta.isds,
            remote=f"{remote.host}:{remote.port}",
            opened_at=time.time(),
        )
        with self._audit_lock:
            self.audit_log.append(audit)
        # Establishment costs one emulated round trip before first use.
        time.sleep(2.0 * path.meta.latency_ms / 1000.0)
        return Channel(path, remote, audit, upstream,
                       shaping=self.shaping, loss_rate=self.loss_rate, rng=self._rng)

    def audit_snapshot(self) -> list[dict]:
        with self._audit_lock:
            audits = list(self.audit_log)
        return [a.as_dict() for a in audits]


def _copy_until_eof(src: socket.socket, dst: socket.socket) -> tuple[int, bool]:
    count = 0
    abnormal = False
    while True:
        try:
            chunk = src.recv(_CHUNK)
        except OSError:
            abnormal = True
            chunk = b""
        if not chunk:
            break
        try:
            dst.sendall(chunk)
        except OSError:
            abnormal = True
            break
        count += len(chunk)
    try:
        dst.shutdown(socket.SHUT_WR)
    except OSError:
        pass
    return count, abnormal


def relay(channel: Channel, client_sock: socket.socket) -> dict:
    """Full-duplex copy between a client socket and a channel until both
    directions reach EOF. Half-closes propagate; the summary reports bytes
    moved at this layer and whether either side ended abnormally."""
    result: dict = {}

    def pump_up():
        result["to_remote"], result["up_abnormal"] = _copy_until_eof(client_sock, channel.sock)

    up = threading.Thread(target=pump_up, name="relay-up", daemon=True)
    up.start()
    down, down_abnormal = _copy_until_eof(channel.sock, client_sock)
    up.join()
    return {
        "to_remote": result.get("to_remote", 0),
        "from_remote": down,
        "abnormal": bool(result.get("up_abnormal")) or down_abnormal,
    }
