"""Shared builders and client-side helpers for the test suite."""

from __future__ import annotations

import http.client
import json
import random
import socket
import threading
import time
from pathlib import Path
from string import Template

from pangate.core import IsdAs
from pangate.pathdb import Topology, load_topology

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def start_tcp_echo() -> tuple[int, callable]:
    """TCP echo that honors half-close: echoes until EOF, then FINs back.

    Returns (port, close).
    """
    lsock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    lsock.bind(("127.0.0.1", 0))
    lsock.listen(8)
    port = lsock.getsockname()[1]
    stop = threading.Event()

    def echo_one(conn):
        with conn:
            while True:
                try:
                    chunk = conn.recv(65536)
                except OSError:
                    return
                if not chunk:
                    try:
                        conn.shutdown(socket.SHUT_WR)
                    except OSError:
                        pass
                    return
                conn.sendall(chunk)

    def serve():
        while not stop.is_set():
            try:
                conn, _ = lsock.accept()
            except OSError:
                return
            threading.Thread(target=echo_one, args=(conn,), daemon=True).start()

    threading.Thread(target=serve, daemon=True).start()

    def close():
        stop.set()
        lsock.close()

    return port, close


def wait_until(pred, timeout: float = 5.0, interval: float = 0.01) -> bool:
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        if pred():
            return True
        time.sleep(interval)
    return pred()


def make_topology(local: str, ases: dict[str, dict] | list[str],
                  links: list[dict | tuple]) -> Topology:
    """Build a Topology through the real loader from terse literals.

    links entries are dicts or ("1-1", "2-2", latency_ms) tuples.
    """
    if isinstance(ases, list):
        ases = {a: {} for a in ases}
    link_objs = []
    for link in links:
        if isinstance(link, tuple):
            a, b, *rest = link
            obj = {"a": a, "b": b}
            if rest:
                obj["latency_ms"] = rest[0]
            link_objs.append(obj)
        else:
            link_objs.append(link)
    doc = {"local_as": local, "ases": ases, "links": link_objs}
    return load_topology(json.dumps(doc))


def random_graph(rng: random.Random, n_nodes: int,
                 edge_prob: float = 0.45) -> tuple[list[str], list[tuple[str, str]]]:
    """Random undirected graph over distinct ISD-AS ids."""
    ids: set[tuple[int, int]] = set()
    while len(ids) < n_nodes:
        ids.add((rng.randint(1, 4), rng.randint(1, 60)))
    nodes = [f"{isd}-{as_id}" for isd, as_id in sorted(ids)]
    edges = []
    for i in range(len(nodes)):
        for j in range(i + 1, len(nodes)):
            if rng.random() < edge_prob:
                edges.append((nodes[i], nodes[j]))
    return nodes, edges


def random_decorated_topology(rng: random.Random, n_nodes: int,
                              edge_prob: float = 0.45) -> Topology:
    nodes, edges = random_graph(rng, n_nodes, edge_prob)
    ases = {
        node: {
            "latency_ms": round(rng.uniform(0, 40), 1),
            "bandwidth_mbps": round(rng.uniform(50, 2000), 1),
            "mtu_bytes": rng.choice([1280, 1400, 1500, 9000]),
            "carbon_g_per_gb": round(rng.uniform(0, 120), 1),
        }
        for node in nodes
    }
    links = [
        {"a": a, "b": b,
         "latency_ms": round(rng.uniform(0, 80), 1),
         "bandwidth_mbps": round(rng.uniform(50, 2000), 1),
         "mtu_bytes": rng.choice([1280, 1400, 1500, 9000])}
        for a, b in edges
    ]
    return make_topology(nodes[0], ases, links)


def random_policy_text(rng: random.Random) -> str:
    """Random ACL + ordering program over ISDs 1..4, ASes 1..60."""
    lines = []
    for _ in range(rng.randint(0, 5)):
        action = rng.choice("+-")
        isd = rng.choice([0, rng.randint(1, 4)])
        as_id = rng.choice([0, 0, rng.randint(1, 60)])
        lines.append(f"{action} {isd}-{as_id}")
    lines.append(rng.choice(["+ 0-0", "- 0-0"]))
    metrics = ["latency", "bandwidth", "hops", "carbon", "mtu"]
    rng.shuffle(metrics)
    for metric in metrics[:rng.randint(0, 3)]:
        lines.append(f"order {metric} {rng.choice(['asc', 'desc'])}")
    return "\n".join(lines) + "\n"


def policy_text_to_oracle_acl(text: str) -> tuple[list, list]:
    """Parse policy text into the oracle's plain-tuple form.

    Deliberately minimal and separate from the package parser; mirrors
    the written grammar (and the implicit trailing allow-default).
    """
    acl = []
    orderings = []
    for raw in text.splitlines():
        line = raw.partition("#")[0].strip()
        if not line:
            continue
        tokens = line.split()
        if tokens[0] in "+-":
            isd, _, as_id = tokens[1].partition("-")
            acl.append((tokens[0] == "+", int(isd), int(as_id)))
        elif tokens[0] == "order":
            orderings.append((tokens[1], tokens[2]))
    if not acl or not (acl[-1][1] == 0 and acl[-1][2] == 0):
        acl.append((True, 0, 0))
    return acl, orderings


def materialize_page(src: Path, dest_dir: Path, **subs) -> Path:
    """Render one .tmpl fixture into dest_dir (other files copy verbatim)."""
    dest_dir.mkdir(parents=True, exist_ok=True)
    name = src.name
    text = src.read_text()
    if name.endswith(".tmpl"):
        name = name[: -len(".tmpl")]
        text = Template(text).substitute(**subs)
    target = dest_dir / name
    target.write_text(text)
    return target


# -- control API client ----------------------------------------------------

def api_request(addr: tuple[str, int], method: str, path: str,
                body: str | None = None) -> tuple[int, str]:
    conn = http.client.HTTPConnection(addr[0], addr[1], timeout=10)
    try:
        conn.request(method, path, body=body)
        resp = conn.getresponse()
        return resp.status, resp.read().decode()
    finally:
        conn.close()


def api_get_json(addr: tuple[str, int], path: str) -> dict:
    status, body = api_request(addr, "GET", path)
    assert status == 200, f"GET {path} -> {status}: {body}"
    return json.loads(body)


def hop_ids(path) -> tuple[str, ...]:
    return tuple(str(h.id) for h in path.hops)


def path_for(topology: Topology, *ids: str):
    """Decorated Path for an explicit hop sequence in a topology."""
    from pangate.pathdb import enumerate_paths
    from pangate.core import parse_isd_as

    src = parse_isd_as(ids[0])
    dst = parse_isd_as(ids[-1])
    for path in enumerate_paths(topology, src, dst, max_hops=len(ids), max_paths=10_000):
        if hop_ids(path) == ids:
            return path
    raise AssertionError(f"no path {ids} in topology")


def local_as(topology: Topology) -> IsdAs:
    return topology.local_as
