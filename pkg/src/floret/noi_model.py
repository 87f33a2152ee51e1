"""Core data model for network-on-interposer topologies.

Chiplets sit on a ``width x height`` grid and are numbered row-major
(``id = y * width + x``).  A :class:`Topology` is an immutable bundle of
nodes, undirected links and, for Floret designs, the petal layout.
"""
from __future__ import annotations

import enum
import heapq
import json
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Optional

SCHEMA_VERSION = 1


class TopologyError(ValueError):
    """Raised when a topology violates a structural invariant."""


class Kind(str, enum.Enum):
    MESH = "mesh"
    KITE = "kite"
    SMALLWORLD = "smallworld"
    FLORET = "floret"


class Role(str, enum.Enum):
    PLAIN = "plain"
    SFC_HEAD = "sfc_head"
    SFC_TAIL = "sfc_tail"


@dataclass(frozen=True, order=True)
class GridCoord:
    x: int
    y: int


def manhattan(a: GridCoord, b: GridCoord) -> int:
    return abs(a.x - b.x) + abs(a.y - b.y)


@dataclass(frozen=True)
class ChipletNode:
    id: int
    coord: GridCoord
    role: Role = Role.PLAIN


@dataclass(frozen=True)
class Link:
    a: int
    b: int
    hop_length: int

    def key(self) -> tuple[int, int]:
        return (self.a, self.b) if self.a < self.b else (self.b, self.a)


@dataclass(frozen=True)
class SfcLayout:
    """Petals are ordered chiplet-id sequences, head first."""

    petals: tuple[tuple[int, ...], ...]
    top_links: tuple[tuple[int, int], ...] = ()
    relaxed: bool = False

    @property
    def heads(self) -> tuple[int, ...]:
        return tuple(p[0] for p in self.petals)

    @property
    def tails(self) -> tuple[int, ...]:
        return tuple(p[-1] for p in self.petals)

    @property
    def num_petals(self) -> int:
        return len(self.petals)

    def petal_of(self) -> dict[int, int]:
        return {c: i for i, p in enumerate(self.petals) for c in p}


@dataclass(frozen=True)
class Topology:
    kind: Kind
    width: int
    height: int
    nodes: tuple[ChipletNode, ...]
    links: tuple[Link, ...]
    sfc: Optional[SfcLayout] = None
    meta: dict = field(default_factory=dict, compare=False, hash=False)

    @property
    def n(self) -> int:
        return len(self.nodes)

    def coord(self, cid: int) -> GridCoord:
        return self.nodes[cid].coord

    @cached_property
    def adjacency(self) -> tuple[tuple[tuple[int, int], ...], ...]:
        """Per node, sorted ``(neighbor, hop_length)`` pairs."""
        adj: list[list[tuple[int, int]]] = [[] for _ in self.nodes]
        for ln in self.links:
            adj[ln.a].append((ln.b, ln.hop_length))
            adj[ln.b].append((ln.a, ln.hop_length))
        return tuple(tuple(sorted(x)) for x in adj)

    def degree(self, cid: int) -> int:
        return len(self.adjacency[cid])

    @cached_property
    def distances(self) -> tuple[tuple[int, ...], ...]:
        """All-pairs shortest path lengths, each link weighted by hop_length."""
        return tuple(tuple(_dijkstra(self.adjacency, s)) for s in range(self.n))

    def validate(self) -> "Topology":
        n = self.width * self.height
        if len(self.nodes) != n:
            raise TopologyError(f"expected {n} nodes, got {len(self.nodes)}")
        for i, node in enumerate(self.nodes):
            if node.id != i:
                raise TopologyError(f"node ids must be contiguous, found {node.id} at {i}")
            c = node.coord
            if not (0 <= c.x < self.width and 0 <= c.y < self.height):
                raise TopologyError(f"node {i} outside grid: {c}")
            if c.y * self.width + c.x != i:
                raise TopologyError(f"node {i} not row-major: {c}")
        seen = set()
        for ln in self.links:
            if ln.a == ln.b:
                raise TopologyError(f"self loop at {ln.a}")
            if not (0 <= ln.a < n and 0 <= ln.b < n):
                raise TopologyError(f"link endpoint out of range: {ln}")
            if ln.hop_length != manhattan(self.coord(ln.a), self.coord(ln.b)):
                raise TopologyError(f"hop_length mismatch on {ln}")
            if ln.key() in seen:
                raise TopologyError(f"duplicate link {ln.key()}")
            seen.add(ln.key())
        if not is_connected(self):
            raise TopologyError("topology is not connected")
        if (self.kind is Kind.FLORET) != (self.sfc is not None):
            raise TopologyError("sfc layout must be present iff kind is floret")
        if self.sfc is not None:
            check_layout(self.sfc, self.width, self.height)
        return self


def _dijkstra(adj, src: int) -> list[int]:
    inf = float("inf")
    dist = [inf] * len(adj)
    dist[src] = 0
    heap = [(0, src)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        for v, w in adj[u]:
            nd = d + w
            if nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


def grid_nodes(width: int, height: int, roles: Optional[dict[int, Role]] = None) -> tuple[ChipletNode, ...]:
    roles = roles or {}
    return tuple(
        ChipletNode(y * width + x, GridCoord(x, y), roles.get(y * width + x, Role.PLAIN))
        for y in range(height)
        for x in range(width)
    )


def make_links(nodes: tuple[ChipletNode, ...], pairs: Iterable[tuple[int, int]]) -> tuple[Link, ...]:
    """Build deduplicated links (sorted by endpoint pair) from id pairs."""
    keys = sorted({(min(a, b), max(a, b)) for a, b in pairs})
    return tuple(Link(a, b, manhattan(nodes[a].coord, nodes[b].coord)) for a, b in keys)


def is_connected(t: Topology) -> bool:
    if t.n == 0:
        return True
    seen = {0}
    stack = [0]
    while stack:
        u = stack.pop()
        for v, _ in t.adjacency[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return len(seen) == t.n


def router_port_histogram(t: Topology) -> dict[int, int]:
    """Inter-chiplet port count -> number of routers (local port excluded)."""
    return dict(sorted(Counter(len(a) for a in t.adjacency).items()))


def hop_distance(t: Topology, a: int, b: int) -> int:
    d = t.distances[a][b]
    if d == float("inf"):
        raise TopologyError(f"chiplet {b} unreachable from {a}")
    return d


def shortest_path(t: Topology, a: int, b: int) -> list[int]:
    """Deterministic shortest path; ties go to the lowest-id next hop."""
    dist = t.distances
    if dist[a][b] == float("inf"):
        raise TopologyError(f"chiplet {b} unreachable from {a}")
    path = [a]
    u = a
    while u != b:
        for v, w in t.adjacency[u]:
            if w + dist[v][b] == dist[u][b]:
                u = v
                break
        path.append(u)
    return path


def check_layout(layout: SfcLayout, width: int, height: int) -> None:
    """Raise TopologyError if the petal layout breaks any structural rule."""
    n = width * height

    def xy(c):
        return GridCoord(c % width, c // width)

    seen: set[int] = set()
    for i, petal in enumerate(layout.petals):
        if len(petal) < 2:
            raise TopologyError(f"petal {i} has fewer than two chiplets")
        for c in petal:
            if not 0 <= c < n:
                raise TopologyError(f"petal {i} references unknown chiplet {c}")
            if c in seen:
                raise TopologyError(f"chiplet {c} appears in more than one petal slot")
            seen.add(c)
        for u, v in zip(petal, petal[1:]):
            if manhattan(xy(u), xy(v)) != 1:
                raise TopologyError(f"petal {i} step {u}->{v} is not grid-adjacent")
    if len(seen) != n:
        raise TopologyError(f"petals cover {len(seen)} of {n} chiplets")
    owner = layout.petal_of()
    heads, tails = set(layout.heads), set(layout.tails)
    for t, h in layout.top_links:
        if t not in tails or h not in heads:
            raise TopologyError(f"top link {(t, h)} must join a tail to a head")
        if owner[t] == owner[h]:
            raise TopologyError(f"top link {(t, h)} stays within one petal")
        if manhattan(xy(t), xy(h)) > 3 and not layout.relaxed:
            raise TopologyError(f"top link {(t, h)} longer than 3 hops in a strict layout")
    linked = {t for t, _ in layout.top_links}
    if len(layout.petals) > 1 and linked != tails:
        raise TopologyError("every tail needs at least one top link")


# -- serialization ---------------------------------------------------------

def topology_to_dict(t: Topology) -> dict:
    d = {
        "schema_version": SCHEMA_VERSION,
        "kind": t.kind.value,
        "width": t.width,
        "height": t.height,
        "nodes": [[n.id, n.coord.x, n.coord.y, n.role.value] for n in t.nodes],
        "links": [[ln.a, ln.b, ln.hop_length] for ln in t.links],
        "sfc": None,
        "meta": t.meta,
    }
    if t.sfc is not None:
        d["sfc"] = {
            "petals": [list(p) for p in t.sfc.petals],
            "heads": list(t.sfc.heads),
            "tails": list(t.sfc.tails),
            "top_links": [list(x) for x in t.sfc.top_links],
            "relaxed": t.sfc.relaxed,
        }
    return d


def topology_from_dict(d: dict) -> Topology:
    version = d.get("schema_version")
    if version != SCHEMA_VERSION:
        raise TopologyError(f"unsupported topology schema_version {version!r}")
    nodes = tuple(ChipletNode(i, GridCoord(x, y), Role(r)) for i, x, y, r in d["nodes"])
    links = tuple(Link(a, b, h) for a, b, h in d["links"])
    sfc = None
    if d.get("sfc") is not None:
        s = d["sfc"]
        sfc = SfcLayout(
            petals=tuple(tuple(p) for p in s["petals"]),
            top_links=tuple((a, b) for a, b in s["top_links"]),
            relaxed=bool(s.get("relaxed", False)),
        )
        if list(sfc.heads) != s["heads"] or list(sfc.tails) != s["tails"]:
            raise TopologyError("heads/tails disagree with petal endpoints")
    t = Topology(Kind(d["kind"]), d["width"], d["height"], nodes, links, sfc, dict(d.get("meta", {})))
    return t.validate()


def save_topology(t: Topology, path) -> None:
    Path(path).write_text(json.dumps(topology_to_dict(t), indent=1, sort_keys=True) + "\n")


def load_topology(path) -> Topology:
    return topology_from_dict(json.loads(Path(path).read_text()))
