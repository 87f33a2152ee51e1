"""Baseline NoI generators: mesh (SIAM-style), folded torus (Kite-style)
and a seeded small-world surrogate (SWAP-style)."""
from __future__ import annotations

import random

from .noi_model import Kind, Topology, grid_nodes, make_links


def _check_dims(w: int, h: int, minimum: int, what: str) -> None:
    if w < minimum or h < minimum:
        raise ValueError(f"{what} needs width and height >= {minimum}, got {w}x{h}")


def mesh_pairs(w: int, h: int) -> list[tuple[int, int]]:
    pairs = []
    for y in range(h):
        for x in range(w):
            i = y * w + x
            if x + 1 < w:
                pairs.append((i, i + 1))
            if y + 1 < h:
                pairs.append((i, i + w))
    return pairs


def gen_mesh(w: int, h: int) -> Topology:
    _check_dims(w, h, 2, "mesh")
    nodes = grid_nodes(w, h)
    return Topology(Kind.MESH, w, h, nodes, make_links(nodes, mesh_pairs(w, h))).validate()


def folded_ring(n: int) -> list[int]:
    """Ring order of a folded torus line: evens ascending, odds descending.

    Consecutive entries are two grid steps apart except at the two folds.
    """
    return list(range(0, n, 2)) + list(range(n - 1 if n % 2 == 0 else n - 2, 0, -2))


def gen_kite(w: int, h: int, seed: int = 0) -> Topology:
    """Folded torus: every row and column is a ring of mostly length-2 links.

    The wiring is fully determined by the grid; ``seed`` is accepted so all
    generators share a call signature.
    """
    _check_dims(w, h, 4, "kite")
    del seed
    nodes = grid_nodes(w, h)
    pairs = []
    for y in range(h):
        ring = folded_ring(w)
        pairs += [(y * w + a, y * w + b) for a, b in zip(ring, ring[1:] + ring[:1])]
    for x in range(w):
        ring = folded_ring(h)
        pairs += [(a * w + x, b * w + x) for a, b in zip(ring, ring[1:] + ring[:1])]
    return Topology(Kind.KITE, w, h, nodes, make_links(nodes, pairs)).validate()


def _random_spanning_tree(w: int, h: int, rng: random.Random) -> list[tuple[int, int]]:
    edges = mesh_pairs(w, h)
    rng.shuffle(edges)
    parent = list(range(w * h))

    def find(u):
        while parent[u] != u:
            parent[u] = parent[parent[u]]
            u = parent[u]
        return u

    tree = []
    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
            tree.append((a, b))
    return tree


def gen_smallworld(
    w: int,
    h: int,
    seed: int = 0,
    long_link_budget: float = 0.3,
    max_hop: int = 5,
    decay: float = 2.0,
    max_ports: int = 3,
) -> Topology:
    """Random spanning tree plus distance-decaying shortcuts.

    ``long_link_budget`` is the number of shortcuts as a fraction of the
    mesh link count.  At least one shortcut spans ``max_hop - 1`` or more.
    """
    _check_dims(w, h, 4, "smallworld")
    if not 0 < long_link_budget <= 0.3:
        raise ValueError("long_link_budget must lie in (0, 0.3]")
    rng = random.Random(seed)
    nodes = grid_nodes(w, h)
    tree = _random_spanning_tree(w, h, rng)
    present = {(min(a, b), max(a, b)) for a, b in tree}
    degree = [0] * (w * h)
    for a, b in tree:
        degree[a] += 1
        degree[b] += 1

    candidates = []
    for a in range(w * h):
        for b in range(a + 1, w * h):
            d = abs(a % w - b % w) + abs(a // w - b // w)
            if d <= max_hop and (a, b) not in present:
                candidates.append((a, b, d))
    weights = [d ** -decay for _, _, d in candidates]
    want = max(1, round(long_link_budget * (2 * w * h - w - h)))

    added: list[tuple[int, int, int]] = []
    tries = 0
    while len(added) < want and tries < 50 * want:
        tries += 1
        a, b, d = rng.choices(candidates, weights)[0]
        if (a, b) in present or degree[a] >= max_ports or degree[b] >= max_ports:
            continue
        present.add((a, b))
        degree[a] += 1
        degree[b] += 1
        added.append((a, b, d))
    if not any(d >= max_hop - 1 for _, _, d in added):
        longs = [c for c in candidates if c[2] >= max_hop - 1 and (c[0], c[1]) not in present
                 and degree[c[0]] < max_ports and degree[c[1]] < max_ports]
        if longs:
            a, b, d = rng.choice(longs)
            present.add((a, b))
    return Topology(Kind.SMALLWORLD, w, h, nodes, make_links(nodes, present),
                    meta={"seed": seed, "long_link_budget": long_link_budget}).validate()


def generate(kind: str, w: int, h: int, seed: int = 0, **kw) -> Topology:
    kind = Kind(kind)
    if kind is Kind.MESH:
        return gen_mesh(w, h)
    if kind is Kind.KITE:
        return gen_kite(w, h, seed)
    if kind is Kind.SMALLWORLD:
        return gen_smallworld(w, h, seed, **kw)
    raise ValueError("use floret.synthesize_floret for floret topologies")
