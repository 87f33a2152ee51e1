"""Floret synthesis: split the chiplet grid into space-filling petals.

A layout is a cover of the grid by vertex-disjoint grid paths ("petals").
Each petal is walked head to tail; tails talk to foreign heads through a
small top-level network.  The quantity minimized is ``d``, the mean
Manhattan distance over all ordered (tail_i, head_j) pairs with i != j.

Two search modes are provided.  ``search_budget=None`` enumerates every
cover whose petal sizes match the target multiset (only practical for
grids of a few dozen chiplets).  An integer budget runs that many
annealing steps over covers, followed by :func:`optimize_headtails`.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence

from .noi_model import (
    GridCoord,
    Kind,
    Role,
    SfcLayout,
    Topology,
    check_layout,
    grid_nodes,
    make_links,
    manhattan,
)

TOP_LINK_REACH = 3
CENTRALITY_WEIGHT = 0.01
IMBALANCE_WEIGHT = 0.15


class SynthesisError(ValueError):
    pass


@dataclass(frozen=True)
class SfcObjective:
    num_petals: int
    total: int

    @property
    def p(self) -> int:
        return self.num_petals * (self.num_petals - 1)

    @property
    def d(self) -> Fraction:
        return Fraction(self.total, self.p)

    @property
    def d_unordered(self) -> Fraction:
        # Same sum read as unordered pairs normalized by C(k, 2).
        return Fraction(self.total, self.p // 2)


def _xy(c: int, width: int) -> tuple[int, int]:
    return c % width, c // width


def _dist(a: int, b: int, width: int) -> int:
    return abs(a % width - b % width) + abs(a // width - b // width)


def objective_total(heads: Sequence[int], tails: Sequence[int], width: int) -> int:
    total = 0
    for i, t in enumerate(tails):
        tx, ty = t % width, t // width
        for j, h in enumerate(heads):
            if i != j:
                total += abs(tx - h % width) + abs(ty - h // width)
    return total


def eval_objective(layout: SfcLayout, width: int) -> SfcObjective:
    if layout.num_petals < 2:
        raise SynthesisError("objective needs at least two petals")
    return SfcObjective(layout.num_petals, objective_total(layout.heads, layout.tails, width))


def balanced_sizes(n: int, k: int) -> list[int]:
    q, r = divmod(n, k)
    return [q + 1] * r + [q] * (k - r)


def default_num_petals(n: int) -> int:
    if 90 <= n <= 110:
        return 6
    return max(2, round(math.sqrt(n) / 1.7))


def _grid_neighbors(w: int, h: int) -> list[list[int]]:
    nb = []
    for c in range(w * h):
        x, y = c % w, c // w
        out = []
        for dx, dy in ((0, -1), (-1, 0), (1, 0), (0, 1)):
            X, Y = x + dx, y + dy
            if 0 <= X < w and 0 <= Y < h:
                out.append(Y * w + X)
        nb.append(sorted(out))
    return nb


def _centrality(cells: Iterable[int], w: int, h: int) -> int:
    """Sum of doubled Manhattan distances to the grid center (integer)."""
    cx, cy = w - 1, h - 1
    return sum(abs(2 * (c % w) - cx) + abs(2 * (c // w) - cy) for c in cells)


def serpentine(w: int, h: int) -> list[int]:
    order = []
    for y in range(h):
        row = [y * w + x for x in range(w)]
        order += row if y % 2 == 0 else row[::-1]
    return order


def cut(order: Sequence[int], sizes: Sequence[int]) -> list[list[int]]:
    out, k = [], 0
    for s in sizes:
        out.append(list(order[k:k + s]))
        k += s
    return out


# -- exhaustive search -------------------------------------------------------

def _path_catalog(w: int, h: int, sizes: set[int]) -> dict[int, list[tuple[int, ...]]]:
    """Undirected simple grid paths (stored with first < last) keyed by size."""
    nb = _grid_neighbors(w, h)
    top = max(sizes)
    found: dict[int, list[tuple[int, ...]]] = {s: [] for s in sizes}

    def grow(path, used):
        if len(path) in found and path[0] < path[-1]:
            found[len(path)].append(tuple(path))
        if len(path) == top:
            return
        for v in nb[path[-1]]:
            if not used >> v & 1:
                path.append(v)
                grow(path, used | 1 << v)
                path.pop()

    for s in range(w * h):
        grow([s], 1 << s)
    return found


def _best_orientation(paths, w, h):
    """Pick head/tail per petal minimizing (objective, head centrality)."""
    k = len(paths)
    best = None
    for mask in range(1 << k):
        heads = [p[-1] if mask >> i & 1 else p[0] for i, p in enumerate(paths)]
        tails = [p[0] if mask >> i & 1 else p[-1] for i, p in enumerate(paths)]
        key = (objective_total(heads, tails, w), _centrality(heads, w, h), mask)
        if best is None or key < best[0]:
            best = (key, mask)
    (total, cent, _), mask = best
    oriented = [tuple(reversed(p)) if mask >> i & 1 else tuple(p) for i, p in enumerate(paths)]
    return total, cent, oriented


def exhaustive_layout(w: int, h: int, sizes: Sequence[int]) -> list[tuple[int, ...]]:
    """Exact minimum-``d`` cover by enumerating every petal partition."""
    n = w * h
    target = sorted(sizes)
    catalog = _path_catalog(w, h, set(target))
    containing: dict[int, list[tuple[int, int, tuple[int, ...]]]] = {c: [] for c in range(n)}
    for s, paths in catalog.items():
        for p in paths:
            mask = 0
            for c in p:
                mask |= 1 << c
            containing[min(p)].append((mask, s, p))
    full = (1 << n) - 1
    remaining = {s: target.count(s) for s in set(target)}
    best: list = [None]

    def search(covered, chosen):
        if covered == full:
            total, cent, oriented = _best_orientation(chosen, w, h)
            key = (total, cent, tuple(sorted(oriented)))
            if best[0] is None or key < best[0][0]:
                best[0] = (key, oriented)
            return
        low = (~covered & (covered + 1)).bit_length() - 1
        # The lowest uncovered cell is the smallest id of the petal covering it.
        for mask, s, p in containing[low]:
            if remaining[s] and not mask & covered:
                remaining[s] -= 1
                chosen.append(p)
                search(covered | mask, chosen)
                chosen.pop()
                remaining[s] += 1

    search(0, [])
    if best[0] is None:
        raise SynthesisError(f"no petal partition of {w}x{h} with sizes {list(sizes)}")
    return list(best[0][1])


# -- annealing ---------------------------------------------------------------

class _Cover:
    """Mutable path cover with O(1) cell -> (petal, position) lookup."""

    def __init__(self, paths, w, h, target):
        self.w, self.h = w, h
        self.paths = [list(p) for p in paths]
        self.owner = [0] * (w * h)
        self.pos = [0] * (w * h)
        self.target = sorted(target)
        for i in range(len(self.paths)):
            self.reindex(i)

    def reindex(self, i):
        owner, pos = self.owner, self.pos
        for k, c in enumerate(self.paths[i]):
            owner[c] = i
            pos[c] = k

    def imbalance(self) -> int:
        return sum(abs(a - b) for a, b in zip(sorted(map(len, self.paths)), self.target)) // 2

    def energy(self) -> float:
        heads = [p[0] for p in self.paths]
        tails = [p[-1] for p in self.paths]
        k = len(self.paths)
        d = objective_total(heads, tails, self.w) / (k * (k - 1))
        cent = _centrality(heads, self.w, self.h) / (2 * k)
        return d + CENTRALITY_WEIGHT * cent + IMBALANCE_WEIGHT * self.imbalance()


def _propose(cov: _Cover, nb, rng: random.Random):
    """Apply one random move; return an undo record or None if no-op."""
    paths = cov.paths
    i = rng.randrange(len(paths))
    if rng.random() < 0.1:
        paths[i].reverse()
        cov.reindex(i)
        return [(i, None)]
    P = paths[i]
    at_head = rng.random() < 0.5
    c = P[0] if at_head else P[-1]
    v = rng.choice(nb[c])
    q = cov.owner[v]
    j = cov.pos[v]
    if q == i:
        if at_head:
            if j < 2:
                return None
            new = P[:j][::-1] + P[j:]
        else:
            if j > len(P) - 3:
                return None
            new = P[:j + 1] + P[j + 1:][::-1]
        undo = [(i, P)]
        paths[i] = new
        cov.reindex(i)
        return undo
    Q = paths[q]
    if len(P) <= 2 and rng.random() < 0.999:
        return None
    undo = [(i, P), (q, Q)]
    if j == 0 or j == len(Q) - 1:
        # Endpoint transfer: c leaves P and extends Q.
        if len(P) <= 2:
            return None
        newP = P[1:] if at_head else P[:-1]
        newQ = [c] + Q if j == 0 else Q + [c]
    else:
        # Splice: P absorbs one side of Q beyond v.
        if rng.random() < 0.5:
            piece, rest = Q[j:], Q[:j]
        else:
            piece, rest = Q[:j + 1][::-1], Q[j + 1:]
        if len(rest) < 2:
            return None
        newP = piece[::-1] + P if at_head else P + piece
        newQ = rest
    paths[i], paths[q] = newP, newQ
    cov.reindex(i)
    cov.reindex(q)
    return undo


def _undo(cov: _Cover, undo):
    for i, old in undo:
        if old is None:
            cov.paths[i].reverse()
        else:
            cov.paths[i] = old
        cov.reindex(i)


def anneal(paths, w, h, target, steps: int, rng: random.Random,
           t_start: float = 0.7, t_end: float = 0.05) -> list[list[int]]:
    """Simulated annealing over path covers; returns the best balanced cover."""
    nb = _grid_neighbors(w, h)
    cov = _Cover(paths, w, h, target)
    e = cov.energy()
    best_e = e if cov.imbalance() == 0 else math.inf
    best = [list(p) for p in cov.paths]
    for step in range(steps):
        temp = t_start * (t_end / t_start) ** (step / max(1, steps - 1))
        undo = _propose(cov, nb, rng)
        if undo is None:
            continue
        e2 = cov.energy()
        if e2 <= e or rng.random() < math.exp((e - e2) / temp):
            e = e2
            if e < best_e and cov.imbalance() == 0:
                best_e = e
                best = [list(p) for p in cov.paths]
        else:
            _undo(cov, undo)
    return best


# -- local head/tail refinement ------------------------------------------

def _layout_key(paths, w, h):
    heads = [p[0] for p in paths]
    tails = [p[-1] for p in paths]
    return objective_total(heads, tails, w), _centrality(heads, w, h)


def optimize_headtails(layout: SfcLayout, width: int, height: int, budget: int) -> SfcLayout:
    """Hill-climb on head/tail placement with each petal's cell set fixed.

    Moves: reverse a petal, or backbite one end so a different cell of the
    same region becomes the endpoint (re-anchoring the head).  Moves are
    scanned in a fixed order and the best strictly improving one is taken
    each round.  ``d`` never increases.  Petals are then ordered so the
    most central head comes first and each next petal starts nearest the
    previous tail.
    """
    paths = [list(p) for p in layout.petals]
    if budget <= 0:
        return layout
    nb = _grid_neighbors(width, height)
    key = _layout_key(paths, width, height)
    spent = 0
    improved = True
    while improved and spent < budget:
        improved = False
        best = None
        for i, P in enumerate(paths):
            pos = {c: k for k, c in enumerate(P)}
            cands = [P[::-1]]
            for v in nb[P[0]]:
                j = pos.get(v)
                if j is not None and j >= 2:
                    cands.append(P[:j][::-1] + P[j:])
            for v in nb[P[-1]]:
                j = pos.get(v)
                if j is not None and j <= len(P) - 3:
                    cands.append(P[:j + 1] + P[j + 1:][::-1])
            for cand in cands:
                spent += 1
                trial = paths[:i] + [cand] + paths[i + 1:]
                k2 = _layout_key(trial, width, height)
                if k2 < key and (best is None or k2 < best[0]):
                    best = (k2, i, cand)
                if spent >= budget:
                    break
            if spent >= budget:
                break
        if best is not None:
            key, i, cand = best
            paths[i] = cand
            improved = True
    return SfcLayout(tuple(tuple(p) for p in order_petals(paths, width, height)))


def order_petals(paths, w, h) -> list:
    """Most central head first, then chain each tail to the nearest unused head."""
    remaining = list(range(len(paths)))
    first = min(remaining, key=lambda i: (_centrality([paths[i][0]], w, h), paths[i][0]))
    order = [first]
    remaining.remove(first)
    while remaining:
        tail = paths[order[-1]][-1]
        nxt = min(remaining, key=lambda i: (_dist(tail, paths[i][0], w), paths[i][0]))
        order.append(nxt)
        remaining.remove(nxt)
    return [paths[i] for i in order]


# -- topology assembly -------------------------------------------------------

def top_level_links(petals, width: int, reach: int = TOP_LINK_REACH):
    heads = [p[0] for p in petals]
    links, relaxed = [], False
    for i, p in enumerate(petals):
        t = p[-1]
        near = [h for j, h in enumerate(heads) if j != i and _dist(t, h, width) <= reach]
        if not near and len(petals) > 1:
            relaxed = True
            near = [min((h for j, h in enumerate(heads) if j != i),
                        key=lambda h: (_dist(t, h, width), h))]
        links += [(t, h) for h in sorted(near)]

    # petals joined only within clusters: bridge clusters with the shortest
    # remaining tail->head links
    owner = list(range(len(petals)))

    def find(i):
        while owner[i] != i:
            owner[i] = owner[owner[i]]
            i = owner[i]
        return i

    petal_of = {p[0]: i for i, p in enumerate(petals)}
    petal_of.update({p[-1]: i for i, p in enumerate(petals)})
    for t, h in links:
        owner[find(petal_of[t])] = find(petal_of[h])
    bridges = sorted((_dist(p[-1], q[0], width), p[-1], q[0], i, j)
                     for i, p in enumerate(petals) for j, q in enumerate(petals) if i != j)
    for _, t, h, i, j in bridges:
        if find(i) != find(j):
            owner[find(i)] = find(j)
            links.append((t, h))
            relaxed = True
    return tuple(links), relaxed


def build_floret_topology(petals, width: int, height: int, meta: Optional[dict] = None) -> Topology:
    petals = tuple(tuple(p) for p in petals)
    top, relaxed = top_level_links(petals, width)
    layout = SfcLayout(petals, top, relaxed)
    check_layout(layout, width, height)
    roles = {p[0]: Role.SFC_HEAD for p in petals}
    roles.update({p[-1]: Role.SFC_TAIL for p in petals})
    nodes = grid_nodes(width, height, roles)
    pairs = [(a, b) for p in petals for a, b in zip(p, p[1:])] + list(top)
    meta = dict(meta or {})
    if len(petals) >= 2:
        obj = eval_objective(layout, width)
        meta.update(d=str(obj.d), d_unordered=str(obj.d_unordered), p=obj.p)
    meta.update(petal_sizes=[len(p) for p in petals], relaxed=relaxed)
    return Topology(Kind.FLORET, width, height, nodes, make_links(nodes, pairs), layout, meta).validate()


def _restart(args):
    w, h, sizes, steps, seed = args
    rng = random.Random(seed)
    paths = anneal(cut(serpentine(w, h), sizes), w, h, sizes, steps, rng)
    layout = optimize_headtails(SfcLayout(tuple(map(tuple, paths))), w, h, 10 * w * h)
    return _layout_key(layout.petals, w, h), layout.petals


def synthesize_floret(
    w: int,
    h: int,
    num_petals: Optional[int] = None,
    seed: int = 0,
    search_budget: Optional[int] = 4_800_000,
    sizes: Optional[Sequence[int]] = None,
    restarts: int = 32,
    workers: int = 1,
) -> Topology:
    """Synthesize a Floret topology.

    ``search_budget=None`` searches exhaustively.  Otherwise it is the total
    number of annealing steps, split evenly over ``restarts`` independent
    runs; the run with the lowest ``d`` wins (ties: more central heads,
    then earlier restart).  Results do not depend on ``workers``.
    """
    n = w * h
    k = default_num_petals(n) if num_petals is None else num_petals
    if k < 1:
        raise SynthesisError("need at least one petal")
    if n < 2 * k:
        raise SynthesisError(f"{k} petals need at least {2 * k} chiplets, grid has {n}")
    if sizes is None:
        sizes = balanced_sizes(n, k)
    elif len(sizes) != k or sum(sizes) != n or min(sizes) < 2:
        raise SynthesisError("explicit petal sizes must be k values >= 2 summing to w*h")

    if search_budget is None:
        paths = exhaustive_layout(w, h, sizes)
        petals = tuple(map(tuple, order_petals(paths, w, h)))
    else:
        restarts = max(1, restarts)
        steps = max(0, search_budget) // restarts
        jobs = [(w, h, list(sizes), steps, seed * 7919 + r) for r in range(restarts)]
        if workers > 1 and restarts > 1:
            from concurrent.futures import ProcessPoolExecutor
            with ProcessPoolExecutor(workers) as pool:
                results = list(pool.map(_restart, jobs))
        else:
            results = [_restart(j) for j in jobs]
        petals = min(enumerate(results), key=lambda r: (r[1][0], r[0]))[1][1]
    meta = {"seed": seed, "search_budget": search_budget, "num_petals": k}
    return build_floret_topology(petals, w, h, meta)
