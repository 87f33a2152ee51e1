"""Layer-to-chiplet mapping with a FIFO task queue.

Every task in a queue is mapped one at a time, in order.  A task holds its
chiplets for a fixed number of ticks and then releases them.  The head of
the queue blocks everything behind it (no overtaking), which keeps the
procedure free of cyclic waits.

Two placers are provided:

* ``floret``: walk the space-filling curve.  Chiplets are taken as
  consecutive free runs along a petal, head to tail.  When a run ends the
  walk jumps to the start of the nearest free run (Manhattan distance from
  the last chiplet, ties to the lowest petal index) and a spillover is
  recorded.
* ``greedy``: start at the lowest-id free chiplet, then repeatedly take the
  free chiplet at minimum hop distance from the previous one (ties to the
  lowest id).  If that chiplet is more than ``max_gap`` away the placement
  fails and the task waits, unless the system is idle.
"""
from __future__ import annotations

import enum
import heapq
import random
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .noi_model import Kind, Topology
from .workloads import DnnModel, TaskQueue

DEFAULT_CAPACITY = 4_000_000
DEFAULT_DURATION = 100
DEFAULT_MAX_GAP = 4


class MappingError(RuntimeError):
    pass


@dataclass(frozen=True)
class ChipletCapacity:
    weights_per_chiplet: int = DEFAULT_CAPACITY

    def __post_init__(self):
        if self.weights_per_chiplet <= 0:
            raise ValueError("weights_per_chiplet must be positive")


@dataclass(frozen=True)
class LayerPacking:
    """Per-layer task-local chiplet slots (0..num_chiplets-1)."""

    slots: tuple[tuple[int, ...], ...]
    slot_weights: tuple[int, ...]

    @property
    def num_chiplets(self) -> int:
        return len(self.slot_weights)

    @property
    def counts(self) -> tuple[int, ...]:
        return tuple(len(s) for s in self.slots)


def chiplets_needed(m: DnnModel, cap: ChipletCapacity = ChipletCapacity()) -> LayerPacking:
    """Pack a model's weights into chiplet slots.

    Layers larger than the capacity get ``ceil(params / cap)`` dedicated
    slots.  Smaller layers share the current slot while it has room and are
    never split.  Weight-free layers (activations, pooling, additions
    without projections) run on the slot of the layer before them.
    """
    c = cap.weights_per_chiplet
    slots: list[tuple[int, ...]] = []
    weights: list[int] = []
    open_slot: Optional[int] = None
    for layer in m.layers:
        p = layer.params
        if p == 0:
            if not weights:
                weights.append(0)
                open_slot = 0
            slots.append((slots[-1][-1],) if slots else (0,))
        elif p > c:
            k = -(-p // c)
            first = len(weights)
            weights += [c] * (k - 1) + [p - c * (k - 1)]
            slots.append(tuple(range(first, first + k)))
            open_slot = None
        else:
            if open_slot is None or weights[open_slot] + p > c:
                weights.append(0)
                open_slot = len(weights) - 1
            weights[open_slot] += p
            slots.append((open_slot,))
    return LayerPacking(tuple(slots), tuple(weights))


class EventKind(str, enum.Enum):
    ASSIGN = "assign"
    RELEASE = "release"


@dataclass(frozen=True)
class ScheduleEvent:
    time: int
    kind: EventKind
    task: int
    chiplets: tuple[int, ...]


@dataclass(frozen=True)
class MappingPlan:
    task: int
    model: str
    chiplets: tuple[int, ...]  # slot i -> chiplet id
    layers: tuple[tuple[int, ...], ...]  # layer -> chiplet ids
    spillovers: tuple[tuple[int, int], ...]
    start: int
    end: int
    slot_weights: tuple[int, ...] = ()


@dataclass
class MappingResult:
    strategy: str
    num_chiplets: int
    plans: list[MappingPlan]
    events: list[ScheduleEvent]
    makespan: int
    fragmentation: int = 0  # free chiplet-ticks while the head task waited despite enough free chiplets
    blocked_ticks: int = 0
    watchdog_triggers: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def utilization(self) -> float:
        return utilization(self.plans, self.num_chiplets)

    def packing(self) -> dict[int, list[tuple[int, int]]]:
        """chiplet -> [(task, layer)] residents over the whole run."""
        out: dict[int, list[tuple[int, int]]] = defaultdict(list)
        for p in self.plans:
            for li, cs in enumerate(p.layers):
                for c in cs:
                    out[c].append((p.task, li))
        return dict(out)


def utilization(plans: Sequence[MappingPlan], num_chiplets: int) -> float:
    """Occupied chiplet-ticks over available chiplet-ticks up to the makespan."""
    if not plans:
        return 0.0
    horizon = max(p.end for p in plans) - min(p.start for p in plans)
    if horizon <= 0:
        return 0.0
    busy = sum(len(p.chiplets) * (p.end - p.start) for p in plans)
    return busy / (num_chiplets * horizon)


# -- placers -----------------------------------------------------------------

Placement = tuple[list[int], list[tuple[int, int]]]


class FloretPlacer:
    def __init__(self, topo: Topology):
        if topo.sfc is None:
            raise MappingError("floret mapping needs a topology with a petal layout")
        self.topo = topo
        self.petals = topo.sfc.petals
        self.where = {c: (i, j) for i, p in enumerate(self.petals) for j, c in enumerate(p)}
        self.cursor = 0  # petal where the next task starts

    def _runs(self, free: set[int]) -> list[tuple[int, int]]:
        """(petal, position) of the first chiplet of every maximal free run."""
        starts = []
        for i, p in enumerate(self.petals):
            for j, c in enumerate(p):
                if c in free and (j == 0 or p[j - 1] not in free):
                    starts.append((i, j))
        return starts

    def place(self, need: int, free: set[int], idle: bool) -> Optional[Placement]:
        if need > len(free):
            return None
        free = set(free)
        chosen: list[int] = []
        spills: list[tuple[int, int]] = []
        petal = self.cursor
        pos = next((j for j, c in enumerate(self.petals[petal]) if c in free), None)
        while len(chosen) < need:
            if pos is None or pos >= len(self.petals[petal]) or self.petals[petal][pos] not in free:
                last = self.topo.coord(chosen[-1]) if chosen else self.topo.coord(self.petals[petal][0])
                best = None
                for i, j in self._runs(free):
                    cc = self.topo.coord(self.petals[i][j])
                    key = (abs(cc.x - last.x) + abs(cc.y - last.y), i, j)
                    if best is None or key < best:
                        best = key
                _, i, j = best
                if chosen:
                    spills.append((petal, i))
                petal, pos = i, j
            c = self.petals[petal][pos]
            chosen.append(c)
            free.discard(c)
            pos += 1
        self.cursor = self.where[chosen[-1]][0]
        return chosen, spills


class GreedyPlacer:
    def __init__(self, topo: Topology, max_gap: Optional[int] = DEFAULT_MAX_GAP):
        self.topo = topo
        self.max_gap = max_gap
        self.dist = topo.distances

    def place(self, need: int, free: set[int], idle: bool) -> Optional[Placement]:
        if need > len(free):
            return None
        free = set(free)
        cur = min(free)
        chosen = [cur]
        free.discard(cur)
        limit = None if idle else self.max_gap
        while len(chosen) < need:
            row = self.dist[cur]
            nxt = min(free, key=lambda c: (row[c], c))
            if limit is not None and row[nxt] > limit:
                return None
            chosen.append(nxt)
            free.discard(nxt)
            cur = nxt
        return chosen, []


def make_placer(topo: Topology, strategy: Optional[str] = None, max_gap: Optional[int] = DEFAULT_MAX_GAP):
    strategy = strategy or ("floret" if topo.kind is Kind.FLORET else "greedy")
    if strategy == "floret":
        return strategy, FloretPlacer(topo)
    if strategy == "greedy":
        return strategy, GreedyPlacer(topo, max_gap)
    raise ValueError(f"unknown mapping strategy {strategy!r}")


# -- queue simulation --------------------------------------------------------

def task_durations(n: int, duration_per_batch: int = DEFAULT_DURATION, batches: int = 1) -> list[int]:
    return [duration_per_batch * batches] * n


def shuffled_durations(n: int, seed: int, duration_per_batch: int = DEFAULT_DURATION, spread: int = 4) -> list[int]:
    """Durations of 1..spread batches, dealt out in a seeded random order."""
    durations = [duration_per_batch * (1 + i % spread) for i in range(n)]
    random.Random(seed).shuffle(durations)
    return durations


def map_queue(
    queue: TaskQueue,
    models: Mapping[str, DnnModel],
    topo: Topology,
    cap: ChipletCapacity = ChipletCapacity(),
    strategy: Optional[str] = None,
    durations: Optional[Sequence[int]] = None,
    max_gap: Optional[int] = DEFAULT_MAX_GAP,
    max_iterations: int = 1_000_000,
) -> MappingResult:
    """Map a whole queue.  ``strategy`` defaults by topology kind."""
    strategy, placer = make_placer(topo, strategy, max_gap)
    names = queue.tasks
    packs = {m: chiplets_needed(models[m], cap) for m in set(names)}
    for m, pk in packs.items():
        if pk.num_chiplets > topo.n:
            raise MappingError(f"{m} needs {pk.num_chiplets} chiplets, system has {topo.n}")
    if durations is None:
        durations = task_durations(len(names))
    if len(durations) != len(names) or min(durations, default=1) <= 0:
        raise ValueError("need one positive duration per task")

    free = set(range(topo.n))
    running: list[tuple[int, int, tuple[int, ...]]] = []  # (end, task, chiplets)
    plans: list[MappingPlan] = []
    events: list[ScheduleEvent] = []
    t = k = 0
    frag = blocked = triggers = 0
    iterations = 0
    while k < len(names) or running:
        iterations += 1
        if iterations > max_iterations:
            raise MappingError("mapping watchdog: no termination within iteration bound")
        while k < len(names):
            pk = packs[names[k]]
            got = placer.place(pk.num_chiplets, free, idle=not running)
            if got is None:
                break
            chiplets, spills = got
            free.difference_update(chiplets)
            end = t + durations[k]
            layers = tuple(tuple(chiplets[s] for s in slots) for slots in pk.slots)
            plans.append(MappingPlan(k, names[k], tuple(chiplets), layers, tuple(spills), t, end, pk.slot_weights))
            events.append(ScheduleEvent(t, EventKind.ASSIGN, k, tuple(chiplets)))
            heapq.heappush(running, (end, k, tuple(chiplets)))
            k += 1
        if not running:
            if k < len(names):
                triggers += 1
                raise MappingError(f"task {k} cannot be placed on an idle system")
            break
        t_next = running[0][0]
        if k < len(names):
            blocked += t_next - t
            if len(free) >= packs[names[k]].num_chiplets:
                frag += len(free) * (t_next - t)
        t = t_next
        while running and running[0][0] == t:
            _, task, chiplets = heapq.heappop(running)
            free.update(chiplets)
            events.append(ScheduleEvent(t, EventKind.RELEASE, task, chiplets))
    makespan = max((p.end for p in plans), default=0)
    return MappingResult(strategy, topo.n, plans, events, makespan, frag, blocked, triggers,
                         meta={"capacity": cap.weights_per_chiplet, "queue": queue.name,
                               "topology": topo.kind.value})


def check_schedule(result: MappingResult, cap: ChipletCapacity = ChipletCapacity()) -> None:
    """Raise MappingError if any chiplet is double-booked or over capacity."""
    owner: dict[int, int] = {}
    for ev in sorted(result.events, key=lambda e: (e.time, e.kind != EventKind.RELEASE, e.task)):
        for c in ev.chiplets:
            if ev.kind is EventKind.ASSIGN:
                if c in owner:
                    raise MappingError(f"chiplet {c} assigned to task {ev.task} while held by {owner[c]}")
                owner[c] = ev.task
            else:
                if owner.get(c) != ev.task:
                    raise MappingError(f"task {ev.task} releases chiplet {c} it does not hold")
                del owner[c]
    if owner:
        raise MappingError(f"chiplets never released: {sorted(owner)}")
    for p in result.plans:
        if len(set(p.chiplets)) != len(p.chiplets):
            raise MappingError(f"task {p.task} uses a chiplet twice")
        if any(w > cap.weights_per_chiplet for w in p.slot_weights):
            raise MappingError(f"task {p.task} overfills a chiplet")


# -- serialization -----------------------------------------------------------

def result_to_dict(r: MappingResult) -> dict:
    return {
        "schema_version": 1,
        "strategy": r.strategy,
        "num_chiplets": r.num_chiplets,
        "makespan": r.makespan,
        "utilization": r.utilization,
        "fragmentation": r.fragmentation,
        "blocked_ticks": r.blocked_ticks,
        "watchdog_triggers": r.watchdog_triggers,
        "meta": r.meta,
        "plans": [
            {"task": p.task, "model": p.model, "start": p.start, "end": p.end,
             "chiplets": list(p.chiplets), "layers": [list(x) for x in p.layers],
             "spillovers": [list(s) for s in p.spillovers], "slot_weights": list(p.slot_weights)}
            for p in r.plans
        ],
        "events": [[e.time, e.kind.value, e.task, list(e.chiplets)] for e in r.events],
    }


def result_from_dict(d: dict) -> MappingResult:
    if d.get("schema_version") != 1:
        raise ValueError(f"unsupported plan schema_version {d.get('schema_version')!r}")
    plans = [MappingPlan(p["task"], p["model"], tuple(p["chiplets"]), tuple(tuple(x) for x in p["layers"]),
                         tuple(tuple(s) for s in p["spillovers"]), p["start"], p["end"],
                         tuple(p.get("slot_weights", ())))
             for p in d["plans"]]
    events = [ScheduleEvent(t, EventKind(k), task, tuple(cs)) for t, k, task, cs in d["events"]]
    return MappingResult(d["strategy"], d["num_chiplets"], plans, events, d["makespan"],
                         d.get("fragmentation", 0), d.get("blocked_ticks", 0),
                         d.get("watchdog_triggers", 0), dict(d.get("meta", {})))
