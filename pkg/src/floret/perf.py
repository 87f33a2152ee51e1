"""Latency and energy of a mapped workload on a topology.

Both engines evaluate the same job graph.  Per task:

* a layer split over ``k`` chiplets runs as a chain: compute on chiplet 0,
  pass partial sums to chiplet 1, compute, ... (only layers with weights
  cost a compute pass);
* each layer-graph edge is a flow from the last chiplet of the source layer
  to the first chiplet of the destination layer;
* a layer starts once all its incoming flows have arrived.

The mapper's tick timeline decides which tasks overlap.  It is cut into
segments at every assign/release time; a segment costs its length times the
largest ``latency / occupancy`` rate among the tasks active in it.  Tasks
that overlap therefore take the maximum and tasks in sequence add up.  Each
task starts at the stretched time of its assign event.  The event engine
additionally holds a task until every earlier occupant of its chiplets has
finished.

The analytic engine charges every flow ``flits * path_latency``.  The event
engine splits a flow into at most ``max_packets_per_flow`` packets, sends
them one after another, and makes each packet queue (FIFO) at every router
output port and directed link on its path.  Without contention the two agree exactly.
"""
from __future__ import annotations

import heapq
import math
import random
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Mapping, Optional, Sequence

from .mapping import MappingResult
from .noi_model import Topology, shortest_path
from .workloads import DnnModel, traffic_edges


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class CostCoefficients:
    router_delay: float = 1.0
    link_delay_per_hoplen: float = 1.0
    router_energy_per_bit: float = 2.0
    link_energy_per_bit_per_hoplen: float = 1.0
    compute_delay_per_chiplet_pass: float = 100.0
    flit_bits: int = 64
    # router cost multiplier ((ports + 1) / 3) ** radix_exponent, ports
    # counted without the local port; 0 makes every router cost the same
    radix_exponent: float = 2.0
    max_packets_per_flow: int = 16

    def __post_init__(self):
        for k, v in asdict(self).items():
            if v < 0:
                raise ValueError(f"coefficient {k} must be non-negative")
        if self.flit_bits <= 0 or self.max_packets_per_flow <= 0:
            raise ValueError("flit_bits and max_packets_per_flow must be positive")

    @classmethod
    def from_dict(cls, d: Mapping) -> "CostCoefficients":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown coefficient(s): {sorted(unknown)}")
        return cls(**d)


@dataclass
class EvalReport:
    topology: str
    workload: str
    engine: str
    total_latency: float
    noi_energy: float
    hop_histogram: dict[int, int]
    task_latencies: list[float]
    task_starts: list[float]
    traffic_bits: int
    link_utilization: Optional[float] = None
    baseline: str = ""
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hop_histogram"] = {str(k): v for k, v in sorted(self.hop_histogram.items())}
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "EvalReport":
        d = dict(d)
        d["hop_histogram"] = {int(k): v for k, v in d["hop_histogram"].items()}
        return cls(**d)


# -- routing -----------------------------------------------------------------

class Router:
    """Cached shortest paths and per-flit path costs for one topology."""

    def __init__(self, topo: Topology, coeffs: CostCoefficients):
        self.topo = topo
        self.c = coeffs
        self.factor = [((topo.degree(i) + 1) / 3) ** coeffs.radix_exponent for i in range(topo.n)]
        self._paths: dict[tuple[int, int], tuple[int, ...]] = {}

    def path(self, a: int, b: int) -> tuple[int, ...]:
        key = (a, b)
        if key not in self._paths:
            self._paths[key] = tuple(shortest_path(self.topo, a, b))
        return self._paths[key]

    def hops(self, a: int, b: int) -> int:
        return self.topo.distances[a][b]

    def _stages(self, a: int, b: int) -> list[tuple[object, float, float]]:
        """(resource, delay per flit, energy per bit) along the route."""
        p = self.path(a, b)
        c = self.c
        dist = self.topo.distances
        out = []
        for i, u in enumerate(p):
            port = p[i + 1] if i + 1 < len(p) else -1  # -1: ejection to the local chiplet
            out.append((("r", u, port), c.router_delay * self.factor[u], c.router_energy_per_bit * self.factor[u]))
            if i + 1 < len(p):
                hl = dist[u][p[i + 1]]
                out.append((("l", u, p[i + 1]), c.link_delay_per_hoplen * hl, c.link_energy_per_bit_per_hoplen * hl))
        return out

    def flit_latency(self, a: int, b: int) -> float:
        return sum(s[1] for s in self._stages(a, b)) if a != b else 0.0

    def bit_energy(self, a: int, b: int) -> float:
        return sum(s[2] for s in self._stages(a, b)) if a != b else 0.0

    def flits(self, bits: int) -> int:
        return math.ceil(bits / self.c.flit_bits)


# -- job graph ---------------------------------------------------------------

COMPUTE, FLOW, MARK = 0, 1, 2


@dataclass
class _Graph:
    kind: list[int] = field(default_factory=list)
    cost: list[float] = field(default_factory=list)  # compute delay, or analytic flow latency
    ends: list[tuple[int, int, int]] = field(default_factory=list)  # flows: (src, dst, bits)
    preds: list[list[int]] = field(default_factory=list)
    task_start: list[int] = field(default_factory=list)
    task_end: list[int] = field(default_factory=list)
    earliest: dict[int, float] = field(default_factory=dict)

    def add(self, kind, cost, preds, ends=(0, 0, 0)) -> int:
        self.kind.append(kind)
        self.cost.append(cost)
        self.preds.append(list(preds))
        self.ends.append(ends)
        return len(self.kind) - 1


@dataclass
class _Traffic:
    energy: float = 0.0
    bits: int = 0
    hist: dict = field(default_factory=lambda: defaultdict(int))


def _build(mapping: MappingResult, models: Mapping[str, DnnModel], router: Router, coeffs: CostCoefficients,
           starts: Optional[Sequence[float]] = None):
    """Job graph of the whole schedule.

    Without ``starts`` every task is independent and starts at 0.  With
    ``starts`` each task waits for that time and for earlier occupants of
    its chiplets.
    """
    g = _Graph()
    tr = _Traffic()
    last_user: dict[int, int] = {}  # chiplet -> task index of last occupant
    edge_cache: dict[str, list] = {}
    for k, plan in enumerate(mapping.plans):
        m = models[plan.model]
        preds = []
        if starts is not None:
            preds = sorted({g.task_end[last_user[c]] for c in plan.chiplets if c in last_user})
        start = g.add(MARK, 0.0, preds)
        g.earliest[start] = starts[k] if starts is not None else 0.0
        g.task_start.append(start)
        if m.name not in edge_cache:
            incoming = defaultdict(list)
            for s, t, bits in traffic_edges(m):
                incoming[t].append((s, bits))
            edge_cache[m.name] = incoming
        incoming = edge_cache[m.name]
        done: list[int] = []
        for li, layer in enumerate(m.layers):
            cs = plan.layers[li]
            deps = []
            for s, bits in incoming.get(li, ()):
                deps.append(_flow(g, tr, router, plan.layers[s][-1], cs[0], bits, [done[s]]))
            if not deps:
                deps = [start]
            work = coeffs.compute_delay_per_chiplet_pass if layer.params > 0 else 0.0
            j = g.add(COMPUTE, work, deps)
            chain_bits = layer.out_activation * layer.bits_per_activation
            for a, b in zip(cs, cs[1:]):
                f = _flow(g, tr, router, a, b, chain_bits, [j])
                j = g.add(COMPUTE, work, [f])
            done.append(j)
        g.task_end.append(g.add(MARK, 0.0, [done[-1]]))
        for c in plan.chiplets:
            last_user[c] = k
    return g, tr


def _flow(g: _Graph, tr: _Traffic, router: Router, a: int, b: int, bits: int, preds) -> int:
    tr.bits += bits
    tr.hist[router.hops(a, b)] += bits
    if a == b:
        return g.add(FLOW, 0.0, preds, (a, b, bits))
    tr.energy += bits * router.bit_energy(a, b)
    return g.add(FLOW, router.flits(bits) * router.flit_latency(a, b), preds, (a, b, bits))


def _report(engine, g, tr, finish, topo_name, workload, util=None, meta=None) -> EvalReport:
    starts = [finish[j] for j in g.task_start]
    lat = [finish[e] - finish[s] for s, e in zip(g.task_start, g.task_end)]
    total = max((finish[e] for e in g.task_end), default=0.0)
    return EvalReport(topo_name, workload, engine, total, tr.energy, dict(sorted(tr.hist.items())),
                      lat, starts, tr.bits, util, meta=meta or {})


def _longest_paths(g: _Graph) -> list[float]:
    finish = [0.0] * len(g.kind)
    for j in range(len(g.kind)):
        ready = max((finish[p] for p in g.preds[j]), default=g.earliest.get(j, 0.0))
        finish[j] = max(ready, g.earliest.get(j, 0.0)) + g.cost[j]
    return finish


def stretched_starts(mapping: MappingResult, latencies: Sequence[float]) -> list[float]:
    """Start time of every task once the tick timeline is scaled by latency."""
    plans = mapping.plans
    if not plans:
        return []
    rate = [lat / (p.end - p.start) for p, lat in zip(plans, latencies)]
    times = sorted({p.start for p in plans} | {p.end for p in plans})
    at = {}
    acc = 0.0
    for a, b in zip(times, times[1:]):
        at[a] = acc
        acc += (b - a) * max((r for r, p in zip(rate, plans) if p.start <= a and p.end >= b), default=0.0)
    at[times[-1]] = acc
    return [at[p.start] for p in plans]


def evaluate_analytic(
    mapping: MappingResult,
    topo: Topology,
    models: Mapping[str, DnnModel],
    coeffs: CostCoefficients = CostCoefficients(),
    workload: str = "",
) -> EvalReport:
    router = Router(topo, coeffs)
    g, tr = _build(mapping, models, router, coeffs)
    finish = _longest_paths(g)
    lat = [finish[e] for e in g.task_end]
    starts = stretched_starts(mapping, lat)
    shift = [0.0] * len(g.kind)
    for k, (s, e) in enumerate(zip(g.task_start, g.task_end)):
        for j in range(s, e + 1):
            shift[j] = starts[k]
    finish = [f + d for f, d in zip(finish, shift)]
    return _report("analytic", g, tr, finish, topo.kind.value, workload or mapping.meta.get("queue", ""))


def evaluate_eventsim(
    mapping: MappingResult,
    topo: Topology,
    models: Mapping[str, DnnModel],
    coeffs: CostCoefficients = CostCoefficients(),
    seed: int = 0,
    workload: str = "",
    max_events: Optional[int] = None,
) -> EvalReport:
    router = Router(topo, coeffs)
    g0, _ = _build(mapping, models, router, coeffs)
    base = _longest_paths(g0)
    starts = stretched_starts(mapping, [base[e] for e in g0.task_end])
    g, tr = _build(mapping, models, router, coeffs, starts)
    rng = random.Random(seed)
    n = len(g.kind)
    succ: list[list[int]] = [[] for _ in range(n)]
    waiting = [len(p) for p in g.preds]
    for j, ps in enumerate(g.preds):
        for p in ps:
            succ[p].append(j)
    finish = [0.0] * n
    ready_at = [0.0] * n
    free_at: dict[object, float] = defaultdict(float)
    busy: dict[object, float] = defaultdict(float)
    heap: list = []
    seq = 0

    def push(t, item):
        nonlocal seq
        seq += 1
        heapq.heappush(heap, (t, rng.random(), seq, item))

    def complete(j, t):
        finish[j] = t
        for s in succ[j]:
            ready_at[s] = max(ready_at[s], t)
            waiting[s] -= 1
            if waiting[s] == 0:
                push(ready_at[s], ("start", s))

    def packets(bits):
        flits = router.flits(bits)
        k = min(flits, coeffs.max_packets_per_flow)
        q, r = divmod(flits, k)
        return [q + (1 if i < r else 0) for i in range(k)]

    for j, t0 in g.earliest.items():
        ready_at[j] = t0
    for j in range(n):
        if waiting[j] == 0:
            push(ready_at[j], ("start", j))
    limit = max_events if max_events is not None else 1000 + 64 * sum(
        len(router.path(a, b)) * coeffs.max_packets_per_flow for a, b, _ in g.ends if a != b) + 8 * n
    events = 0
    completed = 0
    while heap:
        events += 1
        if events > limit:
            raise SimulationError(f"event watchdog: no completion after {limit} events")
        t, _, _, item = heapq.heappop(heap)
        if item[0] == "start":
            j = item[1]
            a, b, bits = g.ends[j]
            if g.kind[j] != FLOW or a == b:
                push(t + g.cost[j], ("done", j))
                continue
            stages = router._stages(a, b)
            sizes = packets(bits)
            push(t, ("hop", j, stages, sizes, 0, 0))
        elif item[0] == "done":
            complete(item[1], t)
            completed += 1
        else:
            _, j, stages, sizes, pk, st = item
            res, delay, _ = stages[st]
            begin = max(t, free_at[res])
            service = sizes[pk] * delay
            free_at[res] = begin + service
            if res[0] == "l":
                busy[res] += service
            end = begin + service
            if st + 1 < len(stages):
                push(end, ("hop", j, stages, sizes, pk, st + 1))
            elif pk + 1 < len(sizes):
                push(end, ("hop", j, stages, sizes, pk + 1, 0))
            else:
                push(end, ("done", j))
    if completed != n:
        raise SimulationError(f"simulation stalled with {n - completed} unfinished jobs")
    total = max((finish[e] for e in g.task_end), default=0.0)
    channels = 2 * len(topo.links)
    util = sum(busy.values()) / (channels * total) if total > 0 and channels else 0.0
    peak = max(busy.values(), default=0.0) / total if total > 0 else 0.0
    return _report("eventsim", g, tr, finish, topo.kind.value, workload or mapping.meta.get("queue", ""),
                   util, {"seed": seed, "events": events, "peak_link_utilization": peak})


def evaluate(engine: str, mapping, topo, models, coeffs=CostCoefficients(), seed: int = 0, workload: str = ""):
    if engine == "analytic":
        return evaluate_analytic(mapping, topo, models, coeffs, workload)
    if engine == "eventsim":
        return evaluate_eventsim(mapping, topo, models, coeffs, seed, workload)
    raise ValueError(f"unknown engine {engine!r}")


# -- comparison --------------------------------------------------------------

METRICS = ("total_latency", "noi_energy")


def _ratio(x: float, base: float) -> float:
    if base == 0:
        return 1.0 if x == 0 else math.inf
    return x / base


def compare(reports: Sequence[EvalReport], baseline: str, key: str = "topology") -> list[dict]:
    """Divide every metric by the matching baseline report's.

    Reports are grouped by workload; ``baseline`` names the value of ``key``
    (topology by default) that serves as the reference in each group.
    """
    base = {r.workload: r for r in reports if getattr(r, key) == baseline}
    rows = []
    for r in reports:
        b = base.get(r.workload)
        if b is None:
            raise ValueError(f"no {baseline!r} report for workload {r.workload!r}")
        row = {"workload": r.workload, key: getattr(r, key), "baseline": baseline}
        for m in METRICS:
            row[m] = _ratio(getattr(r, m), getattr(b, m))
        rows.append(row)
    return rows
