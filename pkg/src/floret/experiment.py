"""End-to-end study runner: topologies x workloads -> report bundle.

A bundle is a directory named by the config hash.  Layout::

    <hash>/manifest.json            config, hash, version, file list
    <hash>/topologies/<topo>.json
    <hash>/plans/<topo>__<wl>.json
    <hash>/reports/<topo>__<wl>__<engine>.json
    <hash>/tables/results.csv       absolute metrics per cell
    <hash>/tables/normalized.csv    metrics divided by the baseline topology
    <hash>/tables/ports.csv         router port histogram (long format)
    <hash>/tables/links.csv         link counts and lengths
    <hash>/tables/cost.csv          area and fabrication cost
    <hash>/tables/mapping.csv       utilization and fragmentation

Every CSV starts with ``# floret <version> config=<hash>``; every JSON file
carries a ``header`` object with the same information.
"""
from __future__ import annotations

import copy
import csv
import functools
import hashlib
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from . import __version__
from .cost import CostParams, cost_table
from .floret import synthesize_floret
from .mapping import ChipletCapacity, map_queue, result_to_dict, task_durations
from .noi_model import Kind, Topology, load_topology, router_port_histogram, topology_to_dict
from .perf import CostCoefficients, EvalReport, compare, evaluate
from .topologies import generate
from .workloads import VARIANTS, bundled_models, bundled_queues, load_model_dir, load_queue_dir

log = logging.getLogger(__name__)

WORKERS_ENV = "FLORET_WORKERS"
TOPOLOGY_ORDER = ("floret", "mesh", "kite", "smallworld")
PLOT_FILES = ("fig2a_ports.csv", "fig2b_links.csv", "fig3_latency.csv", "fig5_energy.csv")


class ConfigError(ValueError):
    pass


@dataclass
class SuiteConfig:
    name: str = "suite"
    width: int = 10
    height: int = 10
    num_petals: Optional[int] = None
    seed: int = 0
    topologies: list[str] = field(default_factory=lambda: list(TOPOLOGY_ORDER))
    workloads: list[str] = field(default_factory=lambda: ["WL1", "WL2", "WL3", "WL4", "WL5"])
    models: str = "bundled:paper"
    queues: str = "bundled"
    capacity: int = 4_000_000
    duration_per_batch: int = 100
    batches: int = 1
    max_gap: Optional[int] = 4
    floret: dict = field(default_factory=dict)  # synthesize_floret keyword overrides
    smallworld: dict = field(default_factory=dict)  # gen_smallworld keyword overrides
    topology_files: dict = field(default_factory=dict)  # kind -> precomputed topology file
    coefficients: Any = None  # dict or path
    cost_params: Any = None  # dict or path
    engines: list[str] = field(default_factory=lambda: ["analytic"])
    eventsim_seed: int = 0
    baseline: str = "floret"

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path = Path(".")) -> "SuiteConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
        cfg = cls(**d)
        cfg._resolve(base_dir)
        cfg.check()
        return cfg

    def _resolve(self, base: Path) -> None:
        def res(p):
            return str((base / p).resolve()) if not os.path.isabs(p) else p

        if not self.models.startswith("bundled"):
            self.models = res(self.models)
        if self.queues != "bundled":
            self.queues = res(self.queues)
        self.topology_files = {k: res(v) for k, v in self.topology_files.items()}
        for attr in ("coefficients", "cost_params"):
            v = getattr(self, attr)
            if isinstance(v, str):
                setattr(self, attr, _read_json(res(v)))

    def check(self) -> None:
        for t in self.topologies:
            if t not in TOPOLOGY_ORDER:
                raise ConfigError(f"unknown topology {t!r}")
        if self.baseline not in self.topologies:
            raise ConfigError(f"baseline {self.baseline!r} is not among the topologies")
        for e in self.engines:
            if e not in ("analytic", "eventsim"):
                raise ConfigError(f"unknown engine {e!r}")
        if self.models.startswith("bundled"):
            variant = self.models.partition(":")[2] or "paper"
            if variant not in VARIANTS:
                raise ConfigError(f"unknown bundled model variant {variant!r}")
        elif not Path(self.models).is_dir():
            raise ConfigError(f"model directory not found: {self.models}")
        if self.queues != "bundled" and not Path(self.queues).is_dir():
            raise ConfigError(f"queue directory not found: {self.queues}")
        for k, p in self.topology_files.items():
            if not Path(p).is_file():
                raise ConfigError(f"topology file for {k} not found: {p}")
        if not self.workloads or not self.topologies:
            raise ConfigError("config needs at least one topology and one workload")
        CostCoefficients.from_dict(self.coefficients or {})
        CostParams.from_dict(self.cost_params or {})

    def to_dict(self) -> dict:
        return {k: copy.deepcopy(getattr(self, k)) for k in self.__dataclass_fields__}

    @property
    def hash(self) -> str:
        d = self.to_dict()
        # file locations do not change results; their contents are hashed instead
        d["topology_files"] = {k: _file_digest(p) for k, p in sorted(self.topology_files.items())}
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"referenced file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def _file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def load_config(path) -> SuiteConfig:
    path = Path(path)
    return SuiteConfig.from_dict(_read_json(path), path.parent)


@functools.lru_cache(maxsize=8)
def _library(models_src: str, queues_src: str):
    if models_src.startswith("bundled"):
        models = bundled_models(models_src.partition(":")[2] or "paper")
    else:
        models = load_model_dir(models_src)
    queues = bundled_queues(models) if queues_src == "bundled" else load_queue_dir(queues_src, models)
    return models, queues


def load_library(cfg: SuiteConfig):
    models, queues = _library(cfg.models, cfg.queues)
    missing = [w for w in cfg.workloads if w not in queues]
    if missing:
        raise ConfigError(f"unknown workload(s): {missing}")
    return models, queues


def build_topologies(cfg: SuiteConfig) -> dict[str, Topology]:
    out = {}
    for kind in cfg.topologies:
        if kind in cfg.topology_files:
            t = load_topology(cfg.topology_files[kind])
            if t.kind is not Kind(kind) or (t.width, t.height) != (cfg.width, cfg.height):
                raise ConfigError(f"topology file for {kind} does not match the configured grid/kind")
        elif kind == "floret":
            t = synthesize_floret(cfg.width, cfg.height, cfg.num_petals, cfg.seed, **cfg.floret)
        elif kind == "smallworld":
            t = generate(kind, cfg.width, cfg.height, cfg.seed, **cfg.smallworld)
        else:
            t = generate(kind, cfg.width, cfg.height, cfg.seed)
        out[kind] = t
    return out


# -- cells -------------------------------------------------------------------

def _run_cell(args):
    cfg_dict, topo_dict, kind, wl = args
    from .noi_model import topology_from_dict

    cfg = SuiteConfig(**cfg_dict)
    topo = topology_from_dict(topo_dict)
    models, queues = load_library(cfg)
    q = queues[wl]
    durations = task_durations(len(q.tasks), cfg.duration_per_batch, cfg.batches)
    mapping = map_queue(q, models, topo, ChipletCapacity(cfg.capacity), durations=durations, max_gap=cfg.max_gap)
    coeffs = CostCoefficients.from_dict(cfg.coefficients or {})
    reports = [evaluate(e, mapping, topo, models, coeffs, cfg.eventsim_seed, wl) for e in cfg.engines]
    return kind, wl, result_to_dict(mapping), [r.to_dict() for r in reports]


def _workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None


def run_suite(config, out_dir) -> Path:
    """Run every (topology, workload) cell and write the bundle; return its path."""
    cfg = config if isinstance(config, SuiteConfig) else load_config(config)
    models, queues = load_library(cfg)  # fail early on bad references
    del models, queues
    h = cfg.hash
    header = {"tool": "floret", "version": __version__, "config_hash": h}
    topos = build_topologies(cfg)
    jobs = [(cfg.to_dict(), topology_to_dict(topos[k]), k, wl) for k in cfg.topologies for wl in cfg.workloads]
    workers = _workers()
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_run_cell, jobs))
    else:
        results = [_run_cell(j) for j in jobs]

    root = Path(out_dir) / h
    files: list[str] = []

    def put_json(rel, obj):
        p = root / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(json.dumps({"header": header, **obj}, indent=1, sort_keys=True) + "\n")
        files.append(rel)

    def put_csv(rel, columns, rows):
        p = root / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(_csv_text(header, columns, rows))
        files.append(rel)

    for k, t in topos.items():
        put_json(f"topologies/{k}.json", {"topology": topology_to_dict(t)})
    reports: list[EvalReport] = []
    map_rows = []
    for kind, wl, plan, reps in results:
        put_json(f"plans/{kind}__{wl}.json", {"plan": plan})
        map_rows.append([kind, wl, plan["strategy"], len(plan["plans"]), plan["makespan"],
                         _fmt(plan["utilization"]), plan["fragmentation"], plan["blocked_ticks"],
                         sum(len(p["spillovers"]) for p in plan["plans"]), plan["watchdog_triggers"]])
        for r in reps:
            put_json(f"reports/{kind}__{wl}__{r['engine']}.json", {"report": r})
            reports.append(EvalReport.from_dict(r))

    put_csv("tables/results.csv",
            ["topology", "workload", "engine", "total_latency", "noi_energy", "traffic_bits",
             "mean_task_latency", "link_utilization"],
            [[r.topology, r.workload, r.engine, _fmt(r.total_latency), _fmt(r.noi_energy), r.traffic_bits,
              _fmt(sum(r.task_latencies) / max(1, len(r.task_latencies))),
              "" if r.link_utilization is None else _fmt(r.link_utilization)] for r in reports])
    norm_rows = []
    for engine in cfg.engines:
        sub = [r for r in reports if r.engine == engine]
        for row in compare(sub, cfg.baseline):
            norm_rows.append([row["topology"], row["workload"], engine, cfg.baseline,
                              _fmt(row["total_latency"]), _fmt(row["noi_energy"])])
    put_csv("tables/normalized.csv",
            ["topology", "workload", "engine", "baseline", "latency_ratio", "energy_ratio"], norm_rows)
    put_csv("tables/ports.csv", ["topology", "ports", "routers"],
            [[k, p, c] for k, t in topos.items() for p, c in router_port_histogram(t).items()])
    put_csv("tables/links.csv", ["topology", "links", "total_hop_length", "max_hop_length"],
            [[k, len(t.links), sum(x.hop_length for x in t.links), max(x.hop_length for x in t.links)]
             for k, t in topos.items()])
    params = CostParams.from_dict(cfg.cost_params or {})
    crows = cost_table(topos, params, cfg.baseline)
    put_csv("tables/cost.csv", ["topology", "links", "total_hop_length", "noi_area_mm2", "fab_cost", "cost_ratio"],
            [[r["topology"], r["links"], r["total_hop_length"], _fmt(r["noi_area_mm2"]), _fmt(r["fab_cost"]),
              _fmt(r["cost_vs_" + cfg.baseline])] for r in crows])
    put_csv("tables/mapping.csv",
            ["topology", "workload", "strategy", "tasks", "makespan", "utilization", "fragmentation",
             "blocked_ticks", "spillovers", "watchdog_triggers"], map_rows)
    manifest = {"header": header, "config": cfg.to_dict(), "name": cfg.name,
                "files": sorted(files), "topologies": list(topos), "workloads": cfg.workloads,
                "engines": cfg.engines, "num_chiplets": cfg.width * cfg.height}
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return root


def _fmt(x: float) -> str:
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return repr(float(x))


def _csv_text(header: dict, columns, rows) -> str:
    buf = io.StringIO()
    buf.write(f"# floret {header['version']} config={header['config_hash']}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    return buf.getvalue()


def read_csv(path) -> tuple[str, list[dict]]:
    """(header comment, rows) of a bundle CSV."""
    lines = Path(path).read_text().splitlines()
    return lines[0], list(csv.DictReader(lines[1:]))


# -- plots -------------------------------------------------------------------

def emit_plots(bundle) -> list[Path]:
    """Write the four figure data files into ``<bundle>/plots``.

    * ``fig2a_ports.csv``: topology, then one column per port count (router counts)
    * ``fig2b_links.csv``: topology, links, total_hop_length
    * ``fig3_latency.csv``: workload, then one latency-ratio column per topology
    * ``fig5_energy.csv``: workload, then one energy-ratio column per topology
    """
    bundle = Path(bundle)
    mf = bundle / "manifest.json"
    if not mf.is_file():
        raise ConfigError(f"{bundle} is not a report bundle (no manifest.json)")
    manifest = json.loads(mf.read_text())
    if not manifest.get("files") or not manifest.get("topologies"):
        raise ConfigError(f"{bundle} is an empty bundle")
    header = manifest["header"]
    topos = manifest["topologies"]
    _, ports = read_csv(bundle / "tables/ports.csv")
    _, links = read_csv(bundle / "tables/links.csv")
    _, norm = read_csv(bundle / "tables/normalized.csv")
    out_dir = bundle / "plots"
    out_dir.mkdir(exist_ok=True)
    written = []

    def put(name, columns, rows):
        p = out_dir / name
        p.write_text(_csv_text(header, columns, rows))
        written.append(p)

    max_port = max(int(r["ports"]) for r in ports)
    hist = {t: [0] * (max_port + 1) for t in topos}
    for r in ports:
        hist[r["topology"]][int(r["ports"])] = int(r["routers"])
    put(PLOT_FILES[0], ["topology"] + [f"ports_{p}" for p in range(max_port + 1)],
        [[t] + hist[t] for t in topos])
    put(PLOT_FILES[1], ["topology", "links", "total_hop_length"],
        [[r["topology"], r["links"], r["total_hop_length"]] for r in links])
    engine = "analytic" if "analytic" in manifest["engines"] else manifest["engines"][0]
    for name, col in ((PLOT_FILES[2], "latency_ratio"), (PLOT_FILES[3], "energy_ratio")):
        table = {(r["workload"], r["topology"]): r[col] for r in norm if r["engine"] == engine}
        put(name, ["workload"] + topos, [[wl] + [table[(wl, t)] for t in topos] for wl in manifest["workloads"]])
    return written
