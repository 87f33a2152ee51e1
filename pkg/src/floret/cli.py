"""Command line entry point (``floret <subcommand>``).

Exit codes: 0 success, 1 validation failure, 2 runtime error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .cost import CostParams, cost_table
from .experiment import ConfigError, emit_plots, run_suite
from .floret import synthesize_floret
from .mapping import ChipletCapacity, MappingError, map_queue, result_from_dict, result_to_dict, task_durations
from .noi_model import TopologyError, load_topology, router_port_histogram, save_topology
from .perf import CostCoefficients, SimulationError, evaluate
from .topologies import generate
from .workloads import DescriptorError, bundled_models, bundled_queues, load_model_dir, load_queue, load_queue_dir

log = logging.getLogger("floret")

REPORT_COLUMNS = ["topology", "workload", "engine", "total_latency", "noi_energy", "traffic_bits",
                  "num_tasks", "link_utilization"]


def _models(arg):
    if arg is None or arg.startswith("bundled"):
        return bundled_models((arg or "bundled:paper").partition(":")[2] or "paper")
    return load_model_dir(arg)


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def cmd_gen_topo(a):
    kw = {"long_link_budget": a.long_link_budget} if a.kind == "smallworld" else {}
    t = generate(a.kind, a.width, a.height, a.seed, **kw)
    save_topology(t, a.out)
    print(f"{a.kind} {a.width}x{a.height}: {len(t.links)} links, ports {router_port_histogram(t)}")


def cmd_gen_floret(a):
    budget = None if a.budget in ("exhaustive", "none") else int(a.budget)
    t = synthesize_floret(a.width, a.height, a.num_petals, a.seed, budget, restarts=a.restarts, workers=a.workers)
    save_topology(t, a.out)
    report = {
        "num_petals": t.sfc.num_petals,
        "d": t.meta.get("d"),
        "d_unordered": t.meta.get("d_unordered"),
        "p": t.meta.get("p"),
        "petal_sizes": t.meta["petal_sizes"],
        "relaxed": t.sfc.relaxed,
        "links": len(t.links),
        "top_links": len(t.sfc.top_links),
        "port_histogram": {str(k): v for k, v in router_port_histogram(t).items()},
    }
    side = Path(str(a.out) + ".report.json")
    side.write_text(json.dumps(report, indent=1) + "\n")
    print(json.dumps(report))


def cmd_validate(a):
    models = _models(a.models)
    queues = bundled_queues(models) if a.queues is None else load_queue_dir(a.queues, models)
    warnings = [w for m in models.values() for w in m.warnings] + [w for q in queues.values() for w in q.warnings]
    for name, m in sorted(models.items()):
        print(f"model {name}: {m.num_layers} layers, {len(m.skip_edges)} skip edges, {m.total_params} params")
    for name, q in sorted(queues.items()):
        print(f"queue {name}: {len(q.tasks)} tasks")
    for w in warnings:
        print(f"warning: {w}")
    if a.strict and warnings:
        return 1
    return 0


def cmd_map(a):
    topo = load_topology(a.topo)
    models = _models(a.models)
    q = load_queue(a.queue, models)
    durations = task_durations(len(q.tasks), a.duration, a.batches)
    r = map_queue(q, models, topo, ChipletCapacity(a.cap), a.strategy, durations, a.max_gap)
    r.meta["models"] = a.models or "bundled:paper"
    Path(a.out).write_text(json.dumps(result_to_dict(r), indent=1) + "\n")
    print(f"{q.name} on {topo.kind.value}: {len(r.plans)} tasks, makespan {r.makespan}, "
          f"utilization {r.utilization:.4f}, fragmentation {r.fragmentation}")


def cmd_simulate(a):
    topo = load_topology(a.topo)
    plan = result_from_dict(_read_json(a.plan))
    models = _models(a.models or plan.meta.get("models"))
    coeffs = CostCoefficients.from_dict(_read_json(a.coeffs)) if a.coeffs else CostCoefficients()
    rep = evaluate(a.engine, plan, topo, models, coeffs, a.seed, plan.meta.get("queue", ""))
    out = Path(a.out)
    out.write_text(json.dumps(rep.to_dict(), indent=1) + "\n")
    with open(out.with_suffix(".csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        w.writerow([rep.topology, rep.workload, rep.engine, repr(rep.total_latency), repr(rep.noi_energy),
                    rep.traffic_bits, len(rep.task_latencies),
                    "" if rep.link_utilization is None else repr(rep.link_utilization)])
    print(f"{rep.engine}: latency {rep.total_latency:.6g}, energy {rep.noi_energy:.6g}")


def cmd_cost(a):
    topo = load_topology(a.topo)
    params = CostParams.from_dict(_read_json(a.params)) if a.params else CostParams()
    row = cost_table({topo.kind.value: topo}, params, baseline="")[0]
    with open(a.out, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["topology", "links", "total_hop_length", "noi_area_mm2", "fab_cost"])
        w.writerow([row["topology"], row["links"], row["total_hop_length"],
                    repr(row["noi_area_mm2"]), repr(row["fab_cost"])])
    print(f"area {row['noi_area_mm2']:.4f} mm^2, relative cost {row['fab_cost']:.6g}")


def cmd_run(a):
    path = run_suite(a.config, a.out)
    print(path)


def cmd_emit_plots(a):
    for p in emit_plots(a.bundle):
        print(p)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="floret", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"floret {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("gen-topo", help="generate a baseline topology")
    p.add_argument("--kind", required=True, choices=["mesh", "kite", "smallworld"])
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--long-link-budget", type=float, default=0.3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_topo)

    p = sub.add_parser("gen-floret", help="synthesize a Floret topology")
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--lambda", dest="num_petals", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget", default="4800000", help="annealing steps, or 'exhaustive'")
    p.add_argument("--restarts", type=int, default=32)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_floret)

    p = sub.add_parser("validate", help="check model and queue descriptors")
    p.add_argument("--models", default=None, help="directory, or bundled:paper / bundled:public")
    p.add_argument("--queues", default=None)
    p.add_argument("--strict", action="store_true", help="treat warnings as failures")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("map", help="map a task queue onto a topology")
    p.add_argument("--topo", required=True)
    p.add_argument("--queue", required=True)
    p.add_argument("--models", default=None)
    p.add_argument("--cap", type=int, default=4_000_000)
    p.add_argument("--strategy", choices=["floret", "greedy"], default=None)
    p.add_argument("--duration", type=int, default=100)
    p.add_argument("--batches", type=int, default=1)
    p.add_argument("--max-gap", type=int, default=4)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("simulate", help="evaluate a mapping plan")
    p.add_argument("--plan", required=True)
    p.add_argument("--topo", required=True)
    p.add_argument("--engine", choices=["analytic", "eventsim"], default="analytic")
    p.add_argument("--coeffs", default=None)
    p.add_argument("--models", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("cost", help="interposer area and fabrication cost")
    p.add_argument("--topo", required=True)
    p.add_argument("--params", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("run", help="run an experiment suite")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("emit-plots", help="write figure data files for a bundle")
    p.add_argument("--bundle", required=True)
    p.set_defaults(func=cmd_emit_plots)
    return ap


VALIDATION_ERRORS = (ConfigError, DescriptorError, TopologyError, ValueError, FileNotFoundError, KeyError)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args) or 0
    except (MappingError, SimulationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except VALIDATION_ERRORS as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
