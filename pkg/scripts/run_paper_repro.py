"""Run the 100-chiplet comparison suite and print the headline tables.

    python3 scripts/run_paper_repro.py [--config configs/paper_repro.json] [--out results]

Set FLORET_WORKERS to evaluate cells in parallel.
"""
from __future__ import annotations

import argparse
import math
from pathlib import Path

from floret.experiment import emit_plots, load_config, read_csv, run_suite

ROOT = Path(__file__).resolve().parents[1]


def geomean(xs):
    return math.exp(sum(math.log(x) for x in xs) / len(xs))


def main(argv=None):
    ap = argparse.ArgumentParser(description="100-chiplet Floret vs baselines")
    ap.add_argument("--config", default=str(ROOT / "configs" / "paper_repro.json"))
    ap.add_argument("--out", default=str(ROOT / "results"))
    args = ap.parse_args(argv)

    cfg = load_config(args.config)
    bundle = run_suite(cfg, args.out)
    emit_plots(bundle)
    print(f"bundle: {bundle}")

    _, rows = read_csv(bundle / "tables" / "normalized.csv")
    for engine in cfg.engines:
        print(f"\n[{engine}] ratio to {cfg.baseline} (latency / energy)")
        sub = [r for r in rows if r["engine"] == engine]
        print(f"{'workload':8s} " + " ".join(f"{t:>20s}" for t in cfg.topologies))
        for wl in cfg.workloads:
            cells = {r["topology"]: r for r in sub if r["workload"] == wl}
            print(f"{wl:8s} " + " ".join(
                f"{float(cells[t]['latency_ratio']):9.3f} /{float(cells[t]['energy_ratio']):8.3f}"
                for t in cfg.topologies))
        print(f"{'geomean':8s} " + " ".join(
            f"{geomean([float(r['latency_ratio']) for r in sub if r['topology'] == t]):9.3f} /"
            f"{geomean([float(r['energy_ratio']) for r in sub if r['topology'] == t]):8.3f}"
            for t in cfg.topologies))

    _, cost = read_csv(bundle / "tables" / "cost.csv")
    print("\nNoI area and relative fabrication cost")
    for r in cost:
        print(f"{r['topology']:12s} links={r['links']:>4s} area={float(r['noi_area_mm2']):8.2f} mm^2 "
              f"cost ratio={float(r['cost_ratio']):.3f}")
    _, mp = read_csv(bundle / "tables" / "mapping.csv")
    print("\nutilization / fragmentation (chiplet-ticks)")
    for r in mp:
        print(f"{r['topology']:12s} {r['workload']}: {float(r['utilization']):.3f} / {r['fragmentation']}")


if __name__ == "__main__":
    main()
