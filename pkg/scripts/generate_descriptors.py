"""Regenerate the bundled model and queue descriptors.

Layer shapes come from the reference architecture definitions in
``floret.zoo``.  Two model variants are written:

* ``public``: parameter counts exactly as the architectures define them.
* ``paper``: every layer's weight count scaled by one per-model factor so
  the total matches the catalogue's declared size (activations untouched).

Usage: python3 scripts/generate_descriptors.py [--out src/floret/data]
"""
from __future__ import annotations

import argparse
import json
from pathlib import Path

from floret.workloads import SCHEMA_VERSION, load_model
from floret.zoo import CATALOG

# name -> (ordered (model, count) entries, declared total parameters)
QUEUES = {
    "WL1": ([("NN3", 16), ("NN8", 1), ("NN6", 3), ("NN5", 4), ("NN1", 2), ("NN2", 1), ("NN4", 1)], 1.1e9),
    "WL2": ([("NN6", 2), ("NN7", 1), ("NN5", 7), ("NN4", 4), ("NN7", 2), ("NN3", 1), ("NN1", 1)], 1.4e9),
    "WL3": ([("NN3", 12), ("NN8", 9), ("NN5", 3), ("NN1", 10), ("NN3", 12), ("NN4", 5), ("NN7", 1)], 8.8e9),
    "WL4": ([("NN2", 1), ("NN8", 3), ("NN6", 5), ("NN2", 4), ("NN3", 3), ("NN4", 4), ("NN7", 2)], 3.8e9),
    "WL5": ([("NN6", 1), ("NN7", 3), ("NN4", 4), ("NN8", 6), ("NN6", 4), ("NN4", 3)], 1.8e9),
}


def scaled_layers(layers: list[dict], factor: float) -> list[dict]:
    out = []
    for i, x in enumerate(layers):
        y = dict(x, index=i)
        y["params"] = round(x["params"] * factor)
        out.append(y)
    return out


def descriptor(model_id: str, variant: str) -> dict:
    arch, dataset, build, declared_m = CATALOG[model_id]
    net = build()
    public = net.total_params
    declared = round(declared_m * 1e6)
    factor = declared / public if variant == "paper" else 1.0
    return {
        "schema_version": SCHEMA_VERSION,
        "name": model_id,
        "declared_params": declared if variant == "paper" else public,
        "bits_per_weight": 8,
        "bits_per_activation": 8,
        "meta": {
            "architecture": arch,
            "dataset": dataset,
            "variant": variant,
            "reference_params": public,
            "weight_scale": round(factor, 6),
        },
        "layers": scaled_layers(net.layers, factor),
        "skip_edges": [list(e) for e in net.skips],
    }


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "src" / "floret" / "data"))
    args = ap.parse_args(argv)
    root = Path(args.out)
    for variant in ("paper", "public"):
        d = root / "models" / variant
        d.mkdir(parents=True, exist_ok=True)
        for model_id in CATALOG:
            desc = descriptor(model_id, variant)
            path = d / f"{model_id}.json"
            path.write_text(json.dumps(desc, indent=1) + "\n")
            m = load_model(path)
            print(f"{variant:6s} {model_id:5s} {desc['meta']['architecture']:12s} "
                  f"layers={m.num_layers:4d} skips={len(m.skip_edges):5d} params={m.total_params}")
    qd = root / "queues"
    qd.mkdir(parents=True, exist_ok=True)
    for name, (entries, declared) in QUEUES.items():
        q = {"schema_version": SCHEMA_VERSION, "name": name,
             "declared_params": int(declared), "entries": [list(e) for e in entries]}
        (qd / f"{name}.json").write_text(json.dumps(q, indent=1) + "\n")


if __name__ == "__main__":
    main()
