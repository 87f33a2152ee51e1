"""DNN model descriptors, concurrent task queues and layer traffic."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional, Union

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DEFAULT_BITS = 8
PARAM_TOLERANCE = 0.01


class DescriptorError(ValueError):
    pass


@dataclass(frozen=True)
class LayerDesc:
    index: int
    params: int
    out_activation: int
    bits_per_weight: int = DEFAULT_BITS
    bits_per_activation: int = DEFAULT_BITS
    name: str = ""
    op: str = ""


@dataclass(frozen=True)
class DnnModel:
    name: str
    layers: tuple[LayerDesc, ...]
    skip_edges: tuple[tuple[int, int, int], ...] = ()
    declared_params: Optional[int] = None
    meta: dict = field(default_factory=dict, compare=False, hash=False)
    warnings: tuple[str, ...] = field(default=(), compare=False)

    @property
    def total_params(self) -> int:
        return sum(layer.params for layer in self.layers)

    @property
    def num_layers(self) -> int:
        return len(self.layers)


@dataclass(frozen=True)
class TaskQueue:
    name: str
    entries: tuple[tuple[str, int], ...]
    declared_params: Optional[int] = None
    warnings: tuple[str, ...] = field(default=(), compare=False)

    @property
    def tasks(self) -> tuple[str, ...]:
        """One model name per task instance, in queue order."""
        return tuple(m for m, count in self.entries for _ in range(count))


# -- models ------------------------------------------------------------------

def model_from_dict(d: Mapping) -> DnnModel:
    if d.get("schema_version") != SCHEMA_VERSION:
        raise DescriptorError(f"unsupported model schema_version {d.get('schema_version')!r}")
    name = d.get("name")
    if not name:
        raise DescriptorError("model needs a name")
    raw_layers = d.get("layers") or []
    if not raw_layers:
        raise DescriptorError(f"{name}: empty layer list")
    bw = d.get("bits_per_weight", DEFAULT_BITS)
    ba = d.get("bits_per_activation", DEFAULT_BITS)
    layers = []
    for i, x in enumerate(raw_layers):
        if x.get("index", i) != i:
            raise DescriptorError(f"{name}: layer indices must be 0..n-1 in order")
        layer = LayerDesc(
            index=i,
            params=int(x["params"]),
            out_activation=int(x["out_activation"]),
            bits_per_weight=int(x.get("bits_per_weight", bw)),
            bits_per_activation=int(x.get("bits_per_activation", ba)),
            name=x.get("name", ""),
            op=x.get("op", ""),
        )
        if layer.params < 0 or layer.out_activation < 0:
            raise DescriptorError(f"{name}: negative count in layer {i}")
        if layer.bits_per_weight <= 0 or layer.bits_per_activation <= 0:
            raise DescriptorError(f"{name}: bit widths must be positive (layer {i})")
        if layer.out_activation == 0 and i < len(raw_layers) - 1:
            raise DescriptorError(f"{name}: non-terminal layer {i} has no output activations")
        layers.append(layer)
    skips = []
    for e in d.get("skip_edges", []):
        src, dst, act = (int(v) for v in e)
        if not 0 <= src < len(layers) or not 0 <= dst < len(layers):
            raise DescriptorError(f"{name}: skip edge {e} references a missing layer")
        if dst <= src + 1:
            raise DescriptorError(f"{name}: skip edge {e} must point forward past the next layer")
        if act <= 0:
            raise DescriptorError(f"{name}: skip edge {e} carries no activations")
        skips.append((src, dst, act))
    declared = d.get("declared_params")
    warnings = []
    total = sum(x.params for x in layers)
    if declared:
        if abs(total - declared) > PARAM_TOLERANCE * declared:
            msg = f"{name}: layer parameters sum to {total}, declared {declared}"
            log.info(msg)
            warnings.append(msg)
    return DnnModel(name, tuple(layers), tuple(skips), declared, dict(d.get("meta", {})), tuple(warnings))


def model_to_dict(m: DnnModel) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "name": m.name,
        "declared_params": m.declared_params,
        "meta": m.meta,
        "layers": [
            {"index": x.index, "name": x.name, "op": x.op, "params": x.params,
             "out_activation": x.out_activation, "bits_per_weight": x.bits_per_weight,
             "bits_per_activation": x.bits_per_activation}
            for x in m.layers
        ],
        "skip_edges": [list(e) for e in m.skip_edges],
    }


def load_model(source: Union[str, Path, Mapping]) -> DnnModel:
    if isinstance(source, Mapping):
        return model_from_dict(source)
    try:
        d = json.loads(Path(source).read_text())
    except json.JSONDecodeError as exc:
        raise DescriptorError(f"{source}: malformed descriptor ({exc})") from exc
    return model_from_dict(d)


def save_model(m: DnnModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(m), indent=1) + "\n")


def load_model_dir(path) -> dict[str, DnnModel]:
    models = {}
    for f in sorted(Path(path).glob("*.json")):
        m = load_model(f)
        models[m.name] = m
    return models


# -- queues ------------------------------------------------------------------

def queue_from_dict(d: Mapping, models: Mapping[str, DnnModel]) -> TaskQueue:
    if d.get("schema_version") != SCHEMA_VERSION:
        raise DescriptorError(f"unsupported queue schema_version {d.get('schema_version')!r}")
    name = d.get("name", "")
    entries = tuple((str(m), int(c)) for m, c in d.get("entries", []))
    if not entries:
        raise DescriptorError(f"queue {name!r} has no entries")
    for m, c in entries:
        if m not in models:
            raise DescriptorError(f"queue {name!r} references unknown model {m!r}")
        if c < 1:
            raise DescriptorError(f"queue {name!r}: instance count for {m} must be >= 1")
    declared = d.get("declared_params")
    warnings = []
    if declared:
        total = sum(models[m].total_params * c for m, c in entries)
        if abs(total - declared) > PARAM_TOLERANCE * declared:
            msg = f"queue {name}: models sum to {total / 1e9:.2f}B params, declared {declared / 1e9:.2f}B"
            log.info(msg)
            warnings.append(msg)
    return TaskQueue(name, entries, declared, tuple(warnings))


def load_queue(source: Union[str, Path, Mapping], models: Mapping[str, DnnModel]) -> TaskQueue:
    if isinstance(source, Mapping):
        return queue_from_dict(source, models)
    try:
        d = json.loads(Path(source).read_text())
    except json.JSONDecodeError as exc:
        raise DescriptorError(f"{source}: malformed queue ({exc})") from exc
    return queue_from_dict(d, models)


def queue_to_dict(q: TaskQueue) -> dict:
    return {"schema_version": SCHEMA_VERSION, "name": q.name,
            "declared_params": q.declared_params, "entries": [list(e) for e in q.entries]}


def load_queue_dir(path, models) -> dict[str, TaskQueue]:
    return {q.name: q for q in (load_queue(f, models) for f in sorted(Path(path).glob("*.json")))}


# -- bundled data ------------------------------------------------------------

VARIANTS = ("paper", "public")


def data_dir() -> Path:
    return Path(str(resources.files("floret") / "data"))


def bundled_models(variant: str = "paper") -> dict[str, DnnModel]:
    if variant not in VARIANTS:
        raise DescriptorError(f"unknown model variant {variant!r}; choose from {VARIANTS}")
    return load_model_dir(data_dir() / "models" / variant)


def bundled_queues(models: Optional[Mapping[str, DnnModel]] = None) -> dict[str, TaskQueue]:
    models = bundled_models() if models is None else models
    return load_queue_dir(data_dir() / "queues", models)


# -- traffic -----------------------------------------------------------------

def traffic_edges(m: DnnModel) -> list[tuple[int, int, int]]:
    """Layer-level activation transfers as ``(src, dst, bits)``.

    Consecutive layers first (in order), then skip edges.
    """
    edges = [(i, i + 1, m.layers[i].out_activation * m.layers[i].bits_per_activation)
             for i in range(m.num_layers - 1)]
    edges += [(s, t, act * m.layers[s].bits_per_activation) for s, t, act in m.skip_edges]
    return edges


def skip_share(m: DnnModel) -> tuple[float, float]:
    """(skip bits / all bits, consecutive bits / skip bits)."""
    n_lin = m.num_layers - 1
    edges = traffic_edges(m)
    linear = sum(b for _, _, b in edges[:n_lin])
    skip = sum(b for _, _, b in edges[n_lin:])
    return skip / (linear + skip), (linear / skip if skip else float("inf"))
