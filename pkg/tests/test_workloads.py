import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from floret.workloads import (
    DescriptorError,
    VARIANTS,
    bundled_models,
    load_model,
    load_queue,
    model_from_dict,
    model_to_dict,
    queue_from_dict,
    queue_to_dict,
    save_model,
    skip_share,
    traffic_edges,
)
from floret.zoo import CATALOG

TABLE_I = {k: v[3] for k, v in CATALOG.items()}
TABLE_II_COUNTS = {"WL1": 28, "WL2": 18, "WL3": 52, "WL4": 22, "WL5": 21}


def _toy(acts=(1000, 0), params=(10, 20), skips=()):
    return {
        "schema_version": 1,
        "name": "toy",
        "layers": [{"params": p, "out_activation": a} for p, a in zip(params, acts)],
        "skip_edges": [list(s) for s in skips],
    }


def test_two_layer_linear_edge():
    m = model_from_dict(_toy())
    assert traffic_edges(m) == [(0, 1, 8000)]


@pytest.mark.parametrize("nn", sorted(TABLE_I))
def test_table_one_totals(models, nn):
    declared = TABLE_I[nn] * 1e6
    assert abs(models[nn].total_params - declared) <= 0.01 * declared


def test_named_totals(models):
    assert models["NN1"].total_params == pytest.approx(24.76e6, rel=0.01)
    assert models["NN7"].total_params == pytest.approx(93.4e6, rel=0.01)


def test_public_variant_is_unscaled():
    pub = bundled_models("public")
    assert set(pub) == set(TABLE_I)
    # the ImageNet ResNet18 layer stack is the standard 11.7 M network
    assert pub["NN1"].total_params == pytest.approx(11.69e6, rel=0.01)
    assert pub["NN1"].num_layers == bundled_models("paper")["NN1"].num_layers
    assert VARIANTS == ("paper", "public")


def test_resnet34_traffic_split(models):
    skip, ratio = skip_share(models["NN2"])
    assert abs(skip - 0.19) <= 0.03
    assert abs(ratio - 4.5) <= 0.5
    # frozen from the bundled descriptor
    assert skip == pytest.approx(0.1751, abs=1e-4)
    assert ratio == pytest.approx(4.711, abs=1e-3)


def test_traffic_edge_counts(models):
    for m in models.values():
        edges = traffic_edges(m)
        assert len(edges) == m.num_layers - 1 + len(m.skip_edges)
        assert all(b > 0 for _, _, b in edges)


def test_queue_counts(queues):
    assert {k: len(q.tasks) for k, q in queues.items()} == TABLE_II_COUNTS
    assert queues["WL1"].tasks[:16] == ("NN3",) * 16 and queues["WL1"].tasks[16] == "NN8"


def test_queue_total_mismatch_is_a_warning(queues):
    assert queues["WL1"].warnings
    assert "declared" in queues["WL1"].warnings[0]


def test_queue_errors(models):
    with pytest.raises(DescriptorError):
        queue_from_dict({"schema_version": 1, "name": "q", "entries": [["NN99", 1]]}, models)
    with pytest.raises(DescriptorError):
        queue_from_dict({"schema_version": 1, "name": "q", "entries": [["NN1", 0]]}, models)


def test_queue_roundtrip(queues, models, tmp_path):
    q = queues["WL3"]
    p = tmp_path / "q.json"
    p.write_text(json.dumps(queue_to_dict(q)))
    assert load_queue(p, models) == q


@pytest.mark.parametrize("bad", [
    {**_toy(), "layers": []},
    {**_toy(), "schema_version": 2},
    _toy(params=(-1, 2)),
    _toy(acts=(0, 0)),
    _toy(acts=(5, 5, 0), params=(1, 1, 1), skips=[(0, 1, 5)]),
    _toy(acts=(5, 5, 0), params=(1, 1, 1), skips=[(0, 7, 5)]),
    {**_toy(), "bits_per_activation": 0},
])
def test_model_validation(bad):
    with pytest.raises(DescriptorError):
        model_from_dict(bad)


def test_declared_mismatch_warns():
    m = model_from_dict({**_toy(), "declared_params": 1000})
    assert m.warnings


layer = st.fixed_dictionaries({
    "params": st.integers(0, 10**8),
    "out_activation": st.integers(1, 10**6),
    "bits_per_activation": st.sampled_from([4, 8, 16]),
    "name": st.text(max_size=5),
})


@settings(max_examples=50, deadline=None)
@given(st.lists(layer, min_size=1, max_size=12), st.data())
def test_roundtrip_any_model(layers, data):
    n = len(layers)
    skips = []
    if n >= 3:
        src = data.draw(st.integers(0, n - 3))
        dst = data.draw(st.integers(src + 2, n - 1))
        skips = [[src, dst, data.draw(st.integers(1, 1000))]]
    m = model_from_dict({"schema_version": 1, "name": "h", "layers": layers, "skip_edges": skips})
    again = model_from_dict(json.loads(json.dumps(model_to_dict(m))))
    assert again == m and again.meta == m.meta


def test_file_roundtrip(models, tmp_path):
    save_model(models["NN8"], tmp_path / "m.json")
    assert load_model(tmp_path / "m.json") == models["NN8"]
