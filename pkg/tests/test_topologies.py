import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from floret.noi_model import Kind, router_port_histogram, topology_to_dict
from floret.topologies import folded_ring, gen_kite, gen_mesh, gen_smallworld, generate

from oracles import bfs_reachable, mesh_links


def _modal(hist):
    return max(hist, key=lambda p: (hist[p], -p))


def test_mesh_small_cases():
    assert len(gen_mesh(2, 2).links) == 4
    assert len(gen_mesh(10, 10).links) == 180
    assert {(ln.a, ln.b, ln.hop_length) for ln in gen_mesh(5, 4).links} == set(mesh_links(5, 4))


def test_folded_ring_steps():
    for n in range(4, 13):
        ring = folded_ring(n)
        assert sorted(ring) == list(range(n))
        steps = [abs(a - b) for a, b in zip(ring, ring[1:] + ring[:1])]
        assert steps.count(1) <= 2 and all(s <= 2 for s in steps)


def test_kite_10x10():
    t = gen_kite(10, 10)
    assert _modal(router_port_histogram(t)) == 4
    assert len(t.links) > 180
    assert max(ln.hop_length for ln in t.links) == 2


def test_kite_4x4_connected():
    t = gen_kite(4, 4)
    assert bfs_reachable(t.n, [(ln.a, ln.b) for ln in t.links]) == set(range(16))


def test_smallworld_10x10():
    t = gen_smallworld(10, 10, seed=0)
    assert _modal(router_port_histogram(t)) in (2, 3)
    assert len(t.links) < 180
    assert max(ln.hop_length for ln in t.links) in (4, 5)


@pytest.mark.parametrize("seed", range(10))
def test_smallworld_seeds(seed):
    t = gen_smallworld(10, 10, seed=seed)
    assert bfs_reachable(t.n, [(ln.a, ln.b) for ln in t.links]) == set(range(100))
    assert max(ln.hop_length for ln in t.links) in (4, 5)
    assert len(t.links) < 180


def test_dimension_checks():
    with pytest.raises(ValueError):
        gen_mesh(1, 4)
    with pytest.raises(ValueError):
        gen_kite(3, 6)
    with pytest.raises(ValueError):
        gen_smallworld(10, 10, long_link_budget=0.5)
    with pytest.raises(ValueError):
        generate("floret", 4, 4)


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(["mesh", "kite", "smallworld"]), st.integers(4, 9), st.integers(4, 9),
       st.integers(0, 2**16))
def test_generators_connected_and_deterministic(kind, w, h, seed):
    t = generate(kind, w, h, seed)
    assert t.kind is Kind(kind)
    assert bfs_reachable(t.n, [(ln.a, ln.b) for ln in t.links]) == set(range(w * h))
    hist = router_port_histogram(t)
    assert sum(hist.values()) == w * h
    assert sum(p * c for p, c in hist.items()) == 2 * len(t.links)
    assert topology_to_dict(generate(kind, w, h, seed)) == topology_to_dict(t)


def test_link_count_ordering(topos10):
    n = {k: len(t.links) for k, t in topos10.items()}
    assert n["kite"] > n["mesh"] == 180 > n["smallworld"] > n["floret"]
