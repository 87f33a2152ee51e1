import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from floret.floret import synthesize_floret
from floret.mapping import (
    ChipletCapacity,
    MappingError,
    MappingPlan,
    chiplets_needed,
    check_schedule,
    map_queue,
    result_from_dict,
    result_to_dict,
    shuffled_durations,
    utilization,
)
from floret.topologies import gen_mesh
from floret.workloads import TaskQueue, model_from_dict

from oracles import packing_by_hand

CAP = ChipletCapacity(4_000_000)
CHIPLETS = {"NN1": 11, "NN2": 11, "NN3": 8, "NN4": 3, "NN5": 12, "NN6": 16, "NN7": 25,
            "NN8": 16, "NN9": 4, "NN10": 8, "NN11": 4, "NN12": 8, "NN13": 2}


def _chain(name, params, act=1000):
    layers = [{"params": p, "out_activation": act} for p in params]
    layers[-1]["out_activation"] = 10
    return model_from_dict({"schema_version": 1, "name": name, "layers": layers})


def _queue(*entries):
    return TaskQueue("q", tuple(entries))


def test_packing_examples():
    assert chiplets_needed(_chain("a", [10_000_000]), CAP).num_chiplets == 3
    assert chiplets_needed(_chain("b", [1_000_000] * 3), CAP).num_chiplets == 1
    assert chiplets_needed(_chain("c", [0, 3_000_000, 0, 2_000_000]), CAP).counts == (1, 1, 1, 1)


@pytest.mark.parametrize("nn", sorted(CHIPLETS))
def test_packing_matches_hand_tally(models, nn):
    got = chiplets_needed(models[nn], CAP)
    assert got.num_chiplets == packing_by_hand([x.params for x in models[nn].layers], 4_000_000)
    assert got.num_chiplets == CHIPLETS[nn]  # frozen
    assert max(got.slot_weights) <= 4_000_000
    assert sum(got.slot_weights) == models[nn].total_params


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 20_000_000), min_size=1, max_size=30), st.integers(1_000_000, 8_000_000))
def test_packing_property(params, cap):
    m = _chain("h", params)
    got = chiplets_needed(m, ChipletCapacity(cap))
    assert got.num_chiplets == packing_by_hand(params, cap) or (not any(params) and got.num_chiplets == 1)
    assert all(w <= cap for w in got.slot_weights)


def test_floret_36_spill_example():
    topo = synthesize_floret(6, 6, 6, seed=0, search_budget=20_000, restarts=2)
    models = {"ten": _chain("ten", [4_000_000] * 10)}
    r = map_queue(_queue(("ten", 1)), models, topo, CAP)
    plan = r.plans[0]
    first = topo.sfc.petals[0]
    assert plan.chiplets[:6] == first
    assert len(plan.spillovers) == 1 and plan.spillovers[0][0] == 0
    second = topo.sfc.petals[plan.spillovers[0][1]]
    assert plan.chiplets[6:] == second[:4]


def test_second_task_waits():
    topo = gen_mesh(4, 4)
    models = {"big": _chain("big", [4_000_000] * 10)}
    r = map_queue(_queue(("big", 2)), models, topo, CAP)
    assert r.watchdog_triggers == 0
    assert r.plans[1].start == r.plans[0].end


def test_task_too_big():
    models = {"big": _chain("big", [4_000_000] * 20)}
    with pytest.raises(MappingError):
        map_queue(_queue(("big", 1)), models, gen_mesh(4, 4), CAP)


def test_greedy_single_task_hops():
    topo = gen_mesh(10, 10)
    models = {"m": _chain("m", [4_000_000] * 12)}
    plan = map_queue(_queue(("m", 1)), models, topo, CAP).plans[0]
    d = topo.distances
    assert all(d[a][b] == 1 for a, b in zip(plan.chiplets, plan.chiplets[1:]))


def test_utilization_examples():
    assert utilization([], 10) == 0
    full = MappingPlan(0, "m", tuple(range(4)), (), (), 0, 50)
    assert utilization([full], 4) == 1
    half = MappingPlan(1, "m", (0, 1), (), (), 50, 100)
    assert utilization([full, half], 4) == 0.75


def _check_floret_plan(topo, plan):
    where = {c: (i, j) for i, p in enumerate(topo.sfc.petals) for j, c in enumerate(p)}
    jumps = 0
    for a, b in zip(plan.chiplets, plan.chiplets[1:]):
        (pa, ja), (pb, jb) = where[a], where[b]
        if not (pa == pb and jb == ja + 1):
            jumps += 1
        else:
            assert dict(topo.adjacency[a]).get(b) == 1
    assert jumps == len(plan.spillovers)


def test_floret_wl1_full_use(floret10, queues, models):
    r = map_queue(queues["WL1"], models, floret10, CAP)
    check_schedule(r, CAP)
    for p in r.plans:
        _check_floret_plan(floret10, p)
    assert r.fragmentation == 0
    assert r.utilization == pytest.approx(0.92, abs=0.005)  # frozen


def test_smallworld_fragments(topos10, queues, models):
    r = map_queue(queues["WL3"], models, topos10["smallworld"], CAP)
    assert r.fragmentation > 0
    check_schedule(r, CAP)


@pytest.mark.parametrize("wl", ["WL1", "WL2", "WL3", "WL4", "WL5"])
def test_floret_at_least_mesh(topos10, queues, models, wl):
    f = map_queue(queues[wl], models, topos10["floret"], CAP)
    m = map_queue(queues[wl], models, topos10["mesh"], CAP)
    assert f.utilization >= m.utilization


def test_determinism_and_roundtrip(floret10, queues, models):
    durs = shuffled_durations(len(queues["WL2"].tasks), seed=3)
    a = map_queue(queues["WL2"], models, floret10, CAP, durations=durs)
    b = map_queue(queues["WL2"], models, floret10, CAP, durations=durs)
    assert json.dumps(result_to_dict(a)) == json.dumps(result_to_dict(b))
    again = result_from_dict(json.loads(json.dumps(result_to_dict(a))))
    assert result_to_dict(again) == result_to_dict(a)


def test_check_schedule_catches_overlap(queues, models):
    r = map_queue(queues["WL5"], models, gen_mesh(10, 10), CAP)
    bad = result_from_dict(result_to_dict(r))
    first = bad.events[0]
    bad.events.insert(1, type(first)(first.time, first.kind, 999, first.chiplets[:1]))
    with pytest.raises(MappingError):
        check_schedule(bad, CAP)


def test_shuffled_durations():
    d = shuffled_durations(20, seed=1)
    assert sorted(d) == sorted(100 * (1 + i % 4) for i in range(20))
    assert d == shuffled_durations(20, seed=1)
    assert d != shuffled_durations(20, seed=2)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["a", "b", "c"]), st.integers(1, 3)), min_size=1, max_size=6),
       st.integers(0, 1000), st.sampled_from(["floret", "greedy"]))
def test_termination_and_invariants(entries, seed, strategy):
    topo = synthesize_floret(6, 6, 4, seed=1, search_budget=2000, restarts=1)
    models = {"a": _chain("a", [4_000_000] * 7), "b": _chain("b", [2_000_000] * 5),
              "c": _chain("c", [9_000_000, 100, 0, 5])}
    q = _queue(*entries)
    durs = shuffled_durations(len(q.tasks), seed)
    r = map_queue(q, models, topo, CAP, strategy=strategy, durations=durs)
    assert len(r.plans) == len(q.tasks)
    assert r.watchdog_triggers == 0
    assert r.makespan <= sum(durs)
    check_schedule(r, CAP)
