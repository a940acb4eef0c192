import json
import math

import numpy as np
import pytest

from stochmatch.core import (
    EdgeClass,
    FractionalMatching,
    Instance,
    constraint1_load,
    is_dummy,
    validate_matching,
    validate_preprocessed,
)
from stochmatch.engine import sample_arrivals_via_split
from stochmatch.generators import random_feasible_matching, random_instance
from stochmatch.lp import solve_jaillet_lu
from stochmatch.preprocess import SplitMap, pad_offline, pad_online, preprocess, split_types

from .conftest import ONE_MINUS_LN2, single_edge
from .oracles import preprocess_problems


def _dummies(inst):
    return [j for j in inst.offline if is_dummy(j)]


def test_pad_online_no_change_when_saturated():
    inst = single_edge()
    inst2, fm2 = pad_online(inst, FractionalMatching({("a", "j"): 1.0}))
    assert inst2 == inst and fm2.x == {("a", "j"): 1.0}


def test_pad_online_three_dummies():
    inst = single_edge(rate=3.0)
    inst2, fm2 = pad_online(inst, FractionalMatching({("a", "j"): 0.5}))
    dummies = _dummies(inst2)
    assert len(dummies) == 3
    for j in dummies:
        assert fm2.flow("a", j) == pytest.approx(2.5 / 3, abs=1e-15)
        assert inst2.weight("a", j) == 0.0
    assert fm2.type_flow("a") == pytest.approx(3.0, abs=1e-12)


def test_pad_online_two_dummies():
    inst2, fm2 = pad_online(single_edge(), FractionalMatching({("a", "j"): 0.9}))
    dummies = _dummies(inst2)
    assert len(dummies) == 2
    assert [fm2.flow("a", j) for j in dummies] == pytest.approx([0.05, 0.05], abs=1e-15)


def test_pad_online_ceil_tolerance():
    # gap = 2 + 1e-12 rounds to 2, not 3
    inst = single_edge(rate=2.5 + 1e-12)
    inst2, _ = pad_online(inst, FractionalMatching({("a", "j"): 0.5}))
    assert len(_dummies(inst2)) == 2


def test_pad_offline_saturated():
    inst = single_edge()
    inst2, fm2 = pad_offline(inst, FractionalMatching({("a", "j"): 1.0}))
    dummy_type = [i for i in inst2.type_ids() if is_dummy(i)]
    assert len(dummy_type) == 1
    d = dummy_type[0]
    assert inst2.rate(d) == 2.0
    assert sorted(inst2.neighbors(d)) == sorted(_dummies(inst2))
    assert all(fm2.flow(d, j) == 1.0 for j in _dummies(inst2))


def test_pad_offline_partial():
    inst = single_edge(rate=0.4)
    inst2, fm2 = pad_offline(inst, FractionalMatching({("a", "j"): 0.4}))
    d = [i for i in inst2.type_ids() if is_dummy(i)][0]
    assert inst2.rate(d) == pytest.approx(2.6, abs=1e-12)
    assert fm2.flow(d, "j") == pytest.approx(0.6, abs=1e-15)


def test_pad_offline_empty():
    inst2, fm2 = pad_offline(Instance([], []), FractionalMatching())
    assert len(inst2.offline) == 2
    (d,) = inst2.type_ids()
    assert inst2.rate(d) == 2.0


def test_split_example():
    inst = Instance([("a", 1.0, {"j1": 1.0, "j2": 2.0})], ["j1", "j2"])
    fm = FractionalMatching({("a", "j1"): 0.4, ("a", "j2"): 0.6})
    inst2, fm2, sm = split_types(inst, fm)
    kids = dict(sm.children["a"])
    assert len(kids) == 2
    by_degree = {len(inst2.neighbors(c)): c for c in kids}
    paired, single = by_degree[2], by_degree[1]
    assert inst2.rate(paired) == pytest.approx(0.8, abs=1e-12)
    assert fm2.flow(paired, "j1") == pytest.approx(0.4, abs=1e-12)
    assert fm2.flow(paired, "j2") == pytest.approx(0.4, abs=1e-12)
    assert inst2.rate(single) == pytest.approx(0.2, abs=1e-12)
    assert list(inst2.neighbors(single)) == ["j2"]
    assert fm2.flow(single, "j2") == pytest.approx(0.2, abs=1e-12)
    assert constraint1_load(inst2, fm2)["j2"] == pytest.approx(0.2, abs=1e-12)
    assert inst2.weight(single, "j2") == 2.0


def test_split_single_neighbor_identity():
    inst = single_edge(rate=0.7, weight=3.0)
    inst2, fm2, sm = split_types(inst, FractionalMatching({("a", "j"): 0.7}))
    (c, r), = sm.children["a"]
    assert r == pytest.approx(0.7, abs=1e-15)
    assert fm2.flow(c, "j") == pytest.approx(0.7, abs=1e-15)
    assert inst2.weight(c, "j") == 3.0


def test_split_half_half():
    inst = Instance([("a", 1.0, {"j1": 1.0, "j2": 1.0})], ["j1", "j2"])
    inst2, fm2, sm = split_types(inst, FractionalMatching({("a", "j1"): 0.5, ("a", "j2"): 0.5}))
    (c, r), = sm.children["a"]
    assert r == pytest.approx(1.0)
    assert fm2.flow(c, "j1") == pytest.approx(0.5) and fm2.flow(c, "j2") == pytest.approx(0.5)


def test_all_zero_matching():
    inst = single_edge()
    pinst, sm = preprocess(inst, FractionalMatching())
    assert pinst.matching.objective(pinst.instance) == 0.0
    assert validate_preprocessed(pinst).ok
    assert all(pinst.instance.weight(i, j) == 0.0 for (i, j) in pinst.matching.x)


def test_lp_optimum_preprocesses(gadget):
    inst, _ = gadget
    fm, obj = solve_jaillet_lu(inst)
    pinst, sm = preprocess(inst, fm)
    assert preprocess_problems(inst, fm, pinst, sm) == []
    assert pinst.matching.objective(pinst.instance) == pytest.approx(obj, abs=1e-9)


def test_gadget_classes(gadget):
    inst, fm = gadget
    pinst, _ = preprocess(inst, fm)
    for (i, j), c in pinst.edge_class.items():
        if i.startswith("first/"):
            assert c is EdgeClass.FIRST
        if i.startswith("second"):
            assert c is EdgeClass.SECOND
    assert pinst.y["j"] == pytest.approx(ONE_MINUS_LN2, abs=1e-12)


def test_idempotent_up_to_relabeling(rng):
    inst = random_instance(rng, max_side=6)
    fm = random_feasible_matching(inst, rng)
    p1, _ = preprocess(inst, fm)
    p2, sm2 = preprocess(p1.instance, p1.matching)
    assert p2.matching.objective(p2.instance) == pytest.approx(p1.matching.objective(p1.instance), abs=1e-12)
    # every type of the first output survives as a single child with identical flows
    for t in p1.instance.online_types:
        (c, r), = sm2.children[t.id]
        assert r == pytest.approx(t.rate, abs=1e-12)
        for j in t.neighbors:
            assert p2.matching.flow(c, j) == pytest.approx(p1.matching.flow(t.id, j), abs=1e-12)
    # the only new structure is the always-added pair of filler vertices
    assert len(p2.instance.offline) == len(p1.instance.offline) + 2


def test_split_map_round_trip(rng):
    inst = random_instance(rng, max_side=5)
    fm = random_feasible_matching(inst, rng)
    _, sm = preprocess(inst, fm)
    assert SplitMap.from_dict(json.loads(json.dumps(sm.to_dict()))) == sm


@pytest.mark.parametrize("seed", range(300))
def test_soundness_random(seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, max_side=8)
    fm = random_feasible_matching(inst, rng)
    assert validate_matching(inst, fm).ok
    pinst, sm = preprocess(inst, fm)
    assert preprocess_problems(inst, fm, pinst, sm) == []
    assert validate_preprocessed(pinst).ok


@pytest.mark.parametrize("seed", range(100))
def test_constraint1_never_increases(seed):
    rng = np.random.default_rng(50_000 + seed)
    inst = random_instance(rng, max_side=8)
    fm = random_feasible_matching(inst, rng)
    steps = [(inst, fm)]
    steps.append(pad_online(*steps[-1]))
    steps.append(pad_offline(*steps[-1]))
    steps.append(split_types(*steps[-1])[:2])
    for (a, fa), (b, fb) in zip(steps, steps[1:]):
        before, after = constraint1_load(a, fa), constraint1_load(b, fb)
        for j in a.offline:
            assert after[j] <= before[j] + 1e-12
        assert max(after.values(), default=0.0) <= ONE_MINUS_LN2 + 1e-9
        assert fb.objective(b) == pytest.approx(fa.objective(a), abs=1e-9 * max(len(a.edges), 1))


def test_via_split_arrival_law():
    # relabeled arrivals are Poisson with the children's rates
    inst = Instance([("a", 1.0, {"j1": 1.0, "j2": 1.0})], ["j1", "j2"])
    fm = FractionalMatching({("a", "j1"): 0.4, ("a", "j2"): 0.6})
    _, sm = preprocess(inst, fm)
    counts = {c: 0 for c, _ in sm.children["a"]}
    reps = 5_000
    for r in range(reps):
        arr = sample_arrivals_via_split(sm, 7, r)
        for _, c in arr:
            if c in counts:
                counts[c] += 1
    for c, rate in sm.children["a"]:
        assert counts[c] / reps == pytest.approx(rate, abs=4 * math.sqrt(rate / reps))
