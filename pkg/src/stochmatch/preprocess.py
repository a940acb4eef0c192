"""Reduce a Jaillet-Lu-feasible fractional matching to the two-class form.

Three weight-preserving steps, each returning a new instance and matching:

* :func:`pad_online` saturates every type (``x_i = rate_i``) with dummy
  offline vertices;
* :func:`pad_offline` saturates every offline vertex (``x_j = 1``) with one
  dummy online type;
* :func:`split_types` splits each type into children whose positive flows
  are all ``rate`` or ``rate/2``.

Dummy vertices carry the ``~dummy/`` prefix and weight-0 edges.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .core import (
    DUMMY_PREFIX,
    TOL,
    Edge,
    FractionalMatching,
    Instance,
    InvalidInputError,
    PreprocessedInstance,
    classify,
)

BOUNDARY_TOL = 1e-12
MIN_CHILD_RATE = 1e-12


@dataclass
class SplitMap:
    """Children of every original online type and their rates.

    An arriving vertex of original type ``i`` is relabeled as child ``c``
    with probability ``rate(c) / rate(i)``.
    """

    children: dict[str, list[tuple[str, float]]] = field(default_factory=dict)

    def probabilities(self, i: str) -> list[tuple[str, float]]:
        kids = self.children[i]
        total = math.fsum(r for _, r in kids)
        if total <= 0.0:
            return []
        return [(c, r / total) for c, r in kids]

    def parent_of(self) -> dict[str, str]:
        return {c: i for i, kids in self.children.items() for c, _ in kids}

    def to_dict(self) -> dict:
        return {i: [{"child": c, "rate": r} for c, r in kids] for i, kids in self.children.items()}

    @classmethod
    def from_dict(cls, data: dict) -> "SplitMap":
        return cls({str(i): [(str(k["child"]), float(k["rate"])) for k in kids] for i, kids in data.items()})

    @classmethod
    def identity(cls, inst: Instance) -> "SplitMap":
        return cls({t.id: [(t.id, t.rate)] for t in inst.online_types})


def _fresh_id(base: str, taken: set[str]) -> str:
    name, k = base, 1
    while name in taken:
        name = f"{base}.{k}"
        k += 1
    taken.add(name)
    return name


def _adjacency(inst: Instance, i: str) -> list[tuple[str, float]]:
    return [(j, inst.weight(i, j)) for j in inst.neighbors(i)]


def _ceil_stable(v: float) -> int:
    return math.ceil(v - TOL)


def pad_online(inst: Instance, fm: FractionalMatching) -> tuple[Instance, FractionalMatching]:
    """Route each type's unused rate to ``max(ceil(gap), 2)`` dummy offline vertices."""
    taken = set(inst.offline) | set(inst.type_ids())
    offline = list(inst.offline)
    types = []
    x = dict(fm.x)
    for t in inst.online_types:
        adjacency = _adjacency(inst, t.id)
        gap = t.rate - fm.type_flow(t.id)
        if gap > TOL:
            m = max(_ceil_stable(gap), 2)
            for k in range(m):
                j = _fresh_id(f"{DUMMY_PREFIX}pad/{t.id}/{k}", taken)
                offline.append(j)
                adjacency.append((j, 0.0))
                x[(t.id, j)] = gap / m
        types.append((t.id, t.rate, adjacency))
    return Instance(types, offline), FractionalMatching(x)


def pad_offline(inst: Instance, fm: FractionalMatching) -> tuple[Instance, FractionalMatching]:
    """Add two dummy offline vertices and one dummy type filling every ``x_j`` to 1."""
    taken = set(inst.offline) | set(inst.type_ids())
    extra = [_fresh_id(f"{DUMMY_PREFIX}fill/{k}", taken) for k in range(2)]
    offline = list(inst.offline) + extra
    dummy_type = _fresh_id(f"{DUMMY_PREFIX}filler", taken)
    x = dict(fm.x)
    adjacency = []
    for j in offline:
        residual = 1.0 - fm.offline_flow(j)
        if residual > TOL:
            adjacency.append((j, 0.0))
            x[(dummy_type, j)] = residual
    rate = math.fsum(x[(dummy_type, j)] for j, _ in adjacency)
    types = [(t.id, t.rate, _adjacency(inst, t.id)) for t in inst.online_types]
    types.append((dummy_type, rate, adjacency))
    return Instance(types, offline), FractionalMatching(x)


def _split_one(rate: float, flows: list[tuple[str, float]]) -> list[tuple[float, list[tuple[str, float]]]]:
    """Interval construction for one type.

    Edge ``u`` occupies ``[B_{u-1}, B_u)`` of ``[0, rate)``. Position ``p`` in
    ``[0, rate/2)`` is paired with ``p + rate/2``; each maximal piece on
    which both targets are constant becomes one child type.
    """
    half = rate / 2.0
    bounds = [0.0]
    for _, v in flows:
        bounds.append(bounds[-1] + v)
    cuts = [0.0, half]
    for b in bounds[1:-1]:
        if b < half:
            cuts.append(b)
        elif b > half:
            cuts.append(b - half)
    cuts.sort()
    dedup = [cuts[0]]
    for c in cuts[1:]:
        if c - dedup[-1] > BOUNDARY_TOL:
            dedup.append(c)
    if half - dedup[-1] <= BOUNDARY_TOL:
        dedup[-1] = half
    else:
        dedup.append(half)

    def target(theta: float) -> int:
        for u in range(len(flows)):
            if theta < bounds[u + 1]:
                return u
        return len(flows) - 1

    children = []
    for lo, hi in zip(dedup[:-1], dedup[1:]):
        width = hi - lo
        if 2.0 * width < MIN_CHILD_RATE:
            continue
        mid = 0.5 * (lo + hi)
        a, b = target(mid), target(mid + half)
        if a == b:
            children.append((2.0 * width, [(flows[a][0], 2.0 * width)]))
        else:
            children.append((2.0 * width, [(flows[a][0], width), (flows[b][0], width)]))
    return children


def split_types(inst: Instance, fm: FractionalMatching) -> tuple[Instance, FractionalMatching, SplitMap]:
    """Split every type so each positive flow equals its rate or half of it."""
    taken = set(inst.offline) | set(inst.type_ids())
    types = []
    x: dict[Edge, float] = {}
    split = {}
    for t in inst.online_types:
        flows = [(j, fm.flow(t.id, j)) for j in t.neighbors if fm.flow(t.id, j) > 0.0]
        kids = []
        if flows and t.rate > 0.0:
            for u, (rate, child_flows) in enumerate(_split_one(t.rate, flows)):
                cid = _fresh_id(f"{t.id}#{u}", taken)
                types.append((cid, rate, [(j, inst.weight(t.id, j)) for j, _ in child_flows]))
                for j, v in child_flows:
                    x[(cid, j)] = v
                kids.append((cid, rate))
        split[t.id] = kids
    return Instance(types, inst.offline), FractionalMatching(x), SplitMap(split)


def preprocess(
    inst: Instance, fm: FractionalMatching, t0: float = 0.05, t1: float = 0.75
) -> tuple[PreprocessedInstance, SplitMap]:
    """Pad, split and classify. Total weight is unchanged."""
    if not (0.0 <= t0 <= t1 <= 1.0):
        raise InvalidInputError(f"boundary times must satisfy 0 <= t0 <= t1 <= 1, got t0={t0}, t1={t1}")
    inst1, fm1 = pad_online(inst, fm)
    inst2, fm2 = pad_offline(inst1, fm1)
    inst3, fm3, sm = split_types(inst2, fm2)
    try:
        pinst = classify(inst3, fm3, t0, t1)
    except InvalidInputError as exc:
        raise RuntimeError(f"split output failed classification: {exc}") from exc
    return pinst, sm
