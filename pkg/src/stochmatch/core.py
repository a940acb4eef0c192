"""Instance and fractional-matching data model.

An :class:`Instance` is the bipartite structure of an online stochastic
matching problem: online vertex *types* that arrive as independent Poisson
processes on ``[0, 1]`` and a fixed set of offline vertices. A
:class:`FractionalMatching` assigns a flow to each edge. The validators in
this module return reports rather than raising, so callers can print every
violation at once.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

TOL = 1e-9
DUMMY_PREFIX = "~dummy/"
ONE_MINUS_LN2 = 1.0 - math.log(2.0)

Edge = tuple[str, str]


def is_dummy(vertex_id: str) -> bool:
    return vertex_id.startswith(DUMMY_PREFIX)


class InvalidInputError(ValueError):
    """Raised when an input violates a precondition of an operation."""


@dataclass(frozen=True)
class OnlineType:
    id: str
    rate: float
    neighbors: tuple[str, ...]


class Instance:
    """Online types with arrival rates, offline vertices and weighted edges.

    Parameters
    ----------
    online_types : iterable of (id, rate, {offline_id: weight})
        Adjacency is kept in the given order; that order fixes the interval
        layout used when types are split.
    offline : iterable of str
        Offline vertex ids.

    The constructor records structural problems instead of raising so that
    :func:`validate_instance` can report them; operations that need a valid
    instance call :func:`ensure_valid_instance`.
    """

    def __init__(
        self,
        online_types: Iterable[tuple[str, float, Mapping[str, float] | Iterable[tuple[str, float]]]],
        offline: Iterable[str],
    ):
        types: list[OnlineType] = []
        weights: dict[Edge, float] = {}
        problems: list[str] = []
        for type_id, rate, adjacency in online_types:
            pairs = list(adjacency.items()) if isinstance(adjacency, Mapping) else list(adjacency)
            neighbors = []
            for j, w in pairs:
                if (type_id, j) in weights:
                    problems.append(f"duplicate edge ({type_id}, {j})")
                    continue
                weights[(type_id, j)] = float(w)
                neighbors.append(j)
            types.append(OnlineType(type_id, float(rate), tuple(neighbors)))
        self._types = tuple(types)
        self._offline = tuple(offline)
        self._weights = weights
        self._structural_problems = tuple(problems)
        self._by_id = {t.id: t for t in types}
        self._total_rate = math.fsum(t.rate for t in types)

    @property
    def online_types(self) -> tuple[OnlineType, ...]:
        return self._types

    @property
    def offline(self) -> tuple[str, ...]:
        return self._offline

    @property
    def edges(self) -> Mapping[Edge, float]:
        return self._weights

    @property
    def total_rate(self) -> float:
        return self._total_rate

    def rate(self, i: str) -> float:
        return self._by_id[i].rate

    def neighbors(self, i: str) -> tuple[str, ...]:
        return self._by_id[i].neighbors

    def weight(self, i: str, j: str) -> float:
        return self._weights.get((i, j), 0.0)

    def type_ids(self) -> list[str]:
        return [t.id for t in self._types]

    def __contains__(self, type_id: str) -> bool:
        return type_id in self._by_id

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __repr__(self):
        return (
            f"Instance(types={len(self._types)}, offline={len(self._offline)}, "
            f"edges={len(self._weights)}, total_rate={self._total_rate:.6g})"
        )

    def to_dict(self) -> dict:
        return {
            "online_types": [
                {
                    "id": t.id,
                    "rate": t.rate,
                    "edges": [{"offline": j, "weight": self._weights[(t.id, j)]} for j in t.neighbors],
                }
                for t in self._types
            ],
            "offline": list(self._offline),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Instance":
        try:
            types = [
                (str(t["id"]), float(t["rate"]), [(str(e["offline"]), float(e["weight"])) for e in t["edges"]])
                for t in data["online_types"]
            ]
            offline = [str(j) for j in data["offline"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidInputError(f"malformed instance document: {exc!r}") from exc
        return cls(types, offline)


class FractionalMatching:
    """Edge flows ``x_ij``. Edges absent from the map carry flow 0."""

    def __init__(self, x: Mapping[Edge, float] | Iterable[tuple[Edge, float]] = ()):
        items = x.items() if isinstance(x, Mapping) else x
        self._x: dict[Edge, float] = {}
        for (i, j), v in items:
            self._x[(i, j)] = self._x.get((i, j), 0.0) + float(v)
        self._by_type: dict[str, float] = {}
        self._by_offline: dict[str, float] = {}
        for (i, j), v in self._x.items():
            self._by_type[i] = self._by_type.get(i, 0.0) + v
            self._by_offline[j] = self._by_offline.get(j, 0.0) + v

    @property
    def x(self) -> Mapping[Edge, float]:
        return self._x

    def flow(self, i: str, j: str) -> float:
        return self._x.get((i, j), 0.0)

    def type_flow(self, i: str) -> float:
        return self._by_type.get(i, 0.0)

    def offline_flow(self, j: str) -> float:
        return self._by_offline.get(j, 0.0)

    def objective(self, inst: Instance) -> float:
        return math.fsum(inst.weight(i, j) * v for (i, j), v in self._x.items())

    def positive_edges(self) -> list[Edge]:
        return [e for e, v in self._x.items() if v > 0.0]

    def __eq__(self, other):
        if not isinstance(other, FractionalMatching):
            return NotImplemented
        return self._x == other._x

    def __repr__(self):
        return f"FractionalMatching({len(self._x)} edges)"

    def to_dict(self) -> dict:
        return {"x": [{"i": i, "j": j, "flow": v} for (i, j), v in self._x.items()]}

    @classmethod
    def from_dict(cls, data: Mapping) -> "FractionalMatching":
        try:
            return cls([((str(r["i"]), str(r["j"])), float(r["flow"])) for r in data["x"]])
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidInputError(f"malformed matching document: {exc!r}") from exc


class EdgeClass(str, Enum):
    FIRST = "First"
    SECOND = "Second"


@dataclass(frozen=True)
class PreprocessedInstance:
    instance: Instance
    matching: FractionalMatching
    edge_class: Mapping[Edge, EdgeClass]
    y: Mapping[str, float]
    t0: float
    t1: float

    def neighbors(self, i: str) -> list[str]:
        return [j for j in self.instance.neighbors(i) if (i, j) in self.edge_class]

    def type_class(self, i: str) -> EdgeClass | None:
        nbrs = self.neighbors(i)
        return self.edge_class[(i, nbrs[0])] if nbrs else None

    def is_dummy_type(self, i: str) -> bool:
        return is_dummy(i)

    def is_dummy_offline(self, j: str) -> bool:
        return is_dummy(j)


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    def __bool__(self):
        return not self.violations

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, message: str):
        self.violations.append(message)

    def extend(self, other: "ValidationReport"):
        self.violations.extend(other.violations)

    def to_dict(self) -> dict:
        return {"ok": self.ok, "violations": list(self.violations)}


def validate_instance(inst: Instance) -> ValidationReport:
    report = ValidationReport()
    for msg in inst._structural_problems:
        report.add(msg)
    seen_types: set[str] = set()
    for t in inst.online_types:
        if t.id in seen_types:
            report.add(f"duplicate online type id {t.id!r}")
        seen_types.add(t.id)
        if not (t.rate >= 0.0) or not math.isfinite(t.rate):
            report.add(f"negative or non-finite rate {t.rate!r} for online type {t.id!r}")
    offline = set()
    for j in inst.offline:
        if j in offline:
            report.add(f"duplicate offline vertex id {j!r}")
        offline.add(j)
    for (i, j), w in inst.edges.items():
        if j not in offline:
            report.add(f"dangling edge ({i}, {j}): offline vertex {j!r} does not exist")
        if not (w >= 0.0) or not math.isfinite(w):
            report.add(f"negative or non-finite weight {w!r} on edge ({i}, {j})")
    expected = sum(t.rate for t in inst.online_types)
    if math.isfinite(expected) and abs(expected - inst.total_rate) > TOL:
        report.add(f"cached total rate {inst.total_rate} differs from sum of rates {expected}")
    return report


def ensure_valid_instance(inst: Instance):
    report = validate_instance(inst)
    if not report.ok:
        raise InvalidInputError("invalid instance: " + "; ".join(report.violations))


def constraint1_load(inst: Instance, fm: FractionalMatching) -> dict[str, float]:
    """Per offline vertex, the sum over types of ``max(2 x_ij - rate_i, 0)``."""
    load = {j: 0.0 for j in inst.offline}
    for (i, j), v in fm.x.items():
        if i in inst and j in load:
            load[j] += max(2.0 * v - inst.rate(i), 0.0)
    return load


def validate_matching(inst: Instance, fm: FractionalMatching) -> ValidationReport:
    """Check Jaillet-Lu feasibility of ``fm`` on ``inst`` within :data:`TOL`."""
    report = ValidationReport()
    for (i, j), v in fm.x.items():
        if (i, j) not in inst.edges:
            if v != 0.0:
                report.add(f"flow {v} on non-edge ({i}, {j})")
            continue
        if not math.isfinite(v) or v < -TOL:
            report.add(f"negative flow {v} on edge ({i}, {j})")
    for t in inst.online_types:
        xi = fm.type_flow(t.id)
        if xi > t.rate + TOL:
            report.add(f"type {t.id!r}: outgoing flow {xi} exceeds rate {t.rate}")
    for j in inst.offline:
        xj = fm.offline_flow(j)
        if xj > 1.0 + TOL:
            report.add(f"offline {j!r}: incoming flow {xj} exceeds 1")
    for j, load in constraint1_load(inst, fm).items():
        if load > ONE_MINUS_LN2 + TOL:
            report.add(f"offline {j!r}: Constraint 1 violated ({load:.12g} > 1 - ln 2 = {ONE_MINUS_LN2:.12g})")
    return report


def classify(inst: Instance, fm: FractionalMatching, t0: float, t1: float) -> PreprocessedInstance:
    """Label every positive edge First (``x = rate``) or Second (``x = rate/2``).

    Raises :class:`InvalidInputError` when some positive flow is neither, or
    when a type's degree does not fit its class.
    """
    if not (0.0 <= t0 <= t1 <= 1.0):
        raise InvalidInputError(f"boundary times must satisfy 0 <= t0 <= t1 <= 1, got t0={t0}, t1={t1}")
    edge_class: dict[Edge, EdgeClass] = {}
    y = {j: 0.0 for j in inst.offline}
    for t in inst.online_types:
        classes = []
        for j in t.neighbors:
            v = fm.flow(t.id, j)
            if v <= 0.0:
                continue
            if abs(v - t.rate) <= TOL:
                cls = EdgeClass.FIRST
            elif abs(v - t.rate / 2.0) <= TOL:
                cls = EdgeClass.SECOND
            else:
                raise InvalidInputError(
                    f"edge ({t.id}, {j}) has flow {v} which is neither rate {t.rate} nor half of it"
                )
            edge_class[(t.id, j)] = cls
            classes.append(cls)
            if cls is EdgeClass.FIRST:
                y[j] += v
        if classes and not (classes == [EdgeClass.FIRST] or classes == [EdgeClass.SECOND] * 2):
            raise InvalidInputError(f"type {t.id!r} has inconsistent positive edges {classes}")
    return PreprocessedInstance(inst, fm, edge_class, y, float(t0), float(t1))


def validate_preprocessed(p: PreprocessedInstance) -> ValidationReport:
    """Check the tightened equalities, the degree structure and the y bound."""
    inst, fm = p.instance, p.matching
    report = validate_matching(inst, fm)
    for t in inst.online_types:
        if abs(fm.type_flow(t.id) - t.rate) > TOL:
            report.add(f"type {t.id!r}: outgoing flow {fm.type_flow(t.id)} != rate {t.rate}")
        nbrs = p.neighbors(t.id)
        classes = [p.edge_class[(t.id, j)] for j in nbrs]
        if classes == [EdgeClass.FIRST]:
            if abs(fm.flow(t.id, nbrs[0]) - t.rate) > TOL:
                report.add(f"type {t.id!r}: first-class flow differs from rate")
        elif classes == [EdgeClass.SECOND] * 2:
            if nbrs[0] == nbrs[1]:
                report.add(f"type {t.id!r}: second-class neighbors coincide")
            for j in nbrs:
                if abs(fm.flow(t.id, j) - t.rate / 2.0) > TOL:
                    report.add(f"type {t.id!r}: second-class flow to {j!r} differs from rate/2")
        elif classes or t.rate > TOL:
            report.add(f"type {t.id!r}: edge classes {classes} fit neither class")
    for j in inst.offline:
        if abs(fm.offline_flow(j) - 1.0) > TOL:
            report.add(f"offline {j!r}: incoming flow {fm.offline_flow(j)} != 1")
        if p.y.get(j, 0.0) > ONE_MINUS_LN2 + TOL:
            report.add(f"offline {j!r}: first-class flow {p.y[j]} exceeds 1 - ln 2")
    for (i, j), v in fm.x.items():
        if v > 0.0 and (i, j) not in p.edge_class:
            report.add(f"positive edge ({i}, {j}) is unclassified")
    if not (0.0 <= p.t0 <= p.t1 <= 1.0):
        report.add(f"invalid boundary times t0={p.t0}, t1={p.t1}")
    return report


def load_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def dump_json(data, path):
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2)
        fh.write("\n")
