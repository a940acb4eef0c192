"""Poisson arrivals, online policies and the Monte Carlo harness.

Randomness comes from :mod:`stochmatch._philox`: arrival ``k`` of
replication ``r`` uses counter ``k`` in the arrivals domain for its gap and
type, and counter ``k`` in the policy domain for its coin. The
single-replication functions (:func:`run_multistage`, :func:`run_suggested`)
and the vectorized :func:`monte_carlo` therefore make identical decisions
on identical ``(seed, replication)`` pairs.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import _philox
from .core import (
    Edge,
    EdgeClass,
    FractionalMatching,
    Instance,
    PreprocessedInstance,
    is_dummy,
)
from .preprocess import SplitMap

RELABEL = 2
DEFAULT_BATCH = 1 << 16


class Policy(str, Enum):
    MULTISTAGE = "multistage"
    SUGGESTED = "suggested"


@dataclass(frozen=True)
class ArrivalSequence:
    times: tuple[float, ...]
    types: tuple[str, ...]
    seed: int
    replication: int

    def __len__(self):
        return len(self.times)

    def __iter__(self):
        return iter(zip(self.times, self.types))


@dataclass
class MatchResult:
    pairs: list[tuple[int, str, float]]
    match_time: dict[str, float]
    weight: float

    def matched_edges(self, arr: ArrivalSequence) -> list[Edge]:
        return [(arr.types[k], j) for k, j, _ in self.pairs]


def _type_table(inst: Instance):
    rates = np.array([t.rate for t in inst.online_types], dtype=float)
    total = float(rates.sum())
    cum = np.cumsum(rates) / total if total > 0 else rates
    return rates, total, cum


def _arrival_uniforms(seed: int, reps: np.ndarray, k: int):
    return _philox.uniforms(seed, reps, _philox.ARRIVALS, k)


def _coin(seed: int, reps, k):
    return _philox.uniforms(seed, reps, _philox.POLICY, k)[0]


def sample_arrivals(inst: Instance, seed: int, replication: int) -> ArrivalSequence:
    """Superposed Poisson process on ``[0, 1]``: exponential gaps, then a type draw."""
    _, total, cum = _type_table(inst)
    reps = np.array([replication], dtype=np.uint64)
    times, types = _sample_times(total, cum, seed, reps)
    n = int(np.isfinite(times[0]).sum())
    ids = inst.type_ids()
    return ArrivalSequence(
        tuple(float(t) for t in times[0, :n]), tuple(ids[c] for c in types[0, :n]), seed, replication
    )


def sample_arrivals_via_split(
    sm: SplitMap, seed: int, replication: int
) -> ArrivalSequence:
    """Sample arrivals of the pre-split types and relabel each into a child.

    The parent rate is the sum of its children's rates, so the result has the
    same law as sampling the split instance directly.
    """
    parents = [(i, kids) for i, kids in sm.children.items() if kids]
    parent_inst = Instance([(i, math.fsum(r for _, r in kids), {}) for i, kids in parents], [])
    base = sample_arrivals(parent_inst, seed, replication)
    rep = np.array([replication], dtype=np.uint64)
    by_parent = dict(parents)
    types = []
    for k, i in enumerate(base.types):
        kids = by_parent[i]
        u = float(_philox.uniforms(seed, rep, RELABEL, k)[0][0])
        cum = np.cumsum([r for _, r in kids])
        idx = min(int(np.searchsorted(cum / cum[-1], u, side="left")), len(kids) - 1)
        types.append(kids[idx][0])
    return ArrivalSequence(base.times, tuple(types), seed, replication)


def _second_class_neighbors(pinst: PreprocessedInstance, i: str) -> tuple[str, str]:
    nbrs = pinst.neighbors(i)
    if len(nbrs) != 2 or nbrs[0] == nbrs[1]:
        raise AssertionError(f"second-class type {i!r} must have two distinct neighbors, got {nbrs}")
    return nbrs[0], nbrs[1]


def run_multistage(pinst: PreprocessedInstance, arr: ArrivalSequence, seed: int) -> MatchResult:
    """Multistage Suggested Matching on one realization.

    First-class arrivals always try their neighbor. Second-class arrivals are
    discarded on ``[0, t0]``, try a uniformly chosen neighbor on ``(t0, t1]``
    and, after ``t1``, try the neighbor that alone was unmatched at ``t1`` if
    there is one, else a uniformly chosen neighbor.
    """
    inst = pinst.instance
    t0, t1 = pinst.t0, pinst.t1
    match_time = {j: math.inf for j in inst.offline}
    snapshot: dict[str, bool] | None = None
    pairs = []
    weight = 0.0
    rep = np.array([arr.replication], dtype=np.uint64)
    for k, (t, i) in enumerate(arr):
        if snapshot is None and t > t1:
            snapshot = {j: mt == math.inf for j, mt in match_time.items()}
        cls = pinst.type_class(i)
        if cls is None:
            continue
        if cls is EdgeClass.FIRST:
            target = pinst.neighbors(i)[0]
        else:
            a, b = _second_class_neighbors(pinst, i)
            if t <= t0:
                continue
            target = None
            if t > t1:
                if snapshot[a] != snapshot[b]:
                    target = a if snapshot[a] else b
            if target is None:
                target = a if _coin(seed, rep, k)[0] <= 0.5 else b
        if match_time[target] == math.inf:
            match_time[target] = t
            pairs.append((k, target, t))
            weight += inst.weight(i, target)
    return MatchResult(pairs, match_time, weight)


def run_suggested(inst: Instance, fm: FractionalMatching, arr: ArrivalSequence, seed: int) -> MatchResult:
    """Suggested Matching: try neighbor ``j`` with probability ``x_ij / rate_i``."""
    match_time = {j: math.inf for j in inst.offline}
    pairs = []
    weight = 0.0
    rep = np.array([arr.replication], dtype=np.uint64)
    for k, (t, i) in enumerate(arr):
        rate = inst.rate(i)
        if rate <= 0.0:
            continue
        u = float(_coin(seed, rep, k)[0])
        acc = 0.0
        target = None
        for j in inst.neighbors(i):
            acc += fm.flow(i, j) / rate
            if u <= acc:
                target = j
                break
        if target is not None and match_time[target] == math.inf:
            match_time[target] = t
            pairs.append((k, target, t))
            weight += inst.weight(i, target)
    return MatchResult(pairs, match_time, weight)


def offline_optimum(inst: Instance, arr: ArrivalSequence) -> float:
    """Maximum-weight matching between realized arrivals and offline vertices."""
    if len(arr) == 0 or not inst.offline:
        return 0.0
    col = {j: c for c, j in enumerate(inst.offline)}
    W = np.zeros((len(arr), len(inst.offline)))
    for r, i in enumerate(arr.types):
        for j in inst.neighbors(i):
            W[r, col[j]] = inst.weight(i, j)
    rows, cols = linear_sum_assignment(W, maximize=True)
    return float(W[rows, cols].sum())


@dataclass
class RunStats:
    policy: str
    n_trials: int
    seed: int
    edges: list[Edge]
    edge_class: list[str]
    x: np.ndarray
    w: np.ndarray
    matched_count: np.ndarray
    offline: list[str]
    time_grid: np.ndarray
    survival_count: np.ndarray
    # (j, j') pairs sharing a second-class type; conditioning on A_j'(t1)
    cond_pairs: list[tuple[str, str]] = field(default_factory=list)
    cond_base: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    cond_survival: np.ndarray = field(default_factory=lambda: np.zeros((0, 2, 0), dtype=np.int64))
    opt_total: float | None = None
    t0: float | None = None
    t1: float | None = None

    @property
    def ratio(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.x > 0, self.matched_count / (self.n_trials * self.x), np.nan)

    @property
    def stderr(self) -> np.ndarray:
        p = self.matched_count / self.n_trials
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.x > 0, np.sqrt(p * (1 - p) / self.n_trials) / self.x, np.nan)

    @property
    def survival(self) -> np.ndarray:
        return self.survival_count / self.n_trials

    @property
    def survival_stderr(self) -> np.ndarray:
        p = self.survival
        return np.sqrt(p * (1 - p) / self.n_trials)

    def conditional_survival(self, pair_index: int, k: int) -> tuple[np.ndarray, np.ndarray, int]:
        """``E[A_j(t) | A_j'(t1) = k]`` on the grid, its standard error, and the sample size."""
        n = int(self.cond_base[pair_index, k])
        if n == 0:
            nan = np.full(len(self.time_grid), np.nan)
            return nan, nan, 0
        p = self.cond_survival[pair_index, k] / n
        return p, np.sqrt(p * (1 - p) / n), n

    @property
    def mean_weight(self) -> float:
        return float(self.matched_count @ self.w) / self.n_trials

    @property
    def mean_opt(self) -> float | None:
        return None if self.opt_total is None else self.opt_total / self.n_trials

    def survival_of(self, j: str) -> np.ndarray:
        return self.survival[self.offline.index(j)]

    def to_csv(self, analytic: dict[Edge, float] | None = None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        header = ["edge_i", "edge_j", "class", "x_ij", "matched_count", "ratio", "stderr"]
        if analytic is not None:
            header.append("analytic_bound")
        writer.writerow(header)
        for k, (i, j) in enumerate(self.edges):
            row = [i, j, self.edge_class[k], repr(float(self.x[k])), int(self.matched_count[k]),
                   repr(float(self.ratio[k])), repr(float(self.stderr[k]))]
            if analytic is not None:
                row.append(repr(float(analytic.get((i, j), math.nan))))
            writer.writerow(row)
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "policy": self.policy,
            "n_trials": self.n_trials,
            "seed": self.seed,
            "t0": self.t0,
            "t1": self.t1,
            "mean_weight": self.mean_weight,
            "mean_offline_optimum": self.mean_opt,
            "edges": [
                {
                    "i": i,
                    "j": j,
                    "class": self.edge_class[k],
                    "x_ij": float(self.x[k]),
                    "weight": float(self.w[k]),
                    "matched_count": int(self.matched_count[k]),
                    "ratio": float(self.ratio[k]),
                    "stderr": float(self.stderr[k]),
                }
                for k, (i, j) in enumerate(self.edges)
            ],
            "time_grid": [float(t) for t in self.time_grid],
            "survival": {j: [float(v) for v in self.survival[c]] for c, j in enumerate(self.offline)},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


class _Compiled:
    """Array form of an instance for the vectorized simulator."""

    def __init__(self, inst: Instance, fm: FractionalMatching, pinst: PreprocessedInstance | None):
        self.inst = inst
        self.offline = list(inst.offline)
        col = {j: c for c, j in enumerate(self.offline)}
        self.rates, self.total, self.cum = _type_table(inst)
        self.edges: list[Edge] = []
        edge_index = {}
        for t in inst.online_types:
            for j in t.neighbors:
                if fm.flow(t.id, j) > 0.0:
                    edge_index[(t.id, j)] = len(self.edges)
                    self.edges.append((t.id, j))
        self.x = np.array([fm.flow(i, j) for i, j in self.edges], dtype=float)
        self.w = np.array([inst.weight(i, j) for i, j in self.edges], dtype=float)
        n_types = len(inst.online_types)

        # suggested matching tables: cumulative x/rate over positive neighbors
        deg = max((sum(1 for j in t.neighbors if (t.id, j) in edge_index) for t in inst.online_types), default=0)
        deg = max(deg, 1)
        self.sugg_cum = np.full((n_types, deg), np.inf)
        self.sugg_nb = np.full((n_types, deg), -1, dtype=np.int64)
        self.sugg_edge = np.full((n_types, deg), -1, dtype=np.int64)
        for r, t in enumerate(inst.online_types):
            acc = 0.0
            c = 0
            for j in t.neighbors:
                if (t.id, j) in edge_index and t.rate > 0.0:
                    acc += fm.flow(t.id, j) / t.rate
                    self.sugg_cum[r, c] = acc
                    self.sugg_nb[r, c] = col[j]
                    self.sugg_edge[r, c] = edge_index[(t.id, j)]
                    c += 1

        self.edge_class = [""] * len(self.edges)
        self.cond_pairs: list[tuple[int, int]] = []
        if pinst is not None:
            # 0 first, 1 second, -1 inactive
            self.cls = np.full(n_types, -1, dtype=np.int64)
            self.nb = np.full((n_types, 2), -1, dtype=np.int64)
            self.nb_edge = np.full((n_types, 2), -1, dtype=np.int64)
            pairs = set()
            for r, t in enumerate(inst.online_types):
                cls = pinst.type_class(t.id)
                if cls is EdgeClass.FIRST:
                    j = pinst.neighbors(t.id)[0]
                    self.cls[r] = 0
                    self.nb[r] = (col[j], col[j])
                    self.nb_edge[r] = (edge_index[(t.id, j)],) * 2
                elif cls is EdgeClass.SECOND:
                    a, b = _second_class_neighbors(pinst, t.id)
                    self.cls[r] = 1
                    self.nb[r] = (col[a], col[b])
                    self.nb_edge[r] = (edge_index[(t.id, a)], edge_index[(t.id, b)])
                    pairs.add((col[a], col[b]))
                    pairs.add((col[b], col[a]))
            self.edge_class = [pinst.edge_class[e].value for e in self.edges]
            self.cond_pairs = sorted(pairs)


def _sample_times(total: float, cum: np.ndarray, seed: int, reps: np.ndarray):
    """Arrival times (inf past the horizon) and type indices, shape (B, K).

    Only replications still inside the horizon draw further gaps.
    """
    B = reps.size
    times = np.full((B, 0), np.inf)
    types = np.zeros((B, 0), dtype=np.int64)
    if total <= 0.0:
        return times, types
    last = np.zeros(B)
    alive = np.arange(B)
    k = 0
    while alive.size:
        if k == times.shape[1]:
            grow = max(8, k)
            times = np.hstack([times, np.full((B, grow), np.inf)])
            types = np.hstack([types, np.zeros((B, grow), dtype=np.int64)])
        u_gap, u_type = _arrival_uniforms(seed, reps[alive], k)
        now = last[alive] + (-np.log(u_gap)) / total
        last[alive] = now
        inside = now <= 1.0
        alive = alive[inside]
        times[alive, k] = now[inside]
        types[alive, k] = np.minimum(np.searchsorted(cum, u_type[inside], side="left"), len(cum) - 1)
        k += 1
    keep = max(k - 1, 0)
    return times[:, :keep], types[:, :keep]


def _simulate_batch(comp: _Compiled, policy: Policy, seed: int, reps: np.ndarray, t0: float, t1: float,
                    grid: np.ndarray, with_opt: bool):
    B = reps.size
    J = len(comp.offline)
    times, types = _sample_times(comp.total, comp.cum, seed, reps)
    n_arrivals = np.isfinite(times).sum(axis=1)
    # busiest replications first, so the rows still running form a prefix
    order = np.argsort(-n_arrivals, kind="stable")
    reps, times, types, n_arrivals = reps[order], times[order], types[order], n_arrivals[order]
    match_time = np.full((B, J), np.inf)
    edge_hits = np.zeros(len(comp.edges), dtype=np.int64)
    if policy is Policy.MULTISTAGE:
        snapshot = np.zeros((B, J), dtype=bool)
        snapped = np.zeros(B, dtype=bool)
    for k in range(times.shape[1]):
        m = int(np.count_nonzero(n_arrivals > k))
        if m == 0:
            break
        rows = np.arange(m)
        t = times[:m, k]
        ty = types[:m, k]
        mt = match_time[:m]
        coin = _coin(seed, reps[:m], k)
        if policy is Policy.MULTISTAGE:
            take = ~snapped[:m] & (t > t1)
            if take.any():
                idx = np.flatnonzero(take)
                snapshot[idx] = np.isinf(mt[idx])
                snapped[idx] = True
            cls = comp.cls[ty]
            side = np.where(coin <= 0.5, 0, 1)
            second = cls == 1
            late = second & (t > t1)
            if late.any():
                snap = snapshot[:m]
                free_a = snap[rows, comp.nb[ty, 0]]
                free_b = snap[rows, comp.nb[ty, 1]]
                lone = late & (free_a != free_b)
                side = np.where(lone, np.where(free_a, 0, 1), side)
            side = np.where(cls == 0, 0, side)
            target = comp.nb[ty, side]
            edge = comp.nb_edge[ty, side]
            attempt = (cls == 0) | (second & (t > t0))
        else:
            cum = comp.sugg_cum[ty]
            slot = np.argmax(coin[:, None] <= cum, axis=1)
            hit = coin <= cum[rows, slot]
            target = comp.sugg_nb[ty, slot]
            edge = comp.sugg_edge[ty, slot]
            attempt = hit & (target >= 0)
        safe_target = np.where(attempt, target, 0)
        success = attempt & np.isinf(mt[rows, safe_target])
        if success.any():
            mt[rows[success], target[success]] = t[success]
            edge_hits += np.bincount(edge[success], minlength=len(comp.edges))

    survival = np.stack([(match_time > g).sum(axis=0) for g in grid], axis=1) if grid.size else np.zeros((J, 0), np.int64)
    P = len(comp.cond_pairs)
    cond_base = np.zeros((P, 2), dtype=np.int64)
    cond_surv = np.zeros((P, 2, grid.size), dtype=np.int64)
    for p, (j, jp) in enumerate(comp.cond_pairs):
        free_jp = match_time[:, jp] > t1
        for kk, mask in ((0, ~free_jp), (1, free_jp)):
            cond_base[p, kk] = int(mask.sum())
            if grid.size:
                cond_surv[p, kk] = (match_time[mask, j][:, None] > grid[None, :]).sum(axis=0)

    opt = None
    if with_opt:
        ids = comp.inst.type_ids()
        opt = []
        for b in range(B):
            n = int(n_arrivals[b])
            arr = ArrivalSequence(tuple(times[b, :n]), tuple(ids[c] for c in types[b, :n]), seed, int(reps[b]))
            opt.append(offline_optimum(comp.inst, arr))
    return edge_hits, survival.astype(np.int64), cond_base, cond_surv, opt


def _thread_count() -> int:
    raw = os.environ.get("STOCHMATCH_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    return n if n > 0 else (os.cpu_count() or 1)


def monte_carlo(
    model: PreprocessedInstance | tuple[Instance, FractionalMatching],
    policy: Policy | str = Policy.MULTISTAGE,
    n_trials: int = 10_000,
    seed: int = 0,
    time_grid=None,
    with_opt: bool = False,
    batch_size: int = DEFAULT_BATCH,
    threads: int | None = None,
) -> RunStats:
    """Run ``n_trials`` independent replications and aggregate per-edge statistics.

    ``model`` is a preprocessed instance, or an ``(instance, matching)`` pair
    for the Suggested Matching baseline on an arbitrary feasible matching.
    Results depend only on ``(seed, n_trials)``, not on batching or threads.
    """
    policy = Policy(policy)
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    if isinstance(model, PreprocessedInstance):
        pinst = model
        inst, fm = model.instance, model.matching
        t0, t1 = model.t0, model.t1
    else:
        if policy is Policy.MULTISTAGE:
            raise ValueError("the multistage policy needs a PreprocessedInstance")
        pinst = None
        inst, fm = model
        t0 = t1 = None
    comp = _Compiled(inst, fm, pinst)
    grid = np.linspace(0.0, 1.0, 21) if time_grid is None else np.asarray(time_grid, dtype=float)
    t1_cond = 1.0 if t1 is None else t1

    starts = range(0, n_trials, batch_size)

    def work(start):
        reps = np.arange(start, min(start + batch_size, n_trials), dtype=np.uint64)
        return _simulate_batch(comp, policy, seed, reps, t0 or 0.0, t1_cond, grid, with_opt)

    n_threads = threads if threads is not None else _thread_count()
    if n_threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            parts = list(pool.map(work, starts))
    else:
        parts = [work(s) for s in starts]

    hits = sum(p[0] for p in parts)
    survival = sum(p[1] for p in parts)
    cond_base = sum(p[2] for p in parts)
    cond_surv = sum(p[3] for p in parts)
    # exactly rounded, so independent of batching
    opt_total = math.fsum(v for p in parts for v in p[4]) if with_opt else None
    col = comp.offline
    return RunStats(
        policy=policy.value,
        n_trials=n_trials,
        seed=seed,
        edges=list(comp.edges),
        edge_class=list(comp.edge_class),
        x=comp.x,
        w=comp.w,
        matched_count=np.asarray(hits, dtype=np.int64),
        offline=list(comp.offline),
        time_grid=grid,
        survival_count=np.asarray(survival, dtype=np.int64),
        cond_pairs=[(col[a], col[b]) for a, b in comp.cond_pairs],
        cond_base=np.asarray(cond_base, dtype=np.int64).reshape(-1, 2),
        cond_survival=np.asarray(cond_surv, dtype=np.int64).reshape(-1, 2, grid.size),
        opt_total=opt_total,
        t0=t0,
        t1=t1,
    )


def real_edges(stats: RunStats) -> list[int]:
    """Indices of edges whose endpoints are both non-dummy."""
    return [k for k, (i, j) in enumerate(stats.edges) if not is_dummy(i) and not is_dummy(j)]
