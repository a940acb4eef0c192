"""Random instances and random feasible matchings for tests and experiments."""
from __future__ import annotations

import math

import numpy as np

from .core import FractionalMatching, Instance, constraint1_load

ONE_MINUS_LN2 = 1.0 - math.log(2.0)


def random_instance(
    rng: np.random.Generator,
    n_types: int | None = None,
    n_offline: int | None = None,
    max_side: int = 12,
    density: float | None = None,
    max_rate: float = 2.0,
    max_weight: float = 10.0,
) -> Instance:
    n_types = int(rng.integers(1, max_side + 1)) if n_types is None else n_types
    n_offline = int(rng.integers(1, max_side + 1)) if n_offline is None else n_offline
    density = float(rng.uniform(0.2, 1.0)) if density is None else density
    offline = [f"j{c}" for c in range(n_offline)]
    types = []
    for r in range(n_types):
        mask = rng.random(n_offline) < density
        if not mask.any():
            mask[rng.integers(n_offline)] = True
        nbrs = [offline[c] for c in np.flatnonzero(mask)]
        rng.shuffle(nbrs)
        rate = float(rng.uniform(0.0, max_rate))
        types.append((f"i{r}", rate, {j: float(rng.uniform(0.0, max_weight)) for j in nbrs}))
    return Instance(types, offline)


def _feasible(inst: Instance, x: dict) -> bool:
    fm = FractionalMatching(x)
    if any(fm.type_flow(t.id) > t.rate for t in inst.online_types):
        return False
    if any(fm.offline_flow(j) > 1.0 for j in inst.offline):
        return False
    return all(v <= ONE_MINUS_LN2 for v in constraint1_load(inst, fm).values())


def random_feasible_matching(inst: Instance, rng: np.random.Generator) -> FractionalMatching:
    """Random Jaillet-Lu-feasible flows: random directions scaled down by bisection."""
    raw = {}
    for t in inst.online_types:
        share = rng.dirichlet(np.ones(len(t.neighbors))) if t.neighbors else []
        fill = rng.uniform(0.0, 1.0)
        for j, s in zip(t.neighbors, share):
            raw[(t.id, j)] = t.rate * fill * float(s) * (rng.random() < 0.9)
    lo, hi = 0.0, 1.0
    if _feasible(inst, raw):
        lo = 1.0
    for _ in range(60):
        if lo == hi:
            break
        mid = 0.5 * (lo + hi)
        if _feasible(inst, {e: v * mid for e, v in raw.items()}):
            lo = mid
        else:
            hi = mid
    return FractionalMatching({e: v * lo for e, v in raw.items()})
