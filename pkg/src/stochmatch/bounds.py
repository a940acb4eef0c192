"""Closed-form survival bounds and per-edge competitive ratios.

For an offline vertex with first-class flow ``y`` and stage boundaries
``t0 <= t1``, the unmatched probability is exactly ``exp(-y t)`` on
``[0, t0]``, exactly ``exp(-y t0 - (t - t0))`` on ``(t0, t1]`` and at least
``exp(-y t0 - (t1 - t0) - (2 - y)(t - t1))`` afterwards. Integrating these
gives the ratios guaranteed on first- and second-class edges.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import EdgeClass, FractionalMatching, Instance, PreprocessedInstance

LN2 = math.log(2.0)
Y_MAX = 1.0 - LN2
DEFAULT_T0 = 0.05
DEFAULT_T1 = 0.75
_Y_EPS = 1e-12
_DOMAIN_TOL = 1e-12


def _check_times(t0, t1):
    if not (0.0 <= t0 <= t1 <= 1.0):
        raise ValueError(f"need 0 <= t0 <= t1 <= 1, got t0={t0}, t1={t1}")


def _check_y(y):
    y = np.asarray(y, dtype=float)
    if np.any(y < -_DOMAIN_TOL) or np.any(y > Y_MAX + _DOMAIN_TOL) or np.any(~np.isfinite(y)):
        raise ValueError(f"y must lie in [0, 1 - ln 2], got {y}")
    return np.clip(y, 0.0, Y_MAX)


def survival_bound(y, t, t0: float = DEFAULT_T0, t1: float = DEFAULT_T1):
    """Unmatched-probability curve of an offline vertex at time ``t``.

    Exact for ``t <= t1`` and a lower bound after ``t1``. Accepts scalars or
    arrays for ``y`` and ``t``.
    """
    _check_times(t0, t1)
    y = _check_y(y)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0) or np.any(t > 1.0):
        raise ValueError("t must lie in [0, 1]")
    early = -y * t
    middle = -y * t0 - (t - t0)
    late = -y * t0 - (t1 - t0) - (2.0 - y) * (t - t1)
    out = np.exp(np.where(t <= t0, early, np.where(t <= t1, middle, late)))
    return float(out) if out.ndim == 0 else out


def _first_term(y, t0):
    # (1 - exp(-y t0)) / y with its y -> 0 limit t0
    y = np.asarray(y, dtype=float)
    small = y < _Y_EPS
    safe = np.where(small, 1.0, y)
    return np.where(small, t0, -np.expm1(-safe * t0) / safe)


def _tail(y, t0, t1):
    # integral of the late-stage bound over (t1, 1]
    return np.exp(-y * t0 - (t1 - t0)) * (-np.expm1(-(2.0 - y) * (1.0 - t1))) / (2.0 - y)


def ratio_first(y, t0: float = DEFAULT_T0, t1: float = DEFAULT_T1):
    """Guaranteed ratio of a first-class edge (rate ``y`` of first-class flow at its vertex)."""
    _check_times(t0, t1)
    y = _check_y(y)
    out = _first_term(y, t0) + np.exp(-y * t0) * (-math.expm1(-(t1 - t0))) + _tail(y, t0, t1)
    return float(out) if out.ndim == 0 else out


def ratio_second(y, t0: float = DEFAULT_T0, t1: float = DEFAULT_T1):
    """Guaranteed ratio of a second-class edge, after bounding the other vertex's survival at ``t1``."""
    _check_times(t0, t1)
    y = _check_y(y)
    boost = 2.0 - math.exp(-(t1 - t0))
    out = np.exp(-y * t0) * (-math.expm1(-(t1 - t0))) + boost * _tail(y, t0, t1)
    return float(out) if out.ndim == 0 else out


def edge_ratio_bounds(pinst: PreprocessedInstance) -> dict:
    """Guaranteed ratio of every positive edge of a preprocessed instance."""
    out = {}
    for (i, j), cls in pinst.edge_class.items():
        fn = ratio_first if cls is EdgeClass.FIRST else ratio_second
        out[(i, j)] = fn(min(pinst.y[j], Y_MAX), pinst.t0, pinst.t1)
    return out


@dataclass
class RatioCurve:
    t0: float
    t1: float
    y: np.ndarray
    first: np.ndarray
    second: np.ndarray
    min_first: float = field(init=False)
    min_second: float = field(init=False)
    argmin_first: float = field(init=False)
    argmin_second: float = field(init=False)

    def __post_init__(self):
        k1 = int(np.argmin(self.first))
        k2 = int(np.argmin(self.second))
        self.min_first, self.argmin_first = float(self.first[k1]), float(self.y[k1])
        self.min_second, self.argmin_second = float(self.second[k2]), float(self.y[k2])

    @property
    def min_ratio(self) -> float:
        return min(self.min_first, self.min_second)

    @property
    def argmin(self) -> float:
        return self.argmin_first if self.min_first <= self.min_second else self.argmin_second

    def nonincreasing(self, tol: float = 1e-12) -> bool:
        return bool(np.all(np.diff(self.first) <= tol) and np.all(np.diff(self.second) <= tol))

    def to_csv(self) -> str:
        lines = ["y,ratio_first,ratio_second"]
        lines += [f"{y!r},{a!r},{b!r}" for y, a, b in zip(self.y.tolist(), self.first.tolist(), self.second.tolist())]
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "t0": self.t0,
            "t1": self.t1,
            "grid_size": int(self.y.size),
            "min_first": self.min_first,
            "argmin_first": self.argmin_first,
            "min_second": self.min_second,
            "argmin_second": self.argmin_second,
            "min_ratio": self.min_ratio,
            "nonincreasing": self.nonincreasing(),
        }


def min_ratio(t0: float = DEFAULT_T0, t1: float = DEFAULT_T1, grid_size: int = 10_001) -> RatioCurve:
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    _check_times(t0, t1)
    y = np.linspace(0.0, Y_MAX, grid_size)
    return RatioCurve(t0, t1, y, ratio_first(y, t0, t1), ratio_second(y, t0, t1))


# Functions of x = y at t0 = 1/20, t1 = 3/4.

def appendix_a(x):
    return _first_term(x, 0.05)


def appendix_b(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-x / 20.0) * (-math.expm1(-0.7))


def appendix_c(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-x / 20.0 - 0.7) * (-np.expm1(-(2.0 - x) / 4.0)) / (2.0 - x)


def derivative_lhs(x):
    x = np.asarray(x, dtype=float)
    return (2.0 - x) * math.expm1(0.7)


def derivative_rhs(x):
    x = np.asarray(x, dtype=float)
    q = np.exp(-(2.0 - x) / 4.0)
    return 20.0 * (2.0 - math.exp(-0.7)) * ((1.0 - q) * (1.0 / (2.0 - x) - 1.0 / 20.0) - 0.25 * q)


def _rhs_bound_low() -> float:
    # monotone pieces evaluated at the ends of [0, (1 - ln 2)/2]
    mid = Y_MAX / 2.0
    q = math.exp(-0.5)
    return 20.0 * (2.0 - math.exp(-0.7)) * ((1.0 - q) * (1.0 / (2.0 - mid) - 1.0 / 20.0) - 0.25 * q)


def _rhs_bound_high() -> float:
    mid = Y_MAX / 2.0
    q = math.exp(-(2.0 - mid) / 4.0)
    return 20.0 * (2.0 - math.exp(-0.7)) * ((1.0 - q) * (1.0 / (1.0 + LN2) - 1.0 / 20.0) - 0.25 * q)


@dataclass
class AppendixReport:
    grid_size: int
    lhs_min: float
    lhs_argmin: float
    rhs_bound_low: float
    rhs_bound_high: float
    checks: dict[str, bool]
    worst_increase: dict[str, float]

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict:
        return {
            "grid_size": self.grid_size,
            "lhs_min": self.lhs_min,
            "lhs_argmin": self.lhs_argmin,
            "rhs_bound_low": self.rhs_bound_low,
            "rhs_bound_high": self.rhs_bound_high,
            "checks": dict(self.checks),
            "worst_increase": dict(self.worst_increase),
            "ok": self.ok,
        }


def appendix_check(grid_size: int = 10_001, tol: float = 1e-12) -> AppendixReport:
    """Verify on a grid that both ratio functions decrease in ``x`` on ``[0, 1 - ln 2]``.

    Checks the sums directly, the rearranged derivative inequality pointwise,
    and that the right-hand side stays under the two piecewise constants.
    """
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    x = np.linspace(0.0, Y_MAX, grid_size)
    a, b, c = appendix_a(x), appendix_b(x), appendix_c(x)
    first = a + b + c
    second = b + (2.0 - math.exp(-0.7)) * c
    lhs = derivative_lhs(x)
    rhs = derivative_rhs(x)
    low = _rhs_bound_low()
    high = _rhs_bound_high()
    half = x <= Y_MAX / 2.0
    inc_first = float(np.max(np.diff(first)))
    inc_second = float(np.max(np.diff(second)))
    k = int(np.argmin(lhs))
    checks = {
        "first_nonincreasing": inc_first <= tol,
        "second_nonincreasing": inc_second <= tol,
        "derivative_inequality": bool(np.all(lhs > rhs)),
        "rhs_below_low_bound": bool(np.all(rhs[half] <= low + tol)),
        "rhs_below_high_bound": bool(np.all(rhs[~half] <= high + tol)),
        "lhs_min_exceeds_rhs_bounds": bool(lhs[k] > max(low, high)),
        "lhs_argmin_at_endpoint": k == grid_size - 1,
    }
    return AppendixReport(
        grid_size=grid_size,
        lhs_min=float(lhs[k]),
        lhs_argmin=float(x[k]),
        rhs_bound_low=low,
        rhs_bound_high=high,
        checks=checks,
        worst_increase={"first": inc_first, "second": inc_second},
    )


def _frange(lo: float, hi: float, step: float) -> np.ndarray:
    if hi < lo:
        return np.zeros(0)
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(n)


def search_params(
    t0_range: tuple[float, float] = (0.0, 0.2),
    t1_range: tuple[float, float] = (0.5, 1.0),
    step: float = 0.01,
    grid_size: int = 201,
) -> tuple[float, float, float]:
    """Grid-maximize the worst per-edge ratio over ``(t0, t1)``.

    Ties go to the smaller ``t0`` and then the smaller ``t1``.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    for lo, hi in (t0_range, t1_range):
        if not (0.0 <= lo <= hi <= 1.0):
            raise ValueError(f"range {lo, hi} must lie within [0, 1]")
    t0s = _frange(*t0_range, step)
    t1s = _frange(*t1_range, step)
    y = np.linspace(0.0, Y_MAX, grid_size)
    best = None
    for t0 in t0s:
        for t1 in t1s:
            if t0 > t1:
                continue
            value = float(min(ratio_first(y, t0, t1).min(), ratio_second(y, t0, t1).min()))
            if best is None or value > best[2]:
                best = (float(t0), float(t1), value)
    if best is None:
        raise ValueError("parameter grid is empty")
    return best


def make_gadget(w1: float = 1.0, w2: float = 1.0) -> tuple[Instance, FractionalMatching]:
    """Two offline vertices sitting exactly at the first-class flow limit.

    Each has a private first-class type of rate ``1 - ln 2``; one shared
    second-class type of rate ``2 ln 2`` sends ``ln 2`` to each. ``w1`` weights
    the first-class edges and ``w2`` the second-class ones.
    """
    if w1 < 0 or w2 < 0:
        raise ValueError("weights must be nonnegative")
    inst = Instance(
        [
            ("first/j", Y_MAX, {"j": w1}),
            ("first/j'", Y_MAX, {"j'": w1}),
            ("second", 2.0 * LN2, {"j": w2, "j'": w2}),
        ],
        ["j", "j'"],
    )
    fm = FractionalMatching(
        {("first/j", "j"): Y_MAX, ("first/j'", "j'"): Y_MAX, ("second", "j"): LN2, ("second", "j'"): LN2}
    )
    return inst, fm
