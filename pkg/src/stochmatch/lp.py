"""Matching LPs and a dense tableau simplex solver.

Both builders produce ``maximize c.x  s.t.  A x <= b,  x >= 0``. The solver
is a two-phase tableau method with Bland's rule, sized for instances of at
most a few hundred variables.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .core import Edge, FractionalMatching, Instance

PIVOT_TOL = 1e-9


class LpStatus(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


@dataclass
class LpProblem:
    """``maximize objective . x`` subject to ``A x <= rhs`` and ``x >= 0``."""

    variables: list[str]
    objective: np.ndarray
    A: np.ndarray
    rhs: np.ndarray
    row_names: list[str] = field(default_factory=list)
    # x-variable column for every edge; auxiliary columns are not listed
    edge_columns: dict[Edge, int] = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.variables)
        self.objective = np.asarray(self.objective, dtype=float).reshape(n)
        self.rhs = np.asarray(self.rhs, dtype=float).reshape(-1)
        self.A = np.asarray(self.A, dtype=float).reshape(len(self.rhs), n)
        if not self.row_names:
            self.row_names = [f"r{k}" for k in range(self.A.shape[0])]
        if len(self.row_names) != self.A.shape[0]:
            raise ValueError("row_names must match the number of rows")
        if not np.all(np.isfinite(self.rhs)):
            raise ValueError("right-hand sides must be finite")

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    def dump(self) -> str:
        """Plain-text listing of variables, objective and rows."""
        lines = [f"variables {self.n_vars}"]
        lines += [f"  {k}: {name}" for k, name in enumerate(self.variables)]
        lines.append("maximize")
        lines.append("  " + _linear_repr(self.objective, self.variables))
        lines.append(f"subject to {self.n_rows}")
        for name, row, b in zip(self.row_names, self.A, self.rhs):
            lines.append(f"  {name}: {_linear_repr(row, self.variables)} <= {b!r}")
        lines.append("bounds")
        lines.append("  all variables >= 0")
        return "\n".join(lines) + "\n"


def _linear_repr(coeffs, names) -> str:
    terms = [f"{c!r} {n}" for c, n in zip(coeffs, names) if c != 0.0]
    return " + ".join(terms) if terms else "0"


@dataclass
class LpSolution:
    status: LpStatus
    objective: float
    values: np.ndarray
    variables: list[str]

    def value(self, name: str) -> float:
        return float(self.values[self.variables.index(name)])


def _edge_list(inst: Instance) -> list[Edge]:
    return [(t.id, j) for t in inst.online_types for j in t.neighbors]


def _build(inst: Instance, with_aux: bool) -> LpProblem:
    edges = _edge_list(inst)
    n_x = len(edges)
    variables = [f"x[{i},{j}]" for i, j in edges]
    if with_aux:
        variables += [f"z[{i},{j}]" for i, j in edges]
    n = len(variables)
    c = np.zeros(n)
    for k, (i, j) in enumerate(edges):
        c[k] = inst.weight(i, j)

    rows: list[np.ndarray] = []
    rhs: list[float] = []
    names: list[str] = []

    def add(row, b, name):
        rows.append(row)
        rhs.append(b)
        names.append(name)

    by_type: dict[str, list[int]] = {}
    by_offline: dict[str, list[int]] = {}
    for k, (i, j) in enumerate(edges):
        by_type.setdefault(i, []).append(k)
        by_offline.setdefault(j, []).append(k)

    for t in inst.online_types:
        if t.id in by_type:
            row = np.zeros(n)
            row[by_type[t.id]] = 1.0
            add(row, t.rate, f"rate[{t.id}]")
    for j in inst.offline:
        if j in by_offline:
            row = np.zeros(n)
            row[by_offline[j]] = 1.0
            add(row, 1.0, f"cap[{j}]")
    if with_aux:
        for k, (i, j) in enumerate(edges):
            # z >= 2x - rate, as 2x - z <= rate
            row = np.zeros(n)
            row[k] = 2.0
            row[n_x + k] = -1.0
            add(row, inst.rate(i), f"pos[{i},{j}]")
        one_minus_ln2 = 1.0 - math.log(2.0)
        for j in inst.offline:
            if j in by_offline:
                row = np.zeros(n)
                row[[n_x + k for k in by_offline[j]]] = 1.0
                add(row, one_minus_ln2, f"jl[{j}]")

    A = np.vstack(rows) if rows else np.zeros((0, n))
    return LpProblem(variables, c, A, np.asarray(rhs, dtype=float), names, {e: k for k, e in enumerate(edges)})


def build_jaillet_lu(inst: Instance) -> LpProblem:
    return _build(inst, with_aux=True)


def build_basic_matching(inst: Instance) -> LpProblem:
    return _build(inst, with_aux=False)


def _pivot(T: np.ndarray, r: int, c: int):
    T[r] /= T[r, c]
    col = T[:, c].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])
    T[:, c] = 0.0
    T[r, c] = 1.0


def _run_simplex(T: np.ndarray, basis: list[int], allowed: int, tol: float, max_iter: int) -> LpStatus:
    """Pivot until optimal. Row -1 of ``T`` holds reduced costs, last column the rhs.

    Only the first ``allowed`` columns may enter the basis.
    """
    m = T.shape[0] - 1
    for _ in range(max_iter):
        costs = T[-1, :allowed]
        candidates = np.flatnonzero(costs < -tol)
        if candidates.size == 0:
            return LpStatus.OPTIMAL
        enter = int(candidates[0])
        column = T[:m, enter]
        positive = np.flatnonzero(column > tol)
        if positive.size == 0:
            return LpStatus.UNBOUNDED
        ratios = T[positive, -1] / column[positive]
        best = ratios.min()
        ties = positive[ratios <= best + tol * max(1.0, abs(best))]
        leave = int(min(ties, key=lambda r: basis[r]))
        _pivot(T, leave, enter)
        basis[leave] = enter
    raise RuntimeError("simplex iteration limit reached")


def solve(p: LpProblem, tol: float = PIVOT_TOL, max_iter: int = 100_000) -> LpSolution:
    """Maximize ``p`` with a two-phase dense tableau simplex and Bland's rule."""
    m, n = p.A.shape
    if n == 0:
        feasible = bool(np.all(p.rhs >= -tol))
        status = LpStatus.OPTIMAL if feasible else LpStatus.INFEASIBLE
        return LpSolution(status, 0.0, np.zeros(0), list(p.variables))

    A = p.A.copy()
    b = p.rhs.copy()
    sign = np.where(b < 0, -1.0, 1.0)
    A *= sign[:, None]
    b *= sign
    needs_artificial = np.flatnonzero(sign < 0)
    k = needs_artificial.size

    # columns: x (n) | slack (m) | artificial (k) | rhs
    width = n + m + k + 1
    T = np.zeros((m + 1, width))
    T[:m, :n] = A
    T[:m, n : n + m] = np.diag(sign)
    T[:m, -1] = b
    basis = [n + r for r in range(m)]
    for a, r in enumerate(needs_artificial):
        T[r, n + m + a] = 1.0
        basis[r] = n + m + a

    if k:
        # phase 1: maximize -(sum of artificials)
        T[-1, n + m : n + m + k] = 1.0
        for r in needs_artificial:
            T[-1] -= T[r]
        _run_simplex(T, basis, n + m + k, tol, max_iter)
        if -T[-1, -1] > tol * max(1.0, float(np.abs(b).max())):
            return LpSolution(LpStatus.INFEASIBLE, math.nan, np.full(n, math.nan), list(p.variables))
        # drive remaining artificials out of the basis
        keep = []
        for r in range(m):
            if basis[r] >= n + m:
                row = T[r, : n + m]
                nz = np.flatnonzero(np.abs(row) > tol)
                if nz.size:
                    _pivot(T, r, int(nz[0]))
                    basis[r] = int(nz[0])
                    keep.append(r)
            else:
                keep.append(r)
        T = np.vstack([T[keep], T[-1:]])
        T = np.delete(T, np.s_[n + m : n + m + k], axis=1)
        basis = [basis[r] for r in keep]

    T[-1, :] = 0.0
    T[-1, :n] = -p.objective
    for r, col in enumerate(basis):
        if T[-1, col] != 0.0:
            T[-1] -= T[-1, col] * T[r]
    status = _run_simplex(T, basis, n + m, tol, max_iter)
    if status is LpStatus.UNBOUNDED:
        return LpSolution(status, math.inf, np.full(n, math.nan), list(p.variables))

    values = np.zeros(n)
    for r, col in enumerate(basis):
        if col < n:
            values[col] = T[r, -1]
    values[np.abs(values) < tol * 1e-3] = 0.0
    values = np.maximum(values, 0.0)
    return LpSolution(LpStatus.OPTIMAL, float(p.objective @ values), values, list(p.variables))


def solution_to_matching(p: LpProblem, sol: LpSolution) -> FractionalMatching:
    """Strip auxiliary variables and return the edge flows."""
    if sol.status is not LpStatus.OPTIMAL:
        raise ValueError(f"cannot convert a {sol.status.value} solution")
    return FractionalMatching({e: float(sol.values[k]) for e, k in p.edge_columns.items()})


def solve_jaillet_lu(inst: Instance) -> tuple[FractionalMatching, float]:
    p = build_jaillet_lu(inst)
    sol = solve(p)
    return solution_to_matching(p, sol), sol.objective


def solve_basic_matching(inst: Instance) -> tuple[FractionalMatching, float]:
    p = build_basic_matching(inst)
    sol = solve(p)
    return solution_to_matching(p, sol), sol.objective
