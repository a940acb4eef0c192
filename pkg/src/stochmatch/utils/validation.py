"""Input validation helpers shared by the estimators and the CLI."""
from __future__ import annotations

import os
from collections.abc import Mapping

from ..core import (
    FractionalMatching,
    Instance,
    InvalidInputError,
    load_json,
    validate_instance,
    validate_matching,
)


def check_instance(X) -> Instance:
    """Coerce ``X`` (an Instance, a JSON-like dict or a path) to a valid Instance."""
    if isinstance(X, (str, os.PathLike)):
        X = load_json(X)
    if isinstance(X, Mapping):
        X = Instance.from_dict(X)
    if not isinstance(X, Instance):
        raise TypeError(f"expected an Instance, a mapping or a path, got {type(X).__name__}")
    report = validate_instance(X)
    if not report.ok:
        raise InvalidInputError("invalid instance: " + "; ".join(report.violations))
    return X


def check_matching(inst: Instance, fm, jaillet_lu: bool = True) -> FractionalMatching:
    """Coerce and check a fractional matching against ``inst``.

    With ``jaillet_lu=False`` only the plain matching constraints are checked.
    """
    if isinstance(fm, (str, os.PathLike)):
        fm = load_json(fm)
    if isinstance(fm, Mapping) and "x" in fm:
        fm = FractionalMatching.from_dict(fm)
    if not isinstance(fm, FractionalMatching):
        raise TypeError(f"expected a FractionalMatching, got {type(fm).__name__}")
    problems = validate_matching(inst, fm).violations
    if not jaillet_lu:
        problems = [p for p in problems if "Constraint 1" not in p]
    if problems:
        raise InvalidInputError("infeasible matching: " + "; ".join(problems))
    return fm


def check_boundary_times(t0: float, t1: float) -> tuple[float, float]:
    t0, t1 = float(t0), float(t1)
    if not (0.0 <= t0 <= t1 <= 1.0):
        raise InvalidInputError(f"boundary times must satisfy 0 <= t0 <= t1 <= 1, got t0={t0}, t1={t1}")
    return t0, t1


def check_arrivals(arr, inst: Instance):
    times = list(arr.times)
    if any(b <= a for a, b in zip(times, times[1:])):
        raise InvalidInputError("arrival times must be strictly increasing")
    if times and (times[0] < 0.0 or times[-1] > 1.0):
        raise InvalidInputError("arrival times must lie in [0, 1]")
    unknown = {i for i in arr.types if i not in inst}
    if unknown:
        raise InvalidInputError(f"arrivals reference unknown types {sorted(unknown)}")
    return arr
