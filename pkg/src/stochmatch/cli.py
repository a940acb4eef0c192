"""Online stochastic matching toolkit: LPs, preprocessing, simulation and bounds.

Exit codes: 0 success, 1 validation failure, 2 I/O failure, 3 internal
invariant violation.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import bounds, engine, lp
from .preprocess import pad_offline, pad_online, preprocess, split_types
from .core import (
    FractionalMatching,
    Instance,
    InvalidInputError,
    classify,
    dump_json,
    load_json,
    validate_instance,
    validate_matching,
    validate_preprocessed,
)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_IO = 2
EXIT_INTERNAL = 3


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _read_json(path):
    try:
        return load_json(path)
    except FileNotFoundError:
        raise CliError(f"no such file: {path}", EXIT_IO)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read {path}: {exc}", EXIT_IO)


def _read_instance(path) -> Instance:
    try:
        return Instance.from_dict(_read_json(path))
    except InvalidInputError as exc:
        raise CliError(str(exc), EXIT_INVALID)


def _read_matching(path) -> FractionalMatching:
    try:
        return FractionalMatching.from_dict(_read_json(path))
    except InvalidInputError as exc:
        raise CliError(str(exc), EXIT_INVALID)


def _write_text(path, text: str):
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}", EXIT_IO)


def _write_json(path, data):
    try:
        dump_json(data, path)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}", EXIT_IO)


def _emit(data):
    sys.stdout.write(json.dumps(data, indent=2) + "\n")


def _require_valid(inst: Instance):
    report = validate_instance(inst)
    if not report.ok:
        _emit({"stage": "validate", **report.to_dict()})
        raise CliError("instance is invalid", EXIT_INVALID)


def _time_grid(points: int) -> np.ndarray:
    if points < 2:
        raise CliError("--grid-points must be >= 2", EXIT_INVALID)
    return np.linspace(0.0, 1.0, points)


def _check_run_config(args):
    if not (0.0 <= args.t0 <= args.t1 <= 1.0):
        raise CliError(f"need 0 <= t0 <= t1 <= 1, got t0={args.t0}, t1={args.t1}", EXIT_INVALID)
    if getattr(args, "trials", 1) < 1:
        raise CliError("--trials must be >= 1", EXIT_INVALID)


def cmd_validate(args) -> int:
    inst = _read_instance(args.instance)
    report = validate_instance(inst)
    if report.ok and args.matching:
        report.extend(validate_matching(inst, _read_matching(args.matching)))
    _emit(report.to_dict())
    return EXIT_OK if report.ok else EXIT_INVALID


def _solve(inst: Instance, which: str, dump_path=None):
    problem = lp.build_jaillet_lu(inst) if which == "jaillet-lu" else lp.build_basic_matching(inst)
    if dump_path:
        _write_text(dump_path, problem.dump())
    solution = lp.solve(problem)
    if solution.status is not lp.LpStatus.OPTIMAL:
        raise CliError(f"LP solve returned {solution.status.value}", EXIT_INTERNAL)
    fm = lp.solution_to_matching(problem, solution)
    report = validate_matching(inst, fm) if which == "jaillet-lu" else None
    if report is not None and not report.ok:
        raise CliError("LP solution failed feasibility check: " + "; ".join(report.violations), EXIT_INTERNAL)
    return fm, solution.objective


def cmd_solve_lp(args) -> int:
    inst = _read_instance(args.instance)
    _require_valid(inst)
    fm, objective = _solve(inst, args.lp, args.dump_lp)
    if args.out:
        _write_json(args.out, fm.to_dict())
    _emit({"lp": args.lp, "objective": objective, "n_edges": len(fm.x)})
    return EXIT_OK


def cmd_preprocess(args) -> int:
    _check_run_config(args)
    inst = _read_instance(args.instance)
    _require_valid(inst)
    fm = _read_matching(args.matching)
    report = validate_matching(inst, fm)
    if not report.ok:
        _emit({"stage": "validate", **report.to_dict()})
        return EXIT_INVALID
    split = None
    if args.step == "pad-online":
        inst2, fm2 = pad_online(inst, fm)
    elif args.step == "pad-offline":
        inst2, fm2 = pad_offline(inst, fm)
    elif args.step == "split":
        inst2, fm2, split = split_types(inst, fm)
    else:
        pinst, split = preprocess(inst, fm, args.t0, args.t1)
        check = validate_preprocessed(pinst)
        if not check.ok:
            raise CliError("preprocess output violates invariants: " + "; ".join(check.violations), EXIT_INTERNAL)
        inst2, fm2 = pinst.instance, pinst.matching
    _write_json(args.out_instance, inst2.to_dict())
    _write_json(args.out_matching, fm2.to_dict())
    if split is not None and args.out_split:
        _write_json(args.out_split, split.to_dict())
    _emit({"step": args.step, "objective_before": fm.objective(inst), "objective_after": fm2.objective(inst2),
           "types": len(inst2.online_types), "offline": len(inst2.offline)})
    return EXIT_OK


def _as_preprocessed(inst, fm, t0, t1):
    try:
        pinst = classify(inst, fm, t0, t1)
        if validate_preprocessed(pinst).ok:
            return pinst
    except InvalidInputError:
        pass
    pinst, _ = preprocess(inst, fm, t0, t1)
    return pinst


def _write_stats(stats, out_prefix, analytic=None):
    _write_text(f"{out_prefix}.csv", stats.to_csv(analytic))
    data = stats.to_dict()
    if analytic is not None:
        for row in data["edges"]:
            row["analytic_bound"] = analytic.get((row["i"], row["j"]), math.nan)
    _write_json(f"{out_prefix}.json", data)


def _summary(stats, analytic=None) -> dict:
    ratio, err = stats.ratio, stats.stderr
    k = int(np.nanargmin(ratio - 3 * err)) if ratio.size else None
    out = {
        "policy": stats.policy,
        "n_trials": stats.n_trials,
        "mean_weight": stats.mean_weight,
        "mean_offline_optimum": stats.mean_opt,
        "min_ratio": float(np.nanmin(ratio)) if ratio.size else None,
        "min_ratio_minus_3se": float(np.nanmin(ratio - 3 * err)) if ratio.size else None,
        "worst_edge": list(stats.edges[k]) if k is not None else None,
    }
    if analytic:
        out["min_analytic_bound"] = min(analytic.values())
    return out


def cmd_simulate(args) -> int:
    _check_run_config(args)
    inst = _read_instance(args.instance)
    _require_valid(inst)
    fm = _read_matching(args.matching)
    grid = _time_grid(args.grid_points)
    if args.policy == "multistage":
        report = validate_matching(inst, fm)
        if not report.ok:
            _emit({"stage": "validate", **report.to_dict()})
            return EXIT_INVALID
        pinst = _as_preprocessed(inst, fm, args.t0, args.t1)
        stats = engine.monte_carlo(pinst, "multistage", args.trials, args.seed, grid, args.with_opt)
        analytic = bounds.edge_ratio_bounds(pinst)
    else:
        stats = engine.monte_carlo((inst, fm), "suggested", args.trials, args.seed, grid, args.with_opt)
        analytic = None
    if args.out:
        _write_stats(stats, args.out, analytic)
    _emit(_summary(stats, analytic))
    return EXIT_OK


def run_pipeline(inst: Instance, trials: int, seed: int, t0: float, t1: float, grid, with_opt: bool = False):
    """LP, preprocessing and both policies. Returns ``(pinst, {policy: RunStats}, analytic, lp_objective)``."""
    fm, objective = _solve(inst, "jaillet-lu")
    pinst, _ = preprocess(inst, fm, t0, t1)
    check = validate_preprocessed(pinst)
    if not check.ok:
        raise CliError("preprocess: " + "; ".join(check.violations), EXIT_INTERNAL)
    if abs(pinst.matching.objective(pinst.instance) - objective) > 1e-9 * max(1, len(inst.edges)):
        raise CliError("preprocess changed the total weight", EXIT_INTERNAL)
    analytic = bounds.edge_ratio_bounds(pinst)
    runs = {
        policy: engine.monte_carlo(pinst, policy, trials, seed, grid, with_opt)
        for policy in ("multistage", "suggested")
    }
    return pinst, runs, analytic, objective


def cmd_pipeline(args) -> int:
    _check_run_config(args)
    inst = _read_instance(args.instance)
    _require_valid(inst)
    grid = _time_grid(args.grid_points)
    pinst, runs, analytic, objective = run_pipeline(inst, args.trials, args.seed, args.t0, args.t1, grid,
                                                    args.with_opt)
    out = Path(args.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create {out}: {exc}", EXIT_IO)
    _write_json(out / "preprocessed_instance.json", pinst.instance.to_dict())
    _write_json(out / "preprocessed_matching.json", pinst.matching.to_dict())
    for policy, stats in runs.items():
        _write_stats(stats, out / policy, analytic)
    summary = {
        "lp_objective": objective,
        "t0": args.t0,
        "t1": args.t1,
        "seed": args.seed,
        "trials": args.trials,
        "policies": {p: _summary(s, analytic if p == "multistage" else None) for p, s in runs.items()},
    }
    _write_json(out / "summary.json", summary)
    _emit(summary)
    return EXIT_OK


def cmd_bounds(args) -> int:
    _check_run_config(args)
    if args.grid_size < 2:
        raise CliError("--grid-size must be >= 2", EXIT_INVALID)
    curve = bounds.min_ratio(args.t0, args.t1, args.grid_size)
    report = bounds.appendix_check(args.grid_size)
    result = {"ratio_curve": curve.to_dict(), "appendix": report.to_dict()}
    if args.search:
        t0s, t1s, best = bounds.search_params((0.0, 0.2), (0.5, 1.0), 0.01)
        result["search"] = {"t0": t0s, "t1": t1s, "ratio": best}
    if args.out_csv:
        _write_text(args.out_csv, curve.to_csv())
    if args.out_json:
        _write_json(args.out_json, result)
    _emit(result)
    return EXIT_OK


def cmd_search_params(args) -> int:
    try:
        t0s, t1s, best = bounds.search_params(
            (args.t0_min, args.t0_max), (args.t1_min, args.t1_max), args.step, args.grid_size
        )
    except ValueError as exc:
        raise CliError(str(exc), EXIT_INVALID)
    _emit({"t0": t0s, "t1": t1s, "ratio": best})
    return EXIT_OK


def cmd_opt(args) -> int:
    inst = _read_instance(args.instance)
    _require_valid(inst)
    if args.trials < 1:
        raise CliError("--trials must be >= 1", EXIT_INVALID)
    values = []
    for r in range(args.replication, args.replication + args.trials):
        arr = engine.sample_arrivals(inst, args.seed, r)
        values.append(engine.offline_optimum(inst, arr))
    _emit({"seed": args.seed, "replications": [args.replication, args.replication + args.trials],
           "mean_offline_optimum": math.fsum(values) / len(values),
           "values": values if args.trials <= 100 else None})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stochmatch", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def times(p):
        p.add_argument("--t0", type=float, default=bounds.DEFAULT_T0)
        p.add_argument("--t1", type=float, default=bounds.DEFAULT_T1)

    def sim(p):
        times(p)
        p.add_argument("--trials", type=int, default=100_000)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--grid-points", type=int, default=21)
        p.add_argument("--with-opt", action="store_true", help="also average the per-realization offline optimum")

    p = sub.add_parser("validate", help="check an instance (and optionally a matching)")
    p.add_argument("instance")
    p.add_argument("--matching")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("solve-lp", help="solve the Jaillet-Lu or basic matching LP")
    p.add_argument("instance")
    p.add_argument("--lp", choices=["jaillet-lu", "basic"], default="jaillet-lu")
    p.add_argument("--out", help="write the matching JSON here")
    p.add_argument("--dump-lp", help="write a plain-text listing of the LP here")
    p.set_defaults(func=cmd_solve_lp)

    p = sub.add_parser("preprocess", help="pad and split a feasible matching")
    p.add_argument("instance")
    p.add_argument("matching")
    p.add_argument("--step", choices=["pad-online", "pad-offline", "split", "all"], default="all")
    p.add_argument("--out-instance", required=True)
    p.add_argument("--out-matching", required=True)
    p.add_argument("--out-split")
    times(p)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("simulate", help="Monte Carlo run of one policy")
    p.add_argument("instance")
    p.add_argument("matching")
    p.add_argument("--policy", choices=["multistage", "suggested"], default="multistage")
    p.add_argument("--out", help="output prefix for .csv and .json")
    sim(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("pipeline", help="LP, preprocessing and both policies end to end")
    p.add_argument("instance")
    p.add_argument("--out-dir", required=True)
    sim(p)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("bounds", help="analytic ratio curves and the monotonicity check")
    times(p)
    p.add_argument("--grid-size", type=int, default=10_001)
    p.add_argument("--search", action="store_true")
    p.add_argument("--out-csv")
    p.add_argument("--out-json")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("search-params", help="grid search over (t0, t1)")
    p.add_argument("--t0-min", type=float, default=0.0)
    p.add_argument("--t0-max", type=float, default=0.2)
    p.add_argument("--t1-min", type=float, default=0.5)
    p.add_argument("--t1-max", type=float, default=1.0)
    p.add_argument("--step", type=float, default=0.01)
    p.add_argument("--grid-size", type=int, default=201)
    p.set_defaults(func=cmd_search_params)

    p = sub.add_parser("opt", help="offline optimum on sampled realizations")
    p.add_argument("instance")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--replication", type=int, default=0)
    p.add_argument("--trials", type=int, default=1)
    p.set_defaults(func=cmd_opt)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"stochmatch: {exc}", file=sys.stderr)
        return exc.code
    except (AssertionError, RuntimeError) as exc:
        print(f"stochmatch: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
