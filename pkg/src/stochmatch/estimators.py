"""Estimator-style wrappers around the LP, preprocessing and simulation steps.

``fit`` takes an instance (and optionally a precomputed matching), solves the
guiding LP and prepares the policy; ``predict`` runs the policy on one
arrival sequence; ``simulate`` runs the Monte Carlo harness. Parameters are
exposed through ``get_params``/``set_params`` so the objects compose with
scikit-learn tooling such as ``clone``.
"""
from __future__ import annotations

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import bounds, engine, lp
from .preprocess import preprocess
from .utils.validation import check_arrivals, check_boundary_times, check_instance, check_matching


class MultistageSuggestedMatching(BaseEstimator):
    """Three-stage online policy guided by a Jaillet-Lu LP solution.

    Parameters
    ----------
    t0, t1 : float
        Stage boundaries, ``0 <= t0 <= t1 <= 1``.
    n_trials : int
        Replications used by :meth:`simulate` and :meth:`score`.
    random_state : int
        Seed of the counter-based generator.
    """

    def __init__(self, t0=bounds.DEFAULT_T0, t1=bounds.DEFAULT_T1, n_trials=10_000, random_state=0):
        self.t0 = t0
        self.t1 = t1
        self.n_trials = n_trials
        self.random_state = random_state

    def fit(self, X, y=None, matching=None):
        inst = check_instance(X)
        t0, t1 = check_boundary_times(self.t0, self.t1)
        if matching is None:
            problem = lp.build_jaillet_lu(inst)
            solution = lp.solve(problem)
            if solution.status is not lp.LpStatus.OPTIMAL:
                raise RuntimeError(f"Jaillet-Lu LP returned {solution.status.value}")
            fm = lp.solution_to_matching(problem, solution)
        else:
            fm = check_matching(inst, matching)
        self.instance_ = inst
        self.matching_ = fm
        self.lp_objective_ = fm.objective(inst)
        self.preprocessed_, self.split_map_ = preprocess(inst, fm, t0, t1)
        return self

    def analytic_ratios(self) -> dict:
        """Guaranteed ratio of every positive edge of the preprocessed instance."""
        check_is_fitted(self, "preprocessed_")
        return bounds.edge_ratio_bounds(self.preprocessed_)

    def sample(self, replication: int = 0) -> engine.ArrivalSequence:
        check_is_fitted(self, "preprocessed_")
        return engine.sample_arrivals(self.preprocessed_.instance, self.random_state, replication)

    def predict(self, X) -> engine.MatchResult:
        check_is_fitted(self, "preprocessed_")
        arr = check_arrivals(X, self.preprocessed_.instance)
        return engine.run_multistage(self.preprocessed_, arr, self.random_state)

    def simulate(self, n_trials=None, time_grid=None, with_opt=False) -> engine.RunStats:
        check_is_fitted(self, "preprocessed_")
        return engine.monte_carlo(
            self.preprocessed_,
            engine.Policy.MULTISTAGE,
            self.n_trials if n_trials is None else n_trials,
            self.random_state,
            time_grid=time_grid,
            with_opt=with_opt,
        )

    def score(self, X=None, y=None) -> float:
        """Mean achieved weight over the LP objective (an empirical competitive ratio)."""
        stats = self.simulate()
        return stats.mean_weight / self.lp_objective_ if self.lp_objective_ > 0 else float("nan")


class SuggestedMatching(BaseEstimator):
    """Baseline policy trying neighbor ``j`` with probability ``x_ij / rate_i``.

    Parameters
    ----------
    lp : {"basic", "jaillet_lu"}
        Which LP guides the policy.
    n_trials : int
    random_state : int
    """

    def __init__(self, lp="basic", n_trials=10_000, random_state=0):
        self.lp = lp
        self.n_trials = n_trials
        self.random_state = random_state

    def fit(self, X, y=None, matching=None):
        inst = check_instance(X)
        if self.lp not in ("basic", "jaillet_lu"):
            raise ValueError(f"unknown lp {self.lp!r}")
        if matching is None:
            build = lp.build_basic_matching if self.lp == "basic" else lp.build_jaillet_lu
            problem = build(inst)
            solution = lp.solve(problem)
            if solution.status is not lp.LpStatus.OPTIMAL:
                raise RuntimeError(f"LP returned {solution.status.value}")
            fm = lp.solution_to_matching(problem, solution)
        else:
            fm = check_matching(inst, matching, jaillet_lu=self.lp == "jaillet_lu")
        self.instance_ = inst
        self.matching_ = fm
        self.lp_objective_ = fm.objective(inst)
        return self

    def sample(self, replication: int = 0) -> engine.ArrivalSequence:
        check_is_fitted(self, "matching_")
        return engine.sample_arrivals(self.instance_, self.random_state, replication)

    def predict(self, X) -> engine.MatchResult:
        check_is_fitted(self, "matching_")
        arr = check_arrivals(X, self.instance_)
        return engine.run_suggested(self.instance_, self.matching_, arr, self.random_state)

    def simulate(self, n_trials=None, time_grid=None, with_opt=False) -> engine.RunStats:
        check_is_fitted(self, "matching_")
        return engine.monte_carlo(
            (self.instance_, self.matching_),
            engine.Policy.SUGGESTED,
            self.n_trials if n_trials is None else n_trials,
            self.random_state,
            time_grid=time_grid,
            with_opt=with_opt,
        )

    def score(self, X=None, y=None) -> float:
        stats = self.simulate()
        return stats.mean_weight / self.lp_objective_ if self.lp_objective_ > 0 else float("nan")

