"""Edge-weighted online stochastic matching under Poisson arrivals."""
from .bounds import make_gadget, min_ratio, ratio_first, ratio_second, survival_bound
from .core import (
    EdgeClass,
    FractionalMatching,
    Instance,
    InvalidInputError,
    PreprocessedInstance,
    ValidationReport,
    classify,
    validate_instance,
    validate_matching,
    validate_preprocessed,
)
from .engine import ArrivalSequence, MatchResult, Policy, RunStats, monte_carlo, sample_arrivals
from .estimators import MultistageSuggestedMatching, SuggestedMatching
from .preprocess import SplitMap, preprocess

__version__ = "0.1.0"

__all__ = [
    "ArrivalSequence",
    "EdgeClass",
    "FractionalMatching",
    "Instance",
    "InvalidInputError",
    "MatchResult",
    "MultistageSuggestedMatching",
    "Policy",
    "PreprocessedInstance",
    "RunStats",
    "SplitMap",
    "SuggestedMatching",
    "ValidationReport",
    "classify",
    "make_gadget",
    "min_ratio",
    "monte_carlo",
    "preprocess",
    "ratio_first",
    "ratio_second",
    "sample_arrivals",
    "survival_bound",
    "validate_instance",
    "validate_matching",
    "validate_preprocessed",
]
