import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from stochmatch.bounds import make_gadget, ratio_first
from stochmatch.engine import MatchResult
from stochmatch.estimators import MultistageSuggestedMatching, SuggestedMatching


def test_params_round_trip():
    est = MultistageSuggestedMatching(t0=0.1, t1=0.6, n_trials=50, random_state=3)
    assert est.get_params() == {"t0": 0.1, "t1": 0.6, "n_trials": 50, "random_state": 3}
    twin = clone(est)
    assert twin.get_params() == est.get_params()
    est.set_params(t0=0.0)
    assert est.t0 == 0.0


def test_not_fitted():
    with pytest.raises(NotFittedError):
        MultistageSuggestedMatching().simulate()
    with pytest.raises(NotFittedError):
        SuggestedMatching().sample()


def test_multistage_fit_predict(gadget):
    inst, fm = gadget
    est = MultistageSuggestedMatching(n_trials=2000).fit(inst, matching=fm)
    arr = est.sample(0)
    assert isinstance(est.predict(arr), MatchResult)
    ratios = est.analytic_ratios()
    assert ratios[("first/j#0", "j")] == pytest.approx(ratio_first(1 - 0.6931471805599453))
    assert 0.5 < est.score() < 1.0


def test_multistage_solves_lp_when_no_matching():
    inst, _ = make_gadget()
    est = MultistageSuggestedMatching(n_trials=100).fit(inst.to_dict())
    assert est.lp_objective_ > 0
    assert est.simulate(n_trials=10).n_trials == 10


def test_bad_times_rejected(gadget):
    inst, fm = gadget
    with pytest.raises(ValueError):
        MultistageSuggestedMatching(t0=0.9, t1=0.1).fit(inst, matching=fm)


@pytest.mark.parametrize("lp", ["basic", "jaillet_lu"])
def test_suggested(lp, gadget):
    inst, _ = gadget
    est = SuggestedMatching(lp=lp, n_trials=1000).fit(inst)
    res = est.predict(est.sample(1))
    assert res.weight >= 0
    assert 0.0 < est.score() <= 1.0


def test_suggested_unknown_lp(gadget):
    with pytest.raises(ValueError):
        SuggestedMatching(lp="other").fit(gadget[0])
