import math

import numpy as np
import pytest
from scipy.integrate import quad, solve_ivp

from stochmatch.bounds import (
    LN2,
    Y_MAX,
    appendix_a,
    appendix_b,
    appendix_c,
    appendix_check,
    derivative_lhs,
    derivative_rhs,
    edge_ratio_bounds,
    make_gadget,
    min_ratio,
    ratio_first,
    ratio_second,
    search_params,
    survival_bound,
)
from stochmatch.core import classify, validate_instance, validate_matching

from .oracles import oracle_first, oracle_second, oracle_survival

E_INV = 1.0 - 1.0 / math.e


PARAMS = [(0.05, 0.75), (0.0, 1.0), (0.1, 0.6), (0.0, 0.5), (0.2, 0.2), (0.3, 1.0)]


@pytest.mark.parametrize("t0,t1", PARAMS)
@pytest.mark.parametrize("y", [0.0, 1e-13, 0.05, 0.15, Y_MAX / 2, Y_MAX])
def test_ratios_match_quadrature(y, t0, t1):
    assert ratio_first(y, t0, t1) == pytest.approx(oracle_first(y, t0, t1), abs=1e-6)
    assert ratio_second(y, t0, t1) == pytest.approx(oracle_second(y, t0, t1), abs=1e-6)


@pytest.mark.parametrize("y", [0.0, 0.1, Y_MAX])
def test_survival_matches_ode(y):
    t0, t1 = 0.05, 0.75

    def rhs(t, a):
        rate = y if t <= t0 else (1.0 if t <= t1 else 2.0 - y)
        return -rate * a

    ts = np.linspace(0, 1, 41)
    sol = solve_ivp(rhs, (0, 1), [1.0], t_eval=ts, rtol=1e-11, atol=1e-13, max_step=1e-3)
    assert np.allclose(sol.y[0], survival_bound(y, ts, t0, t1), atol=1e-7)


@pytest.mark.parametrize("y", [0.0, 0.2, Y_MAX])
def test_survival_continuous_at_boundaries(y):
    for b in (0.05, 0.75):
        lo = survival_bound(y, b - 1e-9)
        hi = survival_bound(y, b + 1e-9)
        assert abs(lo - hi) <= 1e-8


def test_survival_examples():
    assert survival_bound(0.3, 0.0) == 1.0
    assert survival_bound(Y_MAX, 0.75) == pytest.approx(math.exp(-Y_MAX * 0.05 - 0.7), abs=1e-15)
    assert survival_bound(Y_MAX, 0.75) == pytest.approx(0.48902, abs=1e-5)


def test_headline_values():
    assert ratio_first(Y_MAX) == pytest.approx(0.64504, abs=1e-4)
    assert ratio_second(Y_MAX) == pytest.approx(0.64560, abs=1e-4)
    assert min(ratio_first(Y_MAX), ratio_second(Y_MAX)) >= 0.645


def test_monotone_on_fine_grid():
    curve = min_ratio(grid_size=10_000)
    assert curve.nonincreasing(1e-12)
    assert curve.argmin == pytest.approx(Y_MAX)
    assert curve.min_ratio == pytest.approx(ratio_first(Y_MAX))


@pytest.mark.parametrize("y", np.linspace(0, Y_MAX, 7))
def test_degenerate_parameters(y):
    assert ratio_first(y, 0.0, 1.0) == pytest.approx(E_INV, abs=1e-12)
    assert ratio_second(y, 0.0, 1.0) == pytest.approx(E_INV, abs=1e-12)


def test_appendix_functions_match_integrals():
    x = 0.2
    t0, t1 = 0.05, 0.75
    f = lambda t: oracle_survival(x, t, t0, t1)
    assert appendix_a(x) == pytest.approx(quad(f, 0, t0)[0], abs=1e-12)
    assert appendix_b(x) == pytest.approx(quad(f, t0, t1)[0], abs=1e-12)
    assert appendix_c(x) == pytest.approx(quad(f, t1, 1)[0], abs=1e-12)


def test_appendix_constants():
    report = appendix_check()
    assert report.ok, report.checks
    assert report.lhs_min == pytest.approx(1.716, abs=1e-3)
    assert report.rhs_bound_low == pytest.approx(1.256, abs=1e-3)
    assert report.rhs_bound_high == pytest.approx(1.272, abs=1e-3)
    assert report.lhs_argmin == pytest.approx(Y_MAX)


def test_derivative_inequality_is_the_derivative_condition():
    # -b'(x) > k c'(x) rearranges to lhs > rhs; check by finite differences
    k = 2 - math.exp(-0.7)
    for x in np.linspace(0.01, Y_MAX - 0.01, 9):
        h = 1e-6
        db = (appendix_b(x + h) - appendix_b(x - h)) / (2 * h)
        dc = (appendix_c(x + h) - appendix_c(x - h)) / (2 * h)
        assert (-db > k * dc) == bool(derivative_lhs(x) > derivative_rhs(x))


def test_domain_errors():
    with pytest.raises(ValueError):
        ratio_first(0.5)
    with pytest.raises(ValueError):
        ratio_second(-0.1)
    with pytest.raises(ValueError):
        survival_bound(0.1, 1.5)
    with pytest.raises(ValueError):
        ratio_first(0.1, 0.8, 0.7)
    with pytest.raises(ValueError):
        min_ratio(grid_size=1)


def test_tiny_y_uses_limit():
    assert ratio_first(0.0) == pytest.approx(ratio_first(1e-9), abs=1e-9)
    assert np.isfinite(ratio_first(0.0))


def test_search_default():
    t0, t1, value = search_params()
    assert value >= 0.645
    assert abs(t0 - 0.05) <= 0.01 + 1e-12 and abs(t1 - 0.75) <= 0.01 + 1e-12


def test_search_degenerate_cell():
    t0, t1, value = search_params((0.0, 0.0), (1.0, 1.0))
    assert (t0, t1) == (0.0, 1.0)
    assert value == pytest.approx(E_INV, abs=1e-12)


def test_search_step_larger_than_span():
    t0, t1, _ = search_params((0.05, 0.06), (0.75, 0.76), step=0.5)
    assert (t0, t1) == (0.05, 0.75)


def test_search_errors():
    with pytest.raises(ValueError):
        search_params(step=0.0)
    with pytest.raises(ValueError):
        search_params((0.0, 1.2), (0.5, 1.0))
    with pytest.raises(ValueError):
        search_params((0.6, 0.7), (0.1, 0.2))


def test_gadget():
    inst, fm = make_gadget(2.0, 3.0)
    assert validate_instance(inst).ok and validate_matching(inst, fm).ok
    assert inst.weight("first/j", "j") == 2.0 and inst.weight("second", "j'") == 3.0
    assert inst.total_rate == pytest.approx(2 * Y_MAX + 2 * LN2)
    pinst = classify(inst, fm, 0.05, 0.75)
    assert pinst.y == pytest.approx({"j": Y_MAX, "j'": Y_MAX})
    bounds = edge_ratio_bounds(pinst)
    assert bounds[("first/j", "j")] == pytest.approx(ratio_first(Y_MAX))
    assert bounds[("second", "j")] == pytest.approx(ratio_second(Y_MAX))
    with pytest.raises(ValueError):
        make_gadget(-1.0, 1.0)
