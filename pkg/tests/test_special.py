import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coopcache.special import (
    BracketedProblem,
    RootBracketError,
    RootConvergenceError,
    exp_integral_e1,
    exp_integral_e1_flagged,
    exp_integral_ei,
    find_root,
)


@pytest.mark.parametrize("x", np.geomspace(1e-8, 700, 61))
def test_e1_matches_mpmath(x):
    ref = float(mpmath.e1(mpmath.mpf(x)))
    assert exp_integral_e1(x) == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("x", np.geomspace(1e-8, 700, 41))
def test_e1_negative_is_minus_ei(x):
    ref = -float(mpmath.ei(mpmath.mpf(x)))
    assert exp_integral_e1(-x) == pytest.approx(ref, rel=1e-12)
    assert exp_integral_e1(-x) + exp_integral_ei(x) == pytest.approx(0.0, abs=1e-12 * abs(ref))


def test_e1_reference_values():
    # series oracle: -gamma - ln x - sum (-x)^n / (n n!)
    series = -0.5772156649015329 - sum((-1.0) ** n / (n * math.factorial(n)) for n in range(1, 40))
    assert exp_integral_e1(1.0) == pytest.approx(0.219383934395520, rel=1e-13)
    assert exp_integral_e1(1.0) == pytest.approx(series, rel=1e-13)
    ei1 = 0.5772156649015329 + sum(1.0 / (n * math.factorial(n)) for n in range(1, 40))
    assert exp_integral_e1(-1.0) == pytest.approx(-1.895117816355937, rel=1e-13)
    assert exp_integral_e1(-1.0) == pytest.approx(-ei1, rel=1e-13)


def test_e1_asymptotic_envelope():
    x = 50.0
    val = exp_integral_e1(x)
    assert 0 < val < math.exp(-x) / x
    assert abs(val * x * math.exp(x) - 1.0) < 1.0 / x


def test_e1_derivative_matches_finite_difference():
    for x in np.geomspace(1e-3, 50, 40):
        h = 1e-5 * x
        fd = (exp_integral_e1(x + h) - exp_integral_e1(x - h)) / (2 * h)
        assert fd == pytest.approx(-math.exp(-x) / x, rel=1e-6)


def test_e1_zero_is_domain_error():
    with pytest.raises(ValueError):
        exp_integral_e1(0.0)


def test_e1_saturation_is_flagged():
    val, sat = exp_integral_e1_flagged(800.0)
    assert sat and val == 0.0
    val, sat = exp_integral_e1_flagged(-800.0)
    assert sat and val < 0 and math.isfinite(val)
    _, sat = exp_integral_e1_flagged(3.0)
    assert not sat


def test_find_root_sqrt2():
    r = find_root(BracketedProblem(lambda t: t * t - 2, 0.0, 2.0))
    assert r == pytest.approx(math.sqrt(2), rel=1e-14)


def test_find_root_identity():
    assert find_root(BracketedProblem(lambda t: t, -1.0, 1.0)) == pytest.approx(0.0, abs=1e-12)


def test_find_root_e1_level():
    target = 2 * math.log(2)
    r = find_root(BracketedProblem(lambda t: exp_integral_e1(t) - target, 0.05, 0.5))
    assert abs(exp_integral_e1(r) - target) < 1e-12


def test_find_root_rejects_same_sign():
    with pytest.raises(RootBracketError):
        find_root(BracketedProblem(lambda t: t * t + 1, -1.0, 1.0))


def test_find_root_reports_best_on_exhaustion():
    with pytest.raises(RootConvergenceError) as info:
        find_root(BracketedProblem(lambda t: t**3 - 0.3, 0.0, 1.0, tol_abs=0.0, tol_rel=0.0, max_iter=3))
    assert 0.0 <= info.value.best <= 1.0


def test_bracket_must_be_ordered():
    with pytest.raises(ValueError):
        BracketedProblem(lambda t: t, 1.0, 1.0)


@settings(max_examples=60, deadline=None)
@given(st.floats(-50, 50), st.floats(0.1, 10))
def test_find_root_refinement_is_idempotent(root, scale):
    f = lambda t: scale * (t - root) * (1 + (t - root) ** 2)
    r = find_root(BracketedProblem(f, root - 7.0, root + 3.0))
    assert r == pytest.approx(root, abs=1e-9)
    delta = 1e-3
    r2 = find_root(BracketedProblem(f, r - delta, r + delta))
    assert r2 == pytest.approx(r, abs=1e-10)
