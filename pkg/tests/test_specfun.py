import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from superradiance.specfun import (
    E1_ASYMPTOTIC,
    E1_CUTOVER,
    EULER_GAMMA,
    _e1_cf_scaled,
    _e1_series,
    exp_integral_e1,
    exp_integral_e1_scaled,
    exp_integral_en_scaled,
    log_binomial,
    log_sum_exp,
)


def scaled_e1_by_quadrature(z):
    # e^z E1(z) = int_0^inf e^{-u}/(z+u) du; with u = e^s the integrand has no
    # near-singular peak at small z.
    f = lambda s: math.exp(-math.exp(s)) * math.exp(s) / (z + math.exp(s))
    lo = math.log(z) - 40
    mid = math.log(z) if z < 1 else 0.0
    a, _ = quad(f, lo, mid, epsabs=0, epsrel=1e-13, limit=200)
    b, _ = quad(f, mid, 6.0, epsabs=0, epsrel=1e-13, limit=200)
    return a + b


@pytest.mark.parametrize("z, expected", [(1.0, 0.21938393), (10.0, 4.15697e-6)])
def test_e1_reference_values(z, expected):
    assert exp_integral_e1(z) == pytest.approx(expected, rel=1e-6)


@pytest.mark.parametrize("z, expected", [(1.0, 0.59634736), (10.0, 0.09156333), (1000.0, 0.000999002)])
def test_e1_scaled_reference_values(z, expected):
    assert exp_integral_e1_scaled(z) == pytest.approx(expected, rel=1e-6)


@pytest.mark.parametrize("z", [1e-8, 1e-3, 0.3, 0.999, 1.0, 1.001, 2.5, 10.0, 50.0, 300.0, 700.0])
def test_e1_scaled_matches_quadrature(z):
    assert exp_integral_e1_scaled(z) == pytest.approx(scaled_e1_by_quadrature(z), rel=1e-11)


@pytest.mark.parametrize("z", [1e4, 2e4, 1e6, 1e12, 1e300])
def test_large_argument_branch(z):
    with mpmath.workdps(30):
        ref = float(mpmath.e1(z) * mpmath.exp(z)) if z < 1e8 else (1 - 1 / z) / z
    assert exp_integral_e1_scaled(z) == pytest.approx(ref, rel=1e-14)
    assert z * exp_integral_e1_scaled(z) == pytest.approx(1.0, abs=2 / z)


def test_branches_agree_at_cutover():
    for z in np.linspace(0.5, 2.0, 31):
        assert math.exp(z) * _e1_series(z) == pytest.approx(_e1_cf_scaled(z), rel=1e-13)
    z = E1_ASYMPTOTIC
    assert exp_integral_e1_scaled(z * (1 - 1e-12)) == pytest.approx(exp_integral_e1_scaled(z), rel=1e-11)
    assert E1_CUTOVER == 1.0


def test_small_z_leading_behaviour():
    z = 1e-12
    assert exp_integral_e1(z) == pytest.approx(-EULER_GAMMA - math.log(z), rel=1e-12)


def test_e1_underflows_to_zero_but_scaled_stays_finite():
    assert exp_integral_e1(800.0) == 0.0
    assert exp_integral_e1_scaled(800.0) == pytest.approx(1 / 801, rel=2e-6)


def test_e1_vectorized_shape():
    z = np.array([[0.5, 1.0], [5.0, 50.0]])
    out = exp_integral_e1_scaled(z)
    assert out.shape == (2, 2)
    assert out[1, 0] == exp_integral_e1_scaled(5.0)


@pytest.mark.parametrize("z", [0.0, -1.0, float("nan")])
def test_e1_rejects_nonpositive(z):
    with pytest.raises(ValueError):
        exp_integral_e1(z)
    with pytest.raises(ValueError):
        exp_integral_e1_scaled(z)


def test_log_binomial_small_values():
    assert log_binomial(5, 2) == pytest.approx(math.log(10), rel=1e-15)
    for m in (0, 1, 7, 10**6):
        assert log_binomial(m, 0) == 0.0
        assert log_binomial(m, m) == 0.0


def test_log_binomial_exact_integer_oracle():
    assert log_binomial(1000, 500) == pytest.approx(math.log(math.comb(1000, 500)), rel=1e-15)
    assert log_binomial(1000, 500) == pytest.approx(689.4672615678512, rel=1e-15)


@pytest.mark.parametrize(
    "m, k", [(20, 3), (200, 77), (5000, 1), (5000, 2500), (10**5, 333), (10**6, 5 * 10**5), (10**6, 17)]
)
def test_log_binomial_matches_mpmath(m, k):
    with mpmath.workdps(40):
        ref = float(mpmath.log(mpmath.binomial(m, k)))
    assert abs(log_binomial(m, k) - ref) <= 1e-10 * max(1.0, abs(ref))


@given(st.integers(1, 3000).flatmap(lambda m: st.tuples(st.just(m), st.integers(1, m))))
@settings(max_examples=200, deadline=None)
def test_log_binomial_pascal_and_symmetry(mk):
    m, k = mk
    assert log_binomial(m, k) == pytest.approx(log_binomial(m, m - k), abs=1e-12)
    lhs = log_binomial(m, k)
    rhs = np.logaddexp(log_binomial(m - 1, k - 1), log_binomial(m - 1, k) if k < m else -np.inf)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


def test_log_binomial_vectorized_and_errors():
    out = log_binomial(np.array([4, 4, 4]), np.array([0, 2, 4]))
    np.testing.assert_allclose(out, [0.0, math.log(6), 0.0], rtol=1e-15)
    with pytest.raises(ValueError):
        log_binomial(3, 4)
    with pytest.raises(ValueError):
        log_binomial(3, -1)
    with pytest.raises(ValueError):
        log_binomial(3.5, 1)


def test_log_sum_exp_examples():
    assert log_sum_exp([0.0, 0.0]) == pytest.approx(math.log(2))
    assert log_sum_exp([-np.inf, 3.25]) == 3.25
    assert log_sum_exp([1000.0, 1000.0]) == pytest.approx(1000 + math.log(2))
    assert log_sum_exp([-np.inf, -np.inf]) == -np.inf
    with pytest.raises(ValueError):
        log_sum_exp([])


def test_log_sum_exp_axis():
    t = np.array([[0.0, -np.inf], [-np.inf, -np.inf], [1.0, 1.0]])
    out = log_sum_exp(t, axis=1)
    np.testing.assert_array_equal(out[:2], [0.0, -np.inf])
    assert out[2] == pytest.approx(1 + math.log(2))


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=30))
def test_log_sum_exp_matches_naive(xs):
    assert log_sum_exp(xs) == pytest.approx(math.log(sum(math.exp(x) for x in xs)), rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3, 5])
@pytest.mark.parametrize("z", [1e-6, 0.2, 1.0, 1.5, 7.0, 60.0, 500.0])
def test_en_scaled_matches_scipy(n, z):
    from scipy.special import expn

    if z > 600:
        pytest.skip("scipy value underflows")
    assert exp_integral_en_scaled(n, z) == pytest.approx(math.exp(z) * expn(n, z), rel=1e-12)


def test_en_scaled_large_argument_and_errors():
    z = 5e4
    assert exp_integral_en_scaled(3, z) == pytest.approx(1 / (z + 3), rel=1e-8)
    assert exp_integral_en_scaled(1, 2.0) == exp_integral_e1_scaled(2.0)
    with pytest.raises(ValueError):
        exp_integral_en_scaled(0, 1.0)
    with pytest.raises(ValueError):
        exp_integral_en_scaled(2, -1.0)
