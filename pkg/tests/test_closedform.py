import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from superradiance.closedform import (
    DEFAULT_PARAMS,
    ClosedFormParams,
    eval_F,
    eval_Pbar,
    eval_Q,
    eval_R,
    eval_R_loss,
    eval_T,
    eval_universal,
    log_F,
    pbar_norm_limit,
)
from superradiance.ladder import JointDistribution


def R_early_direct(N, tau):
    out = [0.0]
    for n in range(1, N + 1):
        out.append((N / n) ** 2 * math.exp(-tau) * (1 - math.exp(-tau)) ** (N * (N / n - 1)))
    return out


def R_late_direct(N, tau, t1):
    # plain linear-domain sum with exact integer binomials
    start = R_early_direct(N, t1)
    d = tau - t1
    return [
        sum(math.comb(m, n) * math.exp(-m * d) * (math.exp(d) - 1) ** (m - n) * start[m] for m in range(n, N + 1))
        for n in range(N + 1)
    ]


def test_params_defaults_and_validation():
    p = ClosedFormParams()
    assert (p.delta0, p.delta1, p.lam) == (0.75, 0.4, 0)
    assert p.tau1(100) == pytest.approx(1.4 * math.log(100))
    for bad in ({"delta0": 1.0}, {"delta1": 0.5}, {"delta1": 0.0}, {"lam": 2}):
        with pytest.raises(ValueError):
            ClosedFormParams(**bad)


def test_Q_examples():
    np.testing.assert_array_equal(eval_Q(4, 0.0).linear(), [0, 0, 0, 0, 1])
    assert eval_Q(2, math.log(2)).linear()[1] == pytest.approx(0.25, rel=1e-15)


@given(st.integers(1, 400), st.floats(0.01, 20))
@settings(max_examples=50, deadline=None)
def test_Q_norm_identity(N, tau):
    assert eval_Q(N, tau).one_norm() == pytest.approx(1 - (1 - math.exp(-tau)) ** (N + 1), rel=1e-10)


def test_Pbar_examples():
    p = eval_Pbar(50, 0.7)
    assert p.linear()[0] == 0.0
    assert p.linear()[50] == pytest.approx(math.exp(-0.7), rel=1e-14)
    assert eval_Pbar(2000, 1.0).one_norm() == pytest.approx(1.1952, abs=1e-3)
    with pytest.raises(ValueError):
        eval_Pbar(5, 1.0, lam=3)


def test_pbar_norm_limit():
    assert pbar_norm_limit(1.0) == pytest.approx(0.367879 / (1 - 0.692201), rel=1e-5)
    assert pbar_norm_limit(1.0) == pytest.approx(1.195192, abs=1e-6)
    assert pbar_norm_limit(40.0) == pytest.approx(1.0, abs=1e-12)
    assert pbar_norm_limit(2.0, 1) / pbar_norm_limit(2.0, 0) == pytest.approx(math.exp(-math.exp(-2)))
    with pytest.raises(ValueError):
        pbar_norm_limit(0.0)


def test_Pbar_matches_universal_shape():
    N, n, tau = 100, 50, 3.0
    lhs = N * eval_Pbar(N, tau).linear()[n]
    assert lhs == pytest.approx(eval_universal(n / N, math.exp(tau) / N), rel=1e-12)


def test_universal_examples():
    assert eval_universal(1.0, 2.5) == pytest.approx(1 / 2.5)
    assert eval_universal(1e-5, 1.0) == 0.0
    with pytest.raises(ValueError):
        eval_universal(0.0, 1.0)
    with pytest.raises(ValueError):
        eval_universal(0.5, 0.0)


@pytest.mark.parametrize("N", [3, 10, 40])
@pytest.mark.parametrize("frac", [0.2, 0.9, 1.2, 1.6, 2.5])
def test_R_matches_direct_evaluation(N, frac):
    tau = frac * math.log(N)
    t1 = DEFAULT_PARAMS.tau1(N)
    ref = R_early_direct(N, tau) if tau <= t1 else R_late_direct(N, tau, t1)
    np.testing.assert_allclose(eval_R(N, tau).linear(), ref, rtol=1e-11, atol=1e-300)


def test_R_examples():
    N = 30
    t1 = DEFAULT_PARAMS.tau1(N)
    assert eval_R(N, 0.5).linear()[N] == pytest.approx(math.exp(-0.5), rel=1e-15)
    before = eval_R(N, t1).linear()
    after = eval_R(N, math.nextafter(t1, math.inf)).linear()
    assert np.max(np.abs(before - after)) <= 1e-12
    late = eval_R(N, 500.0).linear()
    assert late[0] == pytest.approx(before.sum(), rel=1e-12)
    assert late[1:].max() < 1e-100


@pytest.mark.parametrize("N", [100, 1000])
def test_R_continuity_at_tau1_large_N(N):
    t1 = DEFAULT_PARAMS.tau1(N)
    a = eval_R(N, t1).linear()
    b = eval_R(N, t1 + 1e-13).linear()
    assert np.max(np.abs(a - b)) <= 1e-12


def test_F_examples():
    assert eval_F(0, 2.0, 0.3) == pytest.approx(math.exp(-0.6))
    r = np.arange(80)
    w = eval_F(r, 3.0, 1.5)
    assert w.sum() == pytest.approx(1.0, rel=1e-14)
    assert (r * w).sum() == pytest.approx(4.5, rel=1e-13)
    assert eval_F(0, 5.0, 0.0) == 1.0 and eval_F(2, 5.0, 0.0) == 0.0
    assert log_F(0, 0.0, 1.0) == 0.0
    with pytest.raises(ValueError):
        log_F(-1, 1.0, 1.0)


def test_T_examples():
    N = 50
    T = eval_T(N, np.arange(N + 1), 2.5)
    assert T[0] == 0.0
    assert T[N] == pytest.approx(2.5, rel=1e-15)
    np.testing.assert_array_equal(eval_T(N, np.arange(N + 1), 0.0), 0.0)
    assert np.all((T >= 0) & (T <= 2.5))
    assert np.all(np.diff(T) >= -1e-15)
    with pytest.raises(ValueError):
        eval_T(N, N + 1, 1.0)


def test_T_reference_value():
    # hand evaluation: tau=3, n=50, N=100
    x, e = 0.5, math.exp(-3)
    ref = 3 + x - 50 / (50 + e * 50) + math.log(x + e * (1 - x))
    assert eval_T(100, 50, 3.0) == pytest.approx(ref, rel=1e-14)


@pytest.mark.parametrize("tau_frac", [0.5, 1.0, 2.0])
def test_R_loss_without_loss_is_embedded_R(tau_frac):
    N = 40
    tau = tau_frac * math.log(N)
    loss = eval_R_loss(N, 0.0, tau).linear()
    np.testing.assert_allclose(loss[: N + 1], eval_R(N, tau).linear(), rtol=1e-12, atol=1e-300)
    assert loss[N + 1 :].max() == 0.0


def test_R_loss_early_factorizes():
    N, gamma = 100, 0.5
    tau = 0.5 * math.log(N)
    d = eval_R_loss(N, gamma, tau)
    R = eval_R(N, tau).linear()
    T = eval_T(N, np.arange(N + 1), tau)
    for n, r in [(10, 3), (0, 50), (98, 1), (40, 20)]:
        assert d[n, r] == pytest.approx(R[n + 2 * r] * eval_F(r, T[n], gamma), rel=1e-12)
    # the Poisson factor at n=N has mean gamma * T_N = gamma * tau
    r = np.arange(60)
    w = eval_F(r, T[N], gamma)
    assert (r * w).sum() / w.sum() == pytest.approx(gamma * tau, rel=1e-12)


@pytest.mark.parametrize("N, gamma", [(30, 0.5), (200, 1.0)])
def test_R_loss_continuity_at_tau1(N, gamma):
    t1 = DEFAULT_PARAMS.tau1(N)
    a = eval_R_loss(N, gamma, t1).linear()
    b = eval_R_loss(N, gamma, math.nextafter(t1, math.inf)).linear()
    assert np.max(np.abs(a - b)) <= 1e-12


def test_R_loss_late_matches_direct_double_sum():
    N, gamma, tau = 12, 1.5, 6.0
    t1 = DEFAULT_PARAMS.tau1(N)
    start = eval_R_loss(N, gamma, t1)
    d, dr = tau - t1, gamma * (tau - t1) / N
    got = eval_R_loss(N, gamma, tau)
    for n, r in [(0, 0), (2, 1), (4, 4), (0, 6), (12, 0)]:
        ref = 0.0
        for rp in range(r, N // 2 + 1):
            for m in range(n, N - 2 * rp + 1):
                ref += (
                    math.comb(m, n) * math.exp(-n * d) * (1 - math.exp(-d)) ** (m - n)
                    * math.comb(rp, r) * math.exp(-r * dr) * (1 - math.exp(-dr)) ** (rp - r)
                    * start[m, rp]
                )
        assert got[n, r] == pytest.approx(ref, rel=1e-11, abs=1e-300)


def test_closed_forms_are_flagged_unnormalized():
    assert isinstance(eval_R_loss(5, 0.1, 1.0), JointDistribution)
    for d in (eval_Q(5, 1.0), eval_Pbar(5, 1.0), eval_R(5, 1.0), eval_R_loss(5, 0.1, 1.0)):
        assert d.normalized is False
        assert np.all(d.linear() >= 0)
    with pytest.raises(ValueError):
        eval_R(5, -1.0)
    with pytest.raises(ValueError):
        eval_R_loss(5, -0.1, 1.0)
