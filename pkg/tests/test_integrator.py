import math

import numpy as np
import pytest

from superradiance.integrator import (
    MAX_DENSE_STATES,
    IntegrationError,
    InstabilityError,
    SolverConfig,
    evolve,
    evolve_dense_oracle,
    write_snapshots_csv,
)
from superradiance.ladder import JOINT_INVERTED, JointDistribution, PureDistribution, initial_state
from superradiance.rates import Family, RateFamily, build_generator


def pure(N, tag=Family.PURE_EXACT):
    return build_generator(N, RateFamily(tag))


def loss(N, gamma, tag=Family.LOSS_EXACT):
    return build_generator(N, RateFamily(tag, gamma))


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(rel_tol=0)
    with pytest.raises(ValueError):
        SolverConfig(snapshot_times=(1.0, 0.5))
    with pytest.raises(ValueError):
        SolverConfig(snapshot_times=(-0.1,))
    with pytest.raises(ValueError):
        SolverConfig(snapshot_times=())
    with pytest.raises(ValueError):
        SolverConfig(max_step=0)


def test_single_atom_is_exponential():
    taus = (0.0, 0.3, 1.0, 4.0)
    snaps = evolve(pure(1), initial_state(1), SolverConfig(snapshot_times=taus))
    for s in snaps:
        np.testing.assert_allclose(s.dist.linear(), [1 - math.exp(-s.tau), math.exp(-s.tau)], atol=1e-11)


def analytic_two_atoms(tau):
    return [1 - math.exp(-tau) - tau * math.exp(-tau), tau * math.exp(-tau), math.exp(-tau)]


def test_two_atom_degenerate_chain():
    snaps = evolve(pure(2), initial_state(2), SolverConfig(snapshot_times=(0.5, 1.0, 3.0)))
    for s in snaps:
        np.testing.assert_allclose(s.dist.linear(), analytic_two_atoms(s.tau), atol=1e-10)
    np.testing.assert_allclose(snaps[1].dist.linear(), [0.264241, 0.367879, 0.367879], atol=5e-7)


def test_dense_oracle_two_atoms_and_identity():
    d = evolve_dense_oracle(pure(2), initial_state(2), 1.0)
    np.testing.assert_allclose(d.linear(), analytic_two_atoms(1.0), atol=1e-12)
    p0 = initial_state(7)
    assert evolve_dense_oracle(pure(7), p0, 0.0).linear().tolist() == p0.linear().tolist()


@pytest.mark.parametrize("tag", [Family.PURE_EXACT, Family.LOSS_EXACT, Family.LOSS_LATE])
def test_dense_oracle_is_stochastic(tag):
    import scipy.linalg

    g = build_generator(8, RateFamily(tag, 0.9))
    E = scipy.linalg.expm(g.to_dense() * 1.7)
    np.testing.assert_allclose(E.sum(axis=0), 1.0, atol=1e-13)


def test_dense_oracle_rejects_large():
    g = loss(128, 0.1)
    assert g.size > MAX_DENSE_STATES
    with pytest.raises(ValueError):
        evolve_dense_oracle(g, initial_state(128, JOINT_INVERTED), 1.0)


ORACLE_CASES = [(N, pure(N), initial_state(N)) for N in (1, 2, 3, 8, 17, 32)] + [
    (N, loss(N, gamma, tag), initial_state(N, JOINT_INVERTED))
    for N in (2, 5, 16)
    for gamma, tag in [(0.3, Family.LOSS_EXACT), (2.0, Family.LOSS_EXACT), (1.0, Family.LOSS_APPROX), (0.7, Family.LOSS_LATE)]
]


@pytest.mark.parametrize("N, g, p0", ORACLE_CASES, ids=[f"{c[1].family.tag.value}-{c[0]}" for c in ORACLE_CASES])
def test_matches_dense_oracle(N, g, p0):
    L = math.log(max(N, 2))
    taus = sorted({0.5, L, 2 * L})
    snaps = evolve(g, p0, SolverConfig(snapshot_times=taus))
    for s in snaps:
        ref = evolve_dense_oracle(g, p0, s.tau)
        assert np.max(np.abs(s.dist.linear() - ref.linear())) <= 1e-8


@pytest.mark.parametrize("tag", [Family.PURE_EARLY, Family.PURE_LATE])
def test_approximate_pure_families_match_oracle(tag):
    g = pure(20, tag)
    p0 = initial_state(20)
    snaps = evolve(g, p0, SolverConfig(snapshot_times=(0.2, 1.0, 3.0)))
    for s in snaps:
        assert np.max(np.abs(s.dist.linear() - evolve_dense_oracle(g, p0, s.tau).linear())) <= 1e-8


def test_leaky_family_loses_norm_and_is_flagged():
    g = loss(10, 0.5, Family.LOSS_EARLY)
    snaps = evolve(g, initial_state(10, JOINT_INVERTED), SolverConfig(snapshot_times=(0.5,)))
    assert snaps[0].dist.normalized is False
    assert snaps[0].dist.one_norm() < 1.0


def test_loss_without_loss_embeds_pure():
    N = 40
    taus = np.linspace(0, 3 * math.log(N), 25)
    a = evolve(pure(N), initial_state(N), SolverConfig(snapshot_times=taus))
    b = evolve(loss(N, 0.0), initial_state(N, JOINT_INVERTED), SolverConfig(snapshot_times=taus))
    for x, y in zip(a, b):
        assert np.max(np.abs(y.dist.restrict_r0().linear() - x.dist.linear())) <= 1e-9
        assert np.max(y.dist.linear()[N + 1 :]) == 0.0


@pytest.mark.parametrize("N", [10, 200, 2000])
def test_norm_conservation_and_positivity(N):
    taus = np.linspace(0, 3 * math.log(N), 60)
    snaps = evolve(pure(N), initial_state(N), SolverConfig(snapshot_times=taus))
    assert [s.tau for s in snaps] == list(taus)
    for s in snaps:
        assert abs(s.dist.one_norm() - 1) <= 1e-8
        assert np.all(s.dist.linear() >= 0)


def test_support_is_full_after_start():
    # the lowest levels fill like tau^N / N!, so stay where that is representable
    N = 12
    g, p0 = pure(N), initial_state(N)
    snaps = evolve(g, p0, SolverConfig(snapshot_times=(0.5, 2.0, 5.0)))
    for s in snaps:
        assert np.all(s.dist.linear() > 0)
        assert np.all(evolve_dense_oracle(g, p0, s.tau).linear() > 0)


def test_halving_tolerances_stays_within_error_bound():
    N = 100
    taus = (0.5, math.log(N), 2 * math.log(N))
    g, p0 = pure(N), initial_state(N)
    coarse = evolve(g, p0, SolverConfig(rel_tol=1e-6, abs_tol=1e-9, snapshot_times=taus))
    fine = evolve(g, p0, SolverConfig(rel_tol=5e-7, abs_tol=5e-10, snapshot_times=taus))
    for c, f in zip(coarse, fine):
        diff = np.sum(np.abs(c.dist.linear() - f.dist.linear()))
        assert c.error_bound > 0
        assert diff <= c.error_bound


def test_snapshot_times_do_not_change_the_trajectory():
    g, p0 = pure(50), initial_state(50)
    a = evolve(g, p0, SolverConfig(snapshot_times=(3.0, 9.0)))
    b = evolve(g, p0, SolverConfig(snapshot_times=tuple(np.linspace(0.01, 9.0, 77))))
    np.testing.assert_array_equal(a[-1].dist.linear(), b[-1].dist.linear())


def test_duplicate_and_zero_snapshot_times():
    snaps = evolve(pure(3), initial_state(3), SolverConfig(snapshot_times=(0.0, 0.0, 1.0, 1.0)))
    assert [s.tau for s in snaps] == [0.0, 0.0, 1.0, 1.0]
    np.testing.assert_array_equal(snaps[2].dist.linear(), snaps[3].dist.linear())


def test_initial_state_checks():
    with pytest.raises(ValueError):
        evolve(pure(3), initial_state(4), SolverConfig())
    with pytest.raises(ValueError):
        evolve(pure(3), initial_state(3, JOINT_INVERTED), SolverConfig())
    with pytest.raises(ValueError):
        evolve(pure(3), np.ones(3), SolverConfig())


def test_negativity_is_an_instability():
    g = pure(3)
    p0 = np.array([0.0, 0.0, -1e-3, 1.0])
    with pytest.raises(ValueError):
        evolve(g, p0, SolverConfig(snapshot_times=(1.0,)))
    assert issubclass(InstabilityError, IntegrationError)


def test_step_underflow_is_reported():
    g = pure(20)
    with pytest.raises(IntegrationError):
        evolve(g, initial_state(20), SolverConfig(rel_tol=1e-30, abs_tol=1e-300, snapshot_times=(1.0,)))


def test_write_snapshots_csv(tmp_path):
    snaps = evolve(loss(2, 0.5), initial_state(2, JOINT_INVERTED), SolverConfig(snapshot_times=(0.0, 1.0)))
    path = tmp_path / "s.csv"
    write_snapshots_csv(snaps, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "tau,n,r,p"
    assert len(lines) == 1 + 2 * 4
    assert lines[3] == "0,2,0,1"
    pure_snaps = evolve(pure(2), initial_state(2), SolverConfig(snapshot_times=(1.0,)))
    write_snapshots_csv(pure_snaps, path)
    assert path.read_text().splitlines()[0] == "tau,n,p"
