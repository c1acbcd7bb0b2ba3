import math

import numpy as np
import pytest

from gradreduce import BlowUp, Potential, ReducedPotential, SpectralBasis, find_equilibria
from gradreduce.reduction import manifold_map
from gradreduce.dynamics import (Trajectory, aim_scaling_experiment, burn_in_time,
                                 distance_to_manifold, fit_loglog_slope, integrate_flat,
                                 integrate_full, integrate_reduced)


@pytest.fixture(scope="module")
def b16():
    return SpectralBasis(math.pi, 16)


@pytest.fixture(scope="module")
def well16(b16):
    return Potential.clamped_double_well(2.0, lipschitz_bound=11.0)


def test_heat_decay_is_exact(b16):
    tr = integrate_full(b16.mode(1), b16, Potential.zero(), 2.0, 0.1)
    expected = np.exp(-tr.times)[:, None] * b16.mode(1)
    assert np.max(np.abs(tr.states - expected)) <= 1e-12


def test_equilibrium_is_stationary(b16, well16):
    rp = ReducedPotential(b16, well16, 3)
    eq = find_equilibria(rp, [[1.0, 0, 0]])[0]
    tr = integrate_full(eq.u, b16, well16, 5.0, 0.01)
    assert np.linalg.norm(tr.final - eq.u) <= 1e-8


def test_full_run_reaches_well_and_dissipates(b16, well16):
    tr = integrate_full(0.1 * b16.mode(1), b16, well16, 20.0, 0.005, save_every=4)
    rp = ReducedPotential(b16, well16, 3)
    eq = find_equilibria(rp, [[1.0, 0, 0]])[0]
    assert np.linalg.norm(b16.residual(tr.final, well16)) <= 1e-6
    assert np.linalg.norm(tr.final - eq.u) <= 1e-6
    J = b16.energy(tr.states, well16)
    assert np.all(np.diff(J) <= 1e-8)


def test_dissipation_rate_matches_residual(b16, well16):
    dt = 1e-3
    tr = integrate_full(0.3 * b16.mode(1) + 0.2 * b16.mode(2), b16, well16, 0.5, dt)
    J = b16.energy(tr.states, well16)
    rate = np.diff(J) / dt
    mid = 0.5 * (tr.states[1:] + tr.states[:-1])
    expected = -np.sum(b16.residual(mid, well16) ** 2, axis=-1)
    assert np.max(np.abs(rate - expected)) <= 50 * dt * np.max(np.abs(expected))


def test_full_second_order(b16, well16):
    u0 = 0.4 * b16.mode(1) - 0.3 * b16.mode(2) + 0.2 * b16.mode(5)
    ref = integrate_full(u0, b16, well16, 1.0, 1e-4).final
    e = [np.linalg.norm(integrate_full(u0, b16, well16, 1.0, dt).final - ref) for dt in (0.02, 0.01)]
    assert math.log2(e[0] / e[1]) >= 1.8


def test_reduced_linear_decay(b16):
    rp = ReducedPotential(b16, Potential.zero(), 3)
    tr = integrate_reduced(np.array([1.0, 0, 0]), rp, 2.0, 0.01)
    assert np.max(np.abs(tr.states[:, 0] - np.exp(-tr.times))) <= 1e-9


def test_reduced_fourth_order(b16, well16):
    rp = ReducedPotential(b16, well16, 3)
    mu0 = np.array([0.3, -0.2, 0.1])
    ref = integrate_reduced(mu0, rp, 1.0, 0.005).final
    e = [np.linalg.norm(integrate_reduced(mu0, rp, 1.0, dt).final - ref) for dt in (0.1, 0.05)]
    assert math.log2(e[0] / e[1]) >= 3.5


def test_reduced_from_saddle_descends_into_well(b16, well16):
    rp = ReducedPotential(b16, well16, 3)
    mu0 = np.array([0.01, 0.0, 0.0])
    tr = integrate_reduced(mu0, rp, 12.0, 0.02)
    fine = integrate_reduced(mu0, rp, 12.0, 0.002).final
    W = rp.energy(tr.states)
    assert np.all(np.diff(W) <= 1e-10)
    assert np.linalg.norm(tr.final - fine) <= 1e-6
    eq = find_equilibria(rp, [[1.0, 0, 0]])[0]
    assert np.linalg.norm(tr.final - eq.mu) <= 1e-4


def test_reduced_stationary_at_critical_point(b16, well16):
    rp = ReducedPotential(b16, well16, 3)
    eq = find_equilibria(rp, [[-1.0, 0, 0]])[0]
    tr = integrate_reduced(eq.mu, rp, 2.0, 0.05)
    assert np.linalg.norm(tr.final - eq.mu) <= 1e-9


def test_flat_consistency(b16, well16):
    u0 = 0.3 * b16.mode(1) + 0.1 * b16.mode(4)
    full = integrate_full(u0, b16, well16, 1.0, 0.01)
    flat = integrate_flat(u0, b16, well16, 16, 1.0, 0.01)
    assert np.max(np.abs(full.states - flat.states)) <= 1e-12
    rp = ReducedPotential(b16, Potential.zero(), 3)
    a = integrate_flat(u0, b16, Potential.zero(), 3, 1.0, 0.01).states
    r = integrate_reduced(u0[:3], rp, 1.0, 0.01).states
    assert np.max(np.abs(a - r)) <= 1e-9


def test_flat_close_to_reduced(b16, well16):
    rp = ReducedPotential(b16, well16, 3)
    mu0 = np.array([0.5, 0.2, -0.1])
    flat = integrate_flat(mu0, b16, well16, 3, 3.0, 0.01).final
    red = integrate_reduced(mu0, rp, 3.0, 0.01).final
    delta = b16.eigenvalues[0] / b16.eigenvalues[3]
    gap = np.linalg.norm(flat - red)
    assert 0 < gap <= delta


def test_blow_up_detected(b16):
    with pytest.raises(BlowUp):
        integrate_full(b16.mode(1), b16, Potential.linear(-40.0), 1.0, 0.01, bound=1e3)


def test_step_must_divide_horizon(b16):
    with pytest.raises(ValueError):
        integrate_full(b16.mode(1), b16, Potential.zero(), 1.0, 0.3)
    with pytest.raises(ValueError):
        integrate_full(b16.mode(1), b16, Potential.zero(), 1.0, -0.1)


def test_trajectory_validation():
    with pytest.raises(ValueError):
        Trajectory(np.array([0.0, 1.0]), np.zeros((3, 2)), 0.1, "x")
    with pytest.raises(ValueError):
        Trajectory(np.array([0.0, 0.0]), np.zeros((2, 2)), 0.1, "x")


def test_distance_to_manifold(b16, well16, rng):
    rp = ReducedPotential(b16, well16, 3)
    mu = np.array([0.4, -0.3, 0.2])
    for kind in ("flat", "phi0", "static_tail"):
        u = rp.embed(mu) + manifold_map(kind, rp, mu)
        assert distance_to_manifold(u, kind, rp) <= 1e-15
    u = rng.normal(size=16)
    assert distance_to_manifold(u, "flat", rp) == pytest.approx(np.linalg.norm(u[3:]))
    stack = rng.normal(size=(4, 16))
    d = distance_to_manifold(stack, "static_tail", rp)
    assert d.shape == (4,) and np.all(d >= 0)


def test_loglog_fit():
    x = np.array([0.1, 0.05, 0.01])
    assert fit_loglog_slope(x, 3 * x**2) == pytest.approx(2.0)


def test_scaling_report_structure(b16, well16):
    u0 = np.zeros(16)
    u0[0] = 0.1
    rep = aim_scaling_experiment(b16, well16, u0, [3, 4, 5, 6], 4.0, 0.01, save_every=5)
    delta = rep.column("delta")
    assert np.allclose(delta, 1 / (np.array([3, 4, 5, 6]) + 1) ** 2)
    assert np.all(np.diff(delta) < 0)
    for name in ("dist_flat", "dist_phi0", "dist_static", "eta_norm", "etaprime_norm"):
        assert np.all(rep.column(name) >= 0)
        assert name in rep.slopes and name in rep.kappa
    assert 0 < rep.t_star <= rep.T / 2
    p = {"dist_flat": 1, "dist_phi0": 2, "dist_static": 2}
    for name, power in p.items():
        assert np.all(rep.column(name) <= rep.kappa[name] * delta**power * (1 + 1e-12))


def test_burn_in_capped(b16):
    tr = integrate_full(b16.mode(1), b16, Potential.zero(), 2.0, 0.1)
    assert burn_in_time(tr, b16, Potential.zero(), threshold=1e-30) == pytest.approx(1.0)


def test_manifold_distances_decay_at_least_at_claimed_rates():
    # the rates are upper bounds; smooth data decay faster, so only the lower edge is tested
    b = SpectralBasis(math.pi, 64)
    pot = Potential.clamped_double_well(2.0, lipschitz_bound=11.0)
    rep = aim_scaling_experiment(b, pot, 0.1 * b.mode(1), range(3, 13), 20.0, 1e-3, save_every=10)
    assert rep.slopes["dist_flat"] >= 0.7
    assert rep.slopes["dist_phi0"] >= 1.7
    assert rep.slopes["dist_static"] >= 1.7
    assert rep.slopes["eta_norm"] >= 1.0 and rep.slopes["etaprime_norm"] >= 1.0
