"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""
import json
import math

import numpy as np
import pytest

from gradreduce import (Potential, Quadratic, QuarticDoubleWell, ReducedPotential, SpectralBasis,
                        find_equilibria)
from gradreduce.cli import run
from gradreduce.config import ExperimentConfig
from gradreduce.dynamics import aim_scaling_experiment, integrate_full, integrate_reduced
from gradreduce.ldp import (ActionSettings, FourierTestFunction, cole_hopf_rate,
                            mane_upper_bound, minimize_action, quasi_potential_infty,
                            stationary_hj_residual)
from gradreduce.reduction import unique_equilibria
from gradreduce.stochastic import (DensityGrid, SdeConfig, empirical_density,
                                   equilibrium_free_energy, fokker_planck_evolve, fp_max_dt,
                                   free_energy, l1_distance, relative_entropy, simulate_sde,
                                   stationary_density)

from oracles import full_newton_equilibrium, full_newton_tail


@pytest.fixture
def report(capsys):
    def _report(n, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {n:2d}] {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail
    return _report


def grid_points(lo, hi, n):
    axes = [np.linspace(a, b, k) for a, b, k in zip(lo, hi, n)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, len(lo))


def test_01_spectral_exactness(report):
    b = SpectralBasis(math.pi, 64)
    a = np.random.default_rng(1).normal(size=(20, 64))
    lap = np.max(np.abs(b.laplacian(b.inv_laplacian(a)) - a))
    S = b.basis_function(np.arange(1, 65)[None, :], b.nodes[:, None])
    ortho = np.max(np.abs(b.spacing * S.T @ S - np.eye(64)))
    report(1, lap <= 1e-12 and ortho <= 1e-10,
           f"|Lap g - id| = {lap:.2e} (tol 1e-12), orthonormality {ortho:.2e} (tol 1e-10)")


def test_02_tail_fixed_point(report):
    b = SpectralBasis(math.pi, 128)
    pot = Potential.clamped_double_well(2.0)
    rp = ReducedPotential(b, pot, 3)
    worst_ratio, worst_err = 0.0, 0.0
    for mu in ([0.8, 0.3, -0.2], [1.0, -0.4, 0.25], [-0.5, 0.6, 0.4]):
        sol = rp.solve_tail(np.array(mu))
        ref, res = full_newton_tail(math.pi, 128, b.n_quad, pot.gamma, pot.gamma_prime, 3,
                                    np.array(mu))
        worst_ratio = max(worst_ratio, float(np.max(sol.ratios)))
        worst_err = max(worst_err, float(np.max(np.abs(sol.eta - ref))))
    report(2, worst_ratio <= rp.q + 0.05 and worst_err <= 1e-9,
           f"max Picard ratio {worst_ratio:.4f} (q + 0.05 = {rp.q + 0.05:.4f}), "
           f"|eta - Newton| = {worst_err:.2e} (tol 1e-9)")


def test_03_gradient_consistency(report, rp3):
    rng = np.random.default_rng(3)
    h = 1e-5
    worst = 0.0
    for mu in rng.uniform(-1.3, 1.3, size=(50, 3)):
        g = rp3.gradient(mu)
        fd = np.array([(rp3.energy(mu + h * e) - rp3.energy(mu - h * e)) / (2 * h)
                       for e in np.eye(3)])
        worst = max(worst, np.linalg.norm(g - fd) / max(np.linalg.norm(g), 1e-300))
    report(3, worst <= 1e-6, f"max relative error {worst:.2e} over 50 points (tol 1e-6)")


def test_04_equilibrium_correspondence(report):
    b = SpectralBasis(math.pi, 32)
    pot = Potential.clamped_double_well(2.0)
    rp = ReducedPotential(b, pot, 2)
    seeds = np.random.default_rng(4).uniform(-1.5, 1.5, size=(12, 2))
    eqs = unique_equilibria(find_equilibria(rp, seeds))
    lift_res = max(float(np.linalg.norm(b.residual(e.u, pot))) for e in eqs)
    # converse: full Galerkin equilibria project onto critical points of W
    worst_grad, worst_match = 0.0, 0.0
    for e in eqs:
        for kick in (1e-2, -1e-2):
            u, res = full_newton_equilibrium(math.pi, 32, b.n_quad, pot.gamma, pot.gamma_prime,
                                             e.u + kick * b.mode(4))
            mu = u[:2]
            worst_grad = max(worst_grad, float(np.linalg.norm(rp.gradient(mu))))
            worst_match = max(worst_match, float(np.max(np.abs(rp.lift(mu) - u))))
    ok = len(eqs) == 3 and lift_res <= 1e-8 and worst_grad <= 1e-8 and worst_match <= 1e-8
    report(4, ok, f"{len(eqs)} critical points, lifted residual {lift_res:.2e}; "
                  f"full equilibria: |grad W| {worst_grad:.2e}, |lift - u| {worst_match:.2e} (tol 1e-8)")


def test_05_lyapunov_monotonicity(report):
    b = SpectralBasis(math.pi, 32)
    pot = Potential.clamped_double_well(2.0, lipschitz_bound=11.0)
    rp = ReducedPotential(b, pot, 3)
    rng = np.random.default_rng(5)
    decay = 1.0 / np.arange(1, 33) ** 2
    worst_J, worst_W = -np.inf, -np.inf
    for _ in range(10):
        u0 = rng.normal(size=32) * decay
        J = b.energy(integrate_full(u0, b, pot, 5.0, 0.01).states, pot)
        worst_J = max(worst_J, float(np.max(np.diff(J))))
        tr = integrate_reduced(rng.uniform(-1.2, 1.2, size=3), rp, 5.0, 0.01)
        W = rp.energy(tr.states)
        worst_W = max(worst_W, float(np.max(np.diff(W))))
    report(5, worst_J <= 1e-8 and worst_W <= 1e-10,
           f"max increase of J {worst_J:.2e} (tol 1e-8), of W {worst_W:.2e} (tol 1e-10)")


def test_06_aim_scaling(report):
    b = SpectralBasis(math.pi, 64)
    pot = Potential.clamped_double_well(2.0, lipschitz_bound=11.0)
    u0 = 0.1 * b.mode(1)
    rep = aim_scaling_experiment(b, pot, u0, range(3, 13), 20.0, 1e-3, save_every=10)
    s = rep.slopes
    windows = {"dist_flat": (0.7, 1.3), "dist_phi0": (1.7, 2.3), "dist_static": (1.7, 2.3),
               "eta_norm": (1.0, np.inf), "etaprime_norm": (1.0, np.inf)}
    ok = all(lo <= s[k] <= hi for k, (lo, hi) in windows.items())
    detail = ", ".join(f"{k} {s[k]:.3f} in [{lo}, {hi}]" for k, (lo, hi) in windows.items())
    report(6, ok, f"slopes: {detail}")


def test_07_fokker_planck(report):
    land = QuarticDoubleWell()
    nu = 0.3
    g = DensityGrid.empty([-3.0], [3.0], 300)
    peq = stationary_density(land, nu, g)
    dt = 0.9 * fp_max_dt(g, land, nu)
    n = 2000
    fixed = l1_distance(fokker_planck_evolve(peq, land, nu, n * dt, dt, save_every=n).final, peq)
    tr = fokker_planck_evolve(g.point_mass([1.51]), land, nu, n * dt, dt)
    masses = np.array([p.mass() for p in tr.densities])
    mass_step = float(np.max(np.abs(np.diff(masses))))
    H = np.array([relative_entropy(p, peq) for p in tr.densities])
    dH = float(np.max(np.diff(H)))
    report(7, fixed <= 1e-12 and mass_step <= 1e-12 and dH <= 1e-10,
           f"Gibbs drift {fixed:.2e} (tol 1e-12), mass change/step {mass_step:.2e} (tol 1e-12), "
           f"max entropy increase {dH:.2e} (tol 1e-10)")


def test_08_free_energy_identity(report):
    land = QuarticDoubleWell()
    nu = 0.3
    g = DensityGrid.empty([-3.0], [3.0], 300)
    peq = stationary_density(land, nu, g)
    psi_eq = equilibrium_free_energy(land, nu, g)
    rng = np.random.default_rng(8)
    x = g.points()[..., 0]
    worst = 0.0
    for _ in range(20):
        w = peq.values * np.exp(rng.normal() * np.cos(rng.uniform(0.5, 5) * x + rng.uniform(0, 6)))
        p = g.with_values(w / (w.sum() * g.cell_volume))
        worst = max(worst, abs(free_energy(p, land, nu) - psi_eq - nu * relative_entropy(p, peq)))
    report(8, worst <= 1e-8, f"max identity defect {worst:.2e} over 20 densities (tol 1e-8)")


@pytest.mark.parametrize("name", ["quadratic", "double_well"])
def test_09_sde_fp_agreement(report, name):
    land = Quadratic.isotropic(1.0) if name == "quadratic" else QuarticDoubleWell()
    nu, T, x0 = 0.3, 2.0, 1.01
    g = DensityGrid.empty([-3.5], [3.5], 350)
    dt = 0.9 * fp_max_dt(g, land, nu)
    n = int(math.ceil(T / dt))
    p = fokker_planck_evolve(g.point_mass([x0]), land, nu, T, T / n, save_every=n).final
    ens = simulate_sde([x0], land, SdeConfig(nu, 1e-3, 100_000, 9), T)
    coarse = p.coarsen(5)
    emp = empirical_density(ens.endpoints, coarse)
    d = l1_distance(emp, coarse)
    report(9, d <= 0.05, f"{name}: L1(histogram, FP) = {d:.4f} (tol 0.05)")


def test_10_quasi_potential_identity(report, rp2):
    ou = ReducedPotential(SpectralBasis(math.pi, 8), Potential.zero(), 1)
    x_hat = unique_equilibria(find_equilibria(rp2, [[1.0, 0.0]]))[0].mu
    x = np.array([0.6, 0.1])
    dW = float(rp2.energy(x) - rp2.energy(x_hat))
    lines, ok = [], True
    for alpha in (0.25, 0.5):
        st = ActionSettings(alpha=alpha)
        for xo in (0.5, -1.0):
            v = quasi_potential_infty([xo], [0.0], ou, st).value
            want = 4 * alpha * 0.5 * xo**2
            ok &= abs(v - want) <= 0.01 * want
            lines.append(f"OU a={alpha} x={xo}: {v:.6f} vs {want:.6f}")
        v = quasi_potential_infty(x, x_hat, rp2, st).value
        want = 4 * alpha * dW
        ok &= abs(v - want) <= 0.01 * want
        lines.append(f"m=2 a={alpha}: {v:.6f} vs {want:.6f}")
    report(10, bool(ok), "; ".join(lines) + " (tol 1%)")


def test_11_hj_and_mane(report, rp2):
    pts = grid_points([-1.5, -0.8], [1.5, 0.8], [15, 9])
    res = max(stationary_hj_residual(lambda x, a=a: 4 * a * rp2.gradient(x), rp2, pts,
                                     ActionSettings(alpha=a)) for a in (0.25, 0.5))
    crit = np.array([e.mu for e in unique_equilibria(find_equilibria(rp2, [[1, 0], [-1, 0], [0, 0]]))])
    rng = np.random.default_rng(11)
    bounds = [mane_upper_bound(FourierTestFunction.random(rng, 2).gradient, rp2, pts,
                               critical_points=crit) for _ in range(50)]
    zero = mane_upper_bound(lambda x: np.zeros_like(x), rp2, pts, critical_points=crit)
    ok = res <= 1e-10 and min(bounds) >= -1e-8 and zero == 0.0
    report(11, ok, f"HJ residual {res:.2e} (tol 1e-10), min bound over 50 test functions "
                   f"{min(bounds):.3e} (>= -1e-8), bound at u = 0: {zero}")


def test_12_cole_hopf_convergence(report):
    land = QuarticDoubleWell()
    T = 1.0
    g = DensityGrid.empty([-2.5], [2.5], 1000)
    xs = g.axes()[0]
    x0 = xs[g.cell_of([0.5])]
    sub = np.arange(0, 1000, 10)
    S = np.array([minimize_action([x0], [xs[i]], T, 100, land).value for i in sub])
    win = S <= 0.3
    dists = []
    for nu in (0.2, 0.1, 0.05):
        n = int(math.ceil(T / (0.9 * fp_max_dt(g, land, nu))))
        p = fokker_planck_evolve(g.point_mass([x0]), land, nu, T, T / n, save_every=n).final
        Sn = cole_hopf_rate(p, nu)[sub][win]
        dists.append(float(np.max(np.abs(Sn - Sn.min() - (S[win] - S[win].min())))))
    ok = dists[0] > dists[1] > dists[2]
    report(12, ok, "sup distance for nu = 0.2, 0.1, 0.05: " + ", ".join(f"{d:.4f}" for d in dists)
           + " (strictly decreasing)")


def test_13_reproducibility(report, tmp_path, monkeypatch):
    cfg = ExperimentConfig.from_dict({
        "schema_version": 1,
        "basis": {"n_modes": 16},
        "potential": {"kind": "clamped_double_well", "epsilon": 2.0, "lipschitz_bound": None},
        "reduction": {"m": 2},
        "sde": {"nu": 0.1, "dt": 0.01, "T": 0.2, "n_paths": 5000, "seed": 13, "mu0": [0.5, 0.1]},
    })
    blobs = []
    for w in (1, 2, 8):
        monkeypatch.setenv("GRAD_REDUCE_THREADS", str(w))
        run("sde", cfg, tmp_path / f"w{w}")
        blobs.append((tmp_path / f"w{w}" / "ensemble.csv").read_bytes())
    same = blobs[0] == blobs[1] == blobs[2]
    report(13, same, f"ensemble.csv identical across 1, 2, 8 workers: {same} "
                     f"({len(blobs[0])} bytes)")
