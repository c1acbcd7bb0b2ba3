"""
Time integration of the full, reduced and flat-Galerkin systems
===============================================================

* ``integrate_full``: u_t = Delta u - gamma(u) with a second-order exponential
  time-differencing Runge-Kutta scheme (ETDRK2).  The diagonal linear part is
  integrated exactly, the nonlinearity explicitly.
* ``integrate_flat``: the same scheme on the head modes with the tail frozen
  at zero, i.e. mu_t = Delta mu - P_m gamma(mu).
* ``integrate_reduced``: classical RK4 for d mu/dt = -grad W(mu).

``aim_scaling_experiment`` integrates one full orbit and measures, for a list
of cutoffs, how far the orbit stays from each approximate inertial manifold.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import BlowUp
from .potentials import Potential
from .reduction import ReducedPotential, manifold_map
from .spectral import SpectralBasis

__all__ = [
    "Trajectory",
    "ScalingReport",
    "integrate_full",
    "integrate_flat",
    "integrate_reduced",
    "distance_to_manifold",
    "burn_in_time",
    "aim_scaling_experiment",
    "fit_loglog_slope",
]


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    dt: float
    method: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.times) != len(self.states):
            raise ValueError("times and states differ in length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def _phi_functions(z):
    """phi_1(z) = (e^z - 1)/z and phi_2(z) = (e^z - 1 - z)/z^2, stable near 0."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-2
    zs = np.where(small, 1.0, z)
    phi1 = np.where(small, 1 + z / 2 + z**2 / 6 + z**3 / 24 + z**4 / 120,
                    np.expm1(zs) / zs)
    phi2 = np.where(small, 0.5 + z / 6 + z**2 / 24 + z**3 / 120 + z**4 / 720,
                    (np.expm1(zs) - zs) / zs**2)
    return phi1, phi2


def _n_steps(T, dt):
    if not dt > 0:
        raise ValueError("dt must be positive")
    n = int(round(T / dt))
    if n < 1 or abs(n * dt - T) > 1e-9 * max(T, 1.0):
        raise ValueError(f"T={T} is not an integer multiple of dt={dt}")
    return n


def _etdrk2(u0, lam, nonlin, T, dt, save_every, bound, method):
    n = _n_steps(T, dt)
    z = -lam * dt
    e = np.exp(z)
    phi1, phi2 = _phi_functions(z)
    u = np.array(u0, dtype=float, copy=True)
    times, states = [0.0], [u.copy()]
    for k in range(1, n + 1):
        nu = nonlin(u)
        a = e * u + dt * phi1 * nu
        u = a + dt * phi2 * (nonlin(a) - nu)
        if not np.all(np.isfinite(u)) or np.linalg.norm(u) > bound:
            raise BlowUp(f"{method}: |u| exceeded {bound:g} at t={k * dt:g}; reduce dt")
        if k % save_every == 0 or k == n:
            times.append(k * dt)
            states.append(u.copy())
    return Trajectory(np.array(times), np.array(states), dt, method)


def integrate_full(u0, basis: SpectralBasis, potential: Potential, T: float, dt: float,
                   save_every: int = 1, bound: float = 1e6) -> Trajectory:
    """ETDRK2 for the full Galerkin system on all N modes."""
    u0 = np.asarray(u0, dtype=float)
    if u0.shape != (basis.n_modes,):
        raise ValueError(f"u0 must have {basis.n_modes} coefficients")
    return _etdrk2(u0, basis.eigenvalues, lambda u: -basis.apply_nonlinearity(u, potential),
                   T, dt, save_every, bound, "etdrk2-full")


def integrate_flat(mu0, basis: SpectralBasis, potential: Potential, m: int, T: float,
                   dt: float, save_every: int = 1, bound: float = 1e6) -> Trajectory:
    """ETDRK2 on the head modes with the tail frozen at zero.

    ``m == N`` is allowed and reproduces :func:`integrate_full`.
    """
    if not 1 <= m <= basis.n_modes:
        raise ValueError(f"cutoff m={m} outside 1..{basis.n_modes}")
    mu0 = np.asarray(mu0, dtype=float)
    pad = np.zeros(basis.n_modes)

    def nonlin(mu):
        pad[:m] = mu
        return -basis.apply_nonlinearity(pad, potential)[:m]

    tr = _etdrk2(mu0[:m], basis.eigenvalues[:m], nonlin, T, dt, save_every, bound, "etdrk2-flat")
    tr.meta["m"] = m
    return tr


def integrate_reduced(mu0, rp: ReducedPotential, T: float, dt: float,
                      save_every: int = 1, bound: float = 1e6) -> Trajectory:
    """Classical RK4 for d mu/dt = -grad W(mu).

    The tail solve of each stage is warm-started from the previous one.
    """
    n = _n_steps(T, dt)
    mu = np.array(mu0, dtype=float, copy=True)
    if mu.shape != (rp.m,):
        raise ValueError(f"mu0 must have {rp.m} components")
    eta = None

    def rhs(x):
        nonlocal eta
        u = rp.embed(x) + rp.solve_tail(x, eta).eta
        eta = u.copy()
        return -rp.gradient_from_field(u)

    times, states = [0.0], [mu.copy()]
    for k in range(1, n + 1):
        k1 = rhs(mu)
        k2 = rhs(mu + 0.5 * dt * k1)
        k3 = rhs(mu + 0.5 * dt * k2)
        k4 = rhs(mu + dt * k3)
        mu = mu + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(mu)) or np.linalg.norm(mu) > bound:
            raise BlowUp(f"rk4-reduced: |mu| exceeded {bound:g} at t={k * dt:g}; reduce dt")
        if k % save_every == 0 or k == n:
            times.append(k * dt)
            states.append(mu.copy())
    tr = Trajectory(np.array(times), np.array(states), dt, "rk4-reduced")
    tr.meta["m"] = rp.m
    return tr


def distance_to_manifold(u, kind: str, rp: ReducedPotential, k: int = 1) -> np.ndarray:
    """|| Q_m u - Phi_kind(P_m u) || for one field or a stack of fields."""
    u = np.asarray(u, dtype=float)
    phi = manifold_map(kind, rp, u[..., : rp.m], k)
    diff = u - phi
    diff[..., : rp.m] = 0.0
    return np.linalg.norm(diff, axis=-1)


# -- approximate inertial manifold scaling -----------------------------------------


@dataclass
class ScalingReport:
    """Sup-distances of a full orbit from each manifold, per cutoff."""

    rows: list
    slopes: dict
    kappa: dict
    t_star: float
    T: float

    COLUMNS = ("m", "delta", "dist_flat", "dist_phi0", "dist_static", "eta_norm", "etaprime_norm")

    def column(self, name) -> np.ndarray:
        i = self.COLUMNS.index(name)
        return np.array([r[i] for r in self.rows], dtype=float)


def burn_in_time(traj: Trajectory, basis: SpectralBasis, potential: Potential,
                 threshold: float = 1e-6) -> float:
    """First stored time where -dJ/dt drops below ``threshold``, capped at T/2."""
    J = basis.energy(traj.states, potential)
    rate = -np.diff(J) / np.diff(traj.times)
    cap = traj.times[-1] / 2
    below = np.flatnonzero(rate < threshold)
    if below.size == 0:
        return float(cap)
    return float(min(traj.times[below[0]], cap))


def fit_loglog_slope(x, y) -> float:
    x, y = np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def _workers(default=None):
    env = os.environ.get("GRAD_REDUCE_THREADS")
    if env:
        return max(1, int(env))
    return default or 1


def _scaling_row(m, traj, window, basis, potential, tol):
    rp = ReducedPotential(basis, potential, m, tol=tol)
    states = traj.states[window]
    delta = basis.eigenvalues[0] / basis.eigenvalues[m]
    d_flat = distance_to_manifold(states, "flat", rp).max()
    d_phi0 = distance_to_manifold(states, "phi0", rp).max()
    d_static = distance_to_manifold(states, "static_tail", rp).max()
    tails = traj.states.copy()
    tails[:, :m] = 0.0
    eta_norm = np.linalg.norm(tails[window], axis=-1).max()
    deta = np.gradient(tails, traj.times, axis=0, edge_order=2)
    etap = np.linalg.norm(deta[window], axis=-1).max()
    return (m, delta, d_flat, d_phi0, d_static, eta_norm, etap)


def aim_scaling_experiment(basis: SpectralBasis, potential: Potential, u0, cutoffs,
                           T: float, dt: float, save_every: int = 1,
                           burn_in_threshold: float = 1e-6, tol: float = 1e-12,
                           workers: int | None = None) -> ScalingReport:
    """Distance of one full-PDE orbit from flat, Phi_0 and eta_tilde manifolds.

    After the burn-in time ``t*`` the sup over stored states of each distance
    is recorded for every cutoff in ``cutoffs`` together with sup |eta| and
    sup |eta'|; log-log slopes against delta = lambda_1/lambda_{m+1} are fitted
    by least squares, and kappa = max(dist/delta^p) is reported for p = 1
    (flat, |eta|, |eta'|) and p = 2 (phi0, static).
    """
    cutoffs = sorted(int(m) for m in cutoffs)
    for m in cutoffs:
        ReducedPotential(basis, potential, m, tol=tol)  # margin check up front
    traj = integrate_full(u0, basis, potential, T, dt, save_every=save_every)
    t_star = burn_in_time(traj, basis, potential, burn_in_threshold)
    window = traj.times >= t_star - 1e-12
    with ThreadPoolExecutor(max_workers=_workers(workers)) as pool:
        rows = list(pool.map(lambda m: _scaling_row(m, traj, window, basis, potential, tol),
                             cutoffs))
    delta = np.array([r[1] for r in rows])
    slopes, kappa = {}, {}
    powers = {"dist_flat": 1, "dist_phi0": 2, "dist_static": 2, "eta_norm": 1, "etaprime_norm": 1}
    for i, name in enumerate(ScalingReport.COLUMNS[2:], start=2):
        vals = np.array([r[i] for r in rows])
        slopes[name] = fit_loglog_slope(delta, vals) if np.all(vals > 0) else float("nan")
        kappa[name] = float(np.max(vals / delta ** powers[name]))
    return ScalingReport(rows, slopes, kappa, t_star, T)
