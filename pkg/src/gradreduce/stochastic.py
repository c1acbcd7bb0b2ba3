"""
Stochastic layer on the reduced gradient system
===============================================

Noise convention: the SDE is

    d mu = -grad W(mu) dt + sqrt(2 nu) dB,

whose Fokker-Planck equation is  p_t = div(p grad W) + nu Lap p  with Gibbs
state  p_eq = exp(-W/nu)/Z.  Under the sqrt(nu)-amplitude convention the
diffusion constant is nu/2 instead, i.e. nu_ours = nu_sqrt / 2.

Densities live on regular boxes in R^m, m <= 2, with values at cell centres.
The Fokker-Planck solver is a conservative finite-volume scheme with
exponentially fitted (Scharfetter-Gummel / Chang-Cooper) fluxes; its discrete
stationary state is exactly the cell-centre Gibbs density.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import BoxTooSmall, CflViolation, StabilityGuard, SupportMismatch

__all__ = [
    "SdeConfig",
    "Ensemble",
    "DensityGrid",
    "FPTrajectory",
    "path_rng",
    "simulate_sde",
    "local_lipschitz",
    "stationary_density",
    "fokker_planck_evolve",
    "fp_max_dt",
    "relative_entropy",
    "entropy",
    "free_energy",
    "equilibrium_free_energy",
    "empirical_density",
    "l1_distance",
]

_CHUNK = 2048
_BLOCK = 256


# -- SDE ensembles ----------------------------------------------------------------


@dataclass(frozen=True)
class SdeConfig:
    """Euler-Maruyama settings; increments have variance 2 nu dt per coordinate."""

    nu: float
    dt: float
    n_paths: int
    master_seed: int = 0
    bound: float = 1e6

    def __post_init__(self):
        if not self.nu >= 0:
            raise ValueError("nu must be non-negative")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.n_paths < 0:
            raise ValueError("n_paths must be >= 0")
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError("master_seed must fit in 64 bits")


@dataclass
class Ensemble:
    endpoints: np.ndarray
    blown: np.ndarray
    T: float
    paths: np.ndarray | None = None
    times: np.ndarray | None = None
    lipschitz_estimate: float = float("nan")

    @property
    def n_blown(self) -> int:
        return int(self.blown.sum())


def path_rng(master_seed: int, path_id: int) -> np.random.Generator:
    """Counter-based stream for one path: Philox keyed by (master_seed, path_id)."""
    key = np.array([int(master_seed), int(path_id)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def local_lipschitz(landscape, mu0, nu: float) -> float:
    """Largest Hessian spectral norm of W at mu0 and at mu0 +- 3 sqrt(2 nu) e_i."""
    mu0 = np.atleast_1d(np.asarray(mu0, dtype=float))
    r = 3 * np.sqrt(2 * nu)
    pts = np.concatenate([mu0[None], mu0 + r * np.eye(mu0.size), mu0 - r * np.eye(mu0.size)])
    hs = landscape.hessian(pts)
    return float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (hs + np.swapaxes(hs, -1, -2))))))


def _drift(landscape):
    """Stateful -grad W evaluator; warm-starts tail solves of reduced potentials."""
    if not hasattr(landscape, "solve_tail"):
        return lambda mu, alive: -landscape.gradient(mu)
    state = {}

    def f(mu, alive):
        eta0 = state.get("eta")
        if eta0 is not None:
            eta0 = eta0[alive]
        u = landscape.embed(mu) + landscape.solve_tail(mu, eta0).eta
        full = state.setdefault("eta", np.zeros((alive.size, u.shape[-1])))
        full[alive] = u
        return -landscape.gradient_from_field(u)

    return f


def _run_chunk(start, stop, mu0, landscape, cfg: SdeConfig, n_steps, store_every):
    n = stop - start
    m = mu0.size
    x = np.broadcast_to(mu0, (n, m)).copy()
    alive = np.ones(n, dtype=bool)
    rngs = [path_rng(cfg.master_seed, p) for p in range(start, stop)]
    drift = _drift(landscape)
    amp = np.sqrt(2 * cfg.nu * cfg.dt)
    stored = [x.copy()] if store_every else None
    step = 0
    while step < n_steps:
        blk = min(_BLOCK, n_steps - step)
        noise = np.stack([g.standard_normal((blk, m)) for g in rngs], axis=1)
        for b in range(blk):
            if alive.any():
                xa = x[alive]
                xa = xa + cfg.dt * drift(xa, alive) + amp * noise[b][alive]
                bad = ~np.all(np.isfinite(xa), axis=-1) | (np.linalg.norm(xa, axis=-1) > cfg.bound)
                x[alive] = xa
                idx = np.flatnonzero(alive)
                alive[idx[bad]] = False
            step += 1
            if store_every and step % store_every == 0:
                stored.append(x.copy())
    return x, ~alive, (np.stack(stored, axis=1) if store_every else None)


def _workers(workers):
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("GRAD_REDUCE_THREADS")
    return max(1, int(env)) if env else 1


def simulate_sde(mu0, landscape, cfg: SdeConfig, T: float, store_every: int = 0,
                 workers: int | None = None) -> Ensemble:
    """Euler-Maruyama ensemble  mu_{k+1} = mu_k - grad W dt + sqrt(2 nu dt) xi_k.

    Paths are processed in fixed-size chunks and each path draws from its own
    counter-based stream, so results are bit-identical for any worker count.
    Paths that leave the ball of radius ``cfg.bound`` are frozen and flagged.
    """
    mu0 = np.atleast_1d(np.asarray(mu0, dtype=float))
    n_steps = int(round(T / cfg.dt))
    if n_steps < 1 or abs(n_steps * cfg.dt - T) > 1e-9 * max(T, 1.0):
        raise ValueError(f"T={T} is not an integer multiple of dt={cfg.dt}")
    lip = local_lipschitz(landscape, mu0, cfg.nu)
    if cfg.dt * lip >= 0.5:
        raise StabilityGuard(f"dt * Lip(grad W) = {cfg.dt * lip:.3g} >= 0.5; reduce dt")
    chunks = [(s, min(s + _CHUNK, cfg.n_paths)) for s in range(0, cfg.n_paths, _CHUNK)]
    with ThreadPoolExecutor(max_workers=_workers(workers)) as pool:
        res = list(pool.map(
            lambda c: _run_chunk(c[0], c[1], mu0, landscape, cfg, n_steps, store_every), chunks))
    m = mu0.size
    if res:
        ends = np.concatenate([r[0] for r in res])
        blown = np.concatenate([r[1] for r in res])
        paths = np.concatenate([r[2] for r in res]) if store_every else None
    else:
        ends, blown, paths = np.empty((0, m)), np.empty(0, dtype=bool), None
    times = cfg.dt * np.arange(0, n_steps + 1, store_every) if store_every else None
    return Ensemble(ends, blown, T, paths, times, lip)


# -- densities on grids -----------------------------------------------------------


@dataclass
class DensityGrid:
    """Cell-centred density on the box prod_d [lower_d, upper_d] with n_cells_d cells."""

    lower: tuple
    upper: tuple
    n_cells: tuple
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.lower = tuple(float(v) for v in np.atleast_1d(self.lower))
        self.upper = tuple(float(v) for v in np.atleast_1d(self.upper))
        self.n_cells = tuple(int(v) for v in np.atleast_1d(self.n_cells))
        if not len(self.lower) == len(self.upper) == len(self.n_cells):
            raise ValueError("box bounds and n_cells differ in dimension")
        if self.dim > 2:
            raise ValueError("density grids support m <= 2")
        self.values = np.asarray(self.values, dtype=float).reshape(self.n_cells)

    @classmethod
    def empty(cls, lower, upper, n_cells) -> "DensityGrid":
        n = tuple(int(v) for v in np.atleast_1d(n_cells))
        return cls(lower, upper, n, np.zeros(n))

    @property
    def dim(self) -> int:
        return len(self.n_cells)

    @property
    def spacing(self) -> np.ndarray:
        return (np.array(self.upper) - np.array(self.lower)) / np.array(self.n_cells)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axes(self) -> list[np.ndarray]:
        return [lo + (np.arange(n) + 0.5) * h
                for lo, n, h in zip(self.lower, self.n_cells, self.spacing)]

    def edges(self) -> list[np.ndarray]:
        return [np.linspace(lo, hi, n + 1) for lo, hi, n in zip(self.lower, self.upper, self.n_cells)]

    def points(self) -> np.ndarray:
        """Cell centres, shape n_cells + (dim,)."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def mass(self) -> float:
        return float(np.sum(self.values) * self.cell_volume)

    def with_values(self, values) -> "DensityGrid":
        return DensityGrid(self.lower, self.upper, self.n_cells, values)

    def same_grid(self, other: "DensityGrid") -> bool:
        return (self.lower, self.upper, self.n_cells) == (other.lower, other.upper, other.n_cells)

    def cell_of(self, x) -> tuple:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        idx = np.floor((x - np.array(self.lower)) / self.spacing).astype(int)
        return tuple(int(np.clip(i, 0, n - 1)) for i, n in zip(idx, self.n_cells))

    def coarsen(self, factor: int) -> "DensityGrid":
        """Average blocks of ``factor`` cells per axis; mass is preserved."""
        if any(n % factor for n in self.n_cells):
            raise ValueError("factor must divide every n_cells")
        shape = []
        for n in self.n_cells:
            shape += [n // factor, factor]
        v = self.values.reshape(shape).mean(axis=tuple(range(1, 2 * self.dim, 2)))
        return DensityGrid(self.lower, self.upper, tuple(n // factor for n in self.n_cells), v)

    def point_mass(self, x) -> "DensityGrid":
        """All mass in the cell containing ``x``."""
        v = np.zeros(self.n_cells)
        v[self.cell_of(x)] = 1.0 / self.cell_volume
        return self.with_values(v)


def _energy_on(grid: DensityGrid, landscape) -> np.ndarray:
    pts = grid.points()
    return np.asarray(landscape.energy(pts.reshape(-1, grid.dim))).reshape(grid.n_cells)


def stationary_density(landscape, nu: float, grid: DensityGrid,
                       boundary_ratio: float = 1e-12) -> DensityGrid:
    """Gibbs density exp(-W/nu)/Z at cell centres, Z by the same cell quadrature."""
    W = _energy_on(grid, landscape)
    w = np.exp(-(W - W.min()) / nu)
    rim = np.zeros(grid.n_cells, dtype=bool)
    for d in range(grid.dim):
        sl = [slice(None)] * grid.dim
        sl[d] = [0, -1]
        rim[tuple(sl)] = True
    if w[rim].max() > boundary_ratio * w.max():
        raise BoxTooSmall(f"boundary Gibbs weight {w[rim].max() / w.max():.3g} exceeds "
                          f"{boundary_ratio:g} of the maximum; enlarge the box")
    p = w / (w.sum() * grid.cell_volume)
    out = grid.with_values(p)
    out.meta["log_Z"] = float(-W.min() / nu + np.log(w.sum() * grid.cell_volume))
    return out


def equilibrium_free_energy(landscape, nu: float, grid: DensityGrid) -> float:
    """-nu ln Z with Z the cell quadrature of exp(-W/nu)."""
    W = _energy_on(grid, landscape)
    s = np.sum(np.exp(-(W - W.min()) / nu)) * grid.cell_volume
    return float(W.min() - nu * np.log(s))


def _check_pair(p: DensityGrid, q: DensityGrid):
    if not p.same_grid(q):
        raise SupportMismatch("densities live on different grids")


def _plogp_over(p, q):
    pos = p > 0
    if np.any(pos & ~(q > 0)):
        raise SupportMismatch("p has mass where q vanishes")
    out = np.zeros_like(p)
    out[pos] = p[pos] * np.log(p[pos] / q[pos])
    return out


def relative_entropy(p: DensityGrid, q: DensityGrid) -> float:
    """sum p ln(p/q) dV with 0 ln 0 = 0."""
    _check_pair(p, q)
    return float(np.sum(_plogp_over(p.values, q.values)) * p.cell_volume)


def entropy(p: DensityGrid) -> float:
    """H(p) = -sum p ln p dV."""
    return -float(np.sum(_plogp_over(p.values, np.ones_like(p.values))) * p.cell_volume)


def free_energy(p: DensityGrid, landscape, nu: float) -> float:
    """Psi_nu(p) = E_p[W] - nu H(p)."""
    W = _energy_on(p, landscape)
    return float(np.sum(p.values * W) * p.cell_volume - nu * entropy(p))


def l1_distance(p: DensityGrid, q: DensityGrid) -> float:
    _check_pair(p, q)
    return float(np.sum(np.abs(p.values - q.values)) * p.cell_volume)


def empirical_density(samples, grid: DensityGrid) -> DensityGrid:
    """Normalized histogram of ``samples`` (shape (n, dim)) on ``grid``.

    Samples outside the box are dropped and counted in ``meta['n_outside']``.
    """
    x = np.asarray(samples, dtype=float).reshape(-1, grid.dim)
    counts, _ = np.histogramdd(x, bins=grid.edges())
    inside = counts.sum()
    out = grid.with_values(counts / (inside * grid.cell_volume) if inside else counts)
    out.meta["n_outside"] = int(x.shape[0] - inside)
    return out


# -- Fokker-Planck ----------------------------------------------------------------


def _bernoulli(w):
    """B(w) = w / (e^w - 1), B(0) = 1."""
    w = np.asarray(w, dtype=float)
    small = np.abs(w) < 1e-8
    with np.errstate(over="ignore"):
        b = np.where(small, 1.0 - 0.5 * w, w / np.expm1(np.where(small, 1.0, w)))
    return b


@dataclass
class FPTrajectory:
    times: np.ndarray
    densities: list
    dt: float

    @property
    def final(self) -> DensityGrid:
        return self.densities[-1]


def _fp_operator(grid: DensityGrid, W, nu):
    """Per-axis face coefficients: flux_{i+1/2} = -(nu/h)[B(-w) p_{i+1} - B(w) p_i]."""
    ops = []
    for d, h in enumerate(grid.spacing):
        w = np.diff(W, axis=d) / nu
        ops.append((d, h, nu / h * _bernoulli(-w), nu / h * _bernoulli(w)))
    return ops


def fp_max_dt(grid: DensityGrid, landscape, nu: float) -> float:
    """Largest step allowed by dt <= 0.4 h^2 / (2 nu + h max|grad W|)."""
    h = float(np.min(grid.spacing))
    g = landscape.gradient(grid.points().reshape(-1, grid.dim))
    gmax = float(np.max(np.linalg.norm(g, axis=-1)))
    return 0.4 * h * h / (2 * nu + h * gmax)


def fokker_planck_evolve(p0: DensityGrid, landscape, nu: float, T: float, dt: float,
                         save_every: int = 1) -> FPTrajectory:
    """Explicit-Euler finite-volume evolution of p_t = div(p grad W) + nu Lap p.

    Zero-flux box boundary; mass is conserved to rounding and, under the step
    guard, every update is a convex combination so positivity is preserved.
    """
    if not nu > 0:
        raise ValueError("nu must be positive")
    n = int(round(T / dt))
    if n < 1 or abs(n * dt - T) > 1e-9 * max(T, 1.0):
        raise ValueError(f"T={T} is not an integer multiple of dt={dt}")
    dt_max = fp_max_dt(p0, landscape, nu)
    if dt > dt_max * (1 + 1e-12):
        raise CflViolation(f"dt={dt:g} exceeds the step guard {dt_max:g}")
    W = _energy_on(p0, landscape)
    ops = _fp_operator(p0, W, nu)
    diag = np.zeros(p0.n_cells)
    for d, h, cp, cm in ops:
        lo = [slice(None)] * p0.dim
        hi = [slice(None)] * p0.dim
        lo[d], hi[d] = slice(0, -1), slice(1, None)
        diag[tuple(lo)] += cm / h
        diag[tuple(hi)] += cp / h
    if np.max(diag) * dt > 1:
        raise CflViolation(f"dt={dt:g} would break positivity (max outflow rate {np.max(diag):g})")

    p = p0.values.copy()
    times, dens = [0.0], [p0.with_values(p.copy())]
    for k in range(1, n + 1):
        div = np.zeros_like(p)
        for d, h, cp, cm in ops:
            lo = [slice(None)] * p.ndim
            hi = [slice(None)] * p.ndim
            lo[d], hi[d] = slice(0, -1), slice(1, None)
            flux = -(cp * p[tuple(hi)] - cm * p[tuple(lo)])
            div[tuple(lo)] += flux / h
            div[tuple(hi)] -= flux / h
        p = p - dt * div
        if k % save_every == 0 or k == n:
            times.append(k * dt)
            dens.append(p0.with_values(p.copy()))
    return FPTrajectory(np.array(times), dens, dt)
