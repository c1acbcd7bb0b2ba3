"""
Exact finite reduction of the static problem
============================================

For a cutoff ``m`` the field splits as ``u = mu + eta`` (head modes ``1..m``,
tail modes ``m+1..N``).  The tail equation

    eta = Q_m g(gamma(mu + eta)),      g = Delta^{-1},

is a contraction on the tail space with constant ``q = C / lambda_{m+1}``.
Its fixed point ``eta_tilde(mu)`` defines the reduced energy
``W(mu) = J(mu + eta_tilde(mu))`` whose critical points are in one-to-one
correspondence with the equilibria of ``u_t = Delta u - gamma(u)``.

Reduced coordinates ``mu`` are arrays of shape ``(..., m)``; tails are full
length-``N`` coefficient arrays with zero head.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractionViolated, MaxIterations
from .potentials import Potential
from .spectral import SpectralBasis

__all__ = [
    "MANIFOLD_KINDS",
    "ReducedPotential",
    "TailSolution",
    "Equilibrium",
    "contraction_margin",
    "solve_tail",
    "reduced_energy",
    "reduced_gradient",
    "find_equilibria",
    "unique_equilibria",
    "manifold_map",
    "invariance_defect",
]

MANIFOLD_KINDS = ("flat", "phi0", "phi_k", "static_tail")


def contraction_margin(potential: Potential, basis: SpectralBasis, m: int) -> float:
    """q = C / lambda_{m+1}, the Lipschitz constant of the tail map."""
    if not 1 <= m < basis.n_modes:
        raise ValueError(f"cutoff m={m} outside 1..{basis.n_modes - 1}")
    return float(potential.lipschitz_bound / basis.eigenvalues[m])


@dataclass
class TailSolution:
    eta: np.ndarray
    iterations: int
    final_update_norm: float
    ratios: np.ndarray = field(default_factory=lambda: np.empty(0))


@dataclass(frozen=True)
class ReducedPotential:
    """The map mu -> (eta_tilde(mu), W(mu), grad W(mu)).

    Construction refuses cutoffs with ``q >= 1``.

    Parameters
    ----------
    basis, potential :
        Spectral discretization and nonlinearity.
    m : int
        Number of head modes.
    tol : float
        Picard stopping tolerance on the update norm.
    max_iter : int
        Picard iteration cap; hitting it means the Lipschitz certificate is wrong.
    """

    basis: SpectralBasis
    potential: Potential
    m: int
    tol: float = 1e-12
    max_iter: int = 200
    q: float = field(init=False)

    def __post_init__(self):
        q = contraction_margin(self.potential, self.basis, self.m)
        object.__setattr__(self, "q", q)
        if not q < 1:
            raise ContractionViolated(
                f"contraction margin q = C/lambda_(m+1) = {q:.6g} >= 1 for m={self.m} "
                f"(C/lambda_m = {self.head_margin:.6g})")

    @property
    def dim(self) -> int:
        return self.m

    @property
    def head_eigenvalues(self) -> np.ndarray:
        return self.basis.eigenvalues[: self.m]

    @property
    def head_margin(self) -> float:
        """The cruder ratio C / lambda_m, reported alongside q."""
        return float(self.potential.lipschitz_bound / self.basis.eigenvalues[self.m - 1])

    @property
    def lower_bound(self) -> float:
        return self.basis.domain_length * self.potential.lower_bound

    # -- lifting -----------------------------------------------------------

    def embed(self, mu) -> np.ndarray:
        mu = np.asarray(mu, dtype=float)
        if mu.shape[-1] != self.m:
            raise ValueError(f"expected {self.m} reduced coordinates, got {mu.shape[-1]}")
        out = np.zeros(mu.shape[:-1] + (self.basis.n_modes,))
        out[..., : self.m] = mu
        return out

    def tail_map(self, head, eta) -> np.ndarray:
        """One Picard step eta -> Q_m g(gamma(mu + eta))."""
        f = self.basis.apply_nonlinearity(head + eta, self.potential)
        out = self.basis.inv_laplacian(f)
        out[..., : self.m] = 0.0
        return out

    def solve_tail(self, mu, eta0=None) -> TailSolution:
        """Picard iteration for the tail fixed point, batched over leading axes.

        Rows stop updating individually once their update norm falls below
        ``tol``, so each row's result does not depend on its batch-mates.
        ``eta0`` warm-starts the iteration (default: zero tail).
        """
        head = self.embed(mu)
        batch = head.shape[:-1]
        h2 = head.reshape(-1, self.basis.n_modes)
        eta = np.zeros_like(h2) if eta0 is None else np.array(eta0, dtype=float).reshape(h2.shape)
        eta[:, : self.m] = 0.0
        active = np.ones(h2.shape[0], dtype=bool)
        last = np.full(h2.shape[0], np.inf)
        ratios = []
        it = 0
        while active.any():
            if it >= self.max_iter:
                raise MaxIterations(
                    f"tail Picard iteration did not reach tol={self.tol:g} in {self.max_iter} steps "
                    f"(q={self.q:.4g}); Lipschitz certificate violated?")
            it += 1
            new = self.tail_map(h2[active], eta[active])
            upd = np.sqrt(np.sum((new - eta[active]) ** 2, axis=-1))
            prev = last[active]
            ok = prev > 1e-13
            if ok.any():
                ratios.append(float(np.max(upd[ok] / prev[ok])))
            eta[active] = new
            last[active] = upd
            idx = np.flatnonzero(active)
            active[idx[upd <= self.tol]] = False
        return TailSolution(eta.reshape(batch + (self.basis.n_modes,)), it,
                            float(np.max(last)) if last.size else 0.0, np.asarray(ratios))

    def lift(self, mu, eta0=None) -> np.ndarray:
        """Full field mu + eta_tilde(mu)."""
        return self.embed(mu) + self.solve_tail(mu, eta0).eta

    # -- reduced functionals -------------------------------------------------

    def energy(self, mu) -> np.ndarray:
        return self.basis.energy(self.lift(mu), self.potential)

    def gradient_from_field(self, u) -> np.ndarray:
        return -self.basis.residual(u, self.potential)[..., : self.m]

    def gradient(self, mu, eta0=None) -> np.ndarray:
        """grad W(mu)_j = lambda_j mu_j + <gamma(mu + eta_tilde), u_j>, j <= m."""
        return self.gradient_from_field(self.lift(mu, eta0))

    def hessian(self, mu) -> np.ndarray:
        """Hessian of W as the Schur complement of the full Hessian of J.

        With G = <gamma'(u) u_i, u_j> and Lambda = diag(lambda), differentiating
        the tail equation gives

            D^2 W = (Lambda + G)_HH - G_HT (Lambda + G)_TT^{-1} G_TH.
        """
        u = self.lift(mu)
        b = self.basis
        full = b.multiplication_matrix(self.potential.gamma_prime(b.synthesize(u)))
        full = full + np.diag(b.eigenvalues)
        m = self.m
        hh, ht = full[..., :m, :m], full[..., :m, m:]
        th, tt = full[..., m:, :m], full[..., m:, m:]
        return hh - ht @ np.linalg.solve(tt, th)


def solve_tail(rp: ReducedPotential, mu, eta0=None) -> TailSolution:
    return rp.solve_tail(mu, eta0)


def reduced_energy(rp: ReducedPotential, mu):
    return rp.energy(mu)


def reduced_gradient(rp: ReducedPotential, mu):
    return rp.gradient(mu)


# -- equilibria ----------------------------------------------------------------


@dataclass
class Equilibrium:
    mu: np.ndarray
    u: np.ndarray
    residual_norm: float
    gradient_norm: float
    converged: bool
    iterations: int
    seed: np.ndarray
    morse_index: int = -1
    energy: float = np.nan

    @property
    def kind(self) -> str:
        if self.morse_index == 0:
            return "minimum"
        if self.morse_index == len(self.mu):
            return "maximum"
        return "saddle" if self.morse_index > 0 else "unknown"


def _fd_jacobian(fun, x, h=1e-6):
    n = x.size
    pts = np.concatenate([x + h * np.eye(n), x - h * np.eye(n)])
    g = fun(pts)
    return ((g[:n] - g[n:]) / (2 * h)).T


def find_equilibria(rp: ReducedPotential, seeds, gtol: float = 1e-10,
                    max_newton: int = 60) -> list[Equilibrium]:
    """Damped Newton on grad W from each seed.

    The Jacobian is a central finite difference of grad W.  Non-converged
    seeds are reported with ``converged=False`` rather than raised.
    """
    out = []
    for seed in np.atleast_2d(np.asarray(seeds, dtype=float)):
        mu = seed.copy()
        g = rp.gradient(mu)
        gn = float(np.linalg.norm(g))
        it = 0
        while gn > gtol and it < max_newton:
            it += 1
            jac = _fd_jacobian(rp.gradient, mu)
            try:
                step = np.linalg.solve(jac, -g)
            except np.linalg.LinAlgError:
                step = -g
            t = 1.0
            while t > 1e-6:
                trial = mu + t * step
                gt = rp.gradient(trial)
                gtn = float(np.linalg.norm(gt))
                if gtn < (1 - 1e-4 * t) * gn or gtn <= gtol:
                    break
                t *= 0.5
            mu, g, gn = trial, gt, gtn
        u = rp.lift(mu)
        res = float(np.linalg.norm(rp.basis.residual(u, rp.potential)))
        eq = Equilibrium(mu, u, res, gn, gn <= gtol, it, seed)
        if eq.converged:
            eq.morse_index = int(np.sum(np.linalg.eigvalsh(_sym(rp.hessian(mu))) < 0))
            eq.energy = float(rp.energy(mu))
        out.append(eq)
    return out


def _sym(a):
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def unique_equilibria(eqs, atol: float = 1e-7) -> list[Equilibrium]:
    """Converged equilibria with duplicates (within ``atol``) removed, sorted by mu."""
    uniq: list[Equilibrium] = []
    for e in eqs:
        if e.converged and not any(np.linalg.norm(e.mu - f.mu) <= atol for f in uniq):
            uniq.append(e)
    return sorted(uniq, key=lambda e: tuple(e.mu))


# -- approximate inertial manifolds ----------------------------------------------


def manifold_map(kind: str, rp: ReducedPotential, mu, k: int = 1) -> np.ndarray:
    """Tail field Phi(mu) of the requested approximate inertial manifold.

    ``flat``: 0.  ``phi0``: g(Q_m gamma(mu)).  ``phi_k``: k Picard steps of the
    tail map from zero (so phi_1 == phi0).  ``static_tail``: eta_tilde(mu).
    """
    head = rp.embed(mu)
    if kind == "flat":
        return np.zeros_like(head)
    if kind == "phi0":
        return rp.tail_map(head, np.zeros_like(head))
    if kind == "phi_k":
        if k < 1:
            raise ValueError("phi_k needs k >= 1")
        eta = np.zeros_like(head)
        for _ in range(k):
            eta = rp.tail_map(head, eta)
        return eta
    if kind == "static_tail":
        return rp.solve_tail(mu).eta
    raise ValueError(f"unknown manifold kind {kind!r}")


def invariance_defect(kind: str, rp: ReducedPotential, mu, k: int = 1,
                      step: float = 1e-5) -> float:
    """Residual of the exact inertial-manifold equation on graph(Phi).

        || Phi'(mu)[Delta mu - P_m gamma(mu+Phi)] - Delta Phi + Q_m gamma(mu+Phi) ||

    Phi' is taken by central differences, hence the ``m <= 3`` restriction.
    """
    if rp.m > 3:
        raise ValueError("invariance_defect is limited to m <= 3")
    mu = np.asarray(mu, dtype=float)
    b = rp.basis
    phi = manifold_map(kind, rp, mu, k)
    u = rp.embed(mu) + phi
    f = b.apply_nonlinearity(u, rp.potential)
    head_rate = (-b.eigenvalues * u - f)[: rp.m]
    tail_rhs = -b.eigenvalues * phi - f
    tail_rhs[: rp.m] = 0.0
    eye = np.eye(rp.m)
    plus = manifold_map(kind, rp, mu + step * eye, k)
    minus = manifold_map(kind, rp, mu - step * eye, k)
    dphi = ((plus - minus) / (2 * step)).T  # (N, m)
    return float(np.linalg.norm(dphi @ head_rate - tail_rhs))
