"""
Dirichlet sine spectral basis on [0, L]
=======================================

Fields are stored as coefficient vectors ``a`` (shape ``(..., N)``) in the
orthonormal eigenbasis

    u_j(x) = sqrt(2/L) sin(j pi x / L),   -u_j'' = lambda_j u_j,   lambda_j = (j pi / L)^2.

Nonlinear terms are evaluated by collocation on the ``N_q`` interior points
``x_i = i L / (N_q + 1)`` of a uniform grid.  On that grid the basis is
discretely orthonormal (the quadrature is the trapezoidal rule with zero
boundary values), and the forward/backward maps are a type-I DST.

All leading axes are batch axes, so every routine works on a single field or
on a stack of fields at once.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from .potentials import Potential

__all__ = ["SpectralBasis"]


@dataclass(frozen=True)
class SpectralBasis:
    """Resolved sine basis with its collocation grid.

    Parameters
    ----------
    domain_length : float
        Interval length ``L``.
    n_modes : int
        Number of resolved modes ``N`` (at least 4).
    n_quad : int, optional
        Number of interior collocation points; defaults to ``2 N``.  Must be
        at least ``2 N`` so that cubic nonlinearities are de-aliased.
    """

    domain_length: float
    n_modes: int
    n_quad: int | None = None
    eigenvalues: np.ndarray = field(init=False, repr=False)
    nodes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.domain_length > 0:
            raise ValueError("domain_length must be positive")
        if int(self.n_modes) != self.n_modes or self.n_modes < 4:
            raise ValueError("n_modes must be an integer >= 4")
        nq = 2 * self.n_modes if self.n_quad is None else int(self.n_quad)
        if nq < 2 * self.n_modes:
            raise ValueError(f"n_quad={nq} must be >= 2*n_modes={2 * self.n_modes}")
        object.__setattr__(self, "n_quad", nq)
        j = np.arange(1, self.n_modes + 1)
        lam = (j * np.pi / self.domain_length) ** 2
        lam.setflags(write=False)
        object.__setattr__(self, "eigenvalues", lam)
        x = np.arange(1, nq + 1) * self.spacing
        x.setflags(write=False)
        object.__setattr__(self, "nodes", x)

    @property
    def spacing(self) -> float:
        return self.domain_length / (self.n_quad + 1)

    @property
    def _norm(self) -> float:
        return np.sqrt(2.0 / self.domain_length)

    def eigenvalue(self, j: int) -> float:
        """lambda_j = (j pi / L)^2 for 1 <= j <= N."""
        if not 1 <= j <= self.n_modes:
            raise IndexError(f"mode index {j} outside 1..{self.n_modes}")
        return float(self.eigenvalues[j - 1])

    def mode(self, j: int) -> np.ndarray:
        """Coefficient vector of the j-th basis function."""
        a = np.zeros(self.n_modes)
        a[j - 1] = 1.0
        return a

    def basis_function(self, j, x):
        return self._norm * np.sin(j * np.pi * np.asarray(x) / self.domain_length)

    # -- transforms -------------------------------------------------------

    def synthesize(self, coeffs) -> np.ndarray:
        """Point values of the field on the collocation nodes."""
        a = np.asarray(coeffs, dtype=float)
        if a.shape[-1] != self.n_modes:
            raise ValueError(f"expected {self.n_modes} coefficients, got {a.shape[-1]}")
        pad = np.zeros(a.shape[:-1] + (self.n_quad,))
        pad[..., : self.n_modes] = a
        return 0.5 * self._norm * scipy.fft.dst(pad, type=1, axis=-1)

    def analyze(self, values) -> np.ndarray:
        """Discrete L2 projection of nodal values onto the resolved modes."""
        f = np.asarray(values, dtype=float)
        if f.shape[-1] != self.n_quad:
            raise ValueError(f"expected {self.n_quad} grid values, got {f.shape[-1]}")
        full = scipy.fft.dst(f, type=1, axis=-1)
        return 0.5 * self._norm * self.spacing * full[..., : self.n_modes]

    # -- projections and linear operators ---------------------------------

    def _check_cut(self, m):
        if not 1 <= m < self.n_modes:
            raise ValueError(f"cutoff m={m} outside 1..{self.n_modes - 1}")

    def project_head(self, coeffs, m: int) -> np.ndarray:
        self._check_cut(m)
        out = np.array(coeffs, dtype=float, copy=True)
        out[..., m:] = 0.0
        return out

    def project_tail(self, coeffs, m: int) -> np.ndarray:
        self._check_cut(m)
        out = np.array(coeffs, dtype=float, copy=True)
        out[..., :m] = 0.0
        return out

    def laplacian(self, coeffs) -> np.ndarray:
        return -self.eigenvalues * np.asarray(coeffs, dtype=float)

    def inv_laplacian(self, coeffs) -> np.ndarray:
        """Solution g(f) of Delta g = f with Dirichlet data (no zero mode)."""
        return -np.asarray(coeffs, dtype=float) / self.eigenvalues

    @staticmethod
    def inner(a, b) -> np.ndarray:
        return np.sum(np.asarray(a) * np.asarray(b), axis=-1)

    @staticmethod
    def norm(a) -> np.ndarray:
        return np.sqrt(np.sum(np.asarray(a) ** 2, axis=-1))

    def quad_norm(self, coeffs) -> np.ndarray:
        """L2 norm computed by quadrature of the nodal values."""
        v = self.synthesize(coeffs)
        return np.sqrt(self.spacing * np.sum(v * v, axis=-1))

    # -- nonlinear functionals --------------------------------------------

    def apply_nonlinearity(self, coeffs, potential: Potential) -> np.ndarray:
        """Spectral coefficients of x -> gamma(u(x))."""
        return self.analyze(potential.gamma(self.synthesize(coeffs)))

    def multiplication_matrix(self, weights) -> np.ndarray:
        """Galerkin matrix <w u_i, u_j> for nodal weights ``w`` (batched)."""
        w = np.asarray(weights, dtype=float)
        s = self._sine_matrix()
        return self.spacing * np.einsum("qi,...q,qj->...ij", s, w, s, optimize=True)

    def _sine_matrix(self) -> np.ndarray:
        j = np.arange(1, self.n_modes + 1)
        return self.basis_function(j[None, :], self.nodes[:, None])

    def energy(self, coeffs, potential: Potential) -> np.ndarray:
        """J(u) = 1/2 sum lambda_j a_j^2 + int_0^L V(u) dx."""
        a = np.asarray(coeffs, dtype=float)
        grad_part = 0.5 * np.sum(self.eigenvalues * a * a, axis=-1)
        vals = potential.value(self.synthesize(a))
        # trapezoid: both endpoints carry V(0) with half weight
        pot_part = self.spacing * (np.sum(vals, axis=-1) + float(potential.value(0.0)))
        return grad_part + pot_part

    def residual(self, coeffs, potential: Potential) -> np.ndarray:
        """Strong-form residual Delta u - V'(u) in coefficients."""
        return self.laplacian(coeffs) - self.apply_nonlinearity(coeffs, potential)
