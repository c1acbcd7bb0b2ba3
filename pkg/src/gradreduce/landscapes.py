"""Closed-form reduced energies W(mu) for tests and small experiments.

Anything exposing ``dim``, ``energy(mu)``, ``gradient(mu)`` and ``hessian(mu)``
(batched over leading axes) can be used wherever a reduced potential is
expected; :class:`gradreduce.reduction.ReducedPotential` is the production
implementation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["Quadratic", "QuarticDoubleWell"]


@dataclass(frozen=True)
class Quadratic:
    """W(mu) = 1/2 sum_j k_j mu_j^2 (Ornstein-Uhlenbeck drift)."""

    stiffness: tuple

    @classmethod
    def isotropic(cls, k: float = 1.0, dim: int = 1) -> "Quadratic":
        return cls(tuple([float(k)] * dim))

    @property
    def dim(self) -> int:
        return len(self.stiffness)

    def energy(self, mu):
        mu = np.asarray(mu, dtype=float)
        return 0.5 * np.sum(np.asarray(self.stiffness) * mu * mu, axis=-1)

    def gradient(self, mu):
        return np.asarray(self.stiffness) * np.asarray(mu, dtype=float)

    def hessian(self, mu):
        mu = np.asarray(mu, dtype=float)
        return np.broadcast_to(np.diag(self.stiffness), mu.shape[:-1] + (self.dim, self.dim)).copy()


@dataclass(frozen=True)
class QuarticDoubleWell:
    """W(mu) = a (mu_1^4/4 - mu_1^2/2) + 1/2 sum_{j>1} k mu_j^2."""

    a: float = 1.0
    dim: int = 1
    k: float = 1.0

    def energy(self, mu):
        mu = np.asarray(mu, dtype=float)
        x = mu[..., 0]
        return self.a * (x**4 / 4 - x**2 / 2) + 0.5 * self.k * np.sum(mu[..., 1:] ** 2, axis=-1)

    def gradient(self, mu):
        mu = np.asarray(mu, dtype=float)
        g = self.k * mu.copy()
        g[..., 0] = self.a * (mu[..., 0] ** 3 - mu[..., 0])
        return g

    def hessian(self, mu):
        mu = np.asarray(mu, dtype=float)
        h = np.zeros(mu.shape[:-1] + (self.dim, self.dim))
        idx = np.arange(1, self.dim)
        h[..., idx, idx] = self.k
        h[..., 0, 0] = self.a * (3 * mu[..., 0] ** 2 - 1)
        return h
