"""Scalar nonlinearities V with V' = gamma and a certified Lipschitz constant.

The clamped double well is

    gamma(u) = eps * psi(u) * (u^3 - u)

with psi = 1 on [-r_core, r_core], psi = 0 outside [-r_cut, r_cut] and a C^3
septic smoothstep in between.  Every piece is a polynomial, so V, Lip(gamma)
and inf V are obtained exactly from polynomial antiderivatives and roots
instead of sampling.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial

__all__ = ["Potential"]

# 1 - S(s) for the septic smoothstep S(s) = 35s^4 - 84s^5 + 70s^6 - 20s^7
_SMOOTHSTEP = Polynomial([0, 0, 0, 0, 35, -84, 70, -20])


def _real_roots_in(poly: Polynomial, lo: float, hi: float) -> list[float]:
    if poly.degree() < 1:
        return []
    r = poly.roots()
    r = r[np.abs(r.imag) < 1e-9].real
    return [float(x) for x in r if lo <= x <= hi]


@dataclass(frozen=True)
class Potential:
    """Nemitsky nonlinearity ``u -> gamma(u)`` and its primitive ``V``.

    Use the constructors :meth:`zero`, :meth:`linear`,
    :meth:`clamped_double_well` and (tests only) :meth:`polynomial`.

    ``lipschitz_bound`` is the certificate ``C >= Lip(gamma)`` used by the
    contraction margin.  It defaults to the sharp value; a looser declared
    value is accepted, a smaller one is rejected.
    """

    kind: str
    params: tuple = ()
    lipschitz_bound: float = 0.0
    lower_bound: float = 0.0
    _pieces: dict = field(default_factory=dict, repr=False, compare=False)

    # -- constructors ------------------------------------------------------

    @classmethod
    def zero(cls) -> "Potential":
        return cls("zero", (), 0.0, 0.0)

    @classmethod
    def linear(cls, c: float) -> "Potential":
        c = float(c)
        lower = 0.0 if c >= 0 else -np.inf
        return cls("linear", (c,), abs(c), lower)

    @classmethod
    def polynomial(cls, coeffs) -> "Potential":
        """Uncapped polynomial gamma; violates compact support, tests only."""
        g = Polynomial(np.asarray(coeffs, dtype=float))
        return cls("polynomial", tuple(g.coef), np.inf, -np.inf,
                   {"gamma": g, "V": g.integ()})

    @classmethod
    def clamped_double_well(cls, epsilon: float, r_core: float = 1.1, r_cut: float = 1.8,
                            lipschitz_bound: float | None = None) -> "Potential":
        eps, a, b = float(epsilon), float(r_core), float(r_cut)
        if not 0 < a < b:
            raise ValueError("need 0 < r_core < r_cut")
        core_gamma = eps * Polynomial([0, -1, 0, 1])
        # transition pieces live in s = (u - a)/(b - a) to avoid cancellation
        s = Polynomial([0.0, 1.0], domain=[a, b], window=[0.0, 1.0])
        u_s = Polynomial([a, b - a], domain=[a, b], window=[0.0, 1.0])
        trans_gamma = (1 - _SMOOTHSTEP(s)) * eps * (u_s**3 - u_s)
        core_V = core_gamma.integ()
        trans_V = trans_gamma.integ()
        trans_V = trans_V - trans_V(a) + core_V(a)
        V_cut = float(trans_V(b))
        pieces = {"a": a, "b": b, "core_gamma": core_gamma, "trans_gamma": trans_gamma,
                  "core_V": core_V, "trans_V": trans_V, "V_cut": V_cut}

        # Lip(gamma): max |gamma'| over critical points of gamma' and piece ends
        lip = 0.0
        for poly, lo, hi in ((core_gamma, 0.0, a), (trans_gamma, a, b)):
            d1 = poly.deriv()
            cands = [lo, hi] + _real_roots_in(d1.deriv(), lo, hi)
            lip = max(lip, max(abs(float(d1(u))) for u in cands))
        # inf V: V is even, so look at u >= 0 only
        cands = [(0.0, core_V), (a, core_V), (b, trans_V)]
        cands += [(u, core_V) for u in _real_roots_in(core_gamma, 0.0, a)]
        cands += [(u, trans_V) for u in _real_roots_in(trans_gamma, a, b)]
        lower = min(float(p(u)) for u, p in cands)

        if lipschitz_bound is None:
            bound = lip
        else:
            bound = float(lipschitz_bound)
            if bound < lip * (1 - 1e-12):
                raise ValueError(f"declared Lipschitz bound {bound} below certified {lip}")
        pieces["sharp_lipschitz"] = lip
        return cls("clamped_double_well", (eps, a, b), bound, lower, pieces)

    # -- evaluation --------------------------------------------------------

    @property
    def epsilon(self) -> float:
        return self.params[0] if self.kind == "clamped_double_well" else 0.0

    @property
    def support_radius(self) -> float:
        if self.kind == "clamped_double_well":
            return self.params[2]
        return 0.0 if self.kind == "zero" else np.inf

    def _piecewise(self, u, core_key, trans_key, outside, odd):
        p = self._pieces
        u = np.asarray(u, dtype=float)
        au = np.abs(u)
        out = np.where(au <= p["a"], p[core_key](au),
                       np.where(au < p["b"], p[trans_key](au), outside))
        return np.sign(u) * out if odd else out

    def gamma(self, u):
        """gamma(u) = V'(u), evaluated pointwise."""
        u = np.asarray(u, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(u)
        if self.kind == "linear":
            return self.params[0] * u
        if self.kind == "polynomial":
            return self._pieces["gamma"](u)
        return self._piecewise(u, "core_gamma", "trans_gamma", 0.0, odd=True)

    def gamma_prime(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(u)
        if self.kind == "linear":
            return np.full_like(u, self.params[0])
        if self.kind == "polynomial":
            return self._pieces["gamma"].deriv()(u)
        p = self._pieces
        au = np.abs(u)
        return np.where(au <= p["a"], p["core_gamma"].deriv()(au),
                        np.where(au < p["b"], p["trans_gamma"].deriv()(au), 0.0))

    def value(self, u):
        """V(u) with V(0) = 0."""
        u = np.asarray(u, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(u)
        if self.kind == "linear":
            return 0.5 * self.params[0] * u * u
        if self.kind == "polynomial":
            return self._pieces["V"](u)
        return self._piecewise(u, "core_V", "trans_V", self._pieces["V_cut"], odd=False)

    def sharp_lipschitz(self) -> float:
        return self._pieces.get("sharp_lipschitz", self.lipschitz_bound)

    def describe(self) -> dict:
        d = {"kind": self.kind, "lipschitz_bound": self.lipschitz_bound,
             "lower_bound": self.lower_bound}
        if self.kind == "clamped_double_well":
            d.update(epsilon=self.params[0], r_core=self.params[1], r_cut=self.params[2])
        elif self.kind == "linear":
            d.update(c=self.params[0])
        return d
