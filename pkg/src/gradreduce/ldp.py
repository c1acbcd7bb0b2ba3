"""
Freidlin-Wentzell action, quasi-potential and Hamilton-Jacobi checks
====================================================================

The drift is X = -grad W.  The Lagrangian carries an explicit prefactor

    L(x, xdot) = alpha |xdot - X(x)|^2,     H(x, p) = |p|^2 / (4 alpha) + p . X(x).

With the noise convention of :mod:`gradreduce.stochastic` (generator
nu Lap), ``alpha = 1/4`` is the matching rate function: the infinite-horizon
quasi-potential from a well x_hat is W(x) - W(x_hat) and -nu ln p_eq = W + c.
``alpha = 1/2`` gives the textbook unit-noise normalisation, for which the
quasi-potential doubles to 2 (W(x) - W(x_hat)).

Paths are discretised on a uniform time grid with midpoint drift:

    A[x] = alpha * sum_k |(x_{k+1} - x_k)/dt - X((x_k + x_{k+1})/2)|^2 dt.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded
from scipy.optimize import minimize

from .errors import NoConvergence

__all__ = [
    "ActionSettings",
    "DiscretePath",
    "QuasiPotentialResult",
    "action",
    "action_gradient",
    "minimize_action",
    "quasi_potential_infty",
    "hamiltonian",
    "lagrangian",
    "stationary_hj_residual",
    "mane_upper_bound",
    "mane_estimate",
    "cole_hopf_rate",
    "FourierTestFunction",
    "grid_gradient",
    "polish_critical_point",
    "relax",
]


@dataclass(frozen=True)
class ActionSettings:
    alpha: float = 0.25
    optimizer: str = "gradient_descent_momentum"
    tol: float = 1e-5
    max_iter: int = 20000

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.optimizer not in ("quasi_newton", "gradient_descent_momentum"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class DiscretePath:
    points: np.ndarray  # (K+1, m)
    dt: float
    fixed_start: bool = True
    fixed_end: bool = True

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim == 1:
            self.points = self.points[:, None]
        if self.points.shape[0] < 3:
            raise ValueError("a path needs K >= 2 segments")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not np.all(np.isfinite(self.points)):
            raise ValueError("path points must be finite")

    @classmethod
    def linear(cls, x0, x1, T: float, K: int) -> "DiscretePath":
        x0, x1 = np.atleast_1d(x0).astype(float), np.atleast_1d(x1).astype(float)
        s = np.linspace(0.0, 1.0, K + 1)[:, None]
        return cls((1 - s) * x0 + s * x1, T / K)

    @property
    def K(self) -> int:
        return self.points.shape[0] - 1

    @property
    def T(self) -> float:
        return self.K * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.K + 1)

    def reversed(self) -> "DiscretePath":
        return DiscretePath(self.points[::-1].copy(), self.dt)


@dataclass
class QuasiPotentialResult:
    value: float
    path: DiscretePath
    T: float
    converged: bool
    grad_norm: float
    iterations: int
    history: list = field(default_factory=list)


def lagrangian(x, xdot, landscape, alpha=0.25):
    r = np.asarray(xdot) + landscape.gradient(x)
    return alpha * np.sum(r * r, axis=-1)


def hamiltonian(x, p, landscape, alpha=0.25):
    """H(x, p) = |p|^2/(4 alpha) + p . X(x) with X = -grad W."""
    p = np.asarray(p, dtype=float)
    return np.sum(p * p, axis=-1) / (4 * alpha) - np.sum(p * landscape.gradient(x), axis=-1)


def _residuals(points, dt, landscape):
    v = np.diff(points, axis=0) / dt
    mid = 0.5 * (points[1:] + points[:-1])
    return v + landscape.gradient(mid), mid


def action(path: DiscretePath, landscape, settings: ActionSettings = ActionSettings()) -> float:
    r, _ = _residuals(path.points, path.dt, landscape)
    return float(settings.alpha * np.sum(r * r) * path.dt)


def action_gradient(path: DiscretePath, landscape,
                    settings: ActionSettings = ActionSettings()) -> np.ndarray:
    """d A / d x_k for every path point, shape (K+1, m) (endpoints included)."""
    return _value_and_grad(path.points, path.dt, landscape, settings.alpha)[1]


def _value_and_grad(points, dt, landscape, alpha):
    r, mid = _residuals(points, dt, landscape)
    val = alpha * np.sum(r * r) * dt
    hr = np.einsum("kij,kj->ki", landscape.hessian(mid), r)
    g = np.zeros_like(points)
    # d r_k / d x_k = -I/dt + H_k/2 ;  d r_k / d x_{k+1} = I/dt + H_k/2
    g[:-1] += 2 * alpha * dt * (-r / dt + 0.5 * hr)
    g[1:] += 2 * alpha * dt * (r / dt + 0.5 * hr)
    return val, g


def _momentum_descent(fun, x0, precond, gtol, max_iter):
    """Heavy-ball descent along the preconditioned gradient with Armijo backtracking."""
    x = x0.copy()
    v = np.zeros_like(x)
    f, g = fun(x)
    lr, beta = 1.0, 0.5
    it = 0
    while np.max(np.abs(g)) > gtol and it < max_iter:
        it += 1
        d = precond(g)
        if np.dot(v, g) > 0:
            v[:] = 0.0  # restart momentum when it points uphill
        while True:
            v_new = beta * v - lr * d
            xn = x + v_new
            fn, gn = fun(xn)
            if fn <= f + 1e-4 * np.dot(g, v_new) or lr < 1e-12:
                break
            lr *= 0.5
            v[:] = 0.0
        x, f, g, v = xn, fn, gn, v_new
        lr = min(2 * lr, 1.0)
    return x, f, g, it


def _h1_preconditioner(n_interior, dim, dt, alpha):
    """Inverse of the velocity block (2 alpha/dt) tridiag(-1, 2, -1) of the action Hessian."""
    ab = np.zeros((3, n_interior))
    ab[0, 1:] = -1.0
    ab[1, :] = 2.0
    ab[2, :-1] = -1.0
    ab *= 2 * alpha / dt

    def apply(g):
        return solve_banded((1, 1), ab, g.reshape(n_interior, dim)).ravel()

    return apply


def _optimize_interior(points, dt, landscape, settings):
    fixed0, fixed1 = points[0].copy(), points[-1].copy()
    shape = points[1:-1].shape
    alpha = settings.alpha

    def fun(z):
        pts = np.concatenate([fixed0[None], z.reshape(shape), fixed1[None]])
        val, g = _value_and_grad(pts, dt, landscape, alpha)
        return val, g[1:-1].ravel()

    # gradient entries scale like dt; test optimality on g/dt
    gtol = settings.tol * dt
    z0 = points[1:-1].ravel()
    if settings.optimizer == "quasi_newton":
        res = minimize(fun, z0, jac=True, method="L-BFGS-B",
                       options={"maxiter": settings.max_iter, "gtol": gtol, "ftol": 1e-15,
                                "maxcor": 30, "maxls": 50})
        z, it = res.x, res.nit
        val, g = fun(z)
    else:
        precond = _h1_preconditioner(shape[0], shape[1], dt, alpha)
        z, val, g, it = _momentum_descent(fun, z0, precond, gtol, settings.max_iter)
    pts = np.concatenate([fixed0[None], z.reshape(shape), fixed1[None]])
    gn = float(np.max(np.abs(g)) / dt) if g.size else 0.0
    return pts, float(val), gn, it


def minimize_action(x0, x1, T: float, K: int, landscape,
                    settings: ActionSettings = ActionSettings(), init=None,
                    strict: bool = False) -> QuasiPotentialResult:
    """Minimum of the discrete action over paths from x0 to x1 on [0, T].

    ``init`` may supply a starting path (a :class:`DiscretePath` or an array of
    K+1 points); otherwise the straight line is used.  If the first-order
    optimality measure ``max|dA/dx|/dt`` stays above ``settings.tol`` the
    result is flagged ``converged=False`` (or :class:`NoConvergence` is raised
    with ``strict=True``).
    """
    if K < 8:
        raise ValueError("minimize_action needs K >= 8")
    if init is None:
        pts = DiscretePath.linear(x0, x1, T, K).points
    else:
        pts = np.array(init.points if isinstance(init, DiscretePath) else init, dtype=float)
        pts = pts.reshape(K + 1, -1)
        pts[0], pts[-1] = np.atleast_1d(x0), np.atleast_1d(x1)
    dt = T / K
    pts, val, gn, it = _optimize_interior(pts, dt, landscape, settings)
    ok = gn <= settings.tol
    if strict and not ok:
        raise NoConvergence(f"action minimisation stalled with |grad|={gn:.3g}")
    return QuasiPotentialResult(val, DiscretePath(pts, dt), T, ok, gn, it)


def quasi_potential_infty(x, x_hat, landscape, settings: ActionSettings = ActionSettings(),
                          T0: float = 2.0, K0: int = 64, rel_tol: float = 1e-3,
                          max_doublings: int = 6) -> QuasiPotentialResult:
    """Infinite-horizon quasi-potential V(x; x_hat) by horizon doubling.

    The horizon runs through T0, 2 T0, 4 T0, ... with the time step held fixed
    (K grows with T); each longer path is warm-started by holding x_hat for the
    added time before the previous optimum.  Stops once the relative change
    falls below ``rel_tol``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x_hat = np.atleast_1d(np.asarray(x_hat, dtype=float))
    gnorm = float(np.linalg.norm(landscape.gradient(x_hat)))
    if gnorm > 1e-8:
        raise ValueError(f"x_hat is not an equilibrium (|grad W| = {gnorm:.3g})")
    if np.allclose(x, x_hat, rtol=0, atol=1e-14):
        path = DiscretePath(np.repeat(x_hat[None], K0 + 1, axis=0), T0 / K0)
        return QuasiPotentialResult(0.0, path, T0, True, 0.0, 0, [(T0, 0.0)])
    T, K = T0, K0
    res = minimize_action(x_hat, x, T, K, landscape, settings)
    history = [(T, res.value)]
    for _ in range(max_doublings):
        prev = res
        T, K = 2 * T, 2 * K
        init = np.concatenate([np.repeat(x_hat[None], K - prev.path.K, axis=0), prev.path.points])
        res = minimize_action(x_hat, x, T, K, landscape, settings, init=init)
        history.append((T, res.value))
        if abs(res.value - prev.value) <= rel_tol * max(abs(res.value), 1e-300):
            res.history = history
            return res
    res.history = history
    res.converged = False
    return res


# -- Hamilton-Jacobi and Mane critical value -------------------------------------


def _grad_on(S, points):
    """Gradient values at ``points``: ``S`` is a callable or a tabulated array."""
    if callable(S):
        return np.asarray(S(points), dtype=float)
    g = np.asarray(S, dtype=float)
    if g.shape != np.shape(points):
        raise ValueError("tabulated gradient does not match the points")
    return g


def stationary_hj_residual(grad_S, landscape, points, settings: ActionSettings = ActionSettings()) -> float:
    """sup over ``points`` of |H(x, grad S(x))|.

    ``grad_S`` is a callable returning the gradient of the candidate S at an
    array of points, or the gradient already tabulated on ``points`` (see
    :func:`grid_gradient`).
    """
    pts = np.asarray(points, dtype=float)
    return float(np.max(np.abs(hamiltonian(pts, _grad_on(grad_S, pts), landscape, settings.alpha))))


def grid_gradient(values, spacing):
    """Central-difference gradient of tabulated values, stacked on the last axis."""
    g = np.gradient(np.asarray(values, dtype=float), *np.atleast_1d(spacing), edge_order=2)
    if not isinstance(g, (list, tuple)):
        g = [g]
    return np.stack(g, axis=-1)


@dataclass(frozen=True)
class FourierTestFunction:
    """u(x) = sum_k c_k sin(w_k . x + phi_k), smooth with an analytic gradient."""

    amplitudes: np.ndarray
    frequencies: np.ndarray  # (n_terms, dim)
    phases: np.ndarray

    @classmethod
    def random(cls, rng, dim: int, n_terms: int = 6, max_freq: float = 3.0,
               scale: float = 1.0) -> "FourierTestFunction":
        return cls(scale * rng.normal(size=n_terms) / n_terms,
                   rng.uniform(-max_freq, max_freq, size=(n_terms, dim)),
                   rng.uniform(0, 2 * np.pi, size=n_terms))

    def scaled(self, theta: float) -> "FourierTestFunction":
        return FourierTestFunction(theta * self.amplitudes, self.frequencies, self.phases)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.sin(x @ self.frequencies.T + self.phases) @ self.amplitudes

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        c = np.cos(x @ self.frequencies.T + self.phases) * self.amplitudes
        return c @ self.frequencies


def mane_upper_bound(grad_u, landscape, points, settings: ActionSettings = ActionSettings(),
                     critical_points=None) -> float:
    """sup_x H(x, grad u(x)) over ``points`` plus any supplied critical points of W.

    For every test function this is >= 0 up to rounding, because at a critical
    point x_hat of W it equals |grad u(x_hat)|^2/(4 alpha).
    """
    pts = np.asarray(points, dtype=float)
    if critical_points is not None:
        if not callable(grad_u):
            raise ValueError("critical points need a callable gradient")
        pts = np.concatenate([pts.reshape(-1, pts.shape[-1]),
                              np.atleast_2d(np.asarray(critical_points, dtype=float))])
    return float(np.max(hamiltonian(pts, _grad_on(grad_u, pts), landscape, settings.alpha)))


def mane_estimate(family, thetas, landscape, points, settings: ActionSettings = ActionSettings(),
                  critical_points=None):
    """min over theta of :func:`mane_upper_bound` for the family ``grad u_theta``.

    Returns ``(value, theta_best, all_values)``.
    """
    vals = np.array([mane_upper_bound(family(t), landscape, points, settings, critical_points)
                     for t in thetas])
    i = int(np.argmin(vals))
    return float(vals[i]), thetas[i], vals


def cole_hopf_rate(p, nu: float):
    """S_nu = -nu ln p, shifted to have minimum zero.

    Accepts a :class:`~gradreduce.stochastic.DensityGrid` or a plain array.
    """
    from .errors import NonPositiveDensity

    vals = np.asarray(getattr(p, "values", p), dtype=float)
    if np.any(~(vals > 0)):
        raise NonPositiveDensity("Cole-Hopf transform needs a strictly positive density")
    s = -nu * np.log(vals)
    return s - s.min()


# -- helpers for locating wells ----------------------------------------------------


def polish_critical_point(landscape, x, gtol: float = 1e-11, max_iter: int = 50) -> np.ndarray:
    """Newton iteration on grad W with the analytic Hessian, damped by backtracking."""
    x = np.atleast_1d(np.asarray(x, dtype=float)).copy()
    g = landscape.gradient(x)
    for _ in range(max_iter):
        gn = np.linalg.norm(g)
        if gn <= gtol:
            return x
        h = landscape.hessian(x)
        step = np.linalg.lstsq(h, -g, rcond=None)[0]
        t = 1.0
        while t > 1e-8:
            trial = x + t * step
            gt = landscape.gradient(trial)
            if np.linalg.norm(gt) < gn:
                break
            t *= 0.5
        x, g = trial, gt
    if np.linalg.norm(g) > gtol:
        raise NoConvergence(f"critical point not located (|grad W| = {np.linalg.norm(g):.3g})")
    return x


def relax(landscape, x, T: float = 20.0, dt: float = 1e-2) -> np.ndarray:
    """End point of the gradient flow x' = -grad W(x) after time T (RK4)."""
    x = np.atleast_1d(np.asarray(x, dtype=float)).copy()
    for _ in range(int(round(T / dt))):
        k1 = -landscape.gradient(x)
        k2 = -landscape.gradient(x + 0.5 * dt * k1)
        k3 = -landscape.gradient(x + 0.5 * dt * k2)
        k4 = -landscape.gradient(x + dt * k3)
        x = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return x
