"""Euclidean instantiation: smooth energies on R^d, a Newton prox, and an
adaptive Runge-Kutta reference for ``u' = -grad E(t, u)``."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp

from .errors import InvalidStateError, PreconditionError, ProxConvergenceError, StiffInstanceError
from .metric_core import MetricSpace, ProxResult, TimeFunctional, check_window

NEWTON_MAX_ITER = 200
MAX_REJECTED = 20
GD_MAX_ITER = 10_000
STATIONARITY_RTOL = 1e-10


class EuclideanSpace(MetricSpace):
    weight = 1.0

    def __init__(self, dim: int):
        if dim < 1:
            raise PreconditionError("dimension must be positive")
        self.dim = int(dim)

    def coords(self, u) -> np.ndarray:
        return np.asarray(u, dtype=float).reshape(-1)

    def point(self, x):
        return np.array(x, dtype=float).reshape(self.dim)

    def validate(self, u) -> None:
        x = self.coords(u)
        if x.shape != (self.dim,):
            raise InvalidStateError(f"expected {self.dim} coordinates, got {x.shape}")
        super().validate(u)

    def __repr__(self):
        return f"EuclideanSpace({self.dim})"


def as_point(u, dim: int | None = None) -> np.ndarray:
    x = np.atleast_1d(np.asarray(u, dtype=float)).copy()
    if dim is not None and x.shape != (dim,):
        raise InvalidStateError(f"expected {dim} coordinates, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidStateError("point has non-finite coordinates")
    return x


def _fd_hessian(grad, t, v, eps=1e-6):
    d = v.size
    H = np.empty((d, d))
    for k in range(d):
        e = np.zeros(d)
        e[k] = eps * max(1.0, abs(v[k]))
        H[:, k] = (grad(t, v + e) - grad(t, v - e)) / (2 * e[k])
    return 0.5 * (H + H.T)


def euclidean_prox(t: float, tau: float, base, E: Callable, gradE: Callable,
                   hessE: Callable | None = None, initial=None) -> ProxResult:
    """Minimize ``E(t, v) + |v - base|^2 / (2 tau)`` by damped Newton.

    Falls back to Armijo gradient descent after 20 rejected Newton steps.
    Converged when ``|v - base + tau grad E(t, v)| <= 1e-10 max(1, |base|)``.
    """
    b = as_point(base)
    v = b.copy() if initial is None else as_point(initial, b.size)
    tol = STATIONARITY_RTOL * max(1.0, float(np.linalg.norm(b)))

    def phi(x):
        r = x - b
        return float(E(t, x)) + float(np.dot(r, r)) / (2 * tau)

    def resid(x):
        return np.asarray(gradE(t, x), dtype=float) + (x - b) / tau

    f, g = phi(v), resid(v)
    rejected = 0
    it = 0
    while it < NEWTON_MAX_ITER and rejected < MAX_REJECTED:
        if tau * float(np.linalg.norm(g)) <= tol:
            return _result(t, tau, b, v, E, it, tau * float(np.linalg.norm(g)))
        it += 1
        H = hessE(t, v) if hessE is not None else _fd_hessian(gradE, t, v)
        H = np.atleast_2d(np.asarray(H, dtype=float)) + np.eye(v.size) / tau
        try:
            step = -np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = None
        slope = float(np.dot(g, step)) if step is not None else 0.0
        if step is None or not np.all(np.isfinite(step)) or slope >= 0:
            rejected += 1
            step, slope = -tau * g, -tau * float(np.dot(g, g))
        a = 1.0
        accepted = False
        # below this predicted decrease Armijo only sees roundoff in phi
        noise = 1e-13 * max(1.0, abs(f))
        for _ in range(40):
            trial = v + a * step
            ft = phi(trial)
            if math.isfinite(ft) and (ft <= f + 1e-4 * a * slope or (-a * slope <= noise and ft <= f + noise)):
                accepted = True
                break
            a *= 0.5
        if not accepted:
            rejected += 1
            continue
        if a < 1.0:
            rejected += 1
        v, f = trial, ft
        g = resid(v)
    # gradient-descent fallback
    step = tau
    for k in range(GD_MAX_ITER):
        gn = float(np.linalg.norm(g))
        if tau * gn <= tol:
            return _result(t, tau, b, v, E, it + k, tau * gn)
        while True:
            trial = v - step * g
            ft = phi(trial)
            if math.isfinite(ft) and ft <= f - 0.5 * step * gn * gn:
                break
            step *= 0.5
            if step < 1e-300:
                raise ProxConvergenceError("gradient fallback line search collapsed",
                                           last_iterate=v, residual=tau * gn, iterations=it + k)
        v, f = trial, ft
        g = resid(v)
        step *= 2.0
    raise ProxConvergenceError("Euclidean prox did not converge", last_iterate=v,
                               residual=tau * float(np.linalg.norm(g)), iterations=it + GD_MAX_ITER)


def _result(t, tau, b, v, E, iterations, residual):
    d = float(np.linalg.norm(v - b))
    e = float(E(t, v))
    return ProxResult(v, e + d * d / (2 * tau), d, iterations, True, e, residual)


@dataclass(eq=False)
class EuclideanFunctional(TimeFunctional):
    """Smooth energy on R^d given by callables ``E(t, v)``, ``grad(t, v)``."""

    dim: int
    E: Callable
    grad: Callable
    lam_fn: Callable[[float], float]
    beta_fn: Callable[[float], float]
    hess: Callable | None = None
    dEdt: Callable | None = None
    name: str = "euclidean"
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        self.space = EuclideanSpace(self.dim)

    def energy(self, t, u):
        return float(self.E(t, as_point(u)))

    def gradient(self, t, u):
        return np.asarray(self.grad(t, as_point(u)), dtype=float)

    def time_derivative(self, t, u):
        if self.dEdt is None:
            return super().time_derivative(t, u)
        return float(self.dEdt(t, as_point(u)))

    @property
    def has_time_derivative(self) -> bool:
        return self.dEdt is not None

    def lam(self, t):
        return float(self.lam_fn(t))

    def beta(self, t):
        return float(self.beta_fn(t))

    def reference_point(self):
        return np.zeros(self.dim)

    def prox(self, t, tau, base, initial=None):
        check_window(self, t, tau)
        return euclidean_prox(t, tau, base, self.E, self.grad, self.hess, initial=initial)


# ------------------------------------------------------------------ catalog


def quadratic(dim: int = 1) -> EuclideanFunctional:
    """``E(v) = |v|^2 / 2``; lambda = 1, beta = 0."""
    return EuclideanFunctional(
        dim,
        E=lambda t, v: 0.5 * float(np.dot(v, v)),
        grad=lambda t, v: np.asarray(v, dtype=float),
        hess=lambda t, v: np.eye(dim),
        dEdt=lambda t, v: 0.0,
        lam_fn=lambda t: 1.0,
        beta_fn=lambda t: 0.0,
        name="quadratic",
        config={"name": "quadratic", "dim": dim},
    )


def ramped_quadratic(dim: int = 1, rate: float = 1.0) -> EuclideanFunctional:
    """``E(t, v) = (1 + rate t) |v|^2 / 2``; lambda = 1 + rate t, beta = rate / 2.

    ``|E(t, v) - E(s, v)| = rate |t - s| |v|^2 / 2``, within the beta bound.
    """
    return EuclideanFunctional(
        dim,
        E=lambda t, v: 0.5 * (1.0 + rate * t) * float(np.dot(v, v)),
        grad=lambda t, v: (1.0 + rate * t) * np.asarray(v, dtype=float),
        hess=lambda t, v: (1.0 + rate * t) * np.eye(dim),
        dEdt=lambda t, v: 0.5 * rate * float(np.dot(v, v)),
        lam_fn=lambda t: 1.0 + rate * t,
        beta_fn=lambda t: 0.5 * abs(rate),
        name="ramped_quadratic",
        config={"name": "ramped_quadratic", "dim": dim, "rate": rate},
    )


def double_well(dim: int = 1) -> EuclideanFunctional:
    """``E(v) = sum (v_k^2 - 1)^2 / 4``; Hessian ``3 v^2 - 1 >= -1`` so lambda = -1."""

    def E(t, v):
        v = np.asarray(v, dtype=float)
        return 0.25 * float(np.sum((v * v - 1.0) ** 2))

    return EuclideanFunctional(
        dim,
        E=E,
        grad=lambda t, v: np.asarray(v, dtype=float) ** 3 - np.asarray(v, dtype=float),
        hess=lambda t, v: np.diag(3.0 * np.asarray(v, dtype=float) ** 2 - 1.0),
        dEdt=lambda t, v: 0.0,
        lam_fn=lambda t: -1.0,
        beta_fn=lambda t: 0.0,
        name="double_well",
        config={"name": "double_well", "dim": dim},
    )


def from_config(cfg: dict) -> EuclideanFunctional:
    name = cfg["name"]
    dim = int(cfg.get("dim", 1))
    if name == "quadratic":
        return quadratic(dim)
    if name == "ramped_quadratic":
        return ramped_quadratic(dim, float(cfg.get("rate", 1.0)))
    if name == "double_well":
        return double_well(dim)
    raise PreconditionError(f"unknown Euclidean functional {name!r}")


CATALOG = ("quadratic", "ramped_quadratic", "double_well")


# ---------------------------------------------------------------- reference


@dataclass(frozen=True)
class ReferenceTrajectory:
    """Dense solution of the gradient-flow ODE."""

    t: np.ndarray
    y: np.ndarray
    sol: object

    def at(self, t) -> np.ndarray:
        return np.asarray(self.sol(t), dtype=float)


def ode_reference(F: EuclideanFunctional, u0, T: float, rtol: float = 1e-9,
                  atol: float = 1e-12) -> ReferenceTrajectory:
    """Integrate ``u' = -grad E(t, u)`` on [0, T] with an embedded 8(5,3) Runge-Kutta pair."""
    x0 = as_point(u0, F.dim)
    if T <= 0:
        raise PreconditionError("T must be positive")
    sol = solve_ivp(lambda t, y: -np.asarray(F.grad(t, y), dtype=float), (0.0, T), x0,
                    method="DOP853", rtol=rtol, atol=atol, dense_output=True)
    if sol.status != 0:
        raise StiffInstanceError(f"reference integration failed: {sol.message}")
    return ReferenceTrajectory(sol.t, sol.y, sol.sol)


def validate_euclidean(F: EuclideanFunctional, sample_times, sample_points, tol: float = 1e-9):
    """Sampled checks of lambda-convexity (midpoint form) and time regularity.

    Time regularity uses ``|E(t,u) - E(s,u)| <= int_s^t beta (1 + |u|^2)`` with u* = 0.
    """
    from .metric_core import integrate
    from .report import DiagnosticsReport, Verdict

    report = DiagnosticsReport("euclidean_hypotheses")
    pts = [as_point(p, F.dim) for p in sample_points]
    worst = (-math.inf, {})
    for t in sample_times:
        lam = F.lam(t)
        for i in range(len(pts)):
            for j in range(i + 1, len(pts)):
                x, y = pts[i], pts[j]
                mid = 0.5 * (x + y)
                gap = F.energy(t, mid) - 0.5 * F.energy(t, x) - 0.5 * F.energy(t, y) \
                    + lam * float(np.dot(x - y, x - y)) / 8.0
                if gap > worst[0]:
                    worst = (gap, {"t": t, "x": x.tolist(), "y": y.tolist()})
    report.add(Verdict("lambda_convexity", worst[0] <= tol, worst[0], 0.0, "<=", tol, worst[1]))
    ts = sorted(float(s) for s in sample_times)
    worst = (-math.inf, 0.0, 0.0, {})
    for a, b in zip(ts[:-1], ts[1:]):
        ib = integrate(F.beta, a, b)
        for x in pts:
            lhs = abs(F.energy(b, x) - F.energy(a, x))
            rhs = ib * (1.0 + float(np.dot(x, x)))
            if lhs - rhs > worst[0]:
                worst = (lhs - rhs, lhs, rhs, {"s": a, "t": b, "u": x.tolist()})
    report.add(Verdict("time_regularity", worst[0] <= tol * (1 + abs(worst[2])), worst[1],
                       worst[2], "<=", tol, worst[3]))
    return report
