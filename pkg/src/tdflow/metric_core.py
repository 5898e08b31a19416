"""Metric-space and time-dependent functional contracts, the proximal step,
and the Gronwall-type bounds used by the scheme.

Points live in flat coordinates. A space maps a point to a 1-D coordinate
array ``x`` whose squared distance is ``weight * |x - y|^2``; admissible
coordinates form a closed convex cone reached by ``project``.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np
from scipy.integrate import cumulative_simpson, simpson

from .errors import (
    HypothesisViolation,
    InvalidStateError,
    NumericError,
    PreconditionError,
    ProxConvergenceError,
    UnsupportedDiagnostic,
)

PANELS_PER_UNIT = 512
PROX_RTOL = 1e-8
PROX_MAX_ITER = 10_000
TAU_STAR_EPS = 1e-12


class _PlusInfinity:
    """Sentinel for the value +inf of an extended-real energy.

    Never enters float arithmetic; comparisons short-circuit.
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "PLUS_INF"

    def __reduce__(self):
        return (_PlusInfinity, ())

    def __gt__(self, other):
        return other is not self

    def __ge__(self, other):
        return True

    def __lt__(self, other):
        return False

    def __le__(self, other):
        return other is self

    def __eq__(self, other):
        return other is self

    def __hash__(self):
        return hash("PLUS_INF")

    def __float__(self):
        raise TypeError("PLUS_INF cannot be used as a float")


PLUS_INF = _PlusInfinity()


def is_infinite(value) -> bool:
    return value is PLUS_INF


def finite_or_raise(value, what="energy"):
    if value is PLUS_INF:
        raise InvalidStateError(f"{what} is +inf at a point expected to be in the domain")
    return float(value)


# ---------------------------------------------------------------- contracts


class MetricSpace(ABC):
    """Flat-coordinate metric space: ``d(u, v)^2 = weight * |x_u - x_v|^2``."""

    weight: float = 1.0

    @abstractmethod
    def coords(self, u) -> np.ndarray:
        """Coordinate array of a point (no copy guaranteed)."""

    @abstractmethod
    def point(self, x: np.ndarray):
        """Build a point from admissible coordinates."""

    def project(self, x: np.ndarray) -> np.ndarray:
        """Closest admissible coordinates (identity for unconstrained spaces)."""
        return x

    def validate(self, u) -> None:
        x = self.coords(u)
        if not np.all(np.isfinite(x)):
            raise InvalidStateError("point has non-finite coordinates")

    def distance(self, u, v) -> float:
        x, y = self.coords(u), self.coords(v)
        if x.shape != y.shape:
            raise PreconditionError(f"resolution mismatch: {x.shape} vs {y.shape}")
        d = math.sqrt(self.weight * float(np.dot(x - y, x - y)))
        if not math.isfinite(d):
            raise InvalidStateError("distance is not finite")
        return d

    def interpolate(self, u, v, s: float):
        """Point at parameter ``s`` on the straight coordinate segment."""
        if not 0.0 <= s <= 1.0:
            raise PreconditionError("interpolation parameter must lie in [0, 1]")
        if s == 0.0:
            return u
        if s == 1.0:
            return v
        x, y = self.coords(u), self.coords(v)
        return self.point((1.0 - s) * x + s * y)


class TimeFunctional(ABC):
    """Time-dependent energy ``E(t, u)`` on a :class:`MetricSpace`.

    Subclasses supply ``energy``, ``lam`` and ``beta``; ``gradient`` (in
    coordinates) and ``time_derivative`` are needed by the generic prox and
    by the derivative-based diagnostics respectively.
    """

    space: MetricSpace
    name: str = "functional"

    @abstractmethod
    def energy(self, t: float, u) -> float | _PlusInfinity:
        ...

    def gradient(self, t: float, u) -> np.ndarray:
        raise UnsupportedDiagnostic(f"{self.name} does not provide a gradient")

    def time_derivative(self, t: float, u) -> float:
        raise UnsupportedDiagnostic(f"{self.name} does not provide a time derivative")

    @property
    def has_time_derivative(self) -> bool:
        return type(self).time_derivative is not TimeFunctional.time_derivative

    @abstractmethod
    def lam(self, t: float) -> float:
        """Convexity modulus at time t (may be negative)."""

    @abstractmethod
    def beta(self, t: float) -> float:
        """Time-regularity weight, nonnegative."""

    @abstractmethod
    def reference_point(self):
        """The anchor point u* used by the a-priori estimates."""

    def prox(self, t: float, tau: float, base, initial=None) -> "ProxResult":
        return projected_gradient_prox(self, t, tau, base, initial=initial)


@dataclass(frozen=True)
class ProxResult:
    minimizer: Any
    value: float
    distance_moved: float
    iterations: int
    converged: bool
    energy: float
    residual: float = 0.0


# --------------------------------------------------------- prox machinery


def penalized_objective(F: TimeFunctional, t: float, tau: float, base, v):
    """``E(t, v) + d(base, v)^2 / (2 tau)``; PLUS_INF off the domain."""
    if not tau > 0:
        raise PreconditionError("step size must be positive")
    d = F.space.distance(base, v)
    e = F.energy(t, v)
    if e is PLUS_INF:
        return PLUS_INF
    return float(e) + d * d / (2.0 * tau)


def check_window(F: TimeFunctional, t: float, tau: float) -> None:
    """Require ``1 + tau * lambda(t) > 0`` so the penalized objective is strictly convex."""
    if not tau > 0:
        raise PreconditionError("step size must be positive")
    lam = F.lam(t)
    if 1.0 + tau * lam <= 0.0:
        raise PreconditionError(
            f"step {tau:g} outside the convexity window at t={t:g} (lambda={lam:g})"
        )


def prox(F: TimeFunctional, t: float, tau: float, base, initial=None) -> ProxResult:
    """Minimize the penalized objective over the space (unique under the window)."""
    check_window(F, t, tau)
    return F.prox(t, tau, base, initial=initial)


def moreau_yosida_value(F: TimeFunctional, t: float, tau: float, base) -> float:
    return prox(F, t, tau, base).value


def _finalize(F, t, tau, base, x, iterations, converged, residual) -> ProxResult:
    v = F.space.point(x)
    e = finite_or_raise(F.energy(t, v))
    d = F.space.distance(base, v)
    return ProxResult(v, e + d * d / (2.0 * tau), d, iterations, converged, e, residual)


def projected_gradient_prox(F: TimeFunctional, t: float, tau: float, base, initial=None,
                            rtol: float = PROX_RTOL, max_iter: int = PROX_MAX_ITER) -> ProxResult:
    """Projected gradient with Barzilai-Borwein steps and Armijo backtracking.

    Stops when the metric norm of the projected gradient drops below
    ``rtol * max(1, |objective|)``.
    """
    space = F.space
    w = space.weight
    b = np.array(space.coords(base), dtype=float)
    x = space.project(np.array(space.coords(initial if initial is not None else base), dtype=float))

    def objective(y):
        e = F.energy(t, space.point(y))
        if e is PLUS_INF:
            return math.inf
        r = y - b
        return float(e) + w * float(np.dot(r, r)) / (2.0 * tau)

    def grad(y):
        return np.asarray(F.gradient(t, space.point(y)), dtype=float) + w * (y - b) / tau

    f = objective(x)
    if not math.isfinite(f):
        raise PreconditionError("prox start point lies outside the energy domain")
    g = grad(x)
    step = tau / w
    base_step = step
    crit = math.inf
    for it in range(1, max_iter + 1):
        crit = float(np.linalg.norm((x - space.project(x - base_step * g)) / base_step)) / math.sqrt(w)
        if crit <= rtol * max(1.0, abs(f)):
            return _finalize(F, t, tau, base, x, it - 1, True, crit)
        while True:
            x_new = space.project(x - step * g)
            dx = x_new - x
            f_new = objective(x_new)
            if f_new <= f + float(np.dot(g, dx)) + float(np.dot(dx, dx)) / (2.0 * step):
                break
            step *= 0.5
            if step < 1e-300:
                raise ProxConvergenceError("line search collapsed", last_iterate=space.point(x),
                                           residual=crit, iterations=it)
        g_new = grad(x_new)
        s, yv = x_new - x, g_new - g
        sy = float(np.dot(s, yv))
        step = float(np.dot(s, s)) / sy if sy > 0 else 2.0 * step
        step = min(max(step, 1e-12 * base_step), 1e6 * base_step)
        x, f, g = x_new, f_new, g_new
    raise ProxConvergenceError(
        f"prox did not converge in {max_iter} iterations (residual {crit:.3g})",
        last_iterate=space.point(x), residual=crit, iterations=max_iter,
    )


# ---------------------------------------------------------- time constants


def _time_grid(a: float, b: float, panels_per_unit: int = PANELS_PER_UNIT):
    n = max(2, int(math.ceil((b - a) * panels_per_unit)))
    if n % 2:
        n += 1
    return np.linspace(a, b, n + 1)


def _eval(fn: Callable, ts: np.ndarray) -> np.ndarray:
    try:
        out = np.asarray(fn(ts), dtype=float)
        if out.shape == ts.shape:
            return out
    except Exception:
        pass
    return np.array([float(fn(float(s))) for s in ts])


def integrate(fn: Callable[[float], float], a: float, b: float,
              panels_per_unit: int = PANELS_PER_UNIT) -> float:
    """Composite Simpson rule for a time integral."""
    if b == a:
        return 0.0
    if b < a:
        return -integrate(fn, b, a, panels_per_unit)
    ts = _time_grid(a, b, panels_per_unit)
    ys = _eval(fn, ts)
    if not np.all(np.isfinite(ys)):
        raise NumericError("integrand is not finite on the quadrature grid")
    return float(simpson(ys, x=ts))


def lambda_minus(F: TimeFunctional, T: float, samples: int = 1025) -> float:
    ts = np.linspace(0.0, T, samples)
    return float(max(0.0, -min(F.lam(float(s)) for s in ts)))


def tau_star(F: TimeFunctional, T: float) -> float:
    """Admissible step ceiling ``min(1, 0.5 / max(lambda^-, eps))`` sampled on [0, T + 1]."""
    lm = lambda_minus(F, T + 1.0)
    return min(1.0, 0.5 / max(lm, TAU_STAR_EPS))


def fd_step(tau: float) -> float:
    return max(1e-5, 1e-3 * tau)


def derivative_formula_residual(F: TimeFunctional, t: float, tau: float, base,
                                tau_star_value: float | None = None) -> float:
    """Gap between the numerical tau-derivative of ``tau -> E_{t+tau,tau}(base)``
    and its closed form ``dE/dt(t+tau, u_tau) - d^2(base, u_tau)/(2 tau^2)``."""
    if not F.has_time_derivative:
        raise UnsupportedDiagnostic(f"{F.name} does not provide a time derivative")
    ts = tau_star(F, t + tau) if tau_star_value is None else tau_star_value
    h = fd_step(tau)
    upper = ts / 8.0
    if not (tau - h > 0 and tau + h <= upper):
        raise PreconditionError(
            f"stencil [{tau - h:g}, {tau + h:g}] leaves (0, {upper:g}]"
        )
    plus = moreau_yosida_value(F, t + tau + h, tau + h, base)
    minus = moreau_yosida_value(F, t + tau - h, tau - h, base)
    numeric = (plus - minus) / (2.0 * h)
    res = prox(F, t + tau, tau, base)
    d = res.distance_moved
    formula = F.time_derivative(t + tau, res.minimizer) - d * d / (2.0 * tau * tau)
    return abs(numeric - formula)


def sublevel_inequalities(F: TimeFunctional, t: float, tau: float, ts: float, u, v,
                          u_star=None) -> dict:
    """Both sides of the two sub-level estimates comparing step ``tau`` to ``ts``.

    Returns ``lower_lhs >= lower_rhs`` (Moreau-Yosida lower bound) and
    ``dist_lhs <= dist_rhs`` (distance bound for any test point ``v``).
    """
    if not 0 < tau < ts:
        raise PreconditionError("need 0 < tau < tau_star")
    u_star = F.reference_point() if u_star is None else u_star
    my_star = moreau_yosida_value(F, t, ts, u_star)
    d_su = F.space.distance(u_star, u)
    gap = ts - tau
    my_tau = moreau_yosida_value(F, t, tau, u)
    d_uv = F.space.distance(u, v)
    obj = penalized_objective(F, t, tau, u, v)
    return {
        "lower_lhs": my_tau,
        "lower_rhs": my_star - d_su * d_su / gap,
        "dist_lhs": d_uv * d_uv,
        "dist_rhs": (4.0 * ts * tau / gap) * (finite_or_raise(obj) - my_star + d_su * d_su / gap),
    }


# ------------------------------------------------------------- Gronwall


def discrete_gronwall_bound(A: float, alpha: float, betas: Sequence[float], n: int) -> float:
    """Bound ``B exp(theta sum_{i<n} beta_i)`` for ``a_n <= A + alpha sum_{j<=n} beta_j a_j``.

    ``betas[0]`` is treated as zero.
    """
    b = np.asarray(betas, dtype=float)
    if A < 0 or alpha < 0 or np.any(b < 0):
        raise PreconditionError("A, alpha and beta must be nonnegative")
    if n < 0 or n > len(b):
        raise PreconditionError("n must index into the beta sequence")
    b = b.copy()
    if len(b):
        b[0] = 0.0
    m = alpha * float(b.max()) if len(b) else 0.0
    if m >= 1.0:
        raise HypothesisViolation(f"sup alpha*beta_j = {m:g} must be < 1")
    B = A / (1.0 - m)
    theta = alpha / (1.0 - m)
    return B * math.exp(theta * float(b[:n].sum()))


def continuous_gronwall_bound(x0: float, a: Callable, b: Callable, lam: Callable,
                              T: float) -> float:
    """``sqrt((x0^2 + sup_t int_0^t e^{2 alpha} a)^+) + 2 int_0^T e^{alpha} |b|``
    with ``alpha(t) = int_0^t lam``; bounds ``e^{alpha(T)} |x(T)|``."""
    if T < 0:
        raise PreconditionError("T must be nonnegative")
    if T == 0:
        return math.sqrt(max(x0 * x0, 0.0))
    ts = _time_grid(0.0, T)
    lv, av, bv = _eval(lam, ts), _eval(a, ts), np.abs(_eval(b, ts))
    if not (np.all(np.isfinite(lv)) and np.all(np.isfinite(av)) and np.all(np.isfinite(bv))):
        raise NumericError("Gronwall integrand is not finite")
    alpha = cumulative_simpson(lv, x=ts, initial=0.0)
    acc = cumulative_simpson(np.exp(2.0 * alpha) * av, x=ts, initial=0.0)
    sup = float(acc.max())
    tail = float(simpson(np.exp(alpha) * bv, x=ts))
    out = math.sqrt(max(x0 * x0 + sup, 0.0)) + 2.0 * tail
    if not math.isfinite(out):
        raise NumericError("Gronwall bound overflowed")
    return out


def gronwall_exponent(lam: Callable, T: float) -> float:
    """``alpha(T) = int_0^T lam`` on the same quadrature as the bound."""
    return integrate(lam, 0.0, T)
