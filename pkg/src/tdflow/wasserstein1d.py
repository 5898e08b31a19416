"""Probability measures on the line in quantile coordinates.

A measure is stored as the vector ``q`` of its quantiles at the levels
``s_i = (i - 1/2) / N``. In these coordinates W2 is a weighted Euclidean
distance, so the proximal step becomes a finite-dimensional convex problem
over nondecreasing vectors.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.linalg import solve_banded
from scipy.optimize import isotonic_regression
from scipy.special import xlogy
from scipy.stats import norm

from .errors import (
    HypothesisViolation,
    InvalidStateError,
    PreconditionError,
    ProxConvergenceError,
    UnsupportedDiagnostic,
)
from .grid import GridDensity
from .metric_core import (
    PLUS_INF,
    PROX_RTOL,
    MetricSpace,
    ProxResult,
    TimeFunctional,
    check_window,
    integrate,
    projected_gradient_prox,
)
from .profiles import TimeProfile

# Calibrated for d = 1: sup over Gaussians of -entropy / sqrt(1 + M2) is 1.0258,
# attained near M2 = 1.56. The 1.3 leaves room for the discretization.
OTTO_C = 1.3
OTTO_ALPHA = 0.5

NEWTON_MAX_ITER = 200


def levels(N: int) -> np.ndarray:
    return (np.arange(N) + 0.5) / N


@dataclass(frozen=True)
class QuantileMeasure:
    q: np.ndarray

    def __post_init__(self):
        q = np.array(self.q, dtype=float).reshape(-1)
        if q.size < 2:
            raise InvalidStateError("a quantile measure needs at least two quantiles")
        if not np.all(np.isfinite(q)):
            raise InvalidStateError("quantiles must be finite")
        if np.any(np.diff(q) < 0):
            raise InvalidStateError("quantiles must be nondecreasing")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    @property
    def N(self) -> int:
        return self.q.size

    @property
    def s(self) -> np.ndarray:
        return levels(self.N)

    @property
    def mean(self) -> float:
        return float(self.q.mean())

    @property
    def variance(self) -> float:
        return float(np.mean((self.q - self.q.mean()) ** 2))

    def __eq__(self, other):
        return isinstance(other, QuantileMeasure) and np.array_equal(self.q, other.q)

    def __hash__(self):
        return hash(self.q.tobytes())

    @classmethod
    def gaussian(cls, mean: float, var: float, N: int) -> "QuantileMeasure":
        if var < 0:
            raise PreconditionError("variance must be nonnegative")
        return cls(mean + math.sqrt(var) * norm.ppf(levels(N)))

    @classmethod
    def uniform(cls, a: float, b: float, N: int) -> "QuantileMeasure":
        return cls(a + (b - a) * levels(N))

    @classmethod
    def dirac(cls, x: float, N: int) -> "QuantileMeasure":
        return cls(np.full(N, float(x)))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "q"])
            for s, q in zip(self.s, self.q):
                w.writerow([repr(float(s)), repr(float(q))])

    @classmethod
    def from_csv(cls, path) -> "QuantileMeasure":
        rows = list(csv.reader(Path(path).open()))
        if rows[0] != ["s", "q"]:
            raise InvalidStateError("quantile CSV must have header s,q")
        return cls(np.array([float(r[1]) for r in rows[1:]]))


def w2_distance(mu: QuantileMeasure, nu: QuantileMeasure) -> float:
    if mu.N != nu.N:
        raise PreconditionError(f"resolution mismatch: {mu.N} vs {nu.N}")
    r = mu.q - nu.q
    return math.sqrt(float(np.dot(r, r)) / mu.N)


def isotonic_project(v) -> np.ndarray:
    """Euclidean projection onto nondecreasing vectors (pool adjacent violators)."""
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise InvalidStateError("isotonic projection needs finite entries")
    if v.size < 2 or np.all(np.diff(v) >= 0):
        return v.copy()
    return np.asarray(isotonic_regression(v).x, dtype=float)


def second_moment(mu: QuantileMeasure) -> float:
    return float(np.dot(mu.q, mu.q)) / mu.N


# ---------------------------------------------------------------- densities


def from_density(rho: GridDensity, N: int) -> QuantileMeasure:
    """Invert the piecewise-linear CDF of a cell-average density at the midpoint levels."""
    mass = rho.rho * rho.dx
    total = float(mass.sum())
    if not total > 0:
        raise PreconditionError("density has zero mass")
    cdf = np.concatenate([[0.0], np.cumsum(mass) / total])
    cdf[-1] = 1.0
    edges = rho.edges
    # drop flat stretches so the inverse is single-valued
    keep = np.concatenate([[True], np.diff(cdf) > 0])
    q = np.interp(levels(N), cdf[keep], edges[keep])
    return QuantileMeasure(np.maximum.accumulate(q))


def cdf_knots(mu: QuantileMeasure) -> tuple[np.ndarray, np.ndarray]:
    """Knots of the piecewise-linear CDF whose midpoint quantiles are ``mu.q``.

    The outer cells extend half an increment beyond the extreme quantiles so
    the reconstructed density has exactly unit mass.
    """
    q = mu.q
    h = np.diff(q)
    x = np.concatenate([[q[0] - 0.5 * h[0]], q, [q[-1] + 0.5 * h[-1]]])
    F = np.concatenate([[0.0], mu.s, [1.0]])
    return x, F


def to_density(mu: QuantileMeasure, grid: GridDensity | tuple) -> GridDensity:
    """Cell averages of the density ``ds / dX`` on a grid ``(x_min, x_max, M)``."""
    if isinstance(grid, GridDensity):
        x_min, x_max, M = grid.x_min, grid.x_max, grid.M
    else:
        x_min, x_max, M = grid
    x, F = cdf_knots(mu)
    edges = np.linspace(x_min, x_max, M + 1)
    if x[0] < x_min or x[-1] > x_max:
        raise PreconditionError("grid does not cover the support of the measure")
    Fe = _cdf_eval(x, F, edges)
    dx = (x_max - x_min) / M
    return GridDensity(x_min, x_max, np.maximum(np.diff(Fe), 0.0) / dx)


def _cdf_eval(x, F, pts):
    # right-continuous evaluation that tolerates repeated knots (atoms)
    idx = np.searchsorted(x, pts, side="right")
    out = np.empty_like(pts)
    lo = idx == 0
    hi = idx >= x.size
    mid = ~(lo | hi)
    out[lo] = 0.0
    out[hi] = 1.0
    i = idx[mid]
    x0, x1 = x[i - 1], x[i]
    F0, F1 = F[i - 1], F[i]
    w = np.where(x1 > x0, (pts[mid] - x0) / np.where(x1 > x0, x1 - x0, 1.0), 1.0)
    out[mid] = F0 + w * (F1 - F0)
    return out


# ------------------------------------------------------------------- terms


def _zero(t):
    return 0.0


@dataclass(frozen=True)
class Potential:
    """Confinement ``V(t, x)`` with its derivatives (vectorized in x).

    ``lam(t)`` is a convexity modulus of ``V(t, .)``; ``beta(t)`` bounds
    ``|dV/dt| <= beta(t) (1 + x^2)``.
    """

    V: Callable
    dV: Callable
    d2V: Callable | None = None
    dVdt: Callable | None = None
    lam: Callable = _zero
    beta: Callable = _zero
    name: str = "potential"
    config: dict = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class Interaction:
    """Symmetric pair potential ``W(t, x, y)`` with partial derivatives.

    ``dW1 = dW/dx``, ``d2W11 = d2W/dx2``, ``d2W12 = d2W/dxdy``. ``growth``
    is the constant in ``|W(0, x, y)| <= growth (1 + x^2 + y^2)``.
    """

    W: Callable
    dW1: Callable
    d2W11: Callable | None = None
    d2W12: Callable | None = None
    dWdt: Callable | None = None
    lam: Callable = _zero
    beta: Callable = _zero
    growth: float = 1.0
    name: str = "interaction"
    config: dict = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class InternalEnergy:
    """Internal energy density ``U(t, z)`` of the density value ``z``.

    ``a``, ``A`` bound the time variation against ``U(0, z)``; ``c1``, ``c2``,
    ``alpha`` give the lower bound ``U(0, z) >= -c1 z - c2 z^alpha``.
    """

    U: Callable
    dU: Callable
    d2U: Callable
    dUdt: Callable | None = None
    a: Callable = _zero
    A: Callable = _zero
    c1: float = 0.0
    c2: float = 0.0
    alpha: float = 0.5
    name: str = "internal"
    config: dict = field(default_factory=dict, compare=False)

    def pressure(self, t, z):
        return pressure(t, z, self)

    @classmethod
    def entropy(cls, kappa) -> "InternalEnergy":
        """``U = kappa(t) z log z``; pressure ``kappa(t) z``."""
        k = TimeProfile.parse(kappa)
        rate = _max_abs_rate(k)
        k0 = float(k(0.0))
        return cls(
            U=lambda t, z: k(t) * xlogy(z, z),
            dU=lambda t, z: k(t) * (np.log(z) + 1.0),
            d2U=lambda t, z: k(t) / z,
            dUdt=lambda t, z: k.derivative(t) * xlogy(z, z),
            a=lambda t: rate / k0,
            A=lambda t: rate / k0,
            c1=0.0,
            c2=2.0 * k0 / math.e,
            alpha=0.5,
            name="entropy",
            config={"name": "entropy", "kappa": k.expr},
        )


def _max_abs_rate(prof: TimeProfile, horizon: float = 10.0) -> float:
    ts = np.linspace(0.0, horizon, 2001)
    return float(max(abs(prof.derivative(float(s))) for s in ts))


def pressure(t: float, z, U: InternalEnergy):
    """``P(t, z) = z dU/dz - U``."""
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise PreconditionError("pressure needs z >= 0")
    with np.errstate(divide="ignore", invalid="ignore"):
        zd = np.where(z > 0, z * U.dU(t, np.where(z > 0, z, 1.0)), 0.0)
    out = zd - U.U(t, z)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class EnergyTerms:
    """Composite energy: entropy ``kappa(t)``, potential, interaction, internal energy.

    Inactive terms are ``None``. ``kappa`` must stay positive and, when it
    varies in time, nonincreasing on ``[0, horizon]``.
    """

    kappa: TimeProfile | None = None
    potential: Potential | None = None
    interaction: Interaction | None = None
    internal: InternalEnergy | None = None
    horizon: float = 10.0

    def __post_init__(self):
        if self.kappa is not None:
            k = TimeProfile.parse(self.kappa)
            object.__setattr__(self, "kappa", k)
            ts = np.linspace(0.0, self.horizon, 1001)
            vals = np.array([k(float(s)) for s in ts])
            if np.any(vals <= 0):
                raise PreconditionError("entropy coefficient must be positive")
            if np.any(np.diff(vals) > 1e-12 * np.abs(vals[:-1])):
                raise PreconditionError("time-dependent entropy coefficient must be nonincreasing")

    @property
    def has_internal(self) -> bool:
        return self.kappa is not None or self.internal is not None

    @property
    def active(self) -> bool:
        return any(x is not None for x in (self.kappa, self.potential, self.interaction, self.internal))

    def lam(self, t: float) -> float:
        out = 0.0
        if self.potential is not None:
            out += float(self.potential.lam(t))
        if self.interaction is not None:
            out += min(0.0, float(self.interaction.lam(t)))
        return out

    def beta(self, t: float) -> float:
        out = 0.0
        if self.potential is not None:
            out += float(self.potential.beta(t))
        if self.interaction is not None:
            out += float(self.interaction.beta(t))
        return out

    def internal_terms(self) -> list[InternalEnergy]:
        out = []
        if self.kappa is not None:
            out.append(InternalEnergy.entropy(self.kappa))
        if self.internal is not None:
            out.append(self.internal)
        return out


# ------------------------------------------------------------ evaluations


def _q(mu) -> np.ndarray:
    return mu.q if isinstance(mu, QuantileMeasure) else np.asarray(mu, dtype=float)


def energy(t: float, mu, terms: EnergyTerms):
    """Energy of a quantile vector; PLUS_INF for a singular measure with internal energy."""
    q = _q(mu)
    N = q.size
    total = 0.0
    if terms.has_internal:
        h = np.diff(q)
        if np.any(h <= 0):
            return PLUS_INF
        if terms.kappa is not None:
            total += -float(terms.kappa(t)) * float(np.sum(np.log(N * h))) / N
        if terms.internal is not None:
            z = 1.0 / (N * h)
            total += float(np.sum(terms.internal.U(t, z) * h))
    if terms.potential is not None:
        total += float(np.sum(terms.potential.V(t, q))) / N
    if terms.interaction is not None:
        total += float(np.sum(terms.interaction.W(t, q[:, None], q[None, :]))) / (2.0 * N * N)
    return total


def energy_gradient(t: float, mu, terms: EnergyTerms) -> np.ndarray:
    """Gradient in quantile coordinates (Euclidean, unweighted)."""
    q = _q(mu)
    N = q.size
    g = np.zeros(N)
    if terms.has_internal:
        h = np.diff(q)
        if np.any(h <= 0):
            raise InvalidStateError("gradient undefined at a singular measure")
        dh = np.zeros(N - 1)
        if terms.kappa is not None:
            dh += -float(terms.kappa(t)) / (N * h)
        if terms.internal is not None:
            dh += -pressure(t, 1.0 / (N * h), terms.internal)
        g[:-1] -= dh
        g[1:] += dh
    if terms.potential is not None:
        g += terms.potential.dV(t, q) / N
    if terms.interaction is not None:
        g += np.sum(terms.interaction.dW1(t, q[:, None], q[None, :]), axis=1) / (N * N)
    return g


def _hessian(t: float, q: np.ndarray, terms: EnergyTerms, shift: float):
    """Hessian plus ``shift * I``; banded (3, N) unless interaction makes it dense."""
    N = q.size
    diag = np.full(N, shift)
    off = np.zeros(N - 1)
    if terms.has_internal:
        h = np.diff(q)
        c = np.zeros(N - 1)
        if terms.kappa is not None:
            c += float(terms.kappa(t)) / (N * h * h)
        if terms.internal is not None:
            z = 1.0 / (N * h)
            c += z * z * terms.internal.d2U(t, z) / h
        diag[:-1] += c
        diag[1:] += c
        off -= c
    if terms.potential is not None:
        if terms.potential.d2V is None:
            raise UnsupportedDiagnostic("potential lacks a second derivative")
        diag += terms.potential.d2V(t, q) / N
    if terms.interaction is None:
        ab = np.zeros((3, N))
        ab[0, 1:] = off
        ab[1] = diag
        ab[2, :-1] = off
        return "banded", ab
    it = terms.interaction
    if it.d2W11 is None or it.d2W12 is None:
        raise UnsupportedDiagnostic("interaction lacks second derivatives")
    Q1, Q2 = q[:, None], q[None, :]
    H = it.d2W12(t, Q1, Q2) / (N * N) * np.ones((N, N))
    d = np.sum(it.d2W11(t, Q1, Q2) * np.ones((N, N)), axis=1) / (N * N)
    H[np.diag_indices(N)] = d + np.diag(H)
    H[np.diag_indices(N)] += diag
    idx = np.arange(N - 1)
    H[idx, idx + 1] += off
    H[idx + 1, idx] += off
    return "dense", H


def energy_time_derivative(t: float, mu, terms: EnergyTerms) -> float:
    q = _q(mu)
    N = q.size
    total = 0.0
    if terms.has_internal:
        h = np.diff(q)
        if np.any(h <= 0):
            raise InvalidStateError("time derivative undefined at a singular measure")
        if terms.kappa is not None:
            total += -float(terms.kappa.derivative(t)) * float(np.sum(np.log(N * h))) / N
        if terms.internal is not None:
            if terms.internal.dUdt is None:
                raise UnsupportedDiagnostic("internal energy lacks a time derivative")
            total += float(np.sum(terms.internal.dUdt(t, 1.0 / (N * h)) * h))
    if terms.potential is not None:
        if terms.potential.dVdt is None:
            raise UnsupportedDiagnostic("potential lacks a time derivative")
        total += float(np.sum(terms.potential.dVdt(t, q))) / N
    if terms.interaction is not None:
        if terms.interaction.dWdt is None:
            raise UnsupportedDiagnostic("interaction lacks a time derivative")
        vals = terms.interaction.dWdt(t, q[:, None], q[None, :]) * np.ones((N, N))
        total += float(np.sum(vals)) / (2.0 * N * N)
    return total


def entropy(mu: QuantileMeasure):
    """``int rho log rho`` of the piecewise-uniform reconstruction (kappa = 1)."""
    return energy(0.0, mu, ENTROPY_ONLY)


ENTROPY_ONLY = EnergyTerms(kappa=TimeProfile.constant(1.0))


def otto_lower_bound(mu: QuantileMeasure) -> float:
    """``-C (1 + M2)^alpha``; raises if the entropy of ``mu`` falls below it."""
    bound = -OTTO_C * (1.0 + second_moment(mu)) ** OTTO_ALPHA
    ent = entropy(mu)
    if ent is not PLUS_INF and ent < bound:
        raise HypothesisViolation(f"entropy {ent:g} below the lower bound {bound:g}")
    return bound


# ------------------------------------------------------------------- space


class WassersteinSpace(MetricSpace):
    def __init__(self, N: int):
        if N < 2:
            raise PreconditionError("resolution must be at least 2")
        self.N = int(N)
        self.weight = 1.0 / N

    def coords(self, u) -> np.ndarray:
        return _q(u)

    def point(self, x) -> QuantileMeasure:
        return QuantileMeasure(x)

    def project(self, x):
        return isotonic_project(x)

    def distance(self, u, v) -> float:
        return w2_distance(u, v)

    def validate(self, u) -> None:
        if not isinstance(u, QuantileMeasure):
            raise InvalidStateError("expected a QuantileMeasure")
        if u.N != self.N:
            raise InvalidStateError(f"expected resolution {self.N}, got {u.N}")

    def __repr__(self):
        return f"WassersteinSpace({self.N})"


class WassersteinFunctional(TimeFunctional):
    def __init__(self, terms: EnergyTerms, N: int, name: str = "wasserstein1d",
                 config: dict | None = None):
        self.terms = terms
        self.N = int(N)
        self.space = WassersteinSpace(N)
        self.name = name
        self.config = dict(config or {})

    def energy(self, t, u):
        return energy(t, u, self.terms)

    def gradient(self, t, u):
        return energy_gradient(t, u, self.terms)

    def time_derivative(self, t, u):
        return energy_time_derivative(t, u, self.terms)

    @property
    def has_time_derivative(self) -> bool:
        tm = self.terms
        return not (
            (tm.potential is not None and tm.potential.dVdt is None)
            or (tm.interaction is not None and tm.interaction.dWdt is None)
            or (tm.internal is not None and tm.internal.dUdt is None)
        )

    def lam(self, t):
        return self.terms.lam(t)

    def beta(self, t):
        return self.terms.beta(t)

    def reference_point(self):
        return QuantileMeasure.dirac(0.0, self.N)

    def prox(self, t, tau, base, initial=None):
        return prox_quantile(t, tau, base, self.terms, initial=initial)


# -------------------------------------------------------------------- prox


def _feasible_start(q: np.ndarray, tau: float) -> np.ndarray:
    h = np.diff(q)
    if np.all(h > 0):
        return q.copy()
    spread = max(float(q[-1] - q[0]), 1.0)
    return q + 1e-3 * math.sqrt(tau) * spread * (levels(q.size) - 0.5)


def prox_quantile(t: float, tau: float, base: QuantileMeasure, terms: EnergyTerms,
                  initial: QuantileMeasure | None = None, rtol: float = PROX_RTOL) -> ProxResult:
    """Minimize ``energy + W2^2(base, .) / (2 tau)`` over nondecreasing quantile vectors.

    Damped Newton on the (banded or dense) Hessian. With an internal energy the
    log-type barrier keeps increments positive; otherwise a non-monotone
    Newton solution is repaired by projected gradient with isotonic projection.
    """
    if not isinstance(base, QuantileMeasure):
        raise InvalidStateError("base must be a QuantileMeasure")
    if not terms.active:
        return ProxResult(base, energy(t, base, terms), 0.0, 0, True, energy(t, base, terms))
    F = WassersteinFunctional(terms, base.N)
    check_window(F, t, tau)
    N = base.N
    b = base.q
    q = _feasible_start(b if initial is None else _q(initial), tau)
    if terms.has_internal and np.any(np.diff(q) <= 0):
        q = _feasible_start(b, tau)

    def phi(x):
        e = energy(t, x, terms)
        if e is PLUS_INF:
            return math.inf
        r = x - b
        return e + float(np.dot(r, r)) / (2.0 * tau * N)

    f = phi(q)
    crit = math.inf
    for it in range(NEWTON_MAX_ITER + 1):
        g = energy_gradient(t, q, terms) + (q - b) / (tau * N)
        crit = math.sqrt(N) * float(np.linalg.norm(g))
        if crit <= rtol * max(1.0, abs(f)):
            break
        if it == NEWTON_MAX_ITER:
            raise ProxConvergenceError(
                f"quantile prox did not converge (residual {crit:.3g})",
                last_iterate=q, residual=crit, iterations=it,
            )
        kind, H = _hessian(t, q, terms, 1.0 / (tau * N))
        step = solve_banded((1, 1), H, -g) if kind == "banded" else np.linalg.solve(H, -g)
        slope = float(np.dot(g, step))
        if not np.all(np.isfinite(step)) or slope >= 0:
            step = -tau * N * g
            slope = float(np.dot(g, step))
        a = 1.0
        if terms.has_internal:
            dstep = np.diff(step)
            neg = dstep < 0
            if np.any(neg):
                a = min(1.0, 0.99 * float(np.min(-np.diff(q)[neg] / dstep[neg])))
        noise = 1e-13 * max(1.0, abs(f))
        for _ in range(60):
            trial = q + a * step
            ft = phi(trial)
            if ft <= f + 1e-4 * a * slope:
                break
            # predicted decrease below the rounding level of the objective
            if math.isfinite(ft) and -a * slope <= noise and ft <= f + noise:
                break
            a *= 0.5
        else:
            break
        q, f = trial, ft
    if not terms.has_internal and np.any(np.diff(q) < 0):
        res = projected_gradient_prox(F, t, tau, base, initial=QuantileMeasure(isotonic_project(q)),
                                      rtol=rtol)
        return res
    v = QuantileMeasure(q)
    e = energy(t, v, terms)
    d = w2_distance(base, v)
    return ProxResult(v, e + d * d / (2.0 * tau), d, it, True, e, crit)


# -------------------------------------------------------------- validation


def _default_measures(N: int = 256) -> list[QuantileMeasure]:
    out = []
    for sd in (1e-6, 1e-3, 0.1, 1.0, 3.0):
        for m in (-2.0, 0.0, 1.5):
            out.append(QuantileMeasure.gaussian(m, sd * sd, N))
    mix = np.sort(np.concatenate([norm.ppf(levels(N // 2)) * 0.3 - 2.0,
                                  norm.ppf(levels(N - N // 2)) * 0.5 + 2.0]))
    out.append(QuantileMeasure(mix))
    out.append(QuantileMeasure.uniform(-1.0, 4.0, N))
    return out


def _worst(items):
    """Pick the entry with the largest violation ``lhs - rhs``."""
    best = None
    for lhs, rhs, wit in items:
        gap = lhs - rhs
        if best is None or gap > best[0]:
            best = (gap, lhs, rhs, wit)
    return best


def validate_hypotheses(terms: EnergyTerms, sample_times: Sequence[float] | None = None,
                        sample_points: Sequence[float] | None = None,
                        sample_measures: Iterable[QuantileMeasure] | None = None,
                        tol: float = 1e-9, rng: np.random.Generator | None = None):
    """Sampled pass/fail checks of the structural hypotheses of each active term.

    Potential: lambda-convexity, local bounds at 0, time regularity.
    Interaction: symmetry and quadratic growth at t=0, joint lambda-convexity,
    time regularity. Internal energy: time sandwich and superlinear growth,
    lower bound, convexity and monotonicity of ``z U(t, 1/z)``. Finally the
    time regularity of the composite energy on sampled measures with u* = delta_0.
    """
    from .report import DiagnosticsReport, Verdict

    rng = np.random.default_rng(0) if rng is None else rng
    ts = sorted(float(s) for s in (sample_times if sample_times is not None else np.linspace(0, 2, 9)))
    xs = np.asarray(sample_points if sample_points is not None else np.linspace(-5, 5, 41), dtype=float)
    report = DiagnosticsReport("hypotheses")

    def add(name, best, extra=None):
        if best is None:
            return
        gap, lhs, rhs, wit = best
        ok = gap <= tol * (1.0 + abs(rhs))
        w = dict(wit)
        if extra:
            w.update(extra)
        report.add(Verdict(name, bool(ok), float(lhs), float(rhs), "<=", tol, w))

    pot = terms.potential
    if pot is not None:
        items = []
        x, y = np.meshgrid(xs, xs, indexing="ij")
        x, y = x.ravel(), y.ravel()
        for t in ts:
            lam = float(pot.lam(t))
            mid = pot.V(t, 0.5 * (x + y))
            rhs = 0.5 * pot.V(t, x) + 0.5 * pot.V(t, y) - lam * (x - y) ** 2 / 8.0
            k = int(np.argmax(mid - rhs))
            items.append((float(mid[k]), float(rhs[k]), {"t": t, "x": float(x[k]), "y": float(y[k])}))
        add("V_convexity", _worst(items))
        vals = [(abs(float(pot.V(t, np.array([0.0]))[0])), abs(float(pot.dV(t, np.array([0.0]))[0]))) for t in ts]
        finite = all(math.isfinite(a) and math.isfinite(b) for a, b in vals)
        report.add(Verdict("V_local_bounds", finite, max(max(v) for v in vals), math.inf, "<",
                           None, {"times": ts}))
        items = []
        for s, t in zip(ts[:-1], ts[1:]):
            ib = integrate(pot.beta, s, t)
            lhs = np.abs(pot.V(t, xs) - pot.V(s, xs))
            rhs = ib * (1.0 + xs * xs)
            k = int(np.argmax(lhs - rhs))
            items.append((float(lhs[k]), float(rhs[k]), {"s": s, "t": t, "x": float(xs[k])}))
        add("V_time_regularity", _worst(items))

    inter = terms.interaction
    if inter is not None:
        X, Y = np.meshgrid(xs, xs, indexing="ij")
        items = []
        for t in ts:
            d = np.abs(inter.W(t, X, Y) - inter.W(t, Y, X)) * np.ones_like(X)
            k = np.unravel_index(int(np.argmax(d)), d.shape)
            items.append((float(d[k]), 0.0, {"t": t, "x": float(X[k]), "y": float(Y[k])}))
        add("W_symmetry", _worst(items))
        lhs = np.abs(inter.W(0.0, X, Y)) * np.ones_like(X)
        rhs = inter.growth * (1.0 + X * X + Y * Y)
        k = np.unravel_index(int(np.argmax(lhs - rhs)), lhs.shape)
        add("W_growth", (float(lhs[k] - rhs[k]), float(lhs[k]), float(rhs[k]),
                         {"x": float(X[k]), "y": float(Y[k])}))
        items = []
        P = rng.uniform(xs.min(), xs.max(), size=(400, 2))
        Q = rng.uniform(xs.min(), xs.max(), size=(400, 2))
        for t in ts:
            lam = float(inter.lam(t))
            M = 0.5 * (P + Q)
            mid = inter.W(t, M[:, 0], M[:, 1]) * np.ones(len(P))
            r = 0.5 * inter.W(t, P[:, 0], P[:, 1]) + 0.5 * inter.W(t, Q[:, 0], Q[:, 1]) \
                - lam * np.sum((P - Q) ** 2, axis=1) / 8.0
            k = int(np.argmax(mid - r))
            items.append((float(mid[k]), float(r[k]), {"t": t, "p": P[k].tolist(), "q": Q[k].tolist()}))
        add("W_convexity", _worst(items))
        items = []
        for s, t in zip(ts[:-1], ts[1:]):
            ib = integrate(inter.beta, s, t)
            lhs = np.abs(inter.W(t, X, Y) - inter.W(s, X, Y)) * np.ones_like(X)
            rhs = ib * (1.0 + X * X + Y * Y)
            k = np.unravel_index(int(np.argmax(lhs - rhs)), lhs.shape)
            items.append((float(lhs[k]), float(rhs[k]), {"s": s, "t": t, "x": float(X[k]), "y": float(Y[k])}))
        add("W_time_regularity", _worst(items))

    for U in terms.internal_terms():
        tag = U.name
        zs = np.logspace(-6, 6, 241)
        if U.dUdt is not None:
            u0 = U.U(0.0, zs)
            pos, negp = np.maximum(u0, 0.0), np.maximum(-u0, 0.0)
            lo_items, hi_items = [], []
            for t in ts:
                du = U.dUdt(t, zs) * np.ones_like(zs)
                low = -float(U.A(t)) * pos
                high = float(U.a(t)) * negp
                k = int(np.argmax(low - du))
                lo_items.append((float(low[k]), float(du[k]), {"t": t, "z": float(zs[k])}))
                k = int(np.argmax(du - high))
                hi_items.append((float(du[k]), float(high[k]), {"t": t, "z": float(zs[k])}))
            add(f"U1_lower[{tag}]", _worst(lo_items))
            add(f"U1_upper[{tag}]", _worst(hi_items))
        big = np.array([1e2, 1e4, 1e6, 1e8])
        ratio = U.U(0.0, big) / big
        grows = bool(np.all(np.diff(ratio) > 0))
        report.add(Verdict(f"U1_superlinear[{tag}]", grows, float(ratio[0]), float(ratio[-1]), "<",
                           None, {"z": big.tolist(), "ratio": ratio.tolist()}))
        lhs = -U.c1 * zs - U.c2 * zs ** U.alpha
        u0 = U.U(0.0, zs) * np.ones_like(zs)
        k = int(np.argmax(lhs - u0))
        add(f"U2_lower_bound[{tag}]", (float(lhs[k] - u0[k]), float(lhs[k]), float(u0[k]),
                                        {"z": float(zs[k]), "alpha": U.alpha}))
        alpha_ok = 1.0 / 3.0 < U.alpha < 1.0
        report.add(Verdict(f"U2_exponent[{tag}]", alpha_ok, 1.0 / 3.0, U.alpha, "<", None,
                           {"alpha": U.alpha}))
        z0 = float(U.U(0.0, np.array([0.0]))[0])
        report.add(Verdict(f"U3_zero[{tag}]", abs(z0) <= tol, abs(z0), tol, "<=", tol, {}))
        conv_items, dual_items, mono_items = [], [], []
        zz = np.logspace(-4, 4, 161)
        for t in ts:
            u = U.U(t, zz) * np.ones_like(zz)
            # midpoint convexity on consecutive log-spaced triples
            mid = U.U(t, 0.5 * (zz[:-2] + zz[2:]))
            r = 0.5 * (u[:-2] + u[2:])
            k = int(np.argmax(mid - r))
            conv_items.append((float(mid[k]), float(r[k]), {"t": t, "z": float(zz[k + 1])}))
            dual = zz * U.U(t, 1.0 / zz)
            dm = 0.5 * (zz[:-2] + zz[2:])
            dmid = dm * U.U(t, 1.0 / dm)
            dr = 0.5 * (dual[:-2] + dual[2:])
            k = int(np.argmax(dmid - dr))
            dual_items.append((float(dmid[k]), float(dr[k]), {"t": t, "z": float(zz[k + 1])}))
            inc = np.diff(dual)
            k = int(np.argmax(inc))
            mono_items.append((float(dual[k + 1]), float(dual[k]), {"t": t, "z": float(zz[k + 1])}))
        add(f"U3_convex[{tag}]", _worst(conv_items))
        add(f"U3_dual_convex[{tag}]", _worst(dual_items))
        add(f"U3_dual_nonincreasing[{tag}]", _worst(mono_items))

    measures = list(sample_measures) if sample_measures is not None else _default_measures()
    items = []
    for s, t in zip(ts[:-1], ts[1:]):
        ib = integrate(terms.beta, s, t)
        for mu in measures:
            es, et = energy(s, mu, terms), energy(t, mu, terms)
            if es is PLUS_INF or et is PLUS_INF:
                continue
            lhs = abs(et - es)
            rhs = ib * (1.0 + second_moment(mu))
            items.append((lhs, rhs, {"s": s, "t": t, "mean": mu.mean, "std": math.sqrt(mu.variance),
                                     "N": mu.N}))
    add("E3_time_regularity", _worst(items))
    return report


# ----------------------------------------------------------------- catalog


def ou_potential(a=1.0, m=0.0) -> Potential:
    """``V(t, x) = a(t) (x - m(t))^2 / 2``.

    ``|dV/dt| <= (|a'| (1 + m^2) + |a m'| (1/2 + |m|)) (1 + x^2)`` gives beta.
    """
    a, m = TimeProfile.parse(a), TimeProfile.parse(m)

    def beta(t):
        mt = abs(m(t))
        return abs(a.derivative(t)) * (1.0 + mt * mt) + abs(a(t) * m.derivative(t)) * (0.5 + mt)

    return Potential(
        V=lambda t, x: 0.5 * a(t) * (x - m(t)) ** 2,
        dV=lambda t, x: a(t) * (x - m(t)),
        d2V=lambda t, x: a(t) * np.ones_like(np.asarray(x, dtype=float)),
        dVdt=lambda t, x: 0.5 * a.derivative(t) * (x - m(t)) ** 2 - a(t) * m.derivative(t) * (x - m(t)),
        lam=lambda t: float(a(t)),
        beta=beta,
        name="ou",
        config={"name": "ou", "a": a.expr, "m": m.expr},
    )


def quadratic_potential(c=1.0) -> Potential:
    """``V(t, x) = c(t) x^2 / 2``."""
    pot = ou_potential(c, 0.0)
    return Potential(pot.V, pot.dV, pot.d2V, pot.dVdt, pot.lam, pot.beta, "quadratic",
                     {"name": "quadratic", "c": TimeProfile.parse(c).expr})


def quadratic_interaction(c=1.0) -> Interaction:
    """``W(t, x, y) = c (x - y)^2 / 2`` with constant ``c >= 0``; convex, so lambda = 0."""
    c = float(c)
    if c < 0:
        raise PreconditionError("interaction strength must be nonnegative")
    return Interaction(
        W=lambda t, x, y: 0.5 * c * (x - y) ** 2,
        dW1=lambda t, x, y: c * (x - y),
        d2W11=lambda t, x, y: c,
        d2W12=lambda t, x, y: -c,
        dWdt=lambda t, x, y: 0.0 * (x - y),
        growth=c,
        name="quadratic",
        config={"name": "quadratic", "c": c},
    )


def power_internal(m: float = 2.0, c=1.0) -> InternalEnergy:
    """``U(t, z) = c(t) z^m / (m - 1)`` (porous-medium type), pressure ``c(t) z^m``.

    ``c`` must be positive and nonincreasing; then ``a = A = max|c'| / c(0)``.
    """
    m = float(m)
    if not m > 1:
        raise PreconditionError("power-law exponent must exceed 1")
    c = TimeProfile.parse(c)
    c0 = float(c(0.0))
    if c0 <= 0:
        raise PreconditionError("power-law coefficient must be positive")
    rate = _max_abs_rate(c)
    return InternalEnergy(
        U=lambda t, z: c(t) * np.asarray(z, dtype=float) ** m / (m - 1.0),
        dU=lambda t, z: c(t) * m / (m - 1.0) * np.asarray(z, dtype=float) ** (m - 1.0),
        d2U=lambda t, z: c(t) * m * np.asarray(z, dtype=float) ** (m - 2.0),
        dUdt=lambda t, z: c.derivative(t) * np.asarray(z, dtype=float) ** m / (m - 1.0),
        a=lambda t: rate / c0,
        A=lambda t: rate / c0,
        c1=0.0,
        c2=0.0,
        alpha=0.5,
        name="power",
        config={"name": "power", "m": m, "c": c.expr},
    )


POTENTIALS = ("ou", "quadratic")
INTERACTIONS = ("quadratic",)
INTERNALS = ("power",)


def terms_from_config(cfg: dict, horizon: float = 10.0) -> EnergyTerms:
    """Build an :class:`EnergyTerms` from a catalog description."""
    kappa = potential = interaction = internal = None
    if cfg.get("entropy") is not None:
        kappa = TimeProfile.parse(cfg["entropy"].get("kappa", 1.0))
    if cfg.get("potential") is not None:
        p = cfg["potential"]
        if p["name"] == "ou":
            potential = ou_potential(p.get("a", 1.0), p.get("m", 0.0))
        elif p["name"] == "quadratic":
            potential = quadratic_potential(p.get("c", 1.0))
        else:
            raise PreconditionError(f"unknown potential {p['name']!r}")
    if cfg.get("interaction") is not None:
        w = cfg["interaction"]
        if w["name"] != "quadratic":
            raise PreconditionError(f"unknown interaction {w['name']!r}")
        interaction = quadratic_interaction(w.get("c", 1.0))
    if cfg.get("internal") is not None:
        u = cfg["internal"]
        if u["name"] != "power":
            raise PreconditionError(f"unknown internal energy {u['name']!r}")
        internal = power_internal(u.get("m", 2.0), u.get("c", 1.0))
    return EnergyTerms(kappa, potential, interaction, internal, horizon=horizon)


def functional_from_config(cfg: dict, N: int, horizon: float = 10.0) -> WassersteinFunctional:
    return WassersteinFunctional(terms_from_config(cfg, horizon), N, name="wasserstein1d",
                                 config=dict(cfg))
