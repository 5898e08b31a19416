"""Reference solutions for the drift-diffusion equations: Gaussian moment
ODEs for Ornstein-Uhlenbeck type problems and conservative finite volumes."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import solve_banded

from .errors import IntegrityError, NumericError, PreconditionError
from .grid import GridDensity
from .profiles import TimeProfile
from .wasserstein1d import QuantileMeasure, from_density, w2_distance

log = logging.getLogger(__name__)

MASS_DRIFT_TOL = 1e-6
CLIP_TOL = 1e-12
DEFAULT_DT = 1e-4

__all__ = [
    "GaussianState",
    "GridDensity",
    "OracleRun",
    "ou_gaussian_solution",
    "ou_gaussian_series",
    "fokker_planck_fd",
    "general_diffusion_fd",
    "suggest_domain",
    "w2_between_densities",
    "barenblatt",
]


@dataclass(frozen=True)
class GaussianState:
    mean: float
    var: float

    def __post_init__(self):
        if not self.var > 0:
            raise PreconditionError("Gaussian variance must be positive")

    def quantiles(self, N: int) -> QuantileMeasure:
        return QuantileMeasure.gaussian(self.mean, self.var, N)


def _moment_rhs(a, m, kappa):
    def rhs(t, y):
        return [-a(t) * (y[0] - m(t)), -2.0 * a(t) * y[1] + 2.0 * kappa(t)]

    return rhs


def _var_event(t, y):
    return y[1]


_var_event.terminal = True
_var_event.direction = -1


def ou_gaussian_series(a, m, kappa, g0: GaussianState, times: Sequence[float],
                       rtol: float = 1e-11, atol: float = 1e-13) -> list[GaussianState]:
    """Mean and variance of ``dp/dt = d/dx (a(t) (x - m(t)) p) + kappa(t) d2p/dx2`` from a Gaussian."""
    a, m, kappa = TimeProfile.parse(a), TimeProfile.parse(m), TimeProfile.parse(kappa)
    ts = np.asarray(times, dtype=float)
    if np.any(ts < 0):
        raise PreconditionError("times must be nonnegative")
    T = float(ts.max()) if ts.size else 0.0
    if T == 0:
        return [g0 for _ in ts]
    sol = solve_ivp(_moment_rhs(a, m, kappa), (0.0, T), [g0.mean, g0.var], method="DOP853",
                    rtol=rtol, atol=atol, dense_output=True, events=_var_event)
    if sol.status == 1 or sol.status < 0:
        raise NumericError(f"variance became nonpositive or integration failed: {sol.message}")
    out = []
    for t in ts:
        mean, var = sol.sol(float(t)) if t > 0 else (g0.mean, g0.var)
        if not var > 0:
            raise NumericError("variance became nonpositive")
        out.append(GaussianState(float(mean), float(var)))
    return out


def ou_gaussian_solution(a, m, kappa, g0: GaussianState, t: float) -> GaussianState:
    return ou_gaussian_series(a, m, kappa, g0, [t])[0]


def write_gaussian_series(path, times, states: Sequence[GaussianState]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "mean", "var"])
        for t, g in zip(times, states):
            w.writerow([repr(float(t)), repr(g.mean), repr(g.var)])


def suggest_domain(mean: float, std: float, width: float = 12.0) -> tuple[float, float]:
    return mean - width * std, mean + width * std


@dataclass
class OracleRun:
    """Frames of a finite-volume run with its audit counters."""

    times: list[float]
    frames: list[GridDensity]
    clipped: int = 0
    max_mass_drift: float = 0.0
    steps: int = 0
    dt: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def final(self) -> GridDensity:
        return self.frames[-1]

    def at(self, t: float) -> GridDensity:
        for s, f in zip(self.times, self.frames):
            if abs(s - t) <= 1e-12 * max(1.0, abs(t)):
                return f
        raise KeyError(t)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "rho"])
            for t, f in zip(self.times, self.frames):
                for x, r in zip(f.centers, f.rho):
                    w.writerow([repr(float(t)), repr(float(x)), repr(float(r))])


def _implicit_matrix(D: np.ndarray, r: float, M: int) -> np.ndarray:
    """Banded ``I + r L`` with face coefficients D (length M - 1) and no-flux ends."""
    ab = np.zeros((3, M))
    main = np.ones(M)
    main[:-1] += r * D
    main[1:] += r * D
    ab[1] = main
    ab[0, 1:] = -r * D
    ab[2, :-1] = -r * D
    return ab


def _face_states(rho: np.ndarray, order: int):
    """Upwind face values: cell averages (order 1) or minmod-limited linear reconstruction (order 2)."""
    if order == 1:
        return rho[:-1], rho[1:]
    d = np.diff(rho)
    slope = np.zeros_like(rho)
    a, b = d[:-1], d[1:]
    slope[1:-1] = np.where(a * b > 0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)
    return rho[:-1] + 0.5 * slope[:-1], rho[1:] - 0.5 * slope[1:]


def _evolve(rho0: GridDensity, T: float, dt: float | None, times, velocity, face_diffusion,
            implicit_time: bool = True, drift_order: int = 2) -> OracleRun:
    """Shared semi-implicit loop: explicit upwind transport, implicit diffusion."""
    if not T > 0:
        raise PreconditionError("T must be positive")
    M, dx = rho0.M, rho0.dx
    edges = rho0.edges
    faces = edges[1:-1]
    centers = rho0.centers
    rho = np.array(rho0.rho, dtype=float)
    mass0 = float(rho.sum() * dx)
    if not mass0 > 0:
        raise PreconditionError("initial density has zero mass")
    out_times = sorted(set(float(s) for s in (times if times is not None else [T])) | {T})
    if out_times[0] < 0 or out_times[-1] > T:
        raise PreconditionError("output times must lie in [0, T]")
    dt_cap = DEFAULT_DT if dt is None else float(dt)
    run = OracleRun([], [])
    if out_times[0] == 0.0:
        run.times.append(0.0)
        run.frames.append(rho0)
        out_times = out_times[1:]
    t = 0.0
    k = 0
    used = math.inf
    for target in out_times:
        while t < target - 1e-14:
            v = velocity(t, rho, faces, centers)
            vmax = float(np.max(np.abs(v))) if v.size else 0.0
            stab = dx / vmax if vmax > 0 else math.inf
            h = min(dt_cap, 0.5 * stab, target - t)
            used = min(used, h)
            left, right = _face_states(rho, drift_order)
            flux = np.maximum(v, 0.0) * left + np.minimum(v, 0.0) * right
            div = np.zeros(M)
            div[:-1] += flux
            div[1:] -= flux
            rhs = rho - h / dx * div
            tn = t + h if implicit_time else t
            D = face_diffusion(tn, rho)
            ab = _implicit_matrix(D, h / (dx * dx), M)
            rho = solve_banded((1, 1), ab, rhs)
            neg = rho < 0
            if np.any(neg):
                run.clipped += int(np.sum(rho < -CLIP_TOL))
                rho = np.where(neg, 0.0, rho)
            t += h
            k += 1
            drift = abs(float(rho.sum() * dx) - mass0)
            run.max_mass_drift = max(run.max_mass_drift, drift)
            if drift > MASS_DRIFT_TOL:
                raise IntegrityError(f"mass drifted by {drift:.3g} at t={t:g}")
        t = target
        run.times.append(target)
        run.frames.append(GridDensity(rho0.x_min, rho0.x_max, rho / (rho.sum() * dx)))
    run.steps = k
    run.dt = used if math.isfinite(used) else dt_cap
    if run.clipped:
        log.warning("clipped %d negative density values beyond %g", run.clipped, CLIP_TOL)
    edge_mass = float((rho[0] + rho[-1]) * dx)
    run.meta["boundary_mass"] = edge_mass
    return run


def fokker_planck_fd(dV: Callable, kappa, rho0: GridDensity, T: float, dt: float | None = None,
                     times: Sequence[float] | None = None, drift_order: int = 2) -> OracleRun:
    """``d rho/dt = d/dx (dV/dx rho) + kappa(t) d2 rho/dx2`` with implicit diffusion and upwind drift.

    ``dV(t, x)`` is the spatial derivative of the potential.
    """
    kappa = TimeProfile.parse(kappa)

    def velocity(t, rho, faces, centers):
        return -np.asarray(dV(t, faces), dtype=float) * np.ones_like(faces)

    def diffusion(t, rho):
        return np.full(rho.size - 1, float(kappa(t)))

    return _evolve(rho0, T, dt, times, velocity, diffusion, drift_order=drift_order)


def _secant_pressure(P: Callable, dP: Callable | None):
    def coeff(t, rho):
        r0, r1 = rho[:-1], rho[1:]
        p0, p1 = P(t, r0), P(t, r1)
        diff = r1 - r0
        safe = np.abs(diff) > 1e-12 * np.maximum(1.0, np.abs(r0))
        mid = 0.5 * (r0 + r1)
        if dP is not None:
            slope = dP(t, mid)
        else:
            eps = 1e-7 * np.maximum(1.0, mid)
            slope = (P(t, mid + eps) - P(t, np.maximum(mid - eps, 0.0))) / (mid + eps - np.maximum(mid - eps, 0.0))
        out = np.where(safe, (p1 - p0) / np.where(safe, diff, 1.0), slope)
        return np.maximum(out, 0.0)

    return coeff


def general_diffusion_fd(P: Callable, rho0: GridDensity, T: float, dt: float | None = None,
                         dV: Callable | None = None, dW: Callable | None = None,
                         dP: Callable | None = None, times: Sequence[float] | None = None,
                         drift_order: int = 2) -> OracleRun:
    """``d rho/dt = d2/dx2 P(t, rho) + d/dx ((dV/dx + dW/dx * rho) rho)``.

    Diffusion uses the secant coefficient ``(P(rho_{j+1}) - P(rho_j)) / (rho_{j+1} - rho_j)``
    frozen at the old state and treated implicitly. ``dW(t, r)`` is the derivative of an
    even kernel ``W(t, x, y) = w(t, x - y)`` evaluated at the separation r.
    """
    coeff = _secant_pressure(P, dP)

    def velocity(t, rho, faces, centers):
        v = np.zeros_like(faces)
        if dV is not None:
            v -= np.asarray(dV(t, faces), dtype=float) * np.ones_like(faces)
        if dW is not None:
            dx = centers[1] - centers[0]
            w = rho * dx
            v -= np.asarray(dW(t, faces[:, None] - centers[None, :]), dtype=float) @ w
        return v

    return _evolve(rho0, T, dt, times, velocity, lambda t, rho: coeff(t, rho), implicit_time=False,
                   drift_order=drift_order)


def w2_between_densities(a: GridDensity, b: GridDensity, N: int = 2048) -> float:
    return w2_distance(from_density(a, N), from_density(b, N))


def barenblatt(t: float, m: float = 2.0, mass: float = 1.0, t0: float = 0.0):
    """Self-similar porous-medium profile for ``d rho/dt = d2/dx2 rho^m`` in one dimension.

    ``rho = s^{-a} (C - k (x / s^a)^2)_+^{1/(m-1)}`` with ``s = t + t0``,
    ``a = 1/(m+1)``, ``k = (m-1) a / (2m)``; C is fixed by the mass.
    """
    from scipy.integrate import quad

    alpha = 1.0 / (m + 1.0)
    k = (m - 1.0) * alpha / (2.0 * m)
    s = t + t0

    def shape(C):
        R = math.sqrt(C / k)
        return quad(lambda y: max(C - k * y * y, 0.0) ** (1.0 / (m - 1.0)), -R, R)[0]

    lo, hi = 1e-8, 1.0
    while shape(hi) < mass:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if shape(mid) < mass:
            lo = mid
        else:
            hi = mid
    C = 0.5 * (lo + hi)

    def rho(x):
        y = np.asarray(x, dtype=float) / s ** alpha
        return s ** (-alpha) * np.maximum(C - k * y * y, 0.0) ** (1.0 / (m - 1.0))

    radius = s ** alpha * math.sqrt(C / k)
    return rho, radius
