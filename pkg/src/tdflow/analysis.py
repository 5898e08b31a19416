"""Post-hoc checks of computed trajectories: contraction, energy identity,
variational inequality, slope estimates and mesh-convergence studies."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import PreconditionError, UnsupportedDiagnostic
from .metric_core import PLUS_INF, TimeFunctional, finite_or_raise, integrate, prox
from .report import DiagnosticsReport, Verdict
from .scheme import Trajectory, build_partition, de_giorgi, run_minimizing_movement

__all__ = [
    "DiagnosticsReport",
    "Verdict",
    "contraction_report",
    "energy_identity_residual",
    "energy_identity_report",
    "evi_residual",
    "discrete_evi_residuals",
    "local_slope_estimate",
    "convergence_study",
    "de_giorgi_ratios",
]


def cumulative_integral(fn: Callable[[float], float], marks: np.ndarray) -> np.ndarray:
    """``int_0^{t^n} fn`` at every mark, cell by cell with composite Simpson."""
    out = np.zeros(marks.size)
    for n in range(1, marks.size):
        out[n] = out[n - 1] + integrate(fn, float(marks[n - 1]), float(marks[n]))
    return out


def contraction_report(trajA: Trajectory, trajB: Trajectory, lam: Callable[[float], float],
                       slack: float = 1e-2) -> DiagnosticsReport:
    """Check ``d(U_A^n, U_B^n) <= exp(-int_0^{t^n} lam) d(U_A^0, U_B^0) (1 + slack)`` at every mark."""
    if trajA.partition != trajB.partition:
        raise PreconditionError("contraction needs trajectories on the same partition")
    if trajA.functional is not trajB.functional:
        raise PreconditionError("contraction needs trajectories of the same functional")
    space = trajA.functional.space
    marks = trajA.marks[: min(len(trajA.states), len(trajB.states))]
    Lam = cumulative_integral(lam, marks)
    d = np.array([space.distance(a, b) for a, b in zip(trajA.states, trajB.states)])[: marks.size]
    bound = np.exp(-Lam) * d[0] * (1.0 + slack)
    gap = d - bound
    k = int(np.argmax(gap))
    report = DiagnosticsReport("contraction")
    report.series.update({"t": marks, "distance": d, "bound": bound})
    report.metrics.update({"d0": float(d[0]), "max_ratio": float(np.max(d / np.where(bound > 0, bound, 1.0))
                                                               if d[0] > 0 else 0.0)})
    report.add(Verdict("contraction", bool(np.all(d <= bound)), float(d[k]), float(bound[k]), "<=", slack,
                       {"t": float(marks[k]), "step": k}))
    return report


def _time_derivatives(traj: Trajectory) -> np.ndarray:
    F = traj.functional
    if not F.has_time_derivative:
        raise UnsupportedDiagnostic(f"{F.name} does not provide a time derivative")
    return np.array([F.time_derivative(float(t), u) for t, u in zip(traj.marks, traj.states)])


def energy_identity_terms(traj: Trajectory) -> dict:
    """Terms of ``E(T) - E(0) - int dE/dt + 1/2 int |u'|^2 + 1/2 int |dE|^2``.

    ``|u'|`` and the slope are both taken as ``d(U^{n-1}, U^n) / tau_n`` on
    each cell; the time derivative uses the trapezoid rule on the marks.
    """
    if not traj.complete:
        raise PreconditionError("energy identity needs a complete trajectory")
    E = traj.energies()
    dt = _time_derivatives(traj)
    steps = traj.partition.steps
    dist = np.array([r.distance for r in traj.records])
    speed2 = float(np.sum(dist * dist / steps))
    int_dt = float(np.sum(0.5 * (dt[1:] + dt[:-1]) * steps))
    return {
        "energy_change": float(E[-1] - E[0]),
        "int_time_derivative": int_dt,
        "half_int_speed2": 0.5 * speed2,
        "half_int_slope2": 0.5 * speed2,
    }


def energy_identity_residual(traj: Trajectory) -> float:
    t = energy_identity_terms(traj)
    return abs(t["energy_change"] - t["int_time_derivative"] + t["half_int_speed2"] + t["half_int_slope2"])


def energy_identity_report(traj: Trajectory, slack: float = 5e-3) -> DiagnosticsReport:
    report = DiagnosticsReport("energy_identity")
    report.metrics.update(energy_identity_terms(traj))
    r = energy_identity_residual(traj)
    report.metrics["residual"] = r
    report.add(Verdict("energy_identity", r <= slack, r, slack, "<=", slack))
    return report


def evi_residual(traj: Trajectory, testV, lam: Callable[[float], float] | None = None,
                 slack: float = 5e-3) -> DiagnosticsReport:
    """Integrated variational inequality between marks.

    ``r(s, t) = d^2(t)/2 - d^2(s)/2 + int_s^t [lam d^2/2 + E(r, u)] - int_s^t E(r, V)``
    with trapezoid quadrature on the marks. The series holds consecutive
    pairs; the verdict uses the maximum over all pairs ``s < t``.
    """
    F = traj.functional
    lam = F.lam if lam is None else lam
    eV = F.energy
    n = len(traj.states)
    marks = traj.marks[:n]
    d2 = np.array([F.space.distance(u, testV) ** 2 for u in traj.states])
    Eu = traj.energies()[:n]
    EV = np.array([finite_or_raise(eV(float(t), testV), "energy of the test point") for t in marks])
    lv = np.array([lam(float(t)) for t in marks])
    f = 0.5 * lv * d2 + Eu - EV
    I = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(marks))])
    A = 0.5 * d2 + I
    consecutive = np.diff(A)
    run_min = np.minimum.accumulate(A)
    worst = float(np.max(A[1:] - run_min[:-1])) if n > 1 else 0.0
    k = int(np.argmax(A[1:] - run_min[:-1])) + 1 if n > 1 else 0
    report = DiagnosticsReport("evi")
    report.series.update({"t": marks[1:], "residual": consecutive})
    report.metrics["max_residual"] = worst
    report.add(Verdict("evi", worst <= slack, worst, slack, "<=", slack, {"t": float(marks[k])}))
    return report


def discrete_evi_residuals(traj: Trajectory, testV) -> np.ndarray:
    """Per-step form ``(d^2(U^n,V) - d^2(U^{n-1},V)) / (2 tau) + lam(t^n) d^2(U^n,V) / 2
    - E(t^n, V) + E(t^n, U^n) + d^2(U^n, U^{n-1}) / (2 tau)``; nonpositive up to solver tolerance."""
    F = traj.functional
    out = []
    for n, r in enumerate(traj.records, start=1):
        t = float(traj.marks[n])
        tau = float(traj.marks[n] - traj.marks[n - 1])
        dn = F.space.distance(traj.states[n], testV) ** 2
        dp = F.space.distance(traj.states[n - 1], testV) ** 2
        ev = finite_or_raise(F.energy(t, testV), "energy of the test point")
        out.append((dn - dp) / (2 * tau) + 0.5 * F.lam(t) * dn - ev + r.energy + r.distance ** 2 / (2 * tau))
    return np.array(out)


@dataclass(frozen=True)
class SlopeEstimate:
    ladder: tuple
    values: tuple
    estimate: float
    sup_estimate: float


def _perturb(F: TimeFunctional, u, eps: float, rng: np.random.Generator):
    x = np.array(F.space.coords(u), dtype=float)
    scale = eps * max(1.0, float(np.max(np.abs(x))))
    y = x + scale * rng.standard_normal(x.size)
    return F.space.point(F.space.project(y))


def local_slope_estimate(t: float, u, F: TimeFunctional, ladder: Sequence[float], samples: int = 64,
                         rng: np.random.Generator | None = None) -> SlopeEstimate:
    """Slope of ``E(t, .)`` at u: ``d(u, u_tau) / tau`` along a decreasing ladder, and the sampled
    sup of ``((E(u) - E(v)) / d(u, v) + lam(t) d(u, v) / 2)^+``."""
    taus = [float(x) for x in ladder]
    if not taus or any(b >= a for a, b in zip(taus[:-1], taus[1:])) or taus[-1] <= 0:
        raise PreconditionError("ladder must be strictly decreasing and positive")
    rng = np.random.default_rng(0) if rng is None else rng
    eu = finite_or_raise(F.energy(t, u))
    lam = F.lam(t)
    vals, cands = [], []
    for tau in taus:
        res = prox(_Frozen(F, t), t, tau, u)
        vals.append(res.distance_moved / tau)
        cands.append(res.minimizer)
    for k in range(samples):
        cands.append(_perturb(F, u, 10.0 ** rng.uniform(-6, -3), rng))
    best = 0.0
    for v in cands:
        d = F.space.distance(u, v)
        ev = F.energy(t, v)
        if d == 0 or ev is PLUS_INF:
            continue
        best = max(best, (eu - float(ev)) / d + 0.5 * lam * d)
    return SlopeEstimate(tuple(taus), tuple(vals), vals[-1], best)


class _Frozen(TimeFunctional):
    """``E(t0, .)`` viewed as a time-independent functional."""

    def __init__(self, F: TimeFunctional, t0: float):
        self.F, self.t0 = F, t0
        self.space = F.space
        self.name = f"{F.name}@{t0:g}"

    def energy(self, t, u):
        return self.F.energy(self.t0, u)

    def gradient(self, t, u):
        return self.F.gradient(self.t0, u)

    def time_derivative(self, t, u):
        return 0.0

    def lam(self, t):
        return self.F.lam(self.t0)

    def beta(self, t):
        return 0.0

    def reference_point(self):
        return self.F.reference_point()

    def prox(self, t, tau, base, initial=None):
        return self.F.prox(self.t0, tau, base, initial=initial)


def fitted_order(taus: Sequence[float], errors: Sequence[float]) -> float | None:
    taus, errors = np.asarray(taus, dtype=float), np.asarray(errors, dtype=float)
    if taus.size < 2 or np.any(errors <= 0):
        return None
    return float(np.polyfit(np.log(taus), np.log(errors), 1)[0])


def convergence_study(F: TimeFunctional, u0, taus: Sequence[float], oracle: Callable | str, T: float,
                      min_order: float | None = None, threads: int = 1) -> DiagnosticsReport:
    """Sup over marks of the distance to a reference, per step size, and the fitted log-log order.

    ``oracle`` maps a time to a point, or is ``"self"`` to compare against a run at ``min(taus) / 8``.
    """
    taus = [float(x) for x in taus]
    if any(b >= a for a, b in zip(taus[:-1], taus[1:])):
        raise PreconditionError("step ladder must be strictly decreasing")

    def run(tau):
        return run_minimizing_movement(F, build_partition(T, tau=tau), u0)

    ref = None
    if oracle == "self":
        ref = run(taus[-1] / 8.0)

    def error(traj):
        errs = []
        for t, u in zip(traj.marks, traj.states):
            if ref is None:
                target = oracle(float(t))
            else:
                k = int(round(float(t) / float(ref.partition.steps[0])))
                target = ref.states[min(k, len(ref.states) - 1)]
            errs.append(F.space.distance(u, target))
        return float(max(errs))

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        errors = list(pool.map(lambda tau: error(run(tau)), taus))
    order = fitted_order(taus, errors)
    report = DiagnosticsReport("convergence_study")
    report.series.update({"tau": taus, "sup_error": errors})
    report.metrics["order"] = order
    if min_order is not None and order is not None:
        report.add(Verdict("order", order >= min_order, order, min_order, ">=", None))
    if oracle == "self":
        report.add(Verdict("monotone_decay", bool(np.all(np.diff(errors) < 0)), None, None, "<", None,
                           {"errors": errors}))
    return report


def de_giorgi_ratios(traj: Trajectory, beta: float, per_cell: int = 3) -> np.ndarray:
    """``d^2(lower(t), Ugiorgi(t)) / (|tau| (1 + (t - t^{n-1}) beta))`` at interior points of each cell."""
    F = traj.functional
    mesh = traj.partition.mesh
    out = []
    for n in range(1, len(traj.states)):
        t0, t1 = float(traj.marks[n - 1]), float(traj.marks[n])
        for j in range(1, per_cell + 1):
            t = t0 + (t1 - t0) * j / per_cell
            u = de_giorgi(traj, t)
            d2 = F.space.distance(traj.states[n - 1], u) ** 2
            out.append(d2 / (mesh * (1.0 + (t - t0) * beta)))
    return np.array(out)
