"""The implicit variational scheme and the interpolants built from it."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import PreconditionError, ProxConvergenceError, SchemeError, TDFlowError
from .metric_core import (
    PLUS_INF,
    ProxResult,
    TimeFunctional,
    discrete_gronwall_bound,
    finite_or_raise,
    integrate,
    moreau_yosida_value,
    prox,
    tau_star,
)
from .report import DiagnosticsReport, Verdict


# times this close to a mark (relative to T) are read as the mark itself
MARK_ATOL = 1e-12


@dataclass(frozen=True)
class Partition:
    marks: np.ndarray

    def __post_init__(self):
        m = np.array(self.marks, dtype=float).reshape(-1)
        if m.size < 2:
            raise PreconditionError("a partition needs at least two marks")
        if m[0] != 0.0:
            raise PreconditionError("partitions start at t = 0")
        if not np.all(np.isfinite(m)) or np.any(np.diff(m) <= 0):
            raise PreconditionError("marks must be finite and strictly increasing")
        m.setflags(write=False)
        object.__setattr__(self, "marks", m)

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.marks)

    @property
    def mesh(self) -> float:
        return float(self.steps.max())

    @property
    def T(self) -> float:
        return float(self.marks[-1])

    def __len__(self):
        return self.marks.size - 1

    def snap(self, t: float) -> float:
        """Return the nearest mark when t is within roundoff of it, else t."""
        k = int(np.argmin(np.abs(self.marks - t)))
        return float(self.marks[k]) if abs(self.marks[k] - t) <= MARK_ATOL * max(1.0, self.T) else float(t)

    def cell(self, t: float) -> int:
        """Index n of the half-open cell ``(t^{n-1}, t^n]`` containing t (0 for t = 0)."""
        t = self.snap(t)
        if t < 0 or t > self.marks[-1]:
            raise PreconditionError(f"time {t:g} outside [0, {self.T:g}]")
        if t == 0:
            return 0
        return int(np.searchsorted(self.marks, t, side="left"))

    def __eq__(self, other):
        return isinstance(other, Partition) and np.array_equal(self.marks, other.marks)

    def __hash__(self):
        return hash(self.marks.tobytes())


def build_partition(T: float, tau: float | None = None, marks=None, random_bound: float | None = None,
                    rng: np.random.Generator | None = None, tau_star_value: float | None = None) -> Partition:
    """Uniform step, explicit marks, or random steps drawn from ``[bound/2, bound]``."""
    if not T > 0:
        raise PreconditionError("T must be positive")
    given = sum(x is not None for x in (tau, marks, random_bound))
    if given != 1:
        raise PreconditionError("give exactly one of tau, marks, random_bound")
    if tau is not None:
        if not tau > 0:
            raise PreconditionError("step must be positive")
        n = max(1, int(math.ceil(T / tau - 1e-9)))
        P = Partition(tau * np.arange(n + 1))
    elif marks is not None:
        P = Partition(marks)
        if P.T < T * (1 - 1e-12):
            raise PreconditionError("marks do not cover [0, T]")
    else:
        if not random_bound > 0:
            raise PreconditionError("random mesh bound must be positive")
        rng = np.random.default_rng(0) if rng is None else rng
        pts = [0.0]
        while pts[-1] < T * (1 - 1e-12):
            pts.append(pts[-1] + rng.uniform(0.5 * random_bound, random_bound))
        P = Partition(pts)
    if tau_star_value is not None and not P.mesh < tau_star_value:
        raise PreconditionError(f"mesh {P.mesh:g} must be below tau* = {tau_star_value:g}")
    return P


@dataclass(frozen=True)
class StepRecord:
    distance: float
    energy: float
    energy_before: float
    iterations: int
    converged: bool
    residual: float


@dataclass
class Trajectory:
    partition: Partition
    states: list
    records: list[StepRecord]
    functional: TimeFunctional
    meta: dict = field(default_factory=dict)

    @property
    def marks(self) -> np.ndarray:
        return self.partition.marks

    @property
    def complete(self) -> bool:
        return len(self.states) == len(self.partition) + 1

    def energies(self) -> np.ndarray:
        """``E(t^n, U^n)`` for every stored state."""
        e0 = finite_or_raise(self.functional.energy(0.0, self.states[0]))
        return np.array([e0] + [r.energy for r in self.records])

    def lower(self, t: float):
        n = self.partition.cell(t)
        return self.states[max(n - 1, 0)]

    def upper(self, t: float):
        return self.states[self.partition.cell(t)]

    def dissipation_ledger(self) -> tuple[float, float]:
        """``sum d^2 / (2 tau_j)`` and ``sum (E(t^j, U^{j-1}) - E(t^j, U^j))``."""
        taus = self.partition.steps[: len(self.records)]
        diss = sum(r.distance ** 2 / (2 * h) for r, h in zip(self.records, taus))
        drop = sum(r.energy_before - r.energy for r in self.records)
        return float(diss), float(drop)


def run_minimizing_movement(F: TimeFunctional, P: Partition, u0) -> Trajectory:
    """``U^n = argmin E(t^n, .) + d^2(U^{n-1}, .) / (2 tau_n)`` along the partition."""
    F.space.validate(u0)
    e0 = F.energy(0.0, u0)
    if e0 is PLUS_INF:
        raise PreconditionError("initial datum has infinite energy")
    traj = Trajectory(P, [u0], [], F)
    marks = P.marks
    prev = u0
    for n in range(1, marks.size):
        t, tau = float(marks[n]), float(marks[n] - marks[n - 1])
        try:
            res = prox(F, t, tau, prev)
        except (ProxConvergenceError, TDFlowError) as exc:
            raise SchemeError(f"step {n} at t={t:g} failed: {exc}", partial=traj, step=n) from exc
        before = finite_or_raise(F.energy(t, prev), "energy before step")
        traj.states.append(res.minimizer)
        traj.records.append(StepRecord(res.distance_moved, res.energy, before, res.iterations,
                                       res.converged, res.residual))
        prev = res.minimizer
    return traj


@dataclass(frozen=True)
class InterpolantBundle:
    T_tau: float
    lam_tilde: float
    l_tau: float
    d2_tau: float | None
    energy_tau: float
    lower: Any
    upper: Any


def _cell_data(traj: Trajectory, t: float):
    P = traj.partition
    t = P.snap(t)
    if not traj.complete and t > P.marks[len(traj.states) - 1]:
        raise PreconditionError("time beyond the computed part of the trajectory")
    n = P.cell(t)
    if n == 0:
        return 0, 0.0, 1.0, 0.0
    t0, t1 = float(P.marks[n - 1]), float(P.marks[n])
    tau = t1 - t0
    l = 1.0 if t == t1 else (t - t0) / tau
    return n, tau, l, t1


def interpolants(traj: Trajectory, t: float, V=None) -> InterpolantBundle:
    """Right-mark time, lambda, linear weight, interpolated distance and energy, and both states."""
    n, tau, l, _ = _cell_data(traj, t)
    F = traj.functional
    P = traj.partition
    if n == 0:
        u = traj.states[0]
        d2 = F.space.distance(u, V) ** 2 if V is not None else None
        return InterpolantBundle(0.0, F.lam(0.0), 1.0, d2, finite_or_raise(F.energy(0.0, u)), u, u)
    lo, up = traj.states[n - 1], traj.states[n]
    t1 = float(P.marks[n])
    d2 = None
    if V is not None:
        d2 = (1 - l) * F.space.distance(lo, V) ** 2 + l * F.space.distance(up, V) ** 2
    e_lo = traj.records[n - 2].energy if n >= 2 else finite_or_raise(F.energy(0.0, lo))
    e_up = traj.records[n - 1].energy
    e = (1 - l) * e_lo + l * e_up
    return InterpolantBundle(t1, F.lam(t1), l, d2, e, lo, up)


def de_giorgi(traj: Trajectory, t: float):
    """Minimizer of ``E(t^{n-1} + delta, .) + d^2(U^{n-1}, .) / (2 delta)``, delta = t - t^{n-1}."""
    t = traj.partition.snap(t)
    n, tau, l, t1 = _cell_data(traj, t)
    if n == 0:
        raise PreconditionError("De Giorgi interpolation needs t inside a cell")
    if t == t1:
        return traj.states[n]
    t0 = float(traj.partition.marks[n - 1])
    delta = t - t0
    return prox(traj.functional, t0 + delta, delta, traj.states[n - 1]).minimizer


def residual_R_D(traj: Trajectory, t: float) -> tuple[float, float]:
    n, tau, l, t1 = _cell_data(traj, t)
    if n == 0:
        return 0.0, 0.0
    rec = traj.records[n - 1]
    R = 2.0 * ((1 - l) * (rec.energy_before - rec.energy) - rec.distance ** 2 / (2 * tau))
    D = (1 - l) * rec.distance
    return R, D


def residual_G(traj_tau: Trajectory, traj_eta: Trajectory, t: float) -> float:
    """``2(1-l)[E(T_eta, lower) - E(T_tau, lower)] + 2 l [E(T_eta, upper) - E(T_tau, upper)]``."""
    if traj_tau.functional is not traj_eta.functional:
        raise PreconditionError("residual_G needs trajectories of the same functional")
    F = traj_tau.functional
    n, _, l, T_tau = _cell_data(traj_tau, t)
    m, _, _, T_eta = _cell_data(traj_eta, t)
    if T_tau == T_eta:
        return 0.0
    lo, up = traj_tau.lower(t), traj_tau.upper(t)
    out = 0.0
    if l < 1:
        out += 2 * (1 - l) * (finite_or_raise(F.energy(T_eta, lo)) - finite_or_raise(F.energy(T_tau, lo)))
    out += 2 * l * (finite_or_raise(F.energy(T_eta, up)) - finite_or_raise(F.energy(T_tau, up)))
    return out


def integrated_G_plus(traj_tau: Trajectory, traj_eta: Trajectory, T: float | None = None,
                      symmetric: bool = False) -> float:
    """Midpoint rule on the union of both partitions' marks for ``int_0^T G^+``.

    With ``symmetric`` the integrand is ``G_{tau,eta}^+ + G_{eta,tau}^+``.
    """
    T = min(traj_tau.partition.T, traj_eta.partition.T) if T is None else T
    pts = np.union1d(traj_tau.marks, traj_eta.marks)
    pts = np.union1d(pts[pts < T], [T])
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        mid = 0.5 * (a + b)
        g = max(residual_G(traj_tau, traj_eta, mid), 0.0)
        if symmetric:
            g += max(residual_G(traj_eta, traj_tau, mid), 0.0)
        total += g * (b - a)
    return total


def discrete_metric_derivative(traj: Trajectory, t: float) -> float:
    n, tau, _, _ = _cell_data(traj, t)
    if n == 0:
        n, tau = 1, float(traj.partition.steps[0])
    return traj.records[n - 1].distance / tau


def apriori_check(traj: Trajectory, S: float, u_star=None, samples: int = 33) -> DiagnosticsReport:
    """Compare ``sup_n d^2(u*, U^n)`` and the dissipation sum with the bounds
    assembled from the a-priori estimate chain (discrete Gronwall with alpha = 4)."""
    F = traj.functional
    u_star = F.reference_point() if u_star is None else u_star
    P = traj.partition
    T = P.marks[len(traj.states) - 1]
    ts = tau_star(F, T)
    report = DiagnosticsReport("apriori")
    e0 = finite_or_raise(F.energy(0.0, traj.states[0]))
    d0 = F.space.distance(u_star, traj.states[0]) ** 2
    report.add(Verdict("initial_energy_below_S", e0 <= S, e0, S, "<="))
    report.add(Verdict("initial_distance_below_S", d0 <= S, d0, S, "<="))

    grid = np.linspace(0.0, T + ts, samples)
    inf_my = min(moreau_yosida_value(F, float(s), ts, u_star) for s in grid)
    int_b_ts = integrate(F.beta, 0.0, ts)
    int_b_all = integrate(F.beta, 0.0, T + ts)
    A = 2 * ts * (S - inf_my) + 2 * (1 + ts * int_b_ts) * S + 2 * ts * int_b_all
    A = max(A, 0.0)
    steps = P.steps[: len(traj.records)]
    # the beta integral is taken over both neighbouring cells, which covers
    # either indexing of the re-summed time-regularity term; past the last
    # mark the partition is continued with the last step
    ends = np.append(P.marks[: len(steps) + 1], P.marks[len(steps)] + steps[-1])
    betas = [0.0] + [float(steps[j - 1] / ts + 0.5 * ts * integrate(F.beta, ends[j - 1], ends[j + 1]))
                     for j in range(1, len(steps) + 1)]
    d2 = np.array([F.space.distance(u_star, u) ** 2 for u in traj.states])
    sup_d2 = float(d2.max())
    diss, drop = traj.dissipation_ledger()
    try:
        C1 = discrete_gronwall_bound(A, 4.0, betas, len(betas) - 1)
        gron_ok = True
    except TDFlowError:
        C1, gron_ok = math.inf, False
    report.add(Verdict("gronwall_hypothesis", gron_ok, 4.0 * max(betas), 1.0, "<"))
    int_b_T = integrate(F.beta, 0.0, T)
    C2 = S - inf_my + C1 / (2 * ts) + int_b_T * (1 + C1)
    report.add(Verdict("distance_bound", sup_d2 <= C1, sup_d2, C1, "<="))
    report.add(Verdict("dissipation_ledger", diss <= drop + 1e-9 * (1 + abs(drop)), diss, drop, "<="))
    report.add(Verdict("dissipation_bound", diss <= C2, diss, C2, "<="))
    report.metrics.update({"sup_d2": sup_d2, "dissipation": diss, "energy_drop": drop, "C_distance": C1,
                           "C_dissipation": C2, "tau_star": ts, "inf_moreau_yosida": inf_my, "A": A})
    return report
