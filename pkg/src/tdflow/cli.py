"""Command-line front end: ``tdflow {solve,validate,compare,study,oracle} --config run.json``.

Exit codes: 0 success, 2 invalid configuration, 3 solver failure, 4 a
diagnostic verdict failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import analysis, euclidean, pde_oracle, scheme, wasserstein1d
from .catalog import build_functional
from .errors import (
    IntegrityError,
    NumericError,
    PreconditionError,
    ProxConvergenceError,
    SchemeError,
    StiffInstanceError,
    TDFlowError,
)
from .io import save_trajectory
from .metric_core import finite_or_raise, tau_star
from .profiles import TimeProfile
from .report import DiagnosticsReport, Verdict

log = logging.getLogger("tdflow")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_VERDICT = 0, 2, 3, 4
SOLVER_ERRORS = (SchemeError, ProxConvergenceError, StiffInstanceError, IntegrityError, NumericError)


class ConfigError(Exception):
    pass


def load_schema(name: str) -> dict:
    return json.loads(resources.files("tdflow").joinpath("schemas", name).read_text())


def _path(err: jsonschema.ValidationError) -> str:
    parts = [str(p) for p in err.absolute_path]
    return ".".join(parts) if parts else "<root>"


def validate_config(cfg: dict) -> None:
    validator = jsonschema.Draft202012Validator(load_schema("config.schema.json"))
    errors = sorted(validator.iter_errors(cfg), key=lambda e: (len(list(e.absolute_path)), _path(e)))
    if errors:
        # prefer the deepest error: it names the offending field
        err = max(errors, key=lambda e: len(list(e.absolute_path)))
        raise ConfigError(f"config field '{_path(err)}': {err.message}")


def write_json(path: Path, payload: dict, schema: str) -> None:
    jsonschema.validate(payload, load_schema(schema))
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


# ------------------------------------------------------------ config pieces


def _resolution(cfg) -> int:
    default = 512 if cfg["space"] == "wasserstein1d" else 1
    return int(cfg.get("resolution", default))


def _functional(cfg):
    try:
        horizon = max(10.0, float(cfg.get("T", 1.0)) + 2.0)
        return build_functional(cfg["space"], cfg["functional"], _resolution(cfg), horizon)
    except (PreconditionError, ValueError) as exc:
        raise ConfigError(f"config field 'functional': {exc}") from exc


def _initial(cfg, key="initial"):
    entry = cfg.get(key)
    if entry is None:
        raise ConfigError(f"config field '{key}': required for this subcommand")
    n = _resolution(cfg)
    if cfg["space"] == "wasserstein1d":
        if entry["kind"] == "gaussian":
            return wasserstein1d.QuantileMeasure.gaussian(entry.get("mean", 0.0), entry["var"], n)
        if entry["kind"] == "uniform":
            if not entry["b"] > entry["a"]:
                raise ConfigError(f"config field '{key}.b': must exceed a")
            return wasserstein1d.QuantileMeasure.uniform(entry["a"], entry["b"], n)
        raise ConfigError(f"config field '{key}.kind': not available on wasserstein1d")
    if entry["kind"] != "point":
        raise ConfigError(f"config field '{key}.kind': euclidean runs need a point")
    if len(entry["value"]) != n:
        raise ConfigError(f"config field '{key}.value': expected {n} coordinates")
    return np.array(entry["value"], dtype=float)


def _T(cfg) -> float:
    if "T" not in cfg:
        raise ConfigError("config field 'T': required for this subcommand")
    return float(cfg["T"])


def _partition(cfg, F, rng):
    entry = cfg.get("partition")
    if entry is None:
        raise ConfigError("config field 'partition': required for this subcommand")
    T = _T(cfg)
    ts = tau_star(F, T)
    try:
        return scheme.build_partition(T, tau=entry.get("tau"), marks=entry.get("marks"),
                                      random_bound=entry.get("random_bound"), rng=rng, tau_star_value=ts)
    except PreconditionError as exc:
        raise ConfigError(f"config field 'partition': {exc}") from exc


def _lambda(cfg, F):
    if "lambda" in cfg:
        try:
            return TimeProfile.parse(cfg["lambda"])
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"config field 'lambda': {exc}") from exc
    return F.lam


# ------------------------------------------------------------ subcommands


def _run_diagnostic(entry, traj, F):
    name = entry["name"]
    if name == "energy_identity":
        return analysis.energy_identity_report(traj, entry.get("slack", 5e-3))
    if name == "apriori":
        S = entry.get("S")
        if S is None:
            e0 = finite_or_raise(F.energy(0.0, traj.states[0]))
            d0 = F.space.distance(F.reference_point(), traj.states[0]) ** 2
            S = max(e0, d0, 1.0)
        return scheme.apriori_check(traj, S)
    if name == "evi":
        return analysis.evi_residual(traj, F.reference_point() if cfg_space(F) == "euclidean"
                                     else traj.states[0], slack=entry.get("slack", 5e-3))
    if name == "dissipation":
        diss, drop = traj.dissipation_ledger()
        rep = DiagnosticsReport("dissipation")
        rep.add(Verdict("dissipation_ledger", diss <= drop + 1e-9 * (1 + abs(drop)), diss, drop, "<="))
        return rep
    raise ConfigError(f"config field 'diagnostics': unknown diagnostic {name!r}")


def cfg_space(F) -> str:
    return "euclidean" if isinstance(F, euclidean.EuclideanFunctional) else "wasserstein1d"


def _merge(name, reports) -> DiagnosticsReport:
    out = DiagnosticsReport(name)
    for r in reports:
        for k, v in r.metrics.items():
            out.metrics[f"{r.name}.{k}"] = v
        for k, v in r.series.items():
            out.series[f"{r.name}.{k}"] = v
        for v in r.verdicts:
            v2 = Verdict(f"{r.name}.{v.name}" if not v.name.startswith(r.name) else v.name, v.passed, v.lhs,
                         v.rhs, v.relation, v.tolerance, v.witness)
            out.verdicts.append(v2)
    return out


def cmd_solve(cfg, out: Path, rng, threads: int) -> int:
    F = _functional(cfg)
    u0 = _initial(cfg)
    P = _partition(cfg, F, rng)
    traj = scheme.run_minimizing_movement(F, P, u0)
    save_trajectory(traj, out / "trajectory", functional_config=cfg["functional"])
    jsonschema.validate(json.loads((out / "trajectory" / "manifest.json").read_text()),
                        load_schema("manifest.schema.json"))
    specs = cfg.get("diagnostics", [])
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        reports = list(pool.map(lambda s: _run_diagnostic(s, traj, F), specs))
    report = _merge("solve", reports)
    E = traj.energies()
    report.metrics.update({"steps": len(traj.records), "T": float(P.T), "energy_initial": float(E[0]),
                           "energy_final": float(E[-1]), "mesh": P.mesh})
    write_json(out / "report.json", report.to_dict(), "report.schema.json")
    status = "PASS" if report.passed else "FAIL"
    print(f"solve: {len(traj.records)} steps to T={P.T:g}, energy {E[0]:.6g} -> {E[-1]:.6g}, "
          f"{len(report.verdicts)} verdicts {status}")
    return EXIT_OK if report.passed else EXIT_VERDICT


def cmd_validate(cfg, out: Path, rng, threads: int) -> int:
    F = _functional(cfg)
    times = cfg.get("sample_times", list(np.linspace(0.0, float(cfg.get("T", 2.0)), 9)))
    if isinstance(F, wasserstein1d.WassersteinFunctional):
        report = wasserstein1d.validate_hypotheses(F.terms, times, rng=rng)
    else:
        pts = rng.normal(size=(12, F.dim)) * 2.0
        report = euclidean.validate_euclidean(F, times, pts)
    write_json(out / "report.json", report.to_dict(), "report.schema.json")
    failed = [v.name for v in report.verdicts if not v.passed]
    print(f"validate: {len(report.verdicts)} checks, {len(failed)} failed"
          + (f" ({', '.join(failed)})" if failed else ""))
    return EXIT_OK if report.passed else EXIT_VERDICT


def cmd_compare(cfg, out: Path, rng, threads: int) -> int:
    F = _functional(cfg)
    a, b = _initial(cfg, "initial"), _initial(cfg, "initial_b")
    P = _partition(cfg, F, rng)
    with ThreadPoolExecutor(max_workers=max(1, min(2, threads))) as pool:
        ta, tb = pool.map(lambda u: scheme.run_minimizing_movement(F, P, u), [a, b])
    report = analysis.contraction_report(ta, tb, _lambda(cfg, F), cfg.get("slack", 1e-2))
    write_json(out / "report.json", report.to_dict(), "report.schema.json")
    report.series_to_csv(out / "contraction.csv")
    v = report.verdicts[0]
    print(f"compare: max ratio {report.metrics['max_ratio']:.6g}, contraction {'PASS' if v.passed else 'FAIL'}")
    return EXIT_OK if report.passed else EXIT_VERDICT


def _study_oracle(cfg, F, u0, T):
    if cfg.get("oracle", "auto") == "self":
        return "self"
    if isinstance(F, euclidean.EuclideanFunctional):
        ref = euclidean.ode_reference(F, u0, T)
        return lambda t: ref.at(t)
    fc = cfg["functional"]
    init = cfg["initial"]
    ou = set(fc) <= {"entropy", "potential"} and "potential" in fc and init["kind"] == "gaussian"
    if ou:
        pot = fc["potential"]
        a = pot.get("a", pot.get("c", 1.0))
        m = pot.get("m", 0.0) if pot["name"] == "ou" else 0.0
        kappa = fc.get("entropy", {}).get("kappa", 1.0) if "entropy" in fc else None
        if kappa is not None:
            g0 = pde_oracle.GaussianState(init.get("mean", 0.0), init["var"])
            N = F.N

            def oracle(t):
                return pde_oracle.ou_gaussian_solution(a, m, kappa, g0, t).quantiles(N) if t > 0 else u0

            return oracle
    return "self"


def cmd_study(cfg, out: Path, rng, threads: int) -> int:
    if "tau_ladder" not in cfg:
        raise ConfigError("config field 'tau_ladder': required for study")
    ladder = [float(x) for x in cfg["tau_ladder"]]
    if any(b >= a for a, b in zip(ladder[:-1], ladder[1:])):
        raise ConfigError("config field 'tau_ladder': must be strictly decreasing")
    F = _functional(cfg)
    u0 = _initial(cfg)
    T = _T(cfg)
    ts = tau_star(F, T)
    if ladder[0] >= ts:
        raise ConfigError(f"config field 'tau_ladder': step {ladder[0]:g} not below tau* = {ts:g}")
    oracle = _study_oracle(cfg, F, u0, T)
    report = analysis.convergence_study(F, u0, ladder, oracle, T, cfg.get("min_order"), threads)
    order = report.metrics["order"]
    with open(out / "study.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tau", "sup_error", "order"])
        for tau, err in zip(report.series["tau"], report.series["sup_error"]):
            w.writerow([repr(float(tau)), repr(float(err)), "" if order is None else repr(float(order))])
    write_json(out / "report.json", report.to_dict(), "report.schema.json")
    shown = "absent" if order is None else f"{order:.4g}"
    print(f"study: {len(ladder)} step sizes, fitted order {shown}, {'PASS' if report.passed else 'FAIL'}")
    return EXIT_OK if report.passed else EXIT_VERDICT


def cmd_oracle(cfg, out: Path, rng, threads: int) -> int:
    if "pde" not in cfg:
        raise ConfigError("config field 'pde': required for oracle")
    pde = cfg["pde"]
    fc = cfg["functional"]
    if cfg["space"] != "wasserstein1d":
        raise ConfigError("config field 'space': PDE oracles need wasserstein1d")
    init = cfg.get("initial", {"kind": "gaussian", "mean": 0.0, "var": 1.0})
    if init["kind"] != "gaussian":
        raise ConfigError("config field 'initial.kind': PDE oracles start from a Gaussian")
    T = _T(cfg)
    times = sorted(set(pde.get("times", [T])) | {T})
    pot = fc.get("potential")
    a = m = None
    if pot is not None:
        a = pot.get("a", pot.get("c", 1.0))
        m = pot.get("m", 0.0) if pot["name"] == "ou" else 0.0
    kappa = fc["entropy"].get("kappa", 1.0) if "entropy" in fc else None
    g0 = pde_oracle.GaussianState(init.get("mean", 0.0), init["var"])
    report = DiagnosticsReport("oracle")
    if pde["kind"] == "ou_gaussian":
        if set(fc) - {"entropy", "potential"}:
            raise ConfigError("config field 'functional': Gaussian oracle needs potential and entropy only")
        states = pde_oracle.ou_gaussian_series(a if a is not None else 0.0, m if m is not None else 0.0,
                                               kappa if kappa is not None else 0.0, g0, times)
        pde_oracle.write_gaussian_series(out / "gaussian.csv", times, states)
        report.series.update({"t": times, "mean": [s.mean for s in states], "var": [s.var for s in states]})
    else:
        sd = math.sqrt(g0.var)
        lo, hi = pde_oracle.suggest_domain(g0.mean, sd)
        x_min, x_max = pde.get("x_min", lo), pde.get("x_max", hi)
        if not x_max > x_min:
            raise ConfigError("config field 'pde.x_max': must exceed x_min")
        rho0 = pde_oracle.GridDensity.gaussian(g0.mean, g0.var, x_min, x_max, pde.get("M", 1024))
        terms = wasserstein1d.terms_from_config(fc)
        dV = terms.potential.dV if terms.potential is not None else None
        if pde["kind"] == "fokker_planck_fd":
            if set(fc) - {"entropy", "potential"}:
                raise ConfigError("config field 'functional': Fokker-Planck oracle needs potential and entropy")
            run = pde_oracle.fokker_planck_fd(dV if dV is not None else (lambda t, x: 0.0 * x),
                                              kappa if kappa is not None else 0.0, rho0, T, pde.get("dt"), times)
        else:
            internals = terms.internal_terms()

            def P(t, r):
                return sum(wasserstein1d.pressure(t, r, U) for U in internals) if internals else 0.0 * r

            dW = None
            if terms.interaction is not None:
                w = terms.interaction
                dW = lambda t, r: w.dW1(t, r, 0.0 * r)  # noqa: E731  kernel depends on x - y only
            run = pde_oracle.general_diffusion_fd(P, rho0, T, pde.get("dt"), dV=dV, dW=dW, times=times)
        run.to_csv(out / "frames.csv")
        report.metrics.update({"clipped": run.clipped, "max_mass_drift": run.max_mass_drift, "steps": run.steps,
                               "boundary_mass": run.meta.get("boundary_mass")})
        report.add(Verdict("negative_density_audit", run.clipped == 0, run.clipped, 0, "<="))
        report.add(Verdict("mass_conservation", run.max_mass_drift <= 1e-8, run.max_mass_drift, 1e-8, "<="))
    write_json(out / "report.json", report.to_dict(), "report.schema.json")
    print(f"oracle: {pde['kind']} to T={T:g}, {'PASS' if report.passed else 'FAIL'}")
    return EXIT_OK if report.passed else EXIT_VERDICT


COMMANDS = {"solve": cmd_solve, "validate": cmd_validate, "compare": cmd_compare, "study": cmd_study,
            "oracle": cmd_oracle}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tdflow", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="path to a JSON run configuration")
    p.add_argument("--out", default="tdflow-out", help="output directory")
    p.add_argument("--seed", type=int, default=None, help="seed for randomized parts (overrides config)")
    p.add_argument("--threads", type=int, default=1, help="cap on diagnostic parallelism")
    return p


def main(argv=None) -> int:
    level = os.environ.get("TDFLOW_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
        validate_config(cfg)
        if args.seed is not None and not 0 <= args.seed < 2 ** 64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        seed = args.seed if args.seed is not None else cfg.get("seed", 0)
        rng = np.random.default_rng(seed)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out, rng, max(1, args.threads))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SOLVER_ERRORS as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except PreconditionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TDFlowError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
