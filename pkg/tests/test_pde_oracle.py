import csv
import math

import numpy as np
import pytest

from tdflow import pde_oracle as po
from tdflow import wasserstein1d as w1
from tdflow.errors import IntegrityError, NumericError, PreconditionError
from tdflow.grid import GridDensity

A, MEAN, KAPPA = "1 + t/2", "sin(t)", "1/(1 + t)"


def ou_drift(t, x):
    return (1 + t / 2) * (x - math.sin(t))


# ------------------------------------------------------- Gaussian moments


def test_pure_heat_gaussian():
    g = po.ou_gaussian_solution(0.0, 0.0, 1.0, po.GaussianState(0.0, 1.0), 0.5)
    assert g.mean == pytest.approx(0.0, abs=1e-12) and g.var == pytest.approx(2.0, rel=1e-10)


def test_deterministic_contraction_closed_form():
    ts = np.linspace(0, 2, 9)
    out = po.ou_gaussian_series(1.0, 0.0, 0.0, po.GaussianState(1.0, 1.0), ts)
    np.testing.assert_allclose([g.mean for g in out], np.exp(-ts), rtol=1e-9)
    np.testing.assert_allclose([g.var for g in out], np.exp(-2 * ts), rtol=1e-9)


def test_relaxation_to_unit_variance():
    ts = np.linspace(0, 3, 7)
    out = po.ou_gaussian_series(1.0, 0.0, 1.0, po.GaussianState(0.0, 2.0), ts)
    np.testing.assert_allclose([g.var for g in out], 1 + np.exp(-2 * ts), rtol=1e-9)


def test_variance_collapse_is_numeric_error():
    with pytest.raises(NumericError):
        po.ou_gaussian_solution(0.0, 0.0, -1.0, po.GaussianState(0.0, 1.0), 1.0)


def test_gaussian_state_validation():
    with pytest.raises(PreconditionError):
        po.GaussianState(0.0, 0.0)


def test_mean_separation_contracts_exactly():
    ts = np.linspace(0, 2, 5)
    a = po.ou_gaussian_series(A, MEAN, KAPPA, po.GaussianState(-1.0, 0.5), ts)
    b = po.ou_gaussian_series(A, MEAN, KAPPA, po.GaussianState(2.0, 3.0), ts)
    sep = np.abs([x.mean - y.mean for x, y in zip(a, b)])
    np.testing.assert_allclose(sep, 3.0 * np.exp(-(ts + ts ** 2 / 4)), rtol=1e-9)


def test_gaussian_series_csv(tmp_path):
    ts = [0.0, 0.5, 1.0]
    po.write_gaussian_series(tmp_path / "g.csv", ts, po.ou_gaussian_series(1, 0, 1, po.GaussianState(0, 2), ts))
    rows = list(csv.reader((tmp_path / "g.csv").open()))
    assert rows[0] == ["t", "mean", "var"] and len(rows) == 4


# ------------------------------------------------------ finite volumes


def test_heat_variance_growth():
    run = po.fokker_planck_fd(lambda t, x: 0 * x, 1.0, GridDensity.gaussian(0, 1, -12, 12, 1024), 0.5,
                              times=[0.25, 0.5])
    for t, f in zip(run.times, run.frames):
        assert f.moments()[1] == pytest.approx(1 + 2 * t, rel=1e-2)


def test_converges_to_gibbs_state():
    run = po.fokker_planck_fd(lambda t, x: x, 1.0, GridDensity.gaussian(2, 0.5, -10, 10, 512), 10.0, dt=1e-2)
    assert po.w2_between_densities(run.final, GridDensity.gaussian(0, 1, -10, 10, 512)) <= 1e-2


def test_matches_gaussian_oracle_time_dependent():
    run = po.fokker_planck_fd(ou_drift, KAPPA, GridDensity.gaussian(0.5, 0.8, -10, 10, 1024), 1.0,
                              times=[0.5, 1.0])
    for t in (0.5, 1.0):
        g = po.ou_gaussian_solution(A, MEAN, KAPPA, po.GaussianState(0.5, 0.8), t)
        assert w1.w2_distance(w1.from_density(run.at(t), 2048), g.quantiles(2048)) <= 5e-3
    assert run.clipped == 0 and run.max_mass_drift <= 1e-8


def test_linear_pressure_reduces_to_fokker_planck():
    r0 = GridDensity.gaussian(0.5, 0.8, -10, 10, 512)
    a = po.fokker_planck_fd(lambda t, x: x, 1.0, r0, 0.5)
    b = po.general_diffusion_fd(lambda t, r: r, r0, 0.5, dV=lambda t, x: x)
    assert np.max(np.abs(a.final.rho - b.final.rho)) <= 1e-6


def test_porous_medium_spreading():
    t0 = 0.05
    rho, _ = po.barenblatt(0.0, t0=t0)
    times = [0.1, 0.2, 0.4, 0.8]
    run = po.general_diffusion_fd(lambda t, r: r ** 2, GridDensity.from_function(rho, -4, 4, 1024), 0.8,
                                  times=times)
    radii = []
    for f in run.frames:
        support = f.centers[f.rho > 1e-10]
        radii.append(0.5 * (support.max() - support.min()))
    assert all(b > a for a, b in zip(radii[:-1], radii[1:]))
    exponent = np.polyfit(np.log(np.array(times) + t0), np.log(radii), 1)[0]
    assert exponent == pytest.approx(1 / 3, rel=0.1)
    assert run.max_mass_drift <= 1e-8
    assert all(abs(f.mass - 1) <= 1e-8 for f in run.frames)


def test_barenblatt_profile_mass():
    rho, R = po.barenblatt(0.3, t0=0.1)
    x = np.linspace(-R, R, 20001)
    assert np.trapezoid(rho(x), x) == pytest.approx(1.0, rel=1e-6)
    assert rho(np.array([R * 1.01]))[0] == 0.0


def test_quadratic_interaction_moments():
    run = po.general_diffusion_fd(lambda t, r: 0 * r, GridDensity.gaussian(1, 1, -8, 10, 512), 1.0,
                                  dW=lambda t, r: r, times=[0.5, 1.0])
    for t, f in zip(run.times, run.frames):
        mean, var = f.moments()
        assert mean == pytest.approx(1.0, abs=1e-8)
        assert var == pytest.approx(math.exp(-2 * t), rel=2e-2)


def test_grid_refinement_order():
    def final(M):
        return po.fokker_planck_fd(ou_drift, KAPPA, GridDensity.gaussian(0.5, 0.8, -8, 8, M), 0.5).final

    ref = final(4096)
    Ms = (128, 256, 512)
    errs = [po.w2_between_densities(final(M), ref, 4096) for M in Ms]
    order = np.polyfit(np.log([16 / M for M in Ms]), np.log(errs), 1)[0]
    assert order >= 1.0


def test_mass_drift_is_integrity_error(monkeypatch):
    monkeypatch.setattr(po, "MASS_DRIFT_TOL", -1.0)
    with pytest.raises(IntegrityError):
        po.fokker_planck_fd(lambda t, x: x, 1.0, GridDensity.gaussian(0, 1, -8, 8, 64), 0.01)


def test_frames_csv(tmp_path):
    run = po.fokker_planck_fd(lambda t, x: x, 1.0, GridDensity.gaussian(0, 1, -8, 8, 32), 0.1, times=[0.0, 0.1])
    run.to_csv(tmp_path / "f.csv")
    rows = list(csv.reader((tmp_path / "f.csv").open()))
    assert rows[0] == ["t", "x", "rho"] and len(rows) == 1 + 2 * 32


def test_bad_horizon():
    with pytest.raises(PreconditionError):
        po.fokker_planck_fd(lambda t, x: x, 1.0, GridDensity.gaussian(0, 1, -8, 8, 32), 0.0)
