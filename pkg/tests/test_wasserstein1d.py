import itertools
import math

import numpy as np
import pytest
from scipy.stats import norm

from tdflow import wasserstein1d as w1
from tdflow.errors import HypothesisViolation, InvalidStateError, PreconditionError
from tdflow.grid import GridDensity
from tdflow.metric_core import PLUS_INF

Q = w1.QuantileMeasure


# ---------------------------------------------------------------- measures


def test_levels_are_cell_midpoints():
    np.testing.assert_allclose(w1.levels(4), [0.125, 0.375, 0.625, 0.875])


def test_quantile_measure_invariants():
    with pytest.raises(InvalidStateError):
        Q([0.0, 1.0, 0.5])
    with pytest.raises(InvalidStateError):
        Q([0.0, np.inf])
    mu = Q([0.0, 1.0, 2.0])
    with pytest.raises(ValueError):
        mu.q[0] = 5.0


def test_quantile_csv_round_trip(tmp_path):
    mu = Q.gaussian(0.3, 2.0, 33)
    mu.to_csv(tmp_path / "mu.csv")
    assert (tmp_path / "mu.csv").read_text().splitlines()[0] == "s,q"
    assert np.array_equal(Q.from_csv(tmp_path / "mu.csv").q, mu.q)


# ---------------------------------------------------------------- distance


def test_w2_identity_and_translation():
    mu = Q.uniform(0, 1, 100)
    assert w1.w2_distance(mu, mu) == 0.0
    assert w1.w2_distance(mu, Q.uniform(2, 3, 100)) == pytest.approx(2.0, rel=1e-14)


@pytest.mark.parametrize("m, s", [
    (0.5, 1.0),
    (0.0, 0.5),
    (-1.0, 1.5),
    pytest.param(-1.0, 2.0, marks=pytest.mark.xfail(
        strict=True, reason="midpoint quantiles lose 3.2e-4 of second moment at N=4096; times (s-1)^2 = 1")),
])
def test_w2_gaussian_formula(m, s):
    N = 4096
    got = w1.w2_distance(Q.gaussian(0, 1, N), Q.gaussian(m, s * s, N)) ** 2
    assert got == pytest.approx(m * m + (s - 1) ** 2, abs=1e-4)


def test_w2_gaussian_discrete_identity():
    N = 512
    m2 = w1.second_moment(Q.gaussian(0, 1, N))
    for m, s in [(0.5, 1.0), (-1.0, 2.0), (3.0, 0.1)]:
        got = w1.w2_distance(Q.gaussian(0, 1, N), Q.gaussian(m, s * s, N)) ** 2
        assert got == pytest.approx(m * m + (s - 1) ** 2 * m2, rel=1e-12)


def test_w2_resolution_mismatch():
    with pytest.raises(PreconditionError):
        w1.w2_distance(Q.uniform(0, 1, 10), Q.uniform(0, 1, 11))


def test_w2_metric_axioms():
    rng = np.random.default_rng(0)
    for _ in range(200):
        a, b, c = (Q(np.sort(rng.normal(size=32) * rng.uniform(0.1, 3))) for _ in range(3))
        assert w1.w2_distance(a, b) == w1.w2_distance(b, a)
        assert w1.w2_distance(a, c) <= w1.w2_distance(a, b) + w1.w2_distance(b, c) + 1e-12


# ------------------------------------------------------ density conversions


def test_from_density_uniform_is_linear():
    L = 3.0
    rho = GridDensity(0.0, L, np.full(300, 1 / L))
    mu = w1.from_density(rho, 50)
    np.testing.assert_allclose(mu.q, L * w1.levels(50), atol=1e-12)


def test_density_round_trip_l1():
    rho = GridDensity.gaussian(0.0, 1.0, -8, 8, 2048)
    back = w1.to_density(w1.from_density(rho, 1024), rho)
    assert float(np.sum(np.abs(back.rho - rho.rho)) * rho.dx) <= 1e-2
    assert back.mass == pytest.approx(1.0, abs=1e-12)


def test_narrow_density_gives_nearly_constant_quantiles():
    rho = GridDensity.gaussian(1.5, 1e-8, -1, 4, 5000)
    mu = w1.from_density(rho, 64)
    assert mu.q[-1] - mu.q[0] <= 2e-3
    assert abs(mu.mean - 1.5) <= 1e-3


def test_from_density_zero_mass():
    with pytest.raises(PreconditionError):
        w1.from_density(GridDensity(0, 1, np.zeros(10)), 8)


def test_to_density_requires_coverage():
    with pytest.raises(PreconditionError):
        w1.to_density(Q.uniform(0, 5, 16), (0.0, 1.0, 64))


# ------------------------------------------------------------------ energy


def test_entropy_of_uniform():
    # N - 1 interior increments carry weight 1/N each: -log L up to a 1/N bias
    N = 200
    for L in (0.5, 1.0, 4.0):
        e = w1.entropy(Q.uniform(0, L, N))
        assert e == pytest.approx(-(N - 1) / N * math.log(L), abs=1e-12)
        assert abs(e + math.log(L)) <= abs(math.log(L)) / N + 1e-12


def test_potential_second_moment_value():
    V = w1.Potential(V=lambda t, x: x * x, dV=lambda t, x: 2 * x)
    e = w1.energy(0.0, Q.gaussian(0, 1, 1024), w1.EnergyTerms(potential=V))
    assert e == pytest.approx(1.0, abs=1e-3 * 5)


def test_interaction_uniform_value():
    # half the double integral of (x - y)^2 / 2, i.e. Var / 2 for i.i.d. uniforms
    terms = w1.EnergyTerms(interaction=w1.quadratic_interaction(1.0))
    assert w1.energy(0.0, Q.uniform(0, 1, 1024), terms) == pytest.approx(1 / 24, abs=1e-3)


def test_singular_measure_is_plus_inf():
    terms = w1.terms_from_config({"internal": {"name": "power", "m": 2.0}})
    assert w1.energy(0.0, Q([0.0, 0.0, 1.0]), terms) is PLUS_INF
    # without an internal energy singular measures are allowed
    pot = w1.terms_from_config({"potential": {"name": "quadratic"}})
    assert w1.energy(0.0, Q.dirac(1.0, 8), pot) == pytest.approx(0.5)


def test_gradient_matches_finite_differences():
    terms = w1.terms_from_config({"entropy": {"kappa": "1/(1+t)"}, "potential": {"name": "ou", "a": "1+t", "m": "sin(t)"},
                                  "interaction": {"name": "quadratic", "c": 0.5}, "internal": {"name": "power", "m": 2}})
    mu = Q.gaussian(0.2, 1.3, 40)
    g = w1.energy_gradient(0.4, mu, terms)
    h = 1e-6
    for k in (0, 7, 20, 39):
        e = np.zeros(40)
        e[k] = h
        fd = (w1.energy(0.4, mu.q + e, terms) - w1.energy(0.4, mu.q - e, terms)) / (2 * h)
        assert g[k] == pytest.approx(fd, rel=1e-5, abs=1e-7)


def test_time_derivative_matches_finite_differences():
    terms = w1.terms_from_config({"entropy": {"kappa": "1/(1+t)"}, "potential": {"name": "ou", "a": "1+t/2", "m": "sin(t)"},
                                  "internal": {"name": "power", "m": 3, "c": "2 - t/4"}})
    mu = Q.gaussian(0.5, 0.8, 64)
    h = 1e-6
    fd = (w1.energy(0.3 + h, mu, terms) - w1.energy(0.3 - h, mu, terms)) / (2 * h)
    assert w1.energy_time_derivative(0.3, mu, terms) == pytest.approx(fd, rel=1e-6)


def test_translation_equivariance():
    rng = np.random.default_rng(2)
    V = w1.ou_potential("1+t", "t")
    terms = w1.EnergyTerms(kappa=1.0)
    inter = w1.EnergyTerms(interaction=w1.quadratic_interaction(1.0))
    for _ in range(20):
        mu = Q(np.sort(rng.normal(size=50)))
        c = rng.normal()
        nu = Q(mu.q + c)
        t = rng.uniform(0, 2)
        dV = np.mean(V.V(t, mu.q + c) - V.V(t, mu.q))
        assert w1.energy(t, nu, w1.EnergyTerms(potential=V)) - w1.energy(t, mu, w1.EnergyTerms(potential=V)) == \
            pytest.approx(dV, abs=1e-12)
        assert w1.energy(t, nu, terms) == pytest.approx(w1.energy(t, mu, terms), abs=1e-12)
        assert w1.energy(t, nu, inter) == pytest.approx(w1.energy(t, mu, inter), abs=1e-12)


def test_refinement_consistency():
    terms = w1.terms_from_config({"entropy": {"kappa": 1.0}, "potential": {"name": "quadratic"}})

    def X(s):
        return s + 0.1 * np.sin(2 * np.pi * s)

    ref = w1.energy(0.0, Q(X(w1.levels(2 ** 15))), terms)
    Ns = [64, 128, 256, 512, 1024]
    errs = [abs(w1.energy(0.0, Q(X(w1.levels(n))), terms) - ref) for n in Ns]
    slope = np.polyfit(np.log(Ns), np.log(errs), 1)[0]
    assert slope <= -0.9


def test_geodesic_convexity_surrogate():
    rng = np.random.default_rng(9)
    for cfg in ({"entropy": {"kappa": 1.0}, "potential": {"name": "ou", "a": "1+t", "m": "t"}},
                {"interaction": {"name": "quadratic", "c": 1.0}, "potential": {"name": "quadratic"}},
                {"internal": {"name": "power", "m": 2}}):
        F = w1.functional_from_config(cfg, 32)
        for _ in range(100):
            v0 = Q(np.sort(rng.normal(size=32)))
            v1 = Q(np.sort(rng.normal(size=32) * 2 + 1))
            s, t = rng.uniform(), rng.uniform(0, 2)
            mid = Q((1 - s) * v0.q + s * v1.q)
            lhs = F.energy(t, mid)
            rhs = (1 - s) * F.energy(t, v0) + s * F.energy(t, v1) - 0.5 * F.lam(t) * s * (1 - s) * \
                w1.w2_distance(v0, v1) ** 2
            assert lhs <= rhs + 1e-8


# ---------------------------------------------------------------- pressure


def test_pressure_examples():
    z = np.array([0.0, 0.5, 2.0])
    np.testing.assert_allclose(w1.pressure(0.0, z, w1.InternalEnergy.entropy(1.0)), z, atol=1e-14)
    np.testing.assert_allclose(w1.pressure(0.0, z, w1.power_internal(2.0)), z ** 2, atol=1e-14)
    np.testing.assert_allclose(w1.pressure(1.5, z, w1.InternalEnergy.entropy("1/(1+t)")), z / 2.5, atol=1e-14)
    with pytest.raises(PreconditionError):
        w1.pressure(0.0, -1.0, w1.power_internal(2.0))


# -------------------------------------------------------------------- prox


def test_prox_potential_only_is_coordinatewise():
    F = w1.functional_from_config({"potential": {"name": "quadratic"}}, 64)
    base = Q.gaussian(1.0, 2.0, 64)
    np.testing.assert_allclose(F.prox(0.0, 0.3, base).minimizer.q, base.q / 1.3, atol=1e-12)


def test_prox_entropy_heat_oracle():
    F = w1.WassersteinFunctional(w1.ENTROPY_ONLY, 512)
    res = F.prox(0.0, 1e-2, Q.gaussian(0, 1, 512))
    assert w1.w2_distance(res.minimizer, Q.gaussian(0, 1.02, 512)) <= 1e-3


def test_prox_interaction_preserves_mean():
    F = w1.functional_from_config({"interaction": {"name": "quadratic", "c": 1.0}}, 100)
    rng = np.random.default_rng(1)
    base = Q(np.sort(rng.exponential(size=100)))
    res = F.prox(0.0, 0.5, base)
    assert abs(res.minimizer.mean - base.mean) <= 1e-8
    assert res.minimizer.variance < base.variance


def test_prox_all_inactive_returns_base():
    base = Q.gaussian(0, 1, 16)
    res = w1.prox_quantile(0.0, 0.5, base, w1.EnergyTerms())
    assert res.minimizer is base and res.distance_moved == 0.0


def test_prox_with_internal_keeps_strict_increments():
    F = w1.functional_from_config({"internal": {"name": "power", "m": 2}}, 128)
    res = F.prox(0.0, 0.05, Q.uniform(0, 0.1, 128))
    assert np.all(np.diff(res.minimizer.q) > 0)


def test_prox_nonmonotone_repaired_by_projection():
    # strongly concave-in-x potential pushes quantiles past each other
    V = w1.Potential(V=lambda t, x: -0.45 * x * x + 0.25 * x ** 4, dV=lambda t, x: -0.9 * x + x ** 3,
                     d2V=lambda t, x: -0.9 + 3 * x * x, lam=lambda t: -0.9)
    F = w1.WassersteinFunctional(w1.EnergyTerms(potential=V), 40)
    res = F.prox(0.0, 1.0, Q(np.linspace(-0.01, 0.01, 40)))
    assert np.all(np.diff(res.minimizer.q) >= 0)


# --------------------------------------------------------------- isotonic


def _enumeration_oracle(v):
    n = len(v)
    best, best_x = math.inf, None
    for cuts in itertools.product([0, 1], repeat=n - 1):
        blocks, start = [], 0
        for i, c in enumerate(cuts, 1):
            if c:
                blocks.append((start, i))
                start = i
        blocks.append((start, n))
        means = [float(np.mean(v[a:b])) for a, b in blocks]
        if any(m2 < m1 for m1, m2 in zip(means, means[1:])):
            continue
        x = np.concatenate([np.full(b - a, m) for (a, b), m in zip(blocks, means)])
        f = float(np.sum((x - v) ** 2))
        if f < best:
            best, best_x = f, x
    return best_x


def test_isotonic_examples():
    v = np.array([0.0, 1.0, 1.0, 3.0])
    np.testing.assert_array_equal(w1.isotonic_project(v), v)
    np.testing.assert_allclose(w1.isotonic_project([1.0, 0.0]), [0.5, 0.5])


def test_isotonic_matches_enumeration():
    rng = np.random.default_rng(4)
    for _ in range(200):
        v = rng.normal(size=int(rng.integers(2, 10)))
        np.testing.assert_allclose(w1.isotonic_project(v), _enumeration_oracle(v), atol=1e-10)


def test_isotonic_projection_certificate():
    # x solves the projection onto the monotone cone iff sum(v-x)=0, <v-x, x>=0 and every
    # tail sum of v-x is nonpositive (the cone is spanned by +-1 and the tail indicators)
    rng = np.random.default_rng(5)
    for _ in range(100):
        v = np.cumsum(rng.normal(size=100)) * 0.1 + rng.normal(size=100)
        x = w1.isotonic_project(v)
        r = v - x
        assert np.all(np.diff(x) >= 0)
        assert abs(r.sum()) <= 1e-8
        assert abs(r @ x) <= 1e-8
        assert np.all(np.cumsum(r[::-1])[::-1][1:] <= 1e-8)
        np.testing.assert_array_equal(w1.isotonic_project(x), x)


# ------------------------------------------------------- moments and Otto


def test_second_moment():
    assert w1.second_moment(Q.dirac(0.0, 10)) == 0.0
    assert w1.second_moment(Q.gaussian(0, 1, 1024)) == pytest.approx(1.0, abs=3e-3)


def test_otto_bound_on_random_mixtures():
    rng = np.random.default_rng(6)
    for _ in range(1000):
        k = int(rng.integers(1, 4))
        w = rng.dirichlet(np.ones(k))
        means, sds = rng.normal(scale=3, size=k), rng.uniform(0.05, 3, size=k)
        s = w1.levels(256)
        # invert the mixture CDF by bisection on a fine grid
        xs = np.linspace((means - 8 * sds).min(), (means + 8 * sds).max(), 20001)
        cdf = sum(wi * norm.cdf(xs, m, sd) for wi, m, sd in zip(w, means, sds))
        q = np.interp(s, cdf, xs)
        mu = Q(np.maximum.accumulate(q))
        bound = w1.otto_lower_bound(mu)
        assert w1.entropy(mu) >= bound


def test_otto_bound_violation_raises():
    # a very flat wide measure has entropy far below -C(1+M2)^alpha only if alpha were too small;
    # probe the check directly with a monkeypatched constant
    mu = Q.uniform(-50, 50, 64)
    old = w1.OTTO_ALPHA
    try:
        w1.OTTO_ALPHA = 0.0
        with pytest.raises(HypothesisViolation):
            w1.otto_lower_bound(mu)
    finally:
        w1.OTTO_ALPHA = old


# ------------------------------------------------------------- validators


def test_energy_terms_reject_increasing_kappa():
    with pytest.raises(PreconditionError):
        w1.EnergyTerms(kappa="1 + t")
    with pytest.raises(PreconditionError):
        w1.EnergyTerms(kappa=-1.0)


def test_validator_quadratic_potential_passes():
    rep = w1.validate_hypotheses(w1.EnergyTerms(potential=w1.quadratic_potential(1.0)))
    assert all(v.passed for v in rep.verdicts if v.name.startswith("V")), rep.summary()


def test_validator_e3_split():
    ok = w1.validate_hypotheses(w1.terms_from_config({"entropy": {"kappa": 1.0}, "potential": {"name": "quadratic"}}))
    bad = w1.validate_hypotheses(w1.terms_from_config({"entropy": {"kappa": "exp(-t)"}}))
    assert ok.verdict("E3_time_regularity").passed
    v = bad.verdict("E3_time_regularity")
    assert not v.passed and v.witness


def test_validator_u1_time_independent_entropy():
    rep = w1.validate_hypotheses(w1.EnergyTerms(kappa=1.0))
    assert all(v.passed for v in rep.verdicts if v.name.startswith("U1")), rep.summary()


def test_validator_flags_wrong_potential_lambda():
    V = w1.quadratic_potential(1.0)
    bad = w1.Potential(V.V, V.dV, V.d2V, V.dVdt, lam=lambda t: 3.0, beta=V.beta)
    rep = w1.validate_hypotheses(w1.EnergyTerms(potential=bad))
    assert not rep.verdict("V_convexity").passed


def test_validator_flags_asymmetric_interaction():
    W = w1.Interaction(W=lambda t, x, y: 0.5 * (x - y) ** 2 + x, dW1=lambda t, x, y: (x - y) + 1.0)
    rep = w1.validate_hypotheses(w1.EnergyTerms(interaction=W))
    assert not rep.verdict("W_symmetry").passed
