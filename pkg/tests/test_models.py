"""Transition density catalog: normalisation, reductions, factorizations, config."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from timeinv import models as M
from timeinv.errors import ConfigError, DomainError
from timeinv.numerics import Tolerance, integrate_1d

TOL = Tolerance(1e-11, 1e-14)


def _mass(model, x, t=1.0):
    lo = -np.inf if model.domain == M.REAL_LINE else 0.0
    return integrate_1d(lambda y: model.density(t, x, y), lo, np.inf, TOL).value


ONE_D = [
    (M.brownian_motion(1), (-1.0, 0.5, 2.0)),
    (M.brownian_drift(1, 0.7), (-1.0, 0.5)),
    (M.bessel(0.5), (0.0, 0.5, 2.0)),
    (M.bessel(-0.3), (0.5, 2.0)),
    (M.bessel(1.5, 0.7), (0.0, 1.0)),
    (M.bessel_wide(0.5, 1.2), (0.0, 0.5, 2.0)),
    (M.squared_bessel(3.0), (0.0, 0.5, 2.0)),
    (M.squared_bessel(1.2), (0.5, 2.0)),
    (M.gen_dunkl_1d(1.0, 0.5), (-1.0, 0.0, 0.5, 2.0)),
    (M.gen_dunkl_1d(0.3, 2.0), (-1.0, 2.0)),
    (M.dunkl_1d(1.5), (-2.0, 0.5)),
    (M.ornstein_uhlenbeck(1.0), (-1.0, 2.0)),
]


class TestNormalisation:
    @pytest.mark.parametrize("model,starts", ONE_D, ids=lambda v: getattr(v, "name", ""))
    def test_one_dimensional(self, model, starts):
        for x in starts:
            assert _mass(model, x) == pytest.approx(1.0, abs=1e-9)

    @pytest.mark.parametrize("lam", [0.0, 0.5, 3.0])
    def test_skew_wishart_m1_both_signs(self, lam):
        mod = M.skew_wishart(3.0, 1, lam)
        x = np.array([[0.8]])
        f = lambda y: mod.density(1.0, x, y.reshape(-1, 1, 1))
        total = integrate_1d(f, -np.inf, np.inf, TOL).value
        assert total == pytest.approx(1.0, abs=1e-9)

    def test_wishart_m2_importance_sampling(self):
        w = M.wishart(4.0, 2)
        x0 = np.array([[1.0, 0.3], [0.3, 0.8]])
        q = stats.wishart(df=5, scale=1.6 * np.eye(2))
        ys = q.rvs(size=40_000, random_state=np.random.default_rng(1))
        wt = np.exp(w.log_density(1.0, x0, ys) - q.logpdf(np.moveaxis(ys, 0, -1)))
        se = wt.std() / math.sqrt(len(wt))
        assert abs(wt.mean() - 1.0) < 4 * se
        tr = np.trace(ys, axis1=1, axis2=2)
        assert abs((wt * tr).mean() - (np.trace(x0) + 8.0)) < 4 * (wt * tr).std() / 200


class TestClosedForms:
    def test_squared_bessel_is_scaled_noncentral_chi2(self):
        y = np.array([0.2, 1.3, 4.0])
        for delta, x, t in ((3.0, 1.1, 0.7), (1.5, 0.4, 2.0)):
            ref = stats.ncx2.pdf(y / t, delta, x / t) / t
            np.testing.assert_allclose(M.squared_bessel(delta).density(t, x, y), ref, rtol=1e-12)

    def test_bessel_half_is_reflected_3d_radial(self):
        # Bessel(1/2): density of |B_t| for 3d BM, y/x (phi(y-x) - phi(y+x))
        x, t = 0.9, 0.6
        y = np.array([0.1, 0.8, 2.5])
        g = lambda z: np.exp(-z * z / (2 * t)) / math.sqrt(2 * math.pi * t)
        ref = y / x * (g(y - x) - g(y + x))
        np.testing.assert_allclose(M.bessel(0.5).density(t, x, y), ref, rtol=1e-12)

    def test_drift_is_h_transform_of_bm(self):
        b = np.array([0.7, -0.3])
        h = M.HTransform(lambda x: np.asarray(x) @ b, float(b @ b) / 2)
        ht = M.apply_h_transform(M.brownian_motion(2), h)
        drift = M.brownian_drift(2, b)
        x = np.array([0.3, -1.0])
        ys = np.random.default_rng(0).standard_normal((20, 2))
        np.testing.assert_allclose(ht.density(0.8, x, ys), drift.density(0.8, x, ys), rtol=1e-12)
        assert ht.factorization is None

    def test_trivial_h_transform(self):
        b = M.bessel(1.5)
        same = M.apply_h_transform(b, M.HTransform.from_function(lambda x: np.ones_like(x)))
        assert same.density(0.5, 1.0, 1.3) == pytest.approx(b.density(0.5, 1.0, 1.3), rel=1e-15)

    def test_bm_vector_is_product(self):
        m = M.brownian_motion(3)
        x, y = np.array([0.1, 0.2, -0.4]), np.array([1.0, -0.5, 0.3])
        ref = np.prod(stats.norm.pdf(y, loc=x, scale=math.sqrt(0.7)))
        assert m.density(0.7, x, y) == pytest.approx(ref, rel=1e-13)


class TestReductions:
    @pytest.mark.parametrize("delta", [2.5, 3.0, 6.0])
    def test_wishart_m1_is_squared_bessel(self, delta):
        w, b = M.wishart(delta, 1), M.squared_bessel(delta)
        ys = np.array([0.05, 0.7, 3.0])
        for x in (1e-9, 0.0, 0.4, 2.0):
            lw = w.log_density(0.8, np.array([[x]]), ys.reshape(-1, 1, 1))
            lb = b.log_density(0.8, x, ys)
            np.testing.assert_allclose(lw, lb, rtol=1e-12, atol=1e-12)

    @pytest.mark.parametrize("k", [0.75, 1.0, 2.0])
    def test_gen_dunkl_without_jumps_is_bessel(self, k):
        g, b = M.gen_dunkl_1d(k, 0.0), M.bessel(k - 0.5)
        ys = np.array([0.1, 1.0, 2.5])
        for x in (0.3, 1.7):
            np.testing.assert_allclose(g.density(1.1, x, ys), b.density(1.1, x, ys), rtol=1e-12)
            assert np.all(g.density(1.1, x, -ys) == 0.0)

    def test_dunkl_is_gen_dunkl_with_lambda_k(self):
        d, g = M.dunkl_1d(1.3), M.gen_dunkl_1d(1.3, 1.3)
        ys = np.linspace(-3, 3, 13)
        np.testing.assert_allclose(d.density(0.5, -0.4, ys), g.density(0.5, -0.4, ys), rtol=1e-15)

    def test_dunkl_orthogonal_on_coordinate_roots(self):
        # roots sqrt(2) e_i: the process is a product of 1d generalized Dunkl processes
        r = math.sqrt(2)
        mod = M.dunkl_orthogonal(3, [[r, 0, 0], [0, r, 0]], [0.75, 1.25], [0.5, 0.3])
        x, y = np.array([0.4, -1.0, 0.2]), np.array([-0.9, 0.6, 1.1])
        ref = (M.gen_dunkl_1d(0.75, 0.5).density(0.6, x[0], y[0])
               * M.gen_dunkl_1d(1.25, 0.3).density(0.6, x[1], y[1])
               * stats.norm.pdf(y[2], x[2], math.sqrt(0.6)))
        assert mod.density(0.6, x, y) == pytest.approx(ref, rel=1e-12)

    def test_dunkl_orthogonal_rejects_non_orthogonal_roots(self):
        with pytest.raises(DomainError):
            M.dunkl_orthogonal(3, [[1, -1, 0], [0, 1, -1]], 1.0, 0.5)

    def test_kmg_with_one_particle_is_base(self):
        kmg = M.eigenvalues_kmg(M.brownian_motion(1), 1)
        assert kmg.density(0.5, np.array([0.3]), np.array([1.0])) == pytest.approx(
            M.brownian_motion(1).density(0.5, 0.3, 1.0), rel=1e-13)

    def test_kmg_determinant_formula(self):
        base = M.squared_bessel(3.0)
        x, y = np.array([0.4, 1.5]), np.array([0.2, 2.0])
        p = lambda a, b: base.density(0.7, a, b)
        det = p(x[0], y[0]) * p(x[1], y[1]) - p(x[0], y[1]) * p(x[1], y[0])
        # h = Vandermonde, no killing rate
        ref = (y[1] - y[0]) / (x[1] - x[0]) * det
        assert M.eigen_kmg_density(base, x, y, 0.7) == pytest.approx(ref, rel=1e-12)

    def test_kmg_requires_ordered_points(self):
        kmg = M.eigenvalues_kmg(M.brownian_motion(1), 2)
        with pytest.raises(DomainError):
            kmg.density(1.0, np.array([1.0, 0.5]), np.array([0.1, 0.2]))


class TestProperties:
    @given(st.floats(0.05, 4.0), st.floats(0.05, 3.0), st.floats(0.05, 3.0),
           st.floats(-0.9, 3.0))
    def test_bessel_reversible_wrt_speed_measure(self, t, x, y, nu):
        m = M.bessel(nu)
        lhs = m.log_density(t, x, y) + (2 * nu + 1) * math.log(x)
        rhs = m.log_density(t, y, x) + (2 * nu + 1) * math.log(y)
        assert lhs == pytest.approx(rhs, rel=1e-11, abs=1e-11)

    @given(st.floats(0.1, 5.0), st.floats(0.05, 3.0), st.floats(0.05, 3.0))
    def test_squared_bessel_semistable(self, t, x, y):
        m = M.squared_bessel(2.7)
        lhs = m.log_density(t, x, y)
        rhs = -math.log(t) + m.log_density(1.0, x / t, y / t)
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)

    @given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.0, 3.0))
    def test_dunkl_kernel_reduces_at_lambda_zero_sum(self, x, y, lam):
        # D(z) + D(-z) = z^-nu I_nu(|z|) regardless of lambda
        from timeinv.numerics import log_bessel_ix
        k = 0.9
        d = M.log_dunkl_kernel(k, lam)
        z = x * y
        total = math.exp(d(z)) + math.exp(d(-z))
        assert total == pytest.approx(math.exp(log_bessel_ix(k - 0.5, abs(z))), rel=1e-10)

    def test_factorization_degrees(self):
        assert M.bessel(0.5).factorization.beta == 2.0
        assert M.wishart(4, 2).factorization.beta == pytest.approx(1.0)
        assert M.wishart(4, 2).alpha == 2.0 and M.wishart(4, 2).state_dim == 3
        assert M.gen_dunkl_1d(1.0, 0.5).factorization.beta == 2.0


class TestWideBesselODE:
    def test_solution(self):
        phi1 = math.exp(float(M.log_bessel_ix(0.5, 1.0)))
        assert abs(M.wide_bessel_ode_residual(0.5, 1.0, 1.0, 1.0)) <= 1e-6 * phi1
        phi = math.exp(float(M.log_bessel_ix(1.5, 1.0)))
        assert abs(M.wide_bessel_ode_residual(1.5, 2.0, 1.0, 0.5)) <= 1e-6 * phi

    def test_constant_is_not_a_solution(self):
        assert M.wide_bessel_ode_residual(0.5, 1.0, 1.0, 1.0, phi=lambda z: 1.0) == pytest.approx(
            -0.5, abs=1e-9)

    def test_domain(self):
        with pytest.raises(DomainError):
            M.wide_bessel_ode_residual(0.5, 1.0, 1.0, 0.0)


class TestValidation:
    def test_time_must_be_positive(self):
        with pytest.raises(DomainError):
            M.bessel(0.5).density(0.0, 1.0, 1.0)

    def test_state_domains(self):
        with pytest.raises(DomainError):
            M.bessel(0.5).density(1.0, -1.0, 1.0)
        with pytest.raises(DomainError):
            M.wishart(4, 2).density(1.0, np.eye(2), -np.eye(2))
        with pytest.raises(DomainError):
            M.skew_wishart(4, 2, 0.5).density(1.0, np.eye(2), np.diag([1.0, -1.0]))

    def test_overflow_is_reported(self):
        with pytest.raises(OverflowError):
            M.brownian_motion(3).density(1e-300, np.zeros(3), np.zeros(3))

    def test_log_density_survives_extreme_arguments(self):
        v = M.bessel(0.5).log_density(1e-3, 50.0, 50.0)
        assert np.isfinite(v)


class TestConfig:
    def test_roundtrip(self):
        m = M.model_from_config({"model": "skew_wishart", "delta": 4, "m": 2, "lambda": 0.5})
        assert m.name == "skew_wishart" and m.params["lambda"] == 0.5

    @pytest.mark.parametrize("doc,needle", [
        ({"model": "wishart", "delta": 1, "m": 2}, "delta > m - 1"),
        ({"model": "bessel"}, "missing parameter 'nu'"),
        ({"model": "bessel", "nu": 0.5, "colour": 1}, "unknown keys"),
        ({"model": "nope"}, "unknown model"),
        ({"model": "bessel", "nu": True}, "must be a number"),
        ({"model": "bessel", "nu": -2}, "nu > -1"),
        ({"model": "gen_dunkl1d", "k": 1, "lambda": -1}, "lambda >= 0"),
        ({"model": "dunkl_orthogonal", "n": 2, "roots": [[1, 0], [0, 1]]}, "delta_ij"),
        ({"model": "eigenvalues_kmg", "m": 2, "base": "bessel"}, "base must be"),
        ({"model": "wishart", "delta": 4, "m": 1.5}, "integer"),
    ])
    def test_errors_name_the_constraint(self, doc, needle):
        with pytest.raises(ConfigError, match=needle):
            M.model_from_config(doc)

    def test_catalog_builds(self):
        docs = [{"model": "brownian"}, {"model": "brownian_drift", "b": 0.7},
                {"model": "bessel_wide", "nu": 0.5, "c": 1.2},
                {"model": "squared_bessel", "delta": 3}, {"model": "dunkl1d", "k": 1},
                {"model": "eigenvalues_kmg", "m": 2, "base": "squared_bessel", "delta": 3},
                {"model": "ornstein_uhlenbeck"}]
        for d in docs:
            assert M.model_from_config(d).name.startswith(d["model"].split("_")[0])
