"""Special functions, quadrature, finite differences and KS helpers."""

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import special, stats

from timeinv.errors import DomainError, NumericFailure
from timeinv.numerics import (EmpiricalSample, Tolerance, bessel_i, cdf_from_density,
                              first_derivative, gauss_legendre_cells, homogeneity_residual,
                              integrate_1d, ks_one_sample, ks_two_sample, log_bessel_i,
                              log_bessel_ix, second_derivative)


class TestTolerance:
    def test_bound(self):
        assert Tolerance(1e-3, 1e-6).bound(10.0) == pytest.approx(1e-2)
        assert Tolerance(1e-3, 1e-6).bound(0.0) == 1e-6

    @pytest.mark.parametrize("rel,abs_", [(-1, 0), (0, -1), (0, 0)])
    def test_rejects_bad_values(self, rel, abs_):
        with pytest.raises(ValueError):
            Tolerance(rel, abs_)


class TestEmpiricalSample:
    def test_sorted_on_construction(self):
        s = EmpiricalSample([3.0, 1.0, 2.0], [0.5, 0.25, 0.25])
        assert list(s.values) == [1.0, 2.0, 3.0]
        assert list(s.weights) == [0.25, 0.25, 0.5]

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            EmpiricalSample([])


class TestBessel:
    @pytest.mark.parametrize("nu", [-0.5, 0.0, 0.5, 1.0, 2.5, 7.0])
    @pytest.mark.parametrize("x", [1e-6, 0.3, 2.0, 29.0, 31.0, 150.0, 900.0])
    def test_against_mpmath(self, nu, x):
        ref = float(mpmath.log(mpmath.besseli(nu, x)))
        assert log_bessel_i(nu, x) == pytest.approx(ref, rel=1e-13, abs=1e-13)

    def test_huge_argument_stays_finite(self):
        ref = float(mpmath.log(mpmath.besseli(1.5, 5000)))
        assert log_bessel_i(1.5, 5000.0) == pytest.approx(ref, rel=1e-14)
        with pytest.raises(OverflowError):
            bessel_i(1.5, 5000.0)

    def test_scaled_form_at_zero(self):
        # z^-nu I_nu(z) -> 1 / (2^nu Gamma(nu+1))
        for nu in (0.0, 0.5, 3.0):
            assert log_bessel_ix(nu, 0.0) == pytest.approx(
                -nu * math.log(2) - math.lgamma(nu + 1), abs=1e-15)

    def test_log_at_zero_has_no_nan(self):
        with np.errstate(all="raise"):
            v = log_bessel_i(0.5, np.array([0.0, 1.0]))
        assert v[0] == -np.inf and np.isfinite(v[1])
        assert log_bessel_i(0.0, 0.0) == 0.0

    def test_matches_scipy_on_array(self):
        x = np.linspace(0.01, 600, 400)
        ref = np.log(special.ive(2.5, x)) + x
        np.testing.assert_allclose(log_bessel_i(2.5, x), ref, rtol=1e-12)

    @given(st.floats(0.05, 6.0), st.floats(0.05, 60.0))
    def test_recurrence(self, nu, x):
        # I_{nu-1} - I_{nu+1} = (2 nu / x) I_nu, in log-scaled form
        lm = log_bessel_i(nu - 1.0, x)
        l0 = log_bessel_i(nu, x)
        lp = log_bessel_i(nu + 1.0, x)
        lhs = math.exp(lm - l0) - math.exp(lp - l0)
        assert lhs == pytest.approx(2 * nu / x, rel=1e-11, abs=1e-12)

    def test_domain(self):
        with pytest.raises(DomainError):
            log_bessel_ix(0.5, -1.0)
        with pytest.raises(DomainError):
            log_bessel_ix(-1.5, 1.0)


class TestQuadrature:
    def test_gaussian_whole_line(self):
        r = integrate_1d(lambda x: np.exp(-x * x / 2) / math.sqrt(2 * math.pi), -np.inf, np.inf)
        assert r.value == pytest.approx(1.0, abs=1e-13)
        value, err = r
        assert err < 1e-10

    def test_half_line_and_reversed(self):
        assert integrate_1d(np.exp, 0, 1).value == pytest.approx(math.e - 1, rel=1e-13)
        assert integrate_1d(np.exp, 1, 0).value == pytest.approx(1 - math.e, rel=1e-13)
        f = lambda x: x ** 2 * np.exp(-x)
        assert integrate_1d(f, 0, np.inf).value == pytest.approx(2.0, rel=1e-12)

    def test_integrable_singularity(self):
        assert integrate_1d(lambda x: 1 / np.sqrt(x), 0, 1,
                            Tolerance(1e-9, 1e-12)).value == pytest.approx(2.0, rel=1e-8)

    def test_breakpoints(self):
        f = lambda x: np.abs(x - 0.3)
        r = integrate_1d(f, 0, 1, breakpoints=[0.3])
        assert r.value == pytest.approx(0.5 * (0.09 + 0.49), rel=1e-14)

    def test_nonconvergence_reports_partial(self):
        with pytest.raises(NumericFailure) as info:
            integrate_1d(lambda x: np.sin(1 / x) / x, 1e-6, 1, max_intervals=16)
        assert info.value.partial is not None

    def test_gauss_legendre_cells(self):
        cells = gauss_legendre_cells(lambda x: 3 * x ** 2, np.array([0.0, 1.0, 2.0]))
        np.testing.assert_allclose(cells, [1.0, 7.0], rtol=1e-14)

    def test_cdf_from_density(self):
        pts = np.array([1.0, -0.5, 0.0, 2.0])
        cdf = cdf_from_density(lambda x: stats.norm.pdf(x), -np.inf, pts)
        np.testing.assert_allclose(cdf, stats.norm.cdf(pts), atol=1e-12)


class TestFiniteDifferences:
    def test_derivatives(self):
        assert first_derivative(np.sin, 0.7, 1e-5) == pytest.approx(math.cos(0.7), rel=1e-9)
        assert second_derivative(np.exp, 0.3, 1e-2, points=5) == pytest.approx(
            math.exp(0.3), rel=1e-8)

    @given(st.lists(st.floats(0.1, 5.0), min_size=1, max_size=4), st.floats(-2, 3))
    def test_homogeneous_power_has_small_residual(self, x, degree):
        f = lambda v: float(np.sum(np.abs(v)) ** degree)
        res = homogeneity_residual(f, x, degree)
        assert res <= 1e-6 * max(1.0, abs(degree * f(np.array(x))))

    def test_wrong_degree_detected(self):
        f = lambda v: float(v[0] ** 2)
        assert homogeneity_residual(f, [1.5], 1.0) == pytest.approx(2.25, rel=1e-6)

    def test_constant_has_zero_residual(self):
        assert homogeneity_residual(lambda v: 1.0, [0.3, 2.0], 0.0) == 0.0


class TestKolmogorovSmirnov:
    def test_one_sample_accepts_correct_law(self):
        x = np.random.default_rng(3).standard_normal(20_000)
        d, p = ks_one_sample(x, stats.norm.cdf)
        assert p > 0.01 and d < 0.02

    def test_one_sample_rejects_shifted_law(self):
        x = np.random.default_rng(3).standard_normal(20_000) + 0.1
        assert ks_one_sample(x, stats.norm.cdf)[1] < 1e-6

    def test_two_sample(self):
        rng = np.random.default_rng(5)
        a, b = rng.standard_normal(5000), rng.standard_normal(5000)
        assert ks_two_sample(a, b)[1] > 0.01
        assert ks_two_sample(a, a) == (0.0, 1.0)
