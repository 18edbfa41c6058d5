"""Path simulation: exact samplers, skew products, inversion of paths."""

import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from timeinv import models as M
from timeinv import simulate as S
from timeinv.errors import ConfigError, DomainError
from timeinv.numerics import cdf_from_density, ks_one_sample

KS_LEVEL = 0.01


def _ks_p(sample, density, lower):
    return ks_one_sample(sample, lambda p: cdf_from_density(density, lower, p))[1]


class TestGrids:
    def test_log_spec(self):
        g = S.parse_grid_spec("log:0.1:10:5")
        np.testing.assert_allclose(g, [0.1, 0.316227766, 1.0, 3.16227766, 10.0], rtol=1e-8)

    @pytest.mark.parametrize("spec", ["lin:0.1:1:3", "log:0:1:3", "log:1:0.5:3", "log:a:1:3",
                                      "log:0.1:1"])
    def test_bad_spec(self, spec):
        with pytest.raises(ConfigError):
            S.parse_grid_spec(spec)

    def test_reciprocal_grid_sorted(self):
        np.testing.assert_allclose(S.reciprocal_grid([0.25, 2.0, 1.0]), [0.5, 1.0, 4.0])


class TestBesqSampler:
    def test_zero_start_is_gamma(self):
        a = S.sample_besq(3.0, 0.0, 0.7, S.block_rng(5, "besq", 0), size=1000)
        b = S.block_rng(5, "besq", 0)
        b.poisson(0.0, size=1000)
        np.testing.assert_array_equal(a, b.gamma(1.5, 1.4, size=1000))

    @pytest.mark.parametrize("delta,x0,t", [(3.0, 1.0, 1.0), (0.8, 2.5, 0.4), (5.0, 0.0, 2.0)])
    def test_mean(self, delta, x0, t):
        x = S.sample_besq(delta, x0, t, S.block_rng(1, "besq", 0), size=100_000)
        se = x.std(ddof=1) / math.sqrt(len(x))
        assert abs(x.mean() - (x0 + delta * t)) < 3 * se

    def test_matches_noncentral_chi2(self):
        # X_t / t is noncentral chi-square with delta dof and noncentrality x0 / t
        x = S.sample_besq(3.0, 1.0, 1.0, S.block_rng(2, "besq", 0), size=20_000)
        assert stats.kstest(x, stats.ncx2(3.0, 1.0).cdf).pvalue > KS_LEVEL

    def test_ks_against_density(self):
        x = S.sample_besq(3.0, 1.0, 1.0, S.block_rng(3, "besq", 0), size=20_000)
        mod = M.squared_bessel(3.0)
        assert _ks_p(x, lambda y: mod.density(1.0, 1.0, y), 0.0) > KS_LEVEL

    def test_rejects_bad_input(self):
        rng = S.block_rng(0, "besq", 0)
        for args in ((0.0, 1.0, 1.0), (2.0, -1.0, 1.0), (2.0, 1.0, 0.0)):
            with pytest.raises(DomainError):
                S.sample_besq(*args, rng)


class TestRadialPaths:
    def test_bessel_marginal(self):
        mod = M.bessel(0.5)
        ens = S.simulate(mod, 1.0, [1.0], 20_000, 8)
        assert _ks_p(ens.marginal(1.0), lambda y: mod.density(1.0, 1.0, y), 0.0) > KS_LEVEL

    def test_workers_do_not_change_output(self):
        a = S.simulate_besq(3.0, 1.0, [0.5, 1.0], 10_000, 21, workers=1)
        b = S.simulate_besq(3.0, 1.0, [0.5, 1.0], 10_000, 21, workers=4)
        np.testing.assert_array_equal(a.paths, b.paths)
        np.testing.assert_array_equal(a.functionals, b.functionals)

    def test_seed_changes_output(self):
        a = S.simulate_besq(3.0, 1.0, [1.0], 100, 1)
        b = S.simulate_besq(3.0, 1.0, [1.0], 100, 2)
        assert not np.array_equal(a.paths, b.paths)

    def test_functional_nondecreasing(self):
        ens = S.simulate(M.bessel(0.5), 1.0, S.log_grid(0.1, 3.0, 6), 2000, 4)
        assert np.all(np.diff(ens.functionals, axis=1) >= 0)
        assert np.all(ens.functionals > 0)

    def test_empty_grid(self):
        ens = S.simulate(M.bessel(0.5), 1.0, [], 100, 1)
        assert ens.paths.size == 0 and len(ens.times) == 0

    def test_sigma_scaling(self):
        a = S.simulate(M.bessel(0.5, 2.0), 2.0, [1.0], 100, 3)
        b = S.simulate(M.bessel(0.5), 1.0, [1.0], 100, 3)
        np.testing.assert_allclose(a.paths, 2 * b.paths)

    def test_brownian_drift_mean(self):
        mod = M.brownian_drift(2, [0.7, -0.3])
        ens = S.simulate(mod, np.zeros(2), [2.0], 20_000, 6)
        y = ens.marginal(2.0)
        se = y.std(axis=0, ddof=1) / math.sqrt(len(y))
        assert np.all(np.abs(y.mean(axis=0) - [1.4, -0.6]) < 3 * se)

    def test_unsupported_model(self):
        with pytest.raises(DomainError):
            S.simulate(M.ornstein_uhlenbeck(1.0), 1.0, [1.0], 10, 1)


class TestWishartPaths:
    def test_exact_trace_at_delta_equal_m(self):
        x0 = np.eye(2)
        ens = S.simulate_wishart(2, 2, x0, [1.0], 10_000, 12)
        assert ens.scheme == "wishart-bb"
        tr = np.trace(ens.marginal(1.0), axis1=1, axis2=2)
        se = tr.std(ddof=1) / math.sqrt(len(tr))
        assert abs(tr.mean() - (2 + 4)) < 3 * se

    def test_states_symmetric_psd(self):
        ens = S.simulate_wishart(3, 2, [[1.0, 0.3], [0.3, 0.8]], [0.5, 1.0], 500, 2)
        x = ens.paths
        np.testing.assert_allclose(x, np.swapaxes(x, -1, -2))
        assert np.all(np.linalg.eigvalsh(x) > -1e-12)

    def test_euler_scheme_trace(self):
        ens = S.simulate_wishart(2.5, 2, np.eye(2), [1.0], 10_000, 14, substeps=32)
        assert ens.scheme == "wishart-em"
        tr = np.trace(ens.marginal(1.0), axis1=1, axis2=2)
        se = tr.std(ddof=1) / math.sqrt(len(tr))
        assert abs(tr.mean() - (2 + 5)) < 3 * se

    def test_euler_refinement_agrees_with_exact(self):
        # same law via both schemes; compare E[det X_1], which is not fixed by the drift alone
        x0 = np.eye(2)
        exact = np.linalg.det(S.simulate_wishart(4, 2, x0, [1.0], 20_000, 3).marginal(1.0))
        em = np.linalg.det(S.simulate_wishart(4, 2, x0, [1.0], 20_000, 4, substeps=64,
                                              scheme="em").marginal(1.0))
        se = math.hypot(exact.std(), em.std()) / math.sqrt(20_000)
        assert abs(exact.mean() - em.mean()) < 4 * se

    def test_exact_needs_integer_delta(self):
        with pytest.raises(DomainError):
            S.simulate_wishart(2.5, 2, np.eye(2), [1.0], 10, 1, scheme="bb")

    def test_rejects_indefinite_start(self):
        with pytest.raises(DomainError):
            S.simulate_wishart(3, 2, [[1.0, 0.0], [0.0, -1.0]], [1.0], 10, 1)


class TestSkewProduct:
    def test_flip_probability(self):
        assert S.flip_probability(0.5, 0.0) == 0.0
        assert S.flip_probability(0.5, np.inf) == 0.5
        assert S.flip_probability(1.0, 0.3) == pytest.approx(0.5 * (1 - math.exp(-0.6)))

    def test_no_flips_without_lambda(self):
        base = S.simulate_radial(M.gen_dunkl_1d(1.0, 0.0), 1.0, [0.5, 1.0], 1000, 3)
        out = S.skew_product(base, 0.0)
        np.testing.assert_array_equal(out.paths, base.paths)

    def test_unflipped_frequency_per_bin(self):
        lam = 0.5
        base = S.simulate_radial(M.gen_dunkl_1d(1.0, lam), 1.0, [1.0], 100_000, 9)
        out = S.skew_product(base, lam, 9)
        a = base.functionals[:, 0]
        kept = (out.paths[:, 0] > 0).astype(float)
        edges = np.quantile(a, np.linspace(0, 1, 9))
        which = np.clip(np.searchsorted(edges, a, side="right") - 1, 0, 7)
        for b in range(8):
            sel = which == b
            expect = np.mean(0.5 * (1 + np.exp(-2 * lam * a[sel])))
            se = kept[sel].std(ddof=1) / math.sqrt(sel.sum())
            assert abs(kept[sel].mean() - expect) < 3 * se

    def test_negative_start_keeps_sign(self):
        ens = S.simulate(M.gen_dunkl_1d(1.0, 0.0), -1.0, [1.0], 500, 2)
        assert np.all(ens.paths < 0)

    def test_gen_dunkl_signed_marginal(self):
        mod = M.gen_dunkl_1d(1.0, 0.5)
        ens = S.simulate(mod, 1.0, [1.0], 20_000, 17, substeps=64)
        p = _ks_p(ens.marginal(1.0), lambda y: mod.density(1.0, 1.0, y), -np.inf)
        assert p > KS_LEVEL

    def test_needs_functional(self):
        ens = S.simulate(M.brownian_motion(1), 0.0, [1.0], 10, 1)
        with pytest.raises(DomainError):
            S.skew_product(ens, 0.5)

    def test_dunkl_orthogonal_components(self):
        roots = [[1, -1, 0], [1, 1, 0]]
        mod = M.dunkl_orthogonal(3, roots, [0.75, 1.25], [0.5, 0.3])
        x0 = np.array([1.0, 0.3, 0.5])
        ens = S.simulate(mod, x0, [1.0], 20_000, 23, substeps=32)
        y = ens.marginal(1.0)
        for i, k in enumerate((0.75, 1.25)):
            alpha = np.asarray(roots[i], float)
            r0 = abs(alpha @ x0) / math.sqrt(2)
            r = np.abs(y @ alpha) / math.sqrt(2)
            bes = M.bessel(k - 0.5)
            assert _ks_p(r, lambda z: bes.density(1.0, r0, z), 0.0) > KS_LEVEL
        assert stats.kstest(y[:, 2], stats.norm(0.5, 1.0).cdf).pvalue > KS_LEVEL
        # norm is invariant under the reflections
        radial = S.simulate_radial(mod, x0, [1.0], 20_000, 23, substeps=32)
        np.testing.assert_allclose(np.linalg.norm(y, axis=1),
                                   np.linalg.norm(radial.marginal(1.0), axis=1))


class TestInvertPaths:
    def test_constant_path(self):
        times = np.array([0.5, 1.0, 2.0])
        ens = S.PathEnsemble(times, np.full((4, 3), 3.0), None, 0, "const")
        out = S.invert_paths(ens, 1.0, [0.5, 1.0, 2.0])
        np.testing.assert_allclose(out.paths, np.tile([1.5, 3.0, 6.0], (4, 1)))
        assert out.functionals is None

    def test_matrix_paths_scale_entrywise(self):
        ens = S.simulate_wishart(3, 2, np.eye(2), S.reciprocal_grid([0.5, 2.0]), 50, 1)
        out = S.invert_paths(ens, 1.0, [0.5, 2.0])
        np.testing.assert_allclose(out.marginal(0.5), 0.5 * ens.marginal(2.0))
        np.testing.assert_allclose(out.paths, np.swapaxes(out.paths, -1, -2))

    def test_default_u_grid(self):
        ens = S.PathEnsemble(np.array([0.5, 2.0]), np.ones((2, 2)), None, 0, "const")
        np.testing.assert_allclose(S.invert_paths(ens, 2.0).times, [0.5, 2.0])

    def test_off_grid(self):
        ens = S.PathEnsemble(np.array([0.5, 2.0]), np.ones((2, 2)), None, 0, "const")
        with pytest.raises(DomainError):
            S.invert_paths(ens, 1.0, [0.7])

    @given(st.floats(0.1, 10.0), st.floats(0.5, 3.0))
    def test_reciprocal_grid_always_covers(self, u, alpha):
        ens = S.PathEnsemble(S.reciprocal_grid([u]), np.ones((1, 1)), None, 0, "const")
        out = S.invert_paths(ens, alpha, [u])
        assert out.paths[0, 0] == pytest.approx(u ** alpha)


class TestConditionalFunctional:
    def test_zero_lambda(self):
        rows, _ = S.mc_conditional_functional(0.5, 0.0, 1.0, 1.0, 10_000, 1)
        assert all(r.empirical == 1.0 and r.analytic == pytest.approx(1.0) for r in rows)

    def test_bins_within_three_se(self):
        rows, notes = S.mc_conditional_functional(0.5, 0.375, 1.0, 1.0, 50_000, 5,
                                                  substeps=128)
        assert len(rows) == 10 and not notes
        assert max(abs(r.z_score) for r in rows) < 3.0

    def test_matrix_reference_agrees(self):
        a, _ = S.mc_conditional_functional(0.5, 0.375, 1.0, 1.0, 10_000, 2)
        b, _ = S.mc_conditional_functional(0.5, 0.375, 1.0, 1.0, 10_000, 2, analytic="wishart")
        for ra, rb in zip(a, b):
            assert rb.analytic == pytest.approx(ra.analytic, rel=1e-10)

    @given(st.floats(0.05, 30.0), st.floats(0.0, 3.0), st.floats(0.0, 2.0))
    def test_m1_matrix_ratio_is_bessel_ratio(self, z, nu, lam):
        mu = math.sqrt(nu * nu + 4 * lam)
        got = S.matrix_bessel_ratio_m1(nu, mu, z * z / 4)
        assert got == pytest.approx(float(S.bessel_ratio(nu, mu, z)), rel=1e-10)

    def test_needs_enough_paths(self):
        with pytest.raises(DomainError):
            S.mc_conditional_functional(0.5, 0.375, 1.0, 1.0, 100, 1)


class TestArtifacts:
    def test_csv_and_sidecar(self, tmp_path):
        ens = S.simulate(M.gen_dunkl_1d(1.0, 0.5), 1.0, [0.5, 1.0], 3, 11)
        out = tmp_path / "paths.csv"
        ens.write_csv(out)
        lines = out.read_text().splitlines()
        assert lines[0] == "path_id,time,component_0,functional"
        assert len(lines) == 1 + 3 * 2
        meta = json.loads((tmp_path / "paths.csv.json").read_text())
        assert meta["seed"] == 11 and meta["n_paths"] == 3

    def test_matrix_csv_upper_triangle(self, tmp_path):
        ens = S.simulate_wishart(3, 2, np.eye(2), [1.0], 2, 1)
        out = tmp_path / "w.csv"
        ens.write_csv(out, sidecar=False)
        header = out.read_text().splitlines()[0].split(",")
        assert header == ["path_id", "time", "component_0", "component_1", "component_2",
                          "functional"]
        assert not (tmp_path / "w.csv.json").exists()

    def test_off_grid_marginal(self):
        ens = S.simulate(M.bessel(0.5), 1.0, [1.0], 10, 1)
        with pytest.raises(DomainError):
            ens.marginal(0.9)
