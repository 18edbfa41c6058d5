"""Verification batteries shared by ``timeinv verify`` and the test suite.

Each battery item returns a :class:`SuiteResult`; analytic items wrap one
or more :class:`~timeinv.inversion.CheckReport`, Monte Carlo items carry
their test statistic and threshold.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from timeinv import inversion as inv
from timeinv import matrix_special as ms
from timeinv import models as M
from timeinv import simulate as S
from timeinv.errors import NumericFailure, TimeInvError
from timeinv.numerics import (Tolerance, bessel_i, cdf_from_density, integrate_1d,
                              ks_one_sample, log_bessel_ix)

QUAD_TOL = Tolerance(1e-11, 1e-14)

# catalog configurations exercised by the analytic battery
FACTORIZED = [
    {"model": "brownian", "n": 1},
    {"model": "brownian", "n": 2},
    {"model": "brownian_drift", "n": 1, "b": 0.7},
    {"model": "brownian_drift", "n": 2, "b": [0.7, -0.3]},
    {"model": "bessel", "nu": 0.5},
    {"model": "bessel", "nu": 1.5},
    {"model": "squared_bessel", "delta": 3},
    {"model": "gen_dunkl1d", "k": 1.0, "lambda": 0.5},
    {"model": "dunkl1d", "k": 1.5},
    {"model": "dunkl_orthogonal", "n": 3, "roots": [[1, -1, 0], [1, 1, 0]],
     "k": [0.75, 1.25], "lambda": [0.5, 0.3]},
    {"model": "wishart", "delta": 4, "m": 2},
    {"model": "skew_wishart", "delta": 4, "m": 2, "lambda": 0.5},
]
H_TRANSFORMS = [
    {"model": "bessel_wide", "nu": 0.5, "c": 1.2},
    {"model": "eigenvalues_kmg", "base": "brownian", "m": 2},
]
NEGATIVE_CONTROL = {"model": "ornstein_uhlenbeck", "theta": 1.0}
H_INVARIANCE_PAIRS = [
    ({"model": "bessel", "nu": 0.5}, {"model": "bessel_wide", "nu": 0.5, "c": 1.2}),
    ({"model": "brownian", "n": 1}, {"model": "brownian_drift", "n": 1, "b": 0.7}),
]
EQ_IDENTITY_MODELS = [
    {"model": "bessel", "nu": 0.5},
    {"model": "squared_bessel", "delta": 3},
    {"model": "gen_dunkl1d", "k": 1.0, "lambda": 0.5},
    {"model": "wishart", "delta": 4, "m": 2},
]


@dataclass
class SuiteResult:
    name: str
    passed: bool
    statistic: float
    threshold: float
    relation: str
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return (f"[{flag}] {self.name:<44} {self.statistic:.3e} {self.relation} "
                f"{self.threshold:.1e}  ({self.seconds:.1f}s)")

    def to_dict(self) -> dict:
        stat = self.statistic if math.isfinite(self.statistic) else None
        return {"name": self.name, "pass": self.passed, "statistic": stat,
                "threshold": self.threshold, "relation": self.relation,
                "details": self.details, "seconds": round(self.seconds, 3)}


def _timed(fn: Callable[[], SuiteResult]) -> SuiteResult:
    t0 = time.perf_counter()
    try:
        res = fn()
    except (TimeInvError, ArithmeticError, ValueError) as exc:
        res = SuiteResult(getattr(fn, "__name__", "check"), False, math.inf, 0.0, "<=",
                          {"error": f"{type(exc).__name__}: {exc}"})
    res.seconds = time.perf_counter() - t0
    return res


def _upper(name, value, tol, details=None) -> SuiteResult:
    return SuiteResult(name, bool(value <= tol), float(value), tol, "<=", details or {})


def _lower(name, value, bound, details=None) -> SuiteResult:
    return SuiteResult(name, bool(value > bound), float(value), bound, ">", details or {})


def _reports_result(name, reports, tol) -> SuiteResult:
    worst = max(r.max_rel_err for r in reports)
    ok = all(r.passed for r in reports)
    return SuiteResult(name, ok, worst, tol, "<=",
                       {"reports": [r.to_dict() for r in reports]})


# ---------------------------------------------------------------------------
# analytic items


def factorization_suite(tol: float = 1e-10) -> SuiteResult:
    reports = [inv.check_factorization(M.model_from_config(c), tol=tol) for c in FACTORIZED]
    return _reports_result("factorization (all factorized models)", reports, tol)


def homogeneity_discrimination(tol: float = 1e-8, fail_above: float = 1e-2) -> SuiteResult:
    reports = [inv.check_homogeneity(M.model_from_config(c), tol=tol)
               for c in FACTORIZED + H_TRANSFORMS]
    ou = inv.check_homogeneity(M.model_from_config(NEGATIVE_CONTROL), tol=tol)
    res = _reports_result("homogeneity pass + OU fail", reports, tol)
    res.details["negative_control"] = ou.to_dict()
    res.passed = res.passed and ou.max_rel_err > fail_above
    return res


def inverted_density_identity(tol: float = 1e-9) -> SuiteResult:
    reports = [inv.check_htransform_identity(M.model_from_config(c), tol=tol)
               for c in EQ_IDENTITY_MODELS]
    return _reports_result("inverted density vs compute_q", reports, tol)


def h_invariance(tol: float = 1e-9) -> SuiteResult:
    reports = [inv.check_h_invariance(M.model_from_config(a), M.model_from_config(b), tol=tol)
               for a, b in H_INVARIANCE_PAIRS]
    return _reports_result("h-invariance of time inversion", reports, tol)


def semistability(tol: float = 1e-12) -> SuiteResult:
    reports = [inv.check_semistable(M.model_from_config(c), tol=tol)
               for c in FACTORIZED + H_TRANSFORMS]
    ou = inv.check_semistable(M.model_from_config(NEGATIVE_CONTROL), tol=tol)
    res = _reports_result("semi-stability + OU fail", reports, tol)
    res.details["negative_control"] = ou.to_dict()
    res.passed = res.passed and not ou.passed
    return res


def euler_suite(tol: float = 1e-5) -> SuiteResult:
    reports = [inv.check_euler(M.model_from_config(c), tol=tol) for c in FACTORIZED]
    return _reports_result("Euler homogeneity of rho and theta", reports, tol)


def bessel_ode_suite(tol: float = 1e-6) -> SuiteResult:
    worst, rows = 0.0, []
    for nu in (0.5, 1.5):
        for c in (0.5, 1.0, 2.0):
            for z in (0.25, 0.5, 1.0, 2.0, 4.0):
                r = M.wide_bessel_ode_residual(nu, c, 1.0, z)
                phi = math.exp(float(log_bessel_ix(nu, c * z)))
                rel = abs(r) / phi
                worst = max(worst, rel)
                rows.append({"nu": nu, "k_over_sigma": c, "z": z, "rel_residual": rel})
    return _upper("Bessel ODE residual / phi", worst, tol, {"rows": rows})


def special_function_reductions(tol: float = 1e-10) -> SuiteResult:
    xs = np.concatenate([np.geomspace(1e-3, 0.1, 5), np.linspace(0.25, 10.0, 40)])
    worst_bessel = 0.0
    for nu in (0.5, 1.0, 2.5):
        # series definition det^(nu/2) 0F1(nu + 1; x) / Gamma_1(nu + 1), not the m=1 shortcut
        mat = np.array([x ** (nu / 2) * ms.hyper_0f1(nu + 1, [[x]], k_max=60)[0]
                        / ms.gamma_m(1, nu + 1) for x in xs])
        ref = bessel_i(nu, 2 * np.sqrt(xs))
        worst_bessel = max(worst_bessel, float(np.max(np.abs(mat - ref) / ref)))
    rng = np.random.default_rng(11)
    worst_zonal = 0.0
    for m in range(1, 5):
        eigs = rng.uniform(0.1, 2.0, size=(5, m))
        for k in range(1, 7):
            total = sum(ms.zonal(kappa, eigs) for kappa in ms.partitions(k, m))
            ref = eigs.sum(axis=1) ** k
            worst_zonal = max(worst_zonal, float(np.max(np.abs(total - ref) / ref)))
    worst_gamma = max(abs(ms.gamma_m(1, a) - math.gamma(a)) / math.gamma(a)
                      for a in (0.3, 1.0, 2.5, 7.0))
    worst = max(worst_bessel, worst_zonal, worst_gamma)
    return _upper("matrix Bessel / zonal / Gamma_m reductions", worst, tol,
                  {"bessel_m1": worst_bessel, "zonal_normalization": worst_zonal,
                   "gamma_1": worst_gamma})


def model_reductions(tol: float = 1e-10) -> SuiteResult:
    errs = {}
    ts = (0.3, 1.0, 2.5)
    xs = np.array([0.2, 0.7, 1.0, 2.3])
    ys = np.array([0.1, 0.5, 1.4, 3.0])
    for delta in (2.5, 3.0, 5.0):
        w, b = M.wishart(delta, 1), M.squared_bessel(delta)
        e = 0.0
        for t in ts:
            for x in xs:
                l1 = w.log_density(t, np.full((len(ys), 1, 1), x), ys.reshape(-1, 1, 1))
                l2 = b.log_density(t, x, ys)
                e = max(e, float(np.max(np.abs(np.expm1(l1 - l2)))))
        errs[f"wishart({delta},1)~squared_bessel"] = e
    for k in (0.75, 1.0, 2.0):
        g, b = M.gen_dunkl_1d(k, 0.0), M.bessel(k - 0.5)
        e = 0.0
        for t in ts:
            for x in xs:
                l1, l2 = g.log_density(t, x, ys), b.log_density(t, x, ys)
                e = max(e, float(np.max(np.abs(np.expm1(l1 - l2)))))
        errs[f"gen_dunkl1d({k},0)~bessel"] = e
    for k in (0.5, 1.5):
        d, g = M.dunkl_1d(k), M.gen_dunkl_1d(k, k)
        pts = np.concatenate([-ys[::-1], ys])
        e = 0.0
        for t in ts:
            for x in (-1.0, 0.5, 2.0):
                l1, l2 = d.log_density(t, x, pts), g.log_density(t, x, pts)
                e = max(e, float(np.max(np.abs(np.expm1(l1 - l2)))))
        errs[f"dunkl1d({k})~gen_dunkl1d({k},{k})"] = e
    return _upper("model reductions", max(errs.values()), tol, errs)


def _normalization_1d(model, x, t=1.0):
    lo = -np.inf if model.domain == M.REAL_LINE else 0.0
    return integrate_1d(lambda y: model.density(t, x, y), lo, np.inf, QUAD_TOL).value


def _ck_1d(model, x, y, s, t):
    lo = -np.inf if model.domain == M.REAL_LINE else 0.0
    val = integrate_1d(lambda z: model.density(s, x, z) * model.density(t, z, y), lo, np.inf,
                       QUAD_TOL).value
    return val, model.density(s + t, x, y)


def _chamber_integral(fn, lower=-np.inf):
    """Integral over {y1 < y2} of fn(y1, y2) (both arrays)."""
    def outer(y2):
        out = np.empty_like(y2)
        for i, v in enumerate(y2):
            if v <= lower:
                out[i] = 0.0
                continue
            out[i] = integrate_1d(lambda y1: fn(y1, np.full_like(y1, v)), lower, v,
                                  QUAD_TOL).value
        return out
    return integrate_1d(outer, lower, np.inf, QUAD_TOL).value


def analytic_consistency(norm_tol: float = 1e-6, ck_tol: float = 1e-6) -> SuiteResult:
    models_1d = [M.bessel(0.5), M.bessel_wide(0.5, 1.2), M.squared_bessel(3.0),
                 M.gen_dunkl_1d(1.0, 0.5)]
    errs = {}
    for mod in models_1d:
        starts = (-1.0, 0.5, 2.0) if mod.domain == M.REAL_LINE else (0.0, 0.5, 2.0)
        errs[f"norm:{mod.name}"] = max(abs(_normalization_1d(mod, x) - 1) for x in starts)
        worst = 0.0
        for x, y in ((0.5, 1.2), (2.0, 0.7)):
            if mod.domain == M.REAL_LINE:
                y = -y if x > 1 else y
            lhs, rhs = _ck_1d(mod, x, y, 0.4, 0.7)
            worst = max(worst, abs(lhs - rhs) / rhs)
        errs[f"ck:{mod.name}"] = worst
    kmg = M.eigenvalues_kmg(M.brownian_motion(1), 2)

    def dens(t, x):
        return lambda y1, y2: kmg.density(t, x, np.stack([y1, y2], axis=-1))
    x = np.array([-0.3, 0.8])
    errs["norm:eigenvalues_kmg"] = abs(_chamber_integral(dens(1.0, x)) - 1)
    y = np.array([0.1, 1.1])
    lhs = _chamber_integral(lambda z1, z2: dens(0.4, x)(z1, z2) * kmg.density(
        0.6, np.stack([z1, z2], axis=-1), np.broadcast_to(y, (len(z1), 2))))
    rhs = kmg.density(1.0, x, y)
    errs["ck:eigenvalues_kmg"] = abs(lhs - rhs) / rhs
    norm = max(v for k, v in errs.items() if k.startswith("norm"))
    ck = max(v for k, v in errs.items() if k.startswith("ck"))
    return SuiteResult("normalization and Chapman-Kolmogorov", norm <= norm_tol and ck <= ck_tol,
                       max(norm, ck), min(norm_tol, ck_tol), "<=", errs)


ANALYTIC = [factorization_suite, homogeneity_discrimination, inverted_density_identity,
            h_invariance, semistability, euler_suite, bessel_ode_suite, special_function_reductions,
            model_reductions, analytic_consistency]


# ---------------------------------------------------------------------------
# Monte Carlo items

MC_SUBSTEPS = 128
KS_LEVEL = 0.01
Z_LIMIT = 3.0


def _ks_against(sample, model_density, lower):
    return ks_one_sample(sample, lambda p: cdf_from_density(model_density, lower, p))


def mc_besq_marginal(paths: int, seed: int) -> SuiteResult:
    rng = S.block_rng(seed, "besq", 0)
    x = S.sample_besq(3.0, 1.0, 1.0, rng, size=paths)
    mod = M.squared_bessel(3.0)
    d, p = _ks_against(x, lambda y: mod.density(1.0, 1.0, y), 0.0)
    return _lower("BESQ(3) exact sampler KS p-value", p, KS_LEVEL, {"ks": d})


def mc_gen_dunkl_marginal(paths: int, seed: int) -> SuiteResult:
    mod = M.gen_dunkl_1d(1.0, 0.5)
    ens = S.simulate(mod, 1.0, [1.0], paths, seed, substeps=MC_SUBSTEPS)
    y = ens.marginal(1.0)
    d, p = _ks_against(y, lambda z: mod.density(1.0, 1.0, z), -np.inf)
    return _lower("GenDunkl1D skew product KS p-value", p, KS_LEVEL,
                  {"ks": d, "negative_fraction": float((y < 0).mean())})


def mc_conditional(paths: int, seed: int) -> SuiteResult:
    rows, notes = S.mc_conditional_functional(0.5, 0.375, 1.0, 1.0, paths, seed,
                                              substeps=MC_SUBSTEPS)
    worst = max(abs(r.z_score) for r in rows)
    return _upper("conditional functional max |z| per bin", worst, Z_LIMIT,
                  {"bins": [r.__dict__ for r in rows], "notes": notes})


def mc_wishart_trace(paths: int, seed: int) -> SuiteResult:
    x0 = np.array([[1.0, 0.3], [0.3, 0.8]])
    delta, m, t = 4, 2, 1.0
    ens = S.simulate_wishart(delta, m, x0, [t], paths, seed, substeps=1)
    tr = np.trace(ens.marginal(t), axis1=1, axis2=2)
    expect = np.trace(x0) + delta * m * t
    z = (tr.mean() - expect) / (tr.std(ddof=1) / math.sqrt(paths))
    return _upper("Wishart(4,2) E[Tr X_t] |z|", abs(z), Z_LIMIT,
                  {"mean": float(tr.mean()), "expected": float(expect), "scheme": ens.scheme})


def mc_skew_wishart_sign(paths: int, seed: int) -> SuiteResult:
    mod = M.skew_wishart(3.0, 1, 0.5)
    x0 = np.array([[1.0]])
    ens = S.simulate(mod, x0, [1.0], paths, seed, substeps=MC_SUBSTEPS)
    frac = float((ens.marginal(1.0)[:, 0, 0] > 0).mean())
    ref = integrate_1d(lambda y: mod.density(1.0, x0, y.reshape(-1, 1, 1)), 0.0, np.inf,
                       QUAD_TOL).value
    z = (frac - ref) / math.sqrt(ref * (1 - ref) / paths)
    return _upper("skew-Wishart m=1 sign fraction |z|", abs(z), Z_LIMIT,
                  {"empirical": frac, "analytic": ref})


def mc_inversion_law(paths: int, seed: int) -> SuiteResult:
    u = 0.5
    out, worst = {}, 1.0
    for mod in (M.bessel(0.5), M.gen_dunkl_1d(1.0, 0.5)):
        ens = S.simulate(mod, 1.0, S.reciprocal_grid([u]), paths, seed, substeps=MC_SUBSTEPS)
        y = S.invert_paths(ens, mod.alpha, [u]).marginal(u)
        lower = -np.inf if mod.domain == M.REAL_LINE else 0.0
        d, p = _ks_against(y, lambda z: inv.inverted_density(mod, 1.0, u, 0.0, z), lower)
        out[mod.name] = {"ks": d, "p": p}
        worst = min(worst, p)
    return _lower("inversion law KS p-value (min)", worst, KS_LEVEL, out)


MONTECARLO = [mc_besq_marginal, mc_gen_dunkl_marginal, mc_conditional, mc_wishart_trace,
              mc_skew_wishart_sign, mc_inversion_law]


def run_analytic() -> list[SuiteResult]:
    return [_timed(fn) for fn in ANALYTIC]


def run_montecarlo(paths: int = 50_000, seed: int = 42) -> list[SuiteResult]:
    out = []
    for i, fn in enumerate(MONTECARLO):
        def call(fn=fn, i=i):
            return fn(paths, seed + i)
        call.__name__ = fn.__name__
        out.append(_timed(call))
    return out
