"""Time-inverted transition densities and the checks that characterise them.

``compute_q`` evaluates the transition density of (t^alpha X_{1/t}) from
the original semigroup; the ``check_*`` functions compare it, on a fixed
grid, against homogeneity, the declared factorization, the h-transform
identity, semi-stability and Euler homogeneity of rho and theta.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from timeinv.errors import DomainError, NumericFailure, PreconditionError
from timeinv.models import (HALF_LINE, REAL_LINE, REAL_SPACE, SPD, SPD_PM, WEYL_CHAMBER,
                            ProcessModel, scale_state)
from timeinv.numerics import homogeneity_residual
from timeinv.symmat import from_vector, to_vector

TINY = 1e-300
MAX_DETAILS = 10

DEFAULT_TOL = {
    "homogeneity": 1e-8,
    "factorization": 1e-10,
    "htransform": 1e-9,
    "h-invariance": 1e-9,
    "semistable": 1e-12,
    "euler": 1e-5,
}


@dataclass
class CheckReport:
    check: str
    model: str
    grid: dict
    tolerance: float
    max_rel_err: float
    passed: bool
    details: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    def to_dict(self) -> dict:
        """JSON-ready form; non-finite errors become null."""
        return {
            "check": self.check,
            "model": self.model,
            "grid": self.grid,
            "tolerance": self.tolerance,
            "max_rel_err": _finite_or_none(self.max_rel_err),
            "pass": self.passed,
            "details": [{**d, "rel_err": _finite_or_none(d.get("rel_err"))}
                        for d in self.failures + self.details],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def summary(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return (f"[{flag}] {self.check:<13} {self.model:<20} "
                f"max_rel_err={self.max_rel_err:.3e} tol={self.tolerance:.1e}")


def _finite_or_none(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else None


REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "CheckReport",
    "type": "object",
    "required": ["check", "model", "grid", "tolerance", "max_rel_err", "pass", "details"],
    "properties": {
        "check": {"type": "string"},
        "model": {"type": "string"},
        "grid": {"type": "object"},
        "tolerance": {"type": "number", "exclusiveMinimum": 0},
        "max_rel_err": {"type": ["number", "null"]},
        "pass": {"type": "boolean"},
        "config": {"type": "object"},
        "details": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["point"],
                "properties": {
                    "point": {"type": "object"},
                    "observed": {"type": ["number", "null"]},
                    "expected": {"type": ["number", "null"]},
                    "rel_err": {"type": ["number", "null"]},
                    "error": {"type": "string"},
                },
            },
        },
    },
    "additionalProperties": False,
}


@dataclass
class InversionGrid:
    x: list
    a_points: list
    b_points: list
    s_values: list = field(default_factory=lambda: [0.4, 0.8, 1.2])
    deltas: list = field(default_factory=lambda: [0.3, 0.7])
    lambda_scales: list = field(default_factory=lambda: [0.5, 2.0])
    t_values: list = field(default_factory=lambda: [0.4, 0.8, 1.2, 1.9])

    def __post_init__(self):
        times = [*self.s_values, *self.deltas, *self.t_values]
        if any(v <= 0 for v in times) or any(v <= 0 for v in self.lambda_scales):
            raise DomainError("grid times and scales must be positive")
        if not (self.x and self.a_points and self.b_points):
            raise DomainError("grid needs x, a and b points")

    def windows(self):
        return [(s, s + d) for d in self.deltas for s in self.s_values]

    def describe(self) -> dict:
        def plain(v):
            return np.asarray(v, dtype=float).tolist()
        return {
            "x": [plain(v) for v in self.x],
            "a_points": [plain(v) for v in self.a_points],
            "b_points": [plain(v) for v in self.b_points],
            "s_values": list(self.s_values),
            "deltas": list(self.deltas),
            "lambda_scales": list(self.lambda_scales),
            "t_values": list(self.t_values),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "InversionGrid":
        allowed = {"x", "a_points", "b_points", "s_values", "deltas", "lambda_scales",
                   "t_values"}
        unknown = set(doc) - allowed
        if unknown:
            raise DomainError(f"unknown grid keys {sorted(unknown)}")
        conv = {k: [np.asarray(p, dtype=float) for p in doc[k]]
                for k in ("x", "a_points", "b_points") if k in doc}
        rest = {k: [float(v) for v in doc[k]] for k in doc if k not in conv}
        return cls(**conv, **rest)


def _rotation(m: int) -> np.ndarray:
    if m == 1:
        return np.eye(1)
    q, _ = np.linalg.qr(np.arange(1, m * m + 1, dtype=float).reshape(m, m) ** 0.5
                        + np.eye(m))
    return q


def _pd_points(m: int) -> list:
    d = np.diag(np.linspace(0.5, 2.0, m)) if m > 1 else np.array([[0.5]])
    q = _rotation(m)
    rot = q @ np.diag(np.linspace(0.7, 1.6, m)) @ q.T if m > 1 else np.array([[1.6]])
    return [np.eye(m), d, 0.5 * (rot + rot.T)]


def _vector_points(n: int) -> list:
    base = [np.linspace(0.5, 2.0, n),
            np.array([1.0, -0.5, 0.7, 1.3, -0.9][:n] + [0.4] * max(0, n - 5)),
            np.array([-1.2, 0.4, 1.1, -0.6, 0.8][:n] + [-0.3] * max(0, n - 5))]
    return base


def standard_grid(model: ProcessModel) -> InversionGrid:
    """The fixed evaluation grid for a model's domain."""
    d = model.domain
    if d == HALF_LINE:
        pts = [0.5, 1.0, 2.0]
        return InversionGrid(x=pts, a_points=pts, b_points=pts)
    if d == REAL_LINE:
        pts = [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0]
        return InversionGrid(x=[-1.0, 0.5, 1.0, 2.0], a_points=pts, b_points=pts)
    if d == REAL_SPACE:
        pts = _vector_points(model.state_shape[0])
        return InversionGrid(x=pts, a_points=pts, b_points=pts)
    if d == WEYL_CHAMBER:
        m = model.state_shape[0]
        pts = [np.array(c) for c in itertools.combinations([0.5, 1.0, 2.0], m)]
        return InversionGrid(x=pts, a_points=pts, b_points=pts)
    if d == SPD:
        pts = _pd_points(model.state_shape[0])
        return InversionGrid(x=pts, a_points=pts, b_points=pts)
    if d == SPD_PM:
        pos = _pd_points(model.state_shape[0])
        both = pos + [-p for p in pos]
        return InversionGrid(x=pos + [-pos[1]], a_points=both, b_points=both)
    raise DomainError(f"no standard grid for domain {d}")


# ---------------------------------------------------------------------------
# time-inverted densities


def log_compute_q(model: ProcessModel, x, s: float, t: float, a, b) -> float:
    if not 0 < s < t:
        raise DomainError("compute_q needs 0 < s < t")
    al = model.alpha
    bt = scale_state(b, t ** -al, model)
    as_ = scale_state(a, s ** -al, model)
    num1 = model.log_density(1 / t, x, bt)
    num2 = model.log_density(1 / s - 1 / t, bt, as_)
    den = model.log_density(1 / s, x, as_)
    if not np.isfinite(den):
        raise NumericFailure("compute_q: denominator density p_{1/s}(x, a/s^alpha) vanishes")
    for v, name in ((num1, "p_{1/t}(x, b/t^alpha)"),
                    (num2, "p_{1/s-1/t}(b/t^alpha, a/s^alpha)")):
        if np.isnan(v):
            raise NumericFailure(f"compute_q: factor {name} is not a number")
    return float(-model.state_dim * al * math.log(t) + num1 + num2 - den)


def compute_q(model: ProcessModel, x, s: float, t: float, a, b) -> float:
    """Transition density from a at time s to b at time t of (u^alpha X_{1/u})."""
    return math.exp(log_compute_q(model, x, s, t, a, b))


def _require_symmetric(model: ProcessModel):
    f = model.factorization
    if f is None:
        raise PreconditionError(f"{model.name} declares no factorization")
    if not f.symmetric:
        raise PreconditionError(f"{model.name}: Phi is not declared symmetric")
    return f


def log_inverted_density(model: ProcessModel, x, t, a, b):
    f = _require_symmetric(model)
    return (f.log_phi(x, b) - f.log_phi(x, a) + t * f.rho(x)
            + model.base_log_density(t, a, b))


def inverted_density(model: ProcessModel, x, t, a, b):
    """Phi(x,b)/Phi(x,a) e^{t rho(x)} p_t(a,b): the law of the inverted process.

    For a model declared as an h-transform, p is the density of the model
    it is an h-transform of (the inverted processes coincide).
    """
    out = np.exp(log_inverted_density(model, x, t, a, b))
    return out if np.ndim(out) else float(out)


# ---------------------------------------------------------------------------
# checks


def rel_err(a: float, b: float) -> float:
    if a == b:
        return 0.0
    if not (np.isfinite(a) and np.isfinite(b)):
        return math.inf
    return abs(a - b) / max(abs(a), abs(b), TINY)


def log_rel_err(la: float, lb: float) -> float:
    """Relative error of exp(la) vs exp(lb) without leaving log space."""
    if la == lb:
        return 0.0
    if not (np.isfinite(la) and np.isfinite(lb)):
        return math.inf
    return -math.expm1(-abs(la - lb))


class _Collector:
    def __init__(self, check, model, grid, tol):
        self.check, self.model, self.tol = check, model, tol
        self.grid = grid.describe() if isinstance(grid, InversionGrid) else grid
        self.rows = []
        self.failures = []

    def add(self, point: dict, observed: float, expected: float, err: float):
        self.rows.append({"point": _plain(point), "observed": observed,
                          "expected": expected, "rel_err": err})

    def fail(self, point: dict, exc: Exception):
        self.failures.append({"point": _plain(point), "error": f"{type(exc).__name__}: {exc}",
                              "rel_err": math.inf})

    def run(self, point: dict, fn: Callable[[], tuple]):
        try:
            observed, expected, err = fn()
        except (NumericFailure, DomainError, OverflowError, FloatingPointError) as exc:
            self.fail(point, exc)
            return
        self.add(point, observed, expected, err)

    def report(self) -> CheckReport:
        errs = [r["rel_err"] for r in self.rows]
        worst = max(errs) if errs else math.inf
        if self.failures:
            worst = math.inf
        passed = bool(worst <= self.tol)
        order = sorted(range(len(self.rows)), key=lambda i: (-self.rows[i]["rel_err"], i))
        details = [self.rows[i] for i in order[:MAX_DETAILS]]
        return CheckReport(self.check, self.model, self.grid, self.tol,
                           float(worst), passed, details, self.failures)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _grid(model, grid):
    return grid if grid is not None else standard_grid(model)


def check_homogeneity(model: ProcessModel, grid: InversionGrid | None = None,
                      tol: float = DEFAULT_TOL["homogeneity"]) -> CheckReport:
    """q_{s,s+d} must not depend on s for every window length d."""
    grid = _grid(model, grid)
    col = _Collector("homogeneity", model.name, grid, tol)
    s0 = grid.s_values[0]
    for d in grid.deltas:
        for x, a, b in itertools.product(grid.x, grid.a_points, grid.b_points):
            try:
                ref = log_compute_q(model, x, s0, s0 + d, a, b)
            except (NumericFailure, DomainError) as exc:
                col.fail({"x": x, "a": a, "b": b, "s": s0, "t": s0 + d}, exc)
                continue
            for s in grid.s_values[1:]:
                def one(s=s):
                    lq = log_compute_q(model, x, s, s + d, a, b)
                    return math.exp(lq), math.exp(ref), log_rel_err(lq, ref)
                col.run({"x": x, "a": a, "b": b, "s": s, "t": s + d, "s_ref": s0}, one)
    return col.report()


def check_factorization(model: ProcessModel, grid: InversionGrid | None = None,
                        tol: float = DEFAULT_TOL["factorization"]) -> CheckReport:
    """Reconstruction of the density and conditions 1-3 (plus symmetry)."""
    f = model.factorization
    if f is None:
        raise PreconditionError(f"{model.name} declares no factorization")
    grid = _grid(model, grid)
    col = _Collector("factorization", model.name, grid, tol)
    two_over_alpha = 2 / model.alpha
    for t, x, y in itertools.product(grid.t_values, grid.x, grid.b_points):
        def recon(t=t, x=x, y=y):
            lp = float(model.log_density(t, x, y))
            lf = float(model.factorized_log_density(t, x, y))
            return math.exp(lf), math.exp(lp), log_rel_err(lf, lp)
        col.run({"part": "a_reconstruction", "t": t, "x": x, "y": y}, recon)
    for lam, x, y in itertools.product(grid.lambda_scales, grid.x, grid.b_points):
        def cond1(lam=lam, x=x, y=y):
            l1 = float(f.log_phi(scale_state(x, lam, model), y))
            l2 = float(f.log_phi(x, scale_state(y, lam, model)))
            return math.exp(l1), math.exp(l2), log_rel_err(l1, l2)
        col.run({"part": "b_phi_scaling", "lambda": lam, "x": x, "y": y}, cond1)
    for lam, x in itertools.product(grid.lambda_scales, grid.x):
        def cond2(lam=lam, x=x):
            r1 = float(f.rho(scale_state(x, lam, model)))
            r2 = lam ** two_over_alpha * float(f.rho(x))
            return r1, r2, rel_err(r1, r2)
        col.run({"part": "c_rho_degree", "lambda": lam, "x": x}, cond2)
    for lam, y in itertools.product(grid.lambda_scales, grid.b_points):
        def cond3(lam=lam, y=y):
            l1 = float(f.log_theta(scale_state(y, lam, model)))
            l2 = f.beta * math.log(lam) + float(f.log_theta(y))
            return math.exp(l1), math.exp(l2), log_rel_err(l1, l2)
        col.run({"part": "d_theta_degree", "lambda": lam, "y": y}, cond3)
    if f.symmetric:
        for x, y in itertools.product(grid.x, grid.b_points):
            def sym(x=x, y=y):
                l1, l2 = float(f.log_phi(x, y)), float(f.log_phi(y, x))
                return math.exp(l1), math.exp(l2), log_rel_err(l1, l2)
            col.run({"part": "e_symmetry", "x": x, "y": y}, sym)
    return col.report()


def check_htransform_identity(model: ProcessModel, grid: InversionGrid | None = None,
                              tol: float = DEFAULT_TOL["htransform"]) -> CheckReport:
    """compute_q over (s, s+t) against Phi(x,b)/Phi(x,a) e^{t rho(x)} p_t(a,b)."""
    _require_symmetric(model)
    grid = _grid(model, grid)
    col = _Collector("htransform", model.name, grid, tol)
    for d, s in itertools.product(grid.deltas, grid.s_values):
        for x, a, b in itertools.product(grid.x, grid.a_points, grid.b_points):
            def one(d=d, s=s, x=x, a=a, b=b):
                lq = log_compute_q(model, x, s, s + d, a, b)
                li = float(log_inverted_density(model, x, d, a, b))
                return math.exp(lq), math.exp(li), log_rel_err(lq, li)
            col.run({"x": x, "a": a, "b": b, "s": s, "t": d}, one)
    return col.report()


def check_h_invariance(model_a: ProcessModel, model_b: ProcessModel,
                       grid: InversionGrid | None = None,
                       tol: float = DEFAULT_TOL["h-invariance"]) -> CheckReport:
    """The two models must induce the same time-inverted densities."""
    if (model_a.domain != model_b.domain or model_a.state_shape != model_b.state_shape
            or model_a.alpha != model_b.alpha):
        raise PreconditionError("h-invariance needs models with the same domain and alpha")
    grid = _grid(model_a, grid)
    col = _Collector("h-invariance", f"{model_a.name}~{model_b.name}", grid, tol)
    for d, s in itertools.product(grid.deltas, grid.s_values):
        for x, a, b in itertools.product(grid.x, grid.a_points, grid.b_points):
            def one(d=d, s=s, x=x, a=a, b=b):
                l1 = log_compute_q(model_a, x, s, s + d, a, b)
                l2 = log_compute_q(model_b, x, s, s + d, a, b)
                return math.exp(l1), math.exp(l2), log_rel_err(l1, l2)
            col.run({"x": x, "a": a, "b": b, "s": s, "t": s + d}, one)
    return col.report()


def check_semistable(model: ProcessModel, grid: InversionGrid | None = None,
                     tol: float = DEFAULT_TOL["semistable"]) -> CheckReport:
    """p_t(x,y) = t^{-n gamma} p_1(x/t^gamma, y/t^gamma) with gamma = alpha/2.

    For a model declared as an h-transform the identity is checked on the
    model it is an h-transform of.
    """
    target = model.base or model
    grid = _grid(model, grid)
    col = _Collector("semistable", model.name, grid, tol)
    gamma = model.alpha / 2
    n = model.state_dim
    for t, x, y in itertools.product(grid.t_values, grid.x, grid.b_points):
        def one(t=t, x=x, y=y):
            c = t ** -gamma
            l1 = float(target.log_density(t, x, y))
            l2 = -n * gamma * math.log(t) + float(
                target.log_density(1.0, scale_state(x, c, model), scale_state(y, c, model)))
            return math.exp(l1), math.exp(l2), log_rel_err(l1, l2)
        col.run({"t": t, "x": x, "y": y}, one)
    return col.report()


def _as_vector_fn(fn: Callable, model: ProcessModel) -> tuple[Callable, Callable]:
    """Express a state function through its free coordinates (upper triangle for matrices)."""
    if model.is_matrix:
        m = model.state_shape[0]
        return (lambda v: float(fn(from_vector(v, m)))), (lambda s: to_vector(s))
    if model.state_shape:
        return (lambda v: float(fn(v))), (lambda s: np.asarray(s, dtype=float))
    return (lambda v: float(fn(v[0]))), (lambda s: np.atleast_1d(np.asarray(s, float)))


def check_euler(model: ProcessModel, grid: InversionGrid | None = None,
                tol: float = DEFAULT_TOL["euler"]) -> CheckReport:
    """Euler's identity for rho (degree 2/alpha) and theta (degree beta)."""
    f = model.factorization
    if f is None:
        raise PreconditionError(f"{model.name} declares no factorization")
    grid = _grid(model, grid)
    col = _Collector("euler", model.name, grid, tol)
    parts = (("rho", f.rho, 2 / model.alpha, grid.x),
             ("theta", f.theta, f.beta, grid.b_points))
    for label, fn, degree, points in parts:
        vf, to_vec = _as_vector_fn(fn, model)
        for p in points:
            def one(p=p, vf=vf, to_vec=to_vec, degree=degree):
                v = to_vec(p)
                res = homogeneity_residual(vf, v, degree)
                scale = max(abs(degree * vf(v)), abs(vf(v)), TINY)
                return res, 0.0, res / scale
            col.run({"function": label, "degree": degree, "point": p}, one)
    return col.report()


CHECKS = {
    "homogeneity": check_homogeneity,
    "factorization": check_factorization,
    "htransform": check_htransform_identity,
    "semistable": check_semistable,
    "euler": check_euler,
}
