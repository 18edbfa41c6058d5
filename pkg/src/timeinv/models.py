"""Catalog of Markov processes with analytic transition densities.

Every density is evaluated in log space and broadcast over leading batch
axes; the trailing axes hold one state (none for scalar models, ``(n,)``
for vector models, ``(m, m)`` for matrix models).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable

import numpy as np
from scipy.linalg import null_space

from timeinv import matrix_special as ms
from timeinv.errors import ConfigError, DomainError
from timeinv.numerics import first_derivative, log_bessel_i, log_bessel_ix, second_derivative
from timeinv.symmat import conjugate_eigenvalues

BOUNDARY_CUTOFF = 1e-8
LOG_2PI = math.log(2 * math.pi)

# domain descriptors
REAL_LINE = "real_line"
HALF_LINE = "half_line"
REAL_SPACE = "real_space"
WEYL_CHAMBER = "weyl_chamber"
SPD = "spd"
SPD_PM = "spd_pm"


@dataclass(frozen=True)
class Factorization:
    """Phi, theta, rho in log form, with theta's homogeneity degree beta."""

    log_phi: Callable
    log_theta: Callable
    rho: Callable
    beta: float
    symmetric: bool = True

    def phi(self, x, y):
        return np.exp(self.log_phi(x, y))

    def theta(self, y):
        return np.exp(self.log_theta(y))


@dataclass(frozen=True)
class HTransform:
    log_h: Callable
    nu: float = 0.0

    def h(self, x):
        return np.exp(self.log_h(x))

    @classmethod
    def from_function(cls, h: Callable, nu: float = 0.0) -> "HTransform":
        return cls(lambda x: np.log(h(x)), nu)


@dataclass(frozen=True)
class ProcessModel:
    """A named process: degree alpha, state shape, domain and density oracle.

    When ``htransform`` is set, ``factorization`` describes the model the
    density is an h-transform of (``base``), not the density itself.
    """

    name: str
    alpha: float
    state_shape: tuple
    domain: str
    log_density_fn: Callable = field(repr=False)
    factorization: Factorization | None = field(default=None, repr=False)
    htransform: HTransform | None = field(default=None, repr=False)
    base: "ProcessModel | None" = field(default=None, repr=False)
    params: dict = field(default_factory=dict)
    check_state: Callable | None = field(default=None, repr=False)

    @property
    def state_dim(self) -> int:
        if len(self.state_shape) == 2:
            m = self.state_shape[0]
            return m * (m + 1) // 2
        return int(np.prod(self.state_shape)) if self.state_shape else 1

    @property
    def is_matrix(self) -> bool:
        return len(self.state_shape) == 2

    def log_density(self, t, x, y):
        if np.any(np.asarray(t) <= 0):
            raise DomainError("time must be positive")
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.check_state is not None:
            self.check_state(x, "x")
            self.check_state(y, "y")
        with np.errstate(divide="ignore"):
            out = self.log_density_fn(t, x, y)
        return out if np.ndim(out) else float(out)

    def density(self, t, x, y):
        lp = np.asarray(self.log_density(t, x, y))
        if np.any(lp > 709.78):
            raise OverflowError("density overflows; use log_density")
        out = np.exp(lp)
        return out if out.ndim else float(out)

    def factorized_log_density(self, t, x, y):
        """Density rebuilt from the declared factorization (and h-transform)."""
        f = self.factorization
        if f is None:
            raise ValueError(f"{self.name} declares no factorization")
        c = np.asarray(t, dtype=float) ** (-self.alpha / 2)
        xs, ys = _scale(x, c, self), _scale(y, c, self)
        out = (-0.5 * self.state_dim * self.alpha * np.log(t) + f.log_phi(xs, ys)
               + f.log_theta(ys) + f.rho(xs) + f.rho(ys))
        if self.htransform is not None:
            h = self.htransform
            out = out + h.log_h(y) - h.log_h(x) - h.nu * t
        return out

    def base_log_density(self, t, x, y):
        """Density of the factorized (un-h-transformed) model."""
        return (self.base or self).log_density(t, x, y)


def _scale(x, c, model: ProcessModel):
    x = np.asarray(x, dtype=float)
    c = np.asarray(c, dtype=float)
    extra = (1,) * len(model.state_shape)
    return x * c.reshape(c.shape + extra) if c.ndim else x * c


def scale_state(x, c, model: ProcessModel):
    return _scale(x, c, model)


# ---------------------------------------------------------------------------
# state checks


def _half_line_check(x, label):
    if np.any(np.asarray(x) < 0):
        raise DomainError(f"{label} must lie in [0, inf)")


def _finite_check(x, label):
    if not np.all(np.isfinite(x)):
        raise DomainError(f"{label} must be finite")


def _chamber_check(lower=None):
    def check(x, label):
        x = np.asarray(x)
        if np.any(np.diff(x, axis=-1) <= 0):
            raise DomainError(f"{label} must be strictly increasing (Weyl chamber)")
        if lower is not None and np.any(x[..., 0] < lower):
            raise DomainError(f"{label} must be nonnegative")
    return check


def _spd_check(allow_negative: bool):
    def check(x, label):
        w = np.linalg.eigvalsh(np.asarray(x))
        # a starting point may sit on the boundary (limit branch)
        pos = np.all(w >= 0 if label == "x" and not allow_negative else w > 0, axis=-1)
        neg = np.all(w < 0, axis=-1)
        ok = (pos | neg) if allow_negative else pos
        if not np.all(ok):
            where = "S_m+ or S_m-" if allow_negative else "S_m+"
            raise DomainError(f"{label} must lie in {where}")
    return check


# ---------------------------------------------------------------------------
# Brownian motion and Ornstein-Uhlenbeck


def _sqnorm(v, shape):
    return np.sum(v * v, axis=tuple(range(-len(shape), 0))) if shape else v * v


def _dot(x, y, shape):
    return np.sum(x * y, axis=tuple(range(-len(shape), 0))) if shape else x * y


def brownian_motion(n: int = 1) -> ProcessModel:
    shape = () if n == 1 else (n,)

    def logp(t, x, y):
        return -0.5 * n * (LOG_2PI + np.log(t)) - _sqnorm(y - x, shape) / (2 * t)

    fact = Factorization(
        log_phi=lambda x, y: -0.5 * n * LOG_2PI + _dot(x, y, shape),
        log_theta=lambda y: np.zeros(np.shape(y)[:np.ndim(y) - len(shape)]),
        rho=lambda x: -0.5 * _sqnorm(x, shape),
        beta=0.0,
    )
    return ProcessModel("brownian", 1.0, shape, REAL_LINE if n == 1 else REAL_SPACE,
                        logp, fact, params={"n": n}, check_state=_finite_check)


def brownian_drift(n: int, b) -> ProcessModel:
    shape = () if n == 1 else (n,)
    b = np.asarray(b, dtype=float).reshape(shape)

    def logp(t, x, y):
        t = np.asarray(t, dtype=float)
        shift = b * (t.reshape(t.shape + (1,) * len(shape)) if t.ndim else t)
        return -0.5 * n * (LOG_2PI + np.log(t)) - _sqnorm(y - x - shift, shape) / (2 * t)

    bm = brownian_motion(n)
    h = HTransform(lambda y: _dot(np.asarray(y, dtype=float), b, shape),
                   0.5 * float(np.sum(b * b)))
    return ProcessModel("brownian_drift", 1.0, shape, bm.domain, logp, bm.factorization,
                        h, bm, {"n": n, "b": b.tolist()}, _finite_check)


def ornstein_uhlenbeck(theta: float) -> ProcessModel:
    def logp(t, x, y):
        mean = x * np.exp(-theta * t)
        var = -np.expm1(-2 * theta * t) / (2 * theta)
        return -0.5 * (LOG_2PI + np.log(var)) - (y - mean) ** 2 / (2 * var)

    return ProcessModel("ornstein_uhlenbeck", 1.0, (), REAL_LINE, logp,
                        params={"theta": theta}, check_state=_finite_check)


# ---------------------------------------------------------------------------
# Bessel family


def bessel(nu: float, sigma: float = 1.0) -> ProcessModel:
    s2 = sigma * sigma

    def logp(t, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        st = s2 * np.asarray(t, dtype=float)
        z = x * y / st
        near = x < BOUNDARY_CUTOFF
        xs = np.where(near, 1.0, x)
        literal = (np.log(y / st) + nu * (np.log(y) - np.log(xs))
                   + log_bessel_i(nu, np.where(near, 1.0, z)))
        # x -> 0: (y/x)^nu I_nu(z) = y^(2 nu) (s2 t)^-nu z^-nu I_nu(z)
        limit = (np.log(y / st) + 2 * nu * np.log(y) - nu * np.log(st)
                 + log_bessel_ix(nu, z))
        return np.where(near, limit, literal) - (x * x + y * y) / (2 * st)

    fact = Factorization(
        log_phi=lambda x, y: log_bessel_ix(nu, np.asarray(x) * y / s2) - nu * math.log(s2),
        log_theta=lambda y: (2 * nu + 1) * np.log(y) - math.log(s2),
        rho=lambda x: -np.asarray(x) ** 2 / (2 * s2),
        beta=2 * nu + 1,
    )
    return ProcessModel("bessel", 1.0, (), HALF_LINE, logp, fact,
                        params={"nu": nu, "sigma": sigma}, check_state=_half_line_check)


def log_h_wide(nu: float, c: float):
    """log h_c(x) = log(2^nu Gamma(nu+1) (sqrt(2c) x)^-nu I_nu(sqrt(2c) x))."""
    k = math.sqrt(2 * c)
    const = nu * math.log(2) + math.lgamma(nu + 1)
    return lambda x: const + log_bessel_ix(nu, k * np.asarray(x, dtype=float))


def bessel_wide(nu: float, c: float) -> ProcessModel:
    base = bessel(nu, 1.0)
    h = HTransform(log_h_wide(nu, c), c)
    model = apply_h_transform(base, h, keep_factorization=True)
    return replace(model, name="bessel_wide", params={"nu": nu, "c": c})


def wide_bessel_ode_residual(nu: float, kconst: float, sigma: float, z: float,
                          phi: Callable[[float], float] | None = None) -> float:
    """Residual of phi''/2 + (2nu+1)/(2z) phi' - k^2/(2 sigma^2) phi at z.

    The default phi(z) = (kz/sigma)^{-nu} I_nu(kz/sigma) solves the equation,
    so the residual is finite-difference error only.
    """
    if z <= 0:
        raise DomainError("z must be positive")
    if kconst <= 0 or sigma <= 0:
        raise DomainError("kconst and sigma must be positive")
    if phi is None:
        c = kconst / sigma

        def phi(w):
            return math.exp(float(log_bessel_ix(nu, c * w)))
    h = 0.01 * min(z, 1.0)
    d2 = second_derivative(phi, z, h, points=5)
    d1 = first_derivative(phi, z, h, points=5)
    return 0.5 * d2 + (2 * nu + 1) / (2 * z) * d1 - kconst ** 2 / (2 * sigma ** 2) * phi(z)


def squared_bessel(delta: float) -> ProcessModel:
    nu = delta / 2 - 1

    def logp(t, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        t = np.asarray(t, dtype=float)
        z = np.sqrt(x * y) / t
        near = x < BOUNDARY_CUTOFF
        xs = np.where(near, 1.0, x)
        literal = 0.5 * nu * (np.log(y) - np.log(xs)) + log_bessel_i(nu, np.where(near, 1.0, z))
        # (y/x)^(nu/2) I_nu(z) = y^nu t^-nu z^-nu I_nu(z)
        limit = nu * np.log(y) - nu * np.log(t) + log_bessel_ix(nu, z)
        return -np.log(2 * t) + np.where(near, limit, literal) - (x + y) / (2 * t)

    fact = Factorization(
        log_phi=lambda x, y: log_bessel_ix(nu, np.sqrt(np.asarray(x) * y)),
        log_theta=lambda y: nu * np.log(y) - math.log(2),
        rho=lambda x: -np.asarray(x, dtype=float) / 2,
        beta=nu,
    )
    return ProcessModel("squared_bessel", 2.0, (), HALF_LINE, logp, fact,
                        params={"delta": delta}, check_state=_half_line_check)


# ---------------------------------------------------------------------------
# generalized Dunkl processes


def log_dunkl_kernel(k: float, lam: float):
    """log D_{k,lambda}(z) for the one-dimensional generalized Dunkl kernel."""
    nu = k - 0.5
    mu = math.sqrt(nu * nu + 4 * lam)

    def kernel(z):
        z = np.asarray(z, dtype=float)
        w = np.abs(z)
        a = np.asarray(log_bessel_ix(nu, w))
        if mu == nu:
            # at z = 0 take the lambda -> 0 limit, D(0) = a/2 on both sides
            b = np.where(w == 0, -np.inf, a)
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                b = (mu - nu) * np.log(w) + log_bessel_ix(mu, w)
            b = np.where(w == 0, -np.inf if mu > nu else np.inf, b)
        with np.errstate(divide="ignore", invalid="ignore"):
            plus = np.logaddexp(a, b)
            minus = a + np.log1p(-np.exp(b - a))
        return math.log(0.5) + np.where(z >= 0, plus, minus)

    return kernel


def gen_dunkl_1d(k: float, lam: float) -> ProcessModel:
    kernel = log_dunkl_kernel(k, lam)

    def logp(t, x, y):
        t = np.asarray(t, dtype=float)
        return (-(k + 0.5) * np.log(t) + 2 * k * np.log(np.abs(y))
                + kernel(np.asarray(x) * y / t) - (np.asarray(x) ** 2 + y ** 2) / (2 * t))

    fact = Factorization(
        log_phi=lambda x, y: kernel(np.asarray(x) * y),
        log_theta=lambda y: 2 * k * np.log(np.abs(y)),
        rho=lambda x: -np.asarray(x, dtype=float) ** 2 / 2,
        beta=2 * k,
    )
    return ProcessModel("gen_dunkl1d", 1.0, (), REAL_LINE, logp, fact,
                        params={"k": k, "lambda": lam}, check_state=_finite_check)


def dunkl_1d(k: float) -> ProcessModel:
    return replace(gen_dunkl_1d(k, k), name="dunkl1d", params={"k": k})


def orthonormal_frame(roots: np.ndarray) -> np.ndarray:
    """Rows: roots / sqrt(2) followed by an orthonormal basis of their complement."""
    roots = np.atleast_2d(np.asarray(roots, dtype=float))
    comp = null_space(roots).T
    return np.vstack([roots / math.sqrt(2), comp])


def dunkl_orthogonal(n: int, roots, k, lam) -> ProcessModel:
    """Generalized Dunkl process for an orthogonal root system.

    In the frame u_i = <alpha_i, x>/sqrt(2) the process splits into
    independent one-dimensional generalized Dunkl processes along the
    roots and Brownian motion on the orthogonal complement.
    """
    roots = np.atleast_2d(np.asarray(roots, dtype=float))
    l = roots.shape[0]
    if roots.shape[1] != n or l > n:
        raise DomainError("dunkl_orthogonal: need l <= n roots of length n")
    if not np.allclose(roots @ roots.T, 2 * np.eye(l), atol=1e-12):
        raise DomainError("dunkl_orthogonal: roots must satisfy <a_i, a_j> = 2 delta_ij")
    k = np.broadcast_to(np.asarray(k, dtype=float), (l,)).copy()
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (l,)).copy()
    frame = orthonormal_frame(roots)
    comps = [gen_dunkl_1d(float(ki), float(li)) for ki, li in zip(k, lam)]
    kernels = [log_dunkl_kernel(float(ki), float(li)) for ki, li in zip(k, lam)]

    def rot(x):
        return np.asarray(x, dtype=float) @ frame.T

    def logp(t, x, y):
        u, v = rot(x), rot(y)
        out = 0.0
        for i, comp in enumerate(comps):
            out = out + comp.log_density_fn(t, u[..., i], v[..., i])
        if n > l:
            d = v[..., l:] - u[..., l:]
            out = out - 0.5 * (n - l) * (LOG_2PI + np.log(t)) - np.sum(d * d, axis=-1) / (2 * t)
        return out

    def log_phi(x, y):
        u, v = rot(x), rot(y)
        out = -0.5 * (n - l) * LOG_2PI + np.sum(u[..., l:] * v[..., l:], axis=-1)
        for i, kern in enumerate(kernels):
            out = out + kern(u[..., i] * v[..., i])
        return out

    def log_theta(y):
        v = rot(y)
        return sum(2 * k[i] * np.log(np.abs(v[..., i])) for i in range(l))

    fact = Factorization(log_phi, log_theta,
                         rho=lambda x: -0.5 * np.sum(np.asarray(x, float) ** 2, axis=-1),
                         beta=float(2 * k.sum()))
    return ProcessModel("dunkl_orthogonal", 1.0, (n,), REAL_SPACE, logp, fact,
                        params={"n": n, "roots": roots.tolist(), "k": k.tolist(),
                                "lambda": lam.tolist(), "frame": frame.tolist()},
                        check_state=_finite_check)


# ---------------------------------------------------------------------------
# Karlin-McGregor eigenvalue processes


def _log_det_exp(logm):
    """log det(exp(logm)) for a stack of matrices with positive determinant."""
    r = np.max(logm, axis=-1, keepdims=True)
    r = np.where(np.isfinite(r), r, 0.0)
    sign, ld = np.linalg.slogdet(np.exp(logm - r))
    with np.errstate(divide="ignore"):
        out = ld + r[..., 0].sum(axis=-1)
    return np.where(sign > 0, out, -np.inf)


def log_vandermonde(x):
    x = np.asarray(x, dtype=float)
    m = x.shape[-1]
    out = 0.0
    for i in range(m):
        for j in range(i + 1, m):
            out = out + np.log(x[..., j] - x[..., i])
    return out


def eigen_kmg_log_density(base_log_density: Callable, t, x, y):
    """log of (h(y)/h(x)) det[p_t(x_i, y_j)] with h the Vandermonde product."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    for v, label in ((x, "x"), (y, "y")):
        if np.any(np.diff(v, axis=-1) <= 0):
            raise DomainError(f"{label} must be strictly ordered")
    t = np.asarray(t, dtype=float)
    tt = t.reshape(t.shape + (1, 1)) if t.ndim else t
    logm = base_log_density(tt, x[..., :, None], y[..., None, :])
    return log_vandermonde(y) - log_vandermonde(x) + _log_det_exp(logm)


def eigenvalues_kmg(base: ProcessModel, m: int) -> ProcessModel:
    if base.state_shape != () or base.factorization is None:
        raise ConfigError("Karlin-McGregor base must be a factorized scalar model")
    bf = base.factorization

    def logp(t, x, y):
        return eigen_kmg_log_density(base.log_density_fn, t, x, y)

    def killed_logp(t, x, y):
        t = np.asarray(t, dtype=float)
        tt = t.reshape(t.shape + (1, 1)) if t.ndim else t
        return _log_det_exp(base.log_density_fn(tt, np.asarray(x)[..., :, None],
                                                np.asarray(y)[..., None, :]))

    fact = Factorization(
        log_phi=lambda x, y: _log_det_exp(bf.log_phi(np.asarray(x)[..., :, None],
                                                    np.asarray(y)[..., None, :])),
        log_theta=lambda y: np.sum(bf.log_theta(np.asarray(y)), axis=-1),
        rho=lambda x: np.sum(bf.rho(np.asarray(x)), axis=-1),
        beta=m * bf.beta,
        symmetric=bf.symmetric,
    )
    lower = 0.0 if base.domain == HALF_LINE else None
    killed = ProcessModel(f"{base.name}_killed", base.alpha, (m,), WEYL_CHAMBER,
                          killed_logp, fact, params={"m": m},
                          check_state=_chamber_check(lower))
    h = HTransform(log_vandermonde, 0.0)
    return ProcessModel("eigenvalues_kmg", base.alpha, (m,), WEYL_CHAMBER, logp, fact, h,
                        killed, {"base": base.name, "m": m, **base.params},
                        _chamber_check(lower))


# ---------------------------------------------------------------------------
# Wishart and skew-Wishart


def _logdet(a):
    sign, ld = np.linalg.slogdet(np.asarray(a, dtype=float))
    return np.where(sign > 0, ld, -np.inf)


def _trace(a):
    return np.trace(np.asarray(a, dtype=float), axis1=-2, axis2=-1)


def _flat_eigs(e):
    """Flatten a stack of eigenvalue rows to (N, m), remembering the batch shape."""
    return e.reshape(-1, e.shape[-1]), e.shape[:-1]


def _log_bessel_matrix(nu, e, scaled=False):
    flat, shape = _flat_eigs(np.clip(e, 0.0, None))
    f = ms.log_bessel_matrix_scaled if scaled else ms.log_bessel_matrix
    return np.asarray(f(nu, flat)).reshape(shape)


def wishart(delta: float, m: int) -> ProcessModel:
    nu = (delta - m - 1) / 2
    n = m * (m + 1) // 2

    def logp(t, x, y):
        t = np.asarray(t, dtype=float)
        tt = t[..., None] if t.ndim else t
        e = conjugate_eigenvalues(x, y) / (4 * tt * tt)
        ldx, ldy = _logdet(x), _logdet(y)
        near = np.exp(ldx) < BOUNDARY_CUTOFF
        head = -n * np.log(2 * t) - _trace(np.asarray(x) + y) / (2 * t)
        if np.all(~near):
            return head + 0.5 * nu * (ldy - ldx) + _log_bessel_matrix(nu, e)
        # det(x) -> 0 limit, with Z the scaled argument:
        # (det y/det x)^(nu/2) I~_nu(Z) = det(y)^nu (4t^2)^(-m nu/2) I~_nu(Z)/det(Z)^(nu/2)
        limit = nu * ldy - m * nu * np.log(2 * t) + _log_bessel_matrix(nu, e, scaled=True)
        with np.errstate(invalid="ignore"):
            literal = 0.5 * nu * (ldy - ldx) + _log_bessel_matrix(nu, e)
        return head + np.where(near, limit, literal)

    def log_phi(x, y):
        e = conjugate_eigenvalues(x, y) / 4
        return -0.5 * nu * (_logdet(x) + _logdet(y)) + _log_bessel_matrix(nu, e)

    fact = Factorization(
        log_phi=log_phi,
        log_theta=lambda y: -n * math.log(2) + nu * _logdet(y),
        rho=lambda x: -0.5 * _trace(x),
        beta=m * nu,
    )
    return ProcessModel("wishart", 2.0, (m, m), SPD, logp, fact,
                        params={"delta": delta, "m": m}, check_state=_spd_check(False))


def _sign_and_abs(a):
    a = np.asarray(a, dtype=float)
    w = np.linalg.eigvalsh(a)
    sign = np.where(np.all(w > 0, axis=-1), 1.0, np.where(np.all(w < 0, axis=-1), -1.0, 0.0))
    if np.any(sign == 0):
        raise DomainError("state must lie in S_m+ or S_m-")
    return sign, a * sign[..., None, None]


def skew_wishart(delta: float, m: int, lam: float) -> ProcessModel:
    nu = (delta - m - 1) / 2
    nu2 = math.sqrt(nu * nu + 4 * lam)
    n = m * (m + 1) // 2
    w = wishart(delta, m)

    def log_ratio(e):
        # (I~_nu' / I~_nu)(Z) = det(Z)^((nu'-nu)/2) times the ratio of scaled parts
        with np.errstate(divide="ignore"):
            logdet = np.sum(np.log(np.clip(e, 0.0, None)), axis=-1)
        det_part = 0.0 if nu2 == nu else 0.5 * (nu2 - nu) * logdet
        return (_log_bessel_matrix(nu2, e, scaled=True)
                - _log_bessel_matrix(nu, e, scaled=True) + det_part)

    def logp(t, x, y):
        sx, ax = _sign_and_abs(x)
        sy, ay = _sign_and_abs(y)
        s = sx * sy
        t = np.asarray(t, dtype=float)
        tt = t[..., None] if t.ndim else t
        e = conjugate_eigenvalues(ax, ay) / (4 * tt * tt)
        r = np.exp(log_ratio(e))
        return w.log_density_fn(t, ax, ay) + np.log(0.5 * (1 + s * r))

    def log_phi(x, y):
        sx, ax = _sign_and_abs(x)
        sy, ay = _sign_and_abs(y)
        s = sx * sy
        e = conjugate_eigenvalues(ax, ay) / 4
        a = _log_bessel_matrix(nu, e)
        b = _log_bessel_matrix(nu2, e)
        with np.errstate(divide="ignore", invalid="ignore"):
            mix = np.where(s > 0, np.logaddexp(a, b), a + np.log1p(-np.exp(b - a)))
        return -0.5 * nu * (_logdet(ax) + _logdet(ay)) + math.log(0.5) + mix

    def log_theta(y):
        return -n * math.log(2) + nu * _logdet(_sign_and_abs(y)[1])

    fact = Factorization(log_phi, log_theta,
                         rho=lambda x: -0.5 * _trace(_sign_and_abs(x)[1]),
                         beta=m * nu)
    return ProcessModel("skew_wishart", 2.0, (m, m), SPD_PM, logp, fact,
                        params={"delta": delta, "m": m, "lambda": lam},
                        check_state=_spd_check(True))


# ---------------------------------------------------------------------------
# h-transforms


def apply_h_transform(model: ProcessModel, h: HTransform,
                      keep_factorization: bool = False) -> ProcessModel:
    """Doob h-transform: p^h_t(x,y) = h(y)/h(x) e^{-nu t} p_t(x,y).

    The result carries no factorization unless ``keep_factorization`` is
    set, in which case the model's factorization is kept as the one it is
    in h-transform relationship with.
    """
    if model.htransform is not None and keep_factorization:
        raise ValueError("nested h-transforms are not tracked")

    def logp(t, x, y):
        return (model.log_density_fn(t, x, y) + h.log_h(y) - h.log_h(x)
                - h.nu * np.asarray(t, dtype=float))

    return ProcessModel(
        f"h({model.name})", model.alpha, model.state_shape, model.domain, logp,
        model.factorization if keep_factorization else None,
        h if keep_factorization else None,
        model if keep_factorization else None,
        dict(model.params), model.check_state)


# ---------------------------------------------------------------------------
# configuration


def _require(cond, message):
    if not cond:
        raise ConfigError(message)


def _num(doc, key, default=None):
    if key not in doc:
        _require(default is not None, f"missing parameter '{key}'")
        return default
    v = doc[key]
    _require(isinstance(v, (int, float)) and not isinstance(v, bool),
             f"parameter '{key}' must be a number")
    return float(v)


def _int(doc, key, default=None):
    v = _num(doc, key, default)
    _require(float(v).is_integer(), f"parameter '{key}' must be an integer")
    return int(v)


def _build_brownian(doc):
    n = _int(doc, "n", 1)
    _require(n >= 1, "brownian: n >= 1 violated")
    return brownian_motion(n)


def _build_drift(doc):
    n = _int(doc, "n", 1)
    _require(n >= 1, "brownian_drift: n >= 1 violated")
    _require("b" in doc, "missing parameter 'b'")
    b = np.atleast_1d(np.asarray(doc["b"], dtype=float))
    _require(b.size == n, "brownian_drift: b must have n components")
    return brownian_drift(n, b if n > 1 else float(b[0]))


def _build_bessel(doc):
    nu, sigma = _num(doc, "nu"), _num(doc, "sigma", 1.0)
    _require(nu > -1, "bessel: nu > -1 violated")
    _require(sigma > 0, "bessel: sigma > 0 violated")
    return bessel(nu, sigma)


def _build_bessel_wide(doc):
    nu, c = _num(doc, "nu"), _num(doc, "c")
    _require(nu > -1, "bessel_wide: nu > -1 violated")
    _require(c >= 0, "bessel_wide: c >= 0 violated")
    return bessel_wide(nu, c)


def _build_besq(doc):
    delta = _num(doc, "delta")
    _require(delta > 0, "squared_bessel: delta > 0 violated")
    return squared_bessel(delta)


def _build_gen_dunkl(doc):
    k, lam = _num(doc, "k"), _num(doc, "lambda")
    _require(k > 0, "gen_dunkl1d: k > 0 violated")
    _require(lam >= 0, "gen_dunkl1d: lambda >= 0 violated")
    return gen_dunkl_1d(k, lam)


def _build_dunkl(doc):
    k = _num(doc, "k")
    _require(k > 0, "dunkl1d: k > 0 violated")
    return dunkl_1d(k)


def _build_dunkl_orth(doc):
    n = _int(doc, "n")
    _require("roots" in doc, "missing parameter 'roots'")
    roots = np.atleast_2d(np.asarray(doc["roots"], dtype=float))
    _require(roots.shape[1] == n and roots.shape[0] <= n,
             "dunkl_orthogonal: need l <= n roots of length n")
    _require(np.allclose(roots @ roots.T, 2 * np.eye(roots.shape[0]), atol=1e-12),
             "dunkl_orthogonal: roots must satisfy <a_i, a_j> = 2 delta_ij")
    k = np.asarray(doc.get("k", 1.0), dtype=float)
    lam = np.asarray(doc.get("lambda", 0.0), dtype=float)
    for name, v in (("k", k), ("lambda", lam)):
        _require(v.ndim == 0 or v.shape == (roots.shape[0],),
                 f"dunkl_orthogonal: {name} must be a scalar or one value per root")
    _require(np.all(k > 0), "dunkl_orthogonal: k > 0 violated")
    _require(np.all(lam >= 0), "dunkl_orthogonal: lambda >= 0 violated")
    return dunkl_orthogonal(n, roots, k, lam)


def _build_kmg(doc):
    m = _int(doc, "m")
    _require(m >= 1, "eigenvalues_kmg: m >= 1 violated")
    base = doc.get("base")
    if base == "brownian":
        _require("delta" not in doc, "eigenvalues_kmg: delta only applies to squared_bessel")
        return eigenvalues_kmg(brownian_motion(1), m)
    _require(base == "squared_bessel",
             "eigenvalues_kmg: base must be 'brownian' or 'squared_bessel'")
    delta = _num(doc, "delta")
    _require(delta > 0, "eigenvalues_kmg: delta > 0 violated")
    return eigenvalues_kmg(squared_bessel(delta), m)


def _build_wishart(doc):
    delta, m = _num(doc, "delta"), _int(doc, "m")
    _require(m >= 1, "wishart: m >= 1 violated")
    _require(delta > m - 1, f"wishart: delta > m - 1 violated (delta={delta}, m={m})")
    return wishart(delta, m)


def _build_skew_wishart(doc):
    delta, m, lam = _num(doc, "delta"), _int(doc, "m"), _num(doc, "lambda")
    _require(m >= 1, "skew_wishart: m >= 1 violated")
    _require(delta > m - 1, f"skew_wishart: delta > m - 1 violated (delta={delta}, m={m})")
    _require(lam >= 0, "skew_wishart: lambda >= 0 violated")
    return skew_wishart(delta, m, lam)


def _build_ou(doc):
    theta = _num(doc, "theta", 1.0)
    _require(theta > 0, "ornstein_uhlenbeck: theta > 0 violated")
    return ornstein_uhlenbeck(theta)


CATALOG: dict[str, tuple[Callable, set]] = {
    "brownian": (_build_brownian, {"n"}),
    "brownian_drift": (_build_drift, {"n", "b"}),
    "bessel": (_build_bessel, {"nu", "sigma"}),
    "bessel_wide": (_build_bessel_wide, {"nu", "c"}),
    "squared_bessel": (_build_besq, {"delta"}),
    "gen_dunkl1d": (_build_gen_dunkl, {"k", "lambda"}),
    "dunkl1d": (_build_dunkl, {"k"}),
    "dunkl_orthogonal": (_build_dunkl_orth, {"n", "roots", "k", "lambda"}),
    "eigenvalues_kmg": (_build_kmg, {"base", "m", "delta"}),
    "wishart": (_build_wishart, {"delta", "m"}),
    "skew_wishart": (_build_skew_wishart, {"delta", "m", "lambda"}),
    "ornstein_uhlenbeck": (_build_ou, {"theta"}),
}


def model_from_config(doc: dict[str, Any]) -> ProcessModel:
    """Build a catalog model from {"model": name, ...parameters}."""
    _require(isinstance(doc, dict), "model config must be a JSON object")
    name = doc.get("model")
    _require(name in CATALOG, f"unknown model {name!r}; known: {sorted(CATALOG)}")
    builder, allowed = CATALOG[name]
    unknown = set(doc) - allowed - {"model"}
    _require(not unknown, f"unknown keys for {name}: {sorted(unknown)}")
    return builder(doc)


def density(model: ProcessModel, t, x, y):
    return model.density(t, x, y)


def log_density(model: ProcessModel, t, x, y):
    return model.log_density(t, x, y)


def eigen_kmg_density(base: ProcessModel, x, y, t) -> float:
    """Karlin-McGregor determinant density for a scalar base model."""
    return float(np.exp(eigen_kmg_log_density(base.log_density, t, x, y)))
