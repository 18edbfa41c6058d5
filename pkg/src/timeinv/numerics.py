"""Scalar special functions, adaptive quadrature, finite differences and KS tests.

Everything here is vectorised over numpy arrays and free of shared state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats
from scipy.special import gammaln

from timeinv.errors import DomainError, NumericFailure

# switch point between the power series and the large-argument expansion
SERIES_LIMIT = 30.0


@dataclass(frozen=True)
class Tolerance:
    rel: float = 1e-10
    abs: float = 0.0

    def __post_init__(self):
        if self.rel < 0 or self.abs < 0:
            raise ValueError("tolerances must be nonnegative")
        if self.rel == 0 and self.abs == 0:
            raise ValueError("rel and abs tolerance cannot both be zero")

    def bound(self, value: float) -> float:
        return max(self.abs, self.rel * abs(value))


@dataclass
class EmpiricalSample:
    values: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        if values.size == 0:
            raise ValueError("empirical sample must be nonempty")
        order = np.argsort(values, kind="stable")
        self.values = values[order]
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float).ravel()[order]
            if w.shape != values.shape or abs(w.sum() - 1.0) > 1e-9:
                raise ValueError("weights must match values and sum to 1")
            self.weights = w

    def __len__(self):
        return self.values.size


# ---------------------------------------------------------------------------
# modified Bessel function of the first kind


def _check_order(nu):
    if np.any(np.asarray(nu) <= -1):
        raise DomainError(f"Bessel order must exceed -1, got {nu}")


def _log_ix_series(nu: float, z: np.ndarray) -> np.ndarray:
    # log(z^-nu I_nu(z)) = -nu log 2 - lgamma(nu+1) + log sum_k r_k
    q = 0.25 * z * z
    term = np.ones_like(z)
    total = np.ones_like(z)
    k = 0
    while True:
        term = term * q / ((k + 1) * (k + nu + 1))
        total = total + term
        k += 1
        if np.all(term <= 1e-17 * total) and k > 2:
            break
        if k > 500:
            raise NumericFailure("Bessel power series did not converge")
    return -nu * math.log(2.0) - math.lgamma(nu + 1) + np.log(total)


def _log_i_asymptotic(nu: float, z: np.ndarray) -> np.ndarray:
    # I_nu(z) ~ e^z / sqrt(2 pi z) * sum (-1)^k a_k(nu) / z^k
    mu = 4.0 * nu * nu
    term = np.ones_like(z)
    total = np.ones_like(z)
    prev = np.full_like(z, np.inf)
    active = np.ones(z.shape, dtype=bool)
    for k in range(1, 80):
        term = -term * (mu - (2 * k - 1) ** 2) / (k * 8.0 * z)
        # stop each entry at the smallest term (optimal truncation)
        active &= np.abs(term) < prev
        total = np.where(active, total + term, total)
        prev = np.where(active, np.abs(term), prev)
        if not active.any() or np.all(prev < 1e-17):
            break
    return z - 0.5 * np.log(2 * np.pi * z) + np.log(total)


def log_bessel_ix(nu: float, z) -> np.ndarray:
    """Return log(z**-nu * I_nu(z)) for z >= 0, exact at z = 0.

    This scaled form is finite at the origin, which is what every kernel
    in the model catalog needs.
    """
    _check_order(nu)
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise DomainError("Bessel argument must be nonnegative")
    out = np.empty_like(z)
    small = z <= max(SERIES_LIMIT, nu * nu)
    if small.any():
        out[small] = _log_ix_series(nu, z[small])
    if (~small).any():
        zl = z[~small]
        out[~small] = _log_i_asymptotic(nu, zl) - nu * np.log(zl)
    return out if out.ndim else float(out)


def log_bessel_i(nu: float, x) -> np.ndarray:
    """Natural log of I_nu(x), safe for arguments far beyond 700."""
    x = np.asarray(x, dtype=float)
    out = np.asarray(log_bessel_ix(nu, x), dtype=float)
    pos = x > 0
    scale = np.full(x.shape, 0.0 if nu == 0 else -math.copysign(np.inf, nu))
    scale[pos] = nu * np.log(x[pos])
    out = out + scale
    return out if np.ndim(out) else float(out)


def bessel_i(nu: float, x) -> np.ndarray:
    """Modified Bessel function of the first kind I_nu(x), x >= 0.

    Raises OverflowError when the value does not fit in a double; use
    log_bessel_i there.
    """
    lg = np.asarray(log_bessel_i(nu, x))
    if np.any(lg > 709.78):
        raise OverflowError("I_nu(x) overflows; use log_bessel_i")
    out = np.exp(lg)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# adaptive Gauss-Kronrod quadrature

_XK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])
_NODES = np.concatenate([-_XK[:-1], _XK[::-1]])
_KWEIGHTS = np.concatenate([_WK[:-1], _WK[::-1]])
_GWEIGHTS = np.zeros(15)
_GWEIGHTS[[1, 3, 5, 7, 9, 11, 13]] = np.concatenate([_WG[:-1], _WG[::-1]])


@dataclass
class QuadResult:
    value: float
    error: float
    intervals: int = field(default=0)

    def __iter__(self):
        return iter((self.value, self.error))

    def __float__(self):
        return float(self.value)


def _gk15(f, lo: np.ndarray, hi: np.ndarray):
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    x = mid[:, None] + half[:, None] * _NODES[None, :]
    fx = np.asarray(f(x.ravel()), dtype=float).reshape(x.shape)
    if not np.all(np.isfinite(fx)):
        raise NumericFailure("integrand returned a non-finite value")
    k = half * (fx @ _KWEIGHTS)
    g = half * (fx @ _GWEIGHTS)
    return k, np.abs(k - g)


def _finite_map(f, a, b):
    """Map (a, b) with possibly infinite ends onto a finite interval."""
    if np.isfinite(a) and np.isfinite(b):
        return f, a, b
    if np.isfinite(a) and b == np.inf:
        # x = a + u / (1 - u), u in [0, 1)
        def g(u):
            w = 1.0 - u
            return f(a + u / w) / (w * w)
        return g, 0.0, 1.0
    if a == -np.inf and np.isfinite(b):
        def g(u):
            w = 1.0 - u
            return f(b - u / w) / (w * w)
        return g, 0.0, 1.0
    raise ValueError("use integrate_1d which splits doubly infinite ranges")


def integrate_1d(f: Callable[[np.ndarray], np.ndarray], a: float, b: float,
                 tol: Tolerance = Tolerance(1e-10, 1e-14),
                 max_intervals: int = 4000,
                 breakpoints: Sequence[float] = ()) -> QuadResult:
    """Adaptive 15-point Gauss-Kronrod quadrature of a vectorised integrand.

    Semi-infinite ranges use x = a + u/(1-u); the whole real line is split
    at 0 (and at any supplied breakpoints).
    """
    if a == b:
        return QuadResult(0.0, 0.0)
    if a > b:
        r = integrate_1d(f, b, a, tol, max_intervals, breakpoints)
        return QuadResult(-r.value, r.error, r.intervals)
    cuts = sorted({float(p) for p in breakpoints if a < p < b})
    if a == -np.inf and b == np.inf and not cuts:
        cuts = [0.0]
    if cuts:
        edges = [a, *cuts, b]
        parts = [integrate_1d(f, lo, hi, tol, max_intervals)
                 for lo, hi in zip(edges[:-1], edges[1:])]
        return QuadResult(sum(p.value for p in parts),
                          sum(p.error for p in parts),
                          sum(p.intervals for p in parts))

    g, lo0, hi0 = _finite_map(f, a, b)
    lo = np.linspace(lo0, hi0, 9)[:-1]
    hi = np.linspace(lo0, hi0, 9)[1:]
    vals, errs = _gk15(g, lo, hi)
    while True:
        total, err = vals.sum(), errs.sum()
        target = tol.bound(total)
        if err <= target:
            return QuadResult(float(total), float(err), lo.size)
        if lo.size >= max_intervals:
            raise NumericFailure(
                f"quadrature did not converge: estimate {total:.16g} "
                f"with error {err:.3g} > {target:.3g}", partial=float(total))
        # bisect the worst intervals until the rest fits in half the budget
        order = np.argsort(errs)[::-1]
        cum = err - np.cumsum(errs[order])
        n_split = int(np.searchsorted(-cum, -0.5 * target) + 1)
        split = np.zeros(lo.size, dtype=bool)
        split[order[:n_split]] = True
        mid = 0.5 * (lo[split] + hi[split])
        new_lo = np.concatenate([lo[split], mid])
        new_hi = np.concatenate([mid, hi[split]])
        nv, ne = _gk15(g, new_lo, new_hi)
        lo = np.concatenate([lo[~split], new_lo])
        hi = np.concatenate([hi[~split], new_hi])
        vals = np.concatenate([vals[~split], nv])
        errs = np.concatenate([errs[~split], ne])


def gauss_legendre_cells(f: Callable[[np.ndarray], np.ndarray], edges: np.ndarray,
                         order: int = 20) -> np.ndarray:
    """Integral of f over each cell [edges[i], edges[i+1]] by fixed Gauss-Legendre."""
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.asarray(edges, dtype=float)
    lo, hi = edges[:-1], edges[1:]
    half = 0.5 * (hi - lo)
    pts = 0.5 * (hi + lo)[:, None] + half[:, None] * x[None, :]
    fx = np.asarray(f(pts.ravel()), dtype=float).reshape(pts.shape)
    return half * (fx @ w)


def cdf_from_density(density: Callable[[np.ndarray], np.ndarray], lower: float,
                     points, tol: Tolerance = Tolerance(1e-10, 1e-13)) -> np.ndarray:
    """CDF of a density at arbitrary points, by quadrature.

    The mass below the smallest point is integrated adaptively; the rest
    is accumulated cell by cell between consecutive sorted points.
    """
    points = np.asarray(points, dtype=float)
    order = np.argsort(points, kind="stable")
    sp = points[order]
    head = integrate_1d(density, lower, sp[0], tol).value
    cells = gauss_legendre_cells(density, sp)
    cdf_sorted = head + np.concatenate([[0.0], np.cumsum(cells)])
    out = np.empty_like(cdf_sorted)
    out[order] = cdf_sorted
    return np.clip(out, 0.0, 1.0)


# ---------------------------------------------------------------------------
# finite differences


def fd_step(x: float) -> float:
    return 1e-5 * max(1.0, abs(x))


def homogeneity_residual(f: Callable[[np.ndarray], float], x, degree: float) -> float:
    """|sum_i x_i df/dx_i (x) - degree * f(x)| with central differences."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if not np.any(x):
        raise DomainError("homogeneity residual needs a nonzero point")
    euler = 0.0
    for i in range(x.size):
        h = fd_step(x[i])
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        euler += x[i] * (f(xp) - f(xm)) / (2 * h)
    return abs(euler - degree * f(x))


def second_derivative(f: Callable[[float], float], z: float, h: float,
                      points: int = 3) -> float:
    """Central difference; ``points=5`` gives the fourth-order stencil."""
    if points == 5:
        return (-f(z + 2 * h) + 16 * f(z + h) - 30 * f(z) + 16 * f(z - h)
                - f(z - 2 * h)) / (12 * h * h)
    return (f(z + h) - 2 * f(z) + f(z - h)) / (h * h)


def first_derivative(f: Callable[[float], float], z: float, h: float,
                     points: int = 3) -> float:
    if points == 5:
        return (-f(z + 2 * h) + 8 * f(z + h) - 8 * f(z - h) + f(z - 2 * h)) / (12 * h)
    return (f(z + h) - f(z - h)) / (2 * h)


# ---------------------------------------------------------------------------
# Kolmogorov-Smirnov tests


def _as_sample(s) -> EmpiricalSample:
    return s if isinstance(s, EmpiricalSample) else EmpiricalSample(s)


def ks_two_sample(a, b) -> tuple[float, float]:
    """Two-sample KS statistic and asymptotic p-value."""
    a, b = _as_sample(a), _as_sample(b)
    if np.array_equal(a.values, b.values):
        return 0.0, 1.0
    res = stats.ks_2samp(a.values, b.values, method="asymp")
    return float(res.statistic), float(res.pvalue)


def ks_one_sample(sample, cdf: Callable[[np.ndarray], np.ndarray]) -> tuple[float, float]:
    """One-sample KS test against a vectorised CDF (asymptotic p-value)."""
    s = _as_sample(sample)
    res = stats.kstest(s.values, cdf, method="asymp")
    return float(res.statistic), float(res.pvalue)


def log_gamma(x):
    return gammaln(x)
