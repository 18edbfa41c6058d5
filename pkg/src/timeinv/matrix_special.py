"""Zonal polynomials and hypergeometric functions of a symmetric matrix argument.

Zonal polynomials C_kappa are expanded over monomial symmetric functions
M_lambda with James' eigenfunction recurrence, normalised so that
sum_{kappa |- k} C_kappa(X) = (tr X)^k.  Coefficient tables are built
degree by degree per number of variables m and cached.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
import threading
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np

from timeinv.errors import CapacityError, DomainError, NumericFailure
from timeinv.numerics import log_bessel_ix
from timeinv.symmat import conjugate_eigenvalues

MAX_DEGREE = 60
DEFAULT_K_MAX = 30
TABLE_VERSION = 1
# relative size of the last retained term accepted as converged
SERIES_RTOL = 1e-15

Partition = tuple  # non-increasing positive integers


def partitions(k: int, max_parts: int) -> list[Partition]:
    """All partitions of k with at most max_parts parts, reverse-lexicographic."""
    if k < 0 or max_parts < 1:
        raise DomainError("need k >= 0 and max_parts >= 1")
    if k > MAX_DEGREE:
        raise CapacityError(f"partitions are tabulated up to degree {MAX_DEGREE}")
    return list(_partitions(k, max_parts, k))


def _partitions(k, parts, largest):
    if k == 0:
        yield ()
        return
    if parts == 0:
        return
    for first in range(min(k, largest), 0, -1):
        for rest in _partitions(k - first, parts - 1, first):
            yield (first,) + rest


def _rho(kappa: Partition) -> int:
    return sum(k * (k - i) for i, k in enumerate(kappa, start=1))


def _dominates(kappa: Partition, lam: Partition) -> bool:
    a = b = 0
    for i in range(max(len(kappa), len(lam))):
        a += kappa[i] if i < len(kappa) else 0
        b += lam[i] if i < len(lam) else 0
        if a < b:
            return False
    return True


def _moves(lam: Partition):
    """Partitions reached by moving t units from part j to an earlier part i."""
    out = []
    for j in range(1, len(lam)):
        for i in range(j):
            for t in range(1, lam[j] + 1):
                mu = list(lam)
                mu[i] += t
                mu[j] -= t
                factor = (lam[i] + t) - (lam[j] - t)
                out.append((tuple(sorted((p for p in mu if p), reverse=True)), factor))
    return out


def _trace_power_coeff(lam: Partition) -> float:
    # coefficient of M_lambda in (tr X)^k: the multinomial k! / prod lambda_i!
    k = sum(lam)
    return math.factorial(k) / math.prod(math.factorial(p) for p in lam)


@dataclass
class _Degree:
    parts: list
    coeffs: np.ndarray      # rows: zonal C_kappa, columns: M_lambda
    exponents: np.ndarray   # (P, n_perm, m) distinct permutations per lambda
    perm_mask: np.ndarray   # (P, n_perm)


def _build_degree(k: int, m: int) -> _Degree:
    parts = partitions(k, m)
    index = {p: i for i, p in enumerate(parts)}
    P = len(parts)
    rho = np.array([_rho(p) for p in parts], dtype=float)
    y = np.zeros((P, P))
    for j, lam in enumerate(parts):
        y[j, j] = 1.0
        rows = np.array([_dominates(kap, lam) for kap in parts[:j]], dtype=bool)
        if not rows.any():
            continue
        acc = np.zeros(j)
        for mu, factor in _moves(lam):
            col = index.get(mu)
            if col is not None and col < j:
                acc += factor * y[:j, col]
        denom = rho[:j] - rho[j]
        y[:j, j] = np.where(rows, acc / np.where(rows, denom, 1.0), 0.0)
    # normalise: sum_kappa d_kappa Y_kappa = (tr X)^k
    target = np.array([_trace_power_coeff(p) for p in parts])
    d = np.zeros(P)
    for j in range(P):
        d[j] = target[j] - d[:j] @ y[:j, j]
    coeffs = d[:, None] * y
    return _Degree(parts, coeffs, *_exponents(parts, m))


def _exponents(parts, m):
    perms = [sorted(set(itertools.permutations(tuple(p) + (0,) * (m - len(p)))))
             for p in parts]
    n_perm = max(len(p) for p in perms)
    exponents = np.zeros((len(parts), n_perm, m))
    mask = np.zeros((len(parts), n_perm))
    for i, ps in enumerate(perms):
        exponents[i, :len(ps)] = ps
        mask[i, :len(ps)] = 1.0
    return exponents, mask


@dataclass
class ZonalTable:
    """Zonal coefficient tables for m variables, extended lazily by degree."""

    m: int
    degrees: list = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def k_max(self) -> int:
        return len(self.degrees) - 1

    def ensure(self, k_max: int) -> None:
        if k_max > MAX_DEGREE:
            raise CapacityError(f"zonal tables hold degrees up to {MAX_DEGREE}")
        with self._lock:
            while len(self.degrees) <= k_max:
                self.degrees.append(_build_degree(len(self.degrees), self.m))

    def degree(self, k: int) -> _Degree:
        self.ensure(k)
        return self.degrees[k]

    def coefficients(self, kappa: Partition) -> dict:
        kappa = tuple(p for p in kappa if p)
        deg = self.degree(sum(kappa))
        row = deg.parts.index(kappa)
        return {lam: float(c) for lam, c in zip(deg.parts, deg.coeffs[row]) if c}

    def monomials(self, k: int, eigs: np.ndarray) -> np.ndarray:
        """M_lambda(eigs) for every lambda |- k; eigs has shape (N, m)."""
        deg = self.degree(k)
        powers = eigs[:, None, None, :] ** deg.exponents[None]
        return (np.prod(powers, axis=-1) * deg.perm_mask[None]).sum(axis=-1)

    def zonal_all(self, k: int, eigs: np.ndarray) -> np.ndarray:
        """C_kappa(eigs) for every kappa |- k (columns), batched over rows."""
        return self.monomials(k, eigs) @ self.degree(k).coeffs.T

    # -- persistence -------------------------------------------------------

    def save(self, path) -> None:
        payload = {
            "version": TABLE_VERSION,
            "m": self.m,
            "k_max": self.k_max,
            "coeffs": [d.coeffs.tolist() for d in self.degrees],
        }
        body = json.dumps(payload, sort_keys=True)
        digest = hashlib.sha256(body.encode()).hexdigest()
        Path(path).write_text(json.dumps({"sha256": digest, "table": payload}))

    @classmethod
    def load(cls, path, m: int, k_max: int) -> "ZonalTable":
        """Load a cached table, rebuilding it when absent or mismatched."""
        table = cls(m)
        try:
            doc = json.loads(Path(path).read_text())
            payload = doc["table"]
            body = json.dumps(payload, sort_keys=True)
            ok = (hashlib.sha256(body.encode()).hexdigest() == doc["sha256"]
                  and payload["version"] == TABLE_VERSION
                  and payload["m"] == m and payload["k_max"] >= k_max)
        except (OSError, ValueError, KeyError, TypeError):
            ok = False
        if ok:
            for k, c in enumerate(payload["coeffs"][:k_max + 1]):
                parts = partitions(k, m)
                coeffs = np.array(c, dtype=float).reshape(len(parts), len(parts))
                table.degrees.append(_Degree(parts, coeffs, *_exponents(parts, m)))
        else:
            table.ensure(k_max)
            table.save(path)
        return table


_TABLES: dict[int, ZonalTable] = {}
_TABLES_LOCK = threading.Lock()


def zonal_table(m: int) -> ZonalTable:
    with _TABLES_LOCK:
        if m not in _TABLES:
            _TABLES[m] = ZonalTable(m)
        return _TABLES[m]


def _eigs(x) -> np.ndarray:
    """Eigenvalue rows (N, m) from a matrix, a stack, or an eigenvalue list."""
    a = np.asarray(x, dtype=float)
    if a.ndim >= 2 and a.shape[-1] == a.shape[-2]:
        a = np.linalg.eigvalsh(a)[..., ::-1]
    return np.atleast_2d(a)


def zonal(kappa: Sequence[int], eigenvalues):
    """Zonal polynomial C_kappa at eigenvalues (length m, or rows of shape (N, m)).

    Partitions with more than m parts give 0.
    """
    kappa = tuple(int(p) for p in kappa if p)
    if any(a < b for a, b in zip(kappa, kappa[1:])):
        raise DomainError(f"{kappa} is not a partition")
    e = np.atleast_2d(np.asarray(eigenvalues, dtype=float))
    m = e.shape[-1]
    if len(kappa) > m:
        out = np.zeros(e.shape[0])
    else:
        table = zonal_table(m)
        out = table.zonal_all(sum(kappa), e)[:, table.degree(sum(kappa)).parts.index(kappa)]
    return float(out[0]) if np.ndim(eigenvalues) == 1 else out


def rising(a: float, j: int) -> float:
    out = 1.0
    for i in range(j):
        out *= a + i
    return out


def gen_pochhammer(a: float, kappa: Sequence[int]) -> float:
    """(a)_kappa = prod_i (a - (i-1)/2)_{k_i}."""
    return math.prod(rising(a - 0.5 * i, k) for i, k in enumerate(kappa))


def gamma_m(m: int, alpha: float) -> float:
    return math.exp(log_gamma_m(m, alpha))


def log_gamma_m(m: int, alpha: float) -> float:
    if m < 1:
        raise DomainError("gamma_m needs m >= 1")
    if alpha <= 0.5 * (m - 1):
        raise DomainError(f"gamma_m({m}, alpha) needs alpha > {(m - 1) / 2}")
    return 0.25 * m * (m - 1) * math.log(math.pi) + sum(
        math.lgamma(alpha - 0.5 * i) for i in range(m))


def _check_denominator(b: float, m: int) -> None:
    for i in range(m):
        if abs(b - 0.5 * i) < 1e-14:
            raise DomainError(f"denominator parameter {b} is in the excluded set")


@lru_cache(maxsize=256)
def _pochhammer_vector(params: tuple, m: int, k: int) -> np.ndarray:
    parts = zonal_table(m).degree(k).parts
    return np.array([math.prod(gen_pochhammer(p, kap) for p in params) for kap in parts])


@dataclass(frozen=True)
class SeriesValue:
    """Log-magnitude and sign of a truncated series, with its truncation diagnostic."""

    log_abs: np.ndarray
    sign: np.ndarray
    last_term: np.ndarray   # |last included term| / |sum|
    degree: int

    @property
    def value(self) -> np.ndarray:
        return self.sign * np.exp(self.log_abs)

    @property
    def converging(self) -> bool:
        return bool(np.all(self.last_term < 1e-12))


def _series(a_params: tuple, b_params: tuple, eigs: np.ndarray, k_max: int,
            early_stop: bool) -> SeriesValue:
    m = eigs.shape[-1]
    table = zonal_table(m)
    table.ensure(min(k_max, 8))
    scale = np.max(np.abs(eigs), axis=-1)
    scale = np.where(scale > 0, scale, 1.0)
    e = eigs / scale[:, None]
    log_scale = np.log(scale)
    terms_log, terms_sign = [], []
    total_log = np.full(e.shape[0], -np.inf)
    last = np.zeros(e.shape[0])
    prev = np.full(e.shape[0], np.inf)
    k_used = 0
    for k in range(k_max + 1):
        table.ensure(k)
        zon = table.zonal_all(k, e)
        num = _pochhammer_vector(a_params, m, k) if a_params else 1.0
        den = _pochhammer_vector(b_params, m, k)
        v = zon @ (num / den)
        with np.errstate(divide="ignore"):
            lt = np.log(np.abs(v)) + k * log_scale - math.lgamma(k + 1)
        terms_log.append(lt)
        terms_sign.append(np.sign(v))
        total_log = np.logaddexp(total_log, lt)
        last = np.exp(lt - total_log)
        k_used = k
        if early_stop and k >= 4 and np.all((last < 1e-18) & (lt <= prev)):
            break
        prev = lt
    tl = np.array(terms_log)
    ts = np.array(terms_sign)
    ref = np.max(tl, axis=0)
    s = np.sum(ts * np.exp(tl - ref), axis=0)
    with np.errstate(divide="ignore"):
        log_abs = ref + np.log(np.abs(s))
    return SeriesValue(log_abs, np.sign(s), last, k_used)


def hyper_pfq(a: Sequence[float], b: Sequence[float], x, k_max: int = DEFAULT_K_MAX,
              early_stop: bool = False) -> SeriesValue:
    """Truncated pFq of a symmetric matrix argument (x: matrix, stack, or eigenvalues)."""
    eigs = _eigs(x)
    for bj in b:
        _check_denominator(bj, eigs.shape[-1])
    return _series(tuple(a), tuple(b), eigs, k_max, early_stop)


def hyper_0f1(b: float, x, k_max: int = DEFAULT_K_MAX, early_stop: bool = False) -> tuple:
    """0F1(b; x) truncated at degree k_max; returns (value, last-term diagnostic)."""
    s = hyper_pfq((), (b,), x, k_max, early_stop)
    val, last = s.value, s.last_term
    if val.size == 1:
        return float(val[0]), float(last[0])
    return val, last


def log_bessel_matrix_scaled(nu: float, eigs, k_max: int = MAX_DEGREE) -> np.ndarray:
    """log of I~_nu(X) / det(X)^(nu/2) = log(0F1(nu+(m+1)/2; X) / Gamma_m(.))."""
    e = _eigs(eigs)
    m = e.shape[-1]
    if m == 1:
        # exact: I~_nu(x) / x^(nu/2) = 2^nu (2 sqrt x)^-nu I_nu(2 sqrt x)
        if np.any(e < 0):
            raise DomainError("I~_nu needs a positive semidefinite argument")
        return nu * math.log(2.0) + np.asarray(log_bessel_ix(nu, 2 * np.sqrt(e[:, 0])))
    b = nu + 0.5 * (m + 1)
    lg = log_gamma_m(m, b)
    s = hyper_pfq((), (b,), e, k_max, early_stop=True)
    if np.any(s.sign <= 0):
        raise DomainError("0F1 of a PSD argument must be positive")
    if np.any(s.last_term > SERIES_RTOL):
        worst = float(np.max(e))
        raise NumericFailure(f"0F1 series not converged by degree {k_max} "
                             f"(largest eigenvalue {worst:.4g})", partial=s.log_abs - lg)
    return s.log_abs - lg


def log_bessel_matrix(nu: float, eigs, k_max: int = MAX_DEGREE) -> np.ndarray:
    e = _eigs(eigs)
    if np.any(e < 0):
        raise DomainError("I~_nu needs a positive semidefinite argument")
    with np.errstate(divide="ignore"):
        logdet = np.sum(np.log(e), axis=-1)
    det_part = np.where(np.isneginf(logdet) & (nu == 0), 0.0, 0.5 * nu * logdet)
    return log_bessel_matrix_scaled(nu, e, k_max) + det_part


def bessel_matrix(nu: float, x, k_max: int = DEFAULT_K_MAX):
    """Generalised modified Bessel function I~_nu(x) of a PSD matrix argument."""
    e = _eigs(x)
    m = e.shape[-1]
    if nu + 0.5 * (m + 1) <= 0.5 * (m - 1):
        raise DomainError("I~_nu needs nu > -1")
    out = np.exp(log_bessel_matrix(nu, e, k_max))
    return float(out[0]) if out.size == 1 else out


def bessel_matrix_product(nu: float, x, y, k_max: int = DEFAULT_K_MAX):
    """I~_nu evaluated at the product xy, i.e. at sqrt(x) y sqrt(x)."""
    return bessel_matrix(nu, conjugate_eigenvalues(x, y), k_max)
