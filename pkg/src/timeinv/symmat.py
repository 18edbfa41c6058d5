"""Real symmetric matrices: spectra, sign classes and PD square roots."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from timeinv.errors import DomainError

SYM_RTOL = 1e-12


class Sign(str, Enum):
    POSITIVE_DEFINITE = "positive_definite"
    NEGATIVE_DEFINITE = "negative_definite"
    INDEFINITE_OR_SINGULAR = "indefinite_or_singular"


@dataclass(frozen=True, eq=False)
class SymMatrix:
    entries: np.ndarray

    def __post_init__(self):
        a = np.array(self.entries, dtype=float)
        if a.ndim == 0:
            a = a.reshape(1, 1)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise DomainError(f"expected a square matrix, got shape {a.shape}")
        scale = max(1.0, float(np.max(np.abs(a))))
        if np.max(np.abs(a - a.T)) > SYM_RTOL * scale:
            raise DomainError("matrix is not symmetric")
        a = 0.5 * (a + a.T)
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


def _arr(a) -> np.ndarray:
    return a.entries if isinstance(a, SymMatrix) else np.asarray(a, dtype=float)


def spectral(a) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues in descending order and orthonormal eigenvectors (columns).

    Accepts a stack (..., m, m) as well as a single matrix.
    """
    w, v = np.linalg.eigh(_arr(a))
    return w[..., ::-1], v[..., ::-1]


def classify_sign(a) -> Sign:
    a = _arr(a)
    w = np.linalg.eigvalsh(a)
    cut = SYM_RTOL * max(np.max(np.abs(w)), np.finfo(float).tiny)
    if np.all(w > cut):
        return Sign.POSITIVE_DEFINITE
    if np.all(w < -cut):
        return Sign.NEGATIVE_DEFINITE
    return Sign.INDEFINITE_OR_SINGULAR


def abs_sym(a) -> tuple[np.ndarray, int]:
    """|a| together with its sign (+1 for PD, -1 for ND)."""
    a = _arr(a)
    s = classify_sign(a)
    if s is Sign.POSITIVE_DEFINITE:
        return a, 1
    if s is Sign.NEGATIVE_DEFINITE:
        return -a, -1
    raise DomainError("matrix is neither positive nor negative definite")


def sqrt_pd(a) -> np.ndarray:
    """Unique positive definite square root (batched over leading axes)."""
    a = _arr(a)
    w, v = np.linalg.eigh(a)
    if np.any(w <= 0):
        raise DomainError("sqrt_pd needs a positive definite matrix")
    return (v * np.sqrt(w)[..., None, :]) @ np.swapaxes(v, -1, -2)


def conjugate_eigenvalues(x, y) -> np.ndarray:
    """Eigenvalues of sqrt(x) y sqrt(x): the real spectrum of the product xy.

    x must be positive semidefinite; stacks broadcast.
    """
    x, y = _arr(x), _arr(y)
    w, v = np.linalg.eigh(x)
    w = np.clip(w, 0.0, None)
    r = (v * np.sqrt(w)[..., None, :]) @ np.swapaxes(v, -1, -2)
    prod = r @ y @ r
    prod = 0.5 * (prod + np.swapaxes(prod, -1, -2))
    return np.linalg.eigvalsh(prod)[..., ::-1]


def identity(m: int) -> np.ndarray:
    return np.eye(m)


def to_vector(a) -> np.ndarray:
    """Upper-triangular entries (row-major), the n = m(m+1)/2 coordinates."""
    a = _arr(a)
    iu = np.triu_indices(a.shape[-1])
    return a[..., iu[0], iu[1]]


def from_vector(v, m: int) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (m, m))
    iu = np.triu_indices(m)
    out[..., iu[0], iu[1]] = v
    out[..., iu[1], iu[0]] = v
    return out
