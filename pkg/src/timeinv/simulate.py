"""Path simulation: exact squared-Bessel transitions, Wishart paths,
additive functionals, Poisson-clock skew products and path time-inversion.

Randomness comes from counter-based Philox streams, one per block of
``BLOCK`` paths, keyed by (seed, stage, block index).  Results are therefore
bit-identical for any worker count.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from timeinv.errors import ConfigError, DomainError
from timeinv.models import ProcessModel
from timeinv.numerics import log_bessel_ix
from timeinv.symmat import to_vector

BLOCK = 4096
ZERO_CUTOFF = 1e-12
EIG_FLOOR = 1e-10
FLOOR_WARN_FRACTION = 0.01
DEFAULT_SUBSTEPS = 8

_STAGES = {"radial": 1, "skew": 2, "besq": 3}


@dataclass
class PathEnsemble:
    """N paths observed on an increasing time grid.

    ``paths`` has shape (N, G, *state_shape); ``functionals`` holds the
    accumulated A_t, shape (N, G) or (N, G, l) for one functional per root,
    and is None once it no longer has a meaning (after time inversion).
    """

    times: np.ndarray
    paths: np.ndarray
    functionals: np.ndarray | None
    seed: int
    scheme: str
    params: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.ndim != 1 or np.any(self.times <= 0) or np.any(np.diff(self.times) <= 0):
            raise DomainError("ensemble times must be positive and strictly increasing")
        if self.paths.shape[1:2] != self.times.shape:
            raise DomainError("paths do not match the time grid")

    @property
    def n_paths(self) -> int:
        return self.paths.shape[0]

    @property
    def state_shape(self) -> tuple:
        return self.paths.shape[2:]

    def marginal(self, t: float) -> np.ndarray:
        i = _time_index(self.times, t)
        return self.paths[:, i]

    def metadata(self) -> dict:
        return {"seed": self.seed, "scheme": self.scheme, "params": self.params,
                "warnings": self.warnings, "n_paths": self.n_paths,
                "times": self.times.tolist()}

    def write_csv(self, path, sidecar: bool = True) -> None:
        """One row per (path, time): path_id,time,component_0..,functional.

        Matrix states are written as their upper-triangular coordinates.
        """
        path = Path(path)
        if len(self.state_shape) == 2:
            flat = to_vector(self.paths)
        else:
            flat = self.paths.reshape(self.n_paths, len(self.times), -1)
        width = flat.shape[2]
        if self.functionals is None:
            func = np.full((self.n_paths, len(self.times)), np.nan)
        else:
            func = self.functionals
            if func.ndim == 3:
                func = func.sum(axis=2)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["path_id", "time", *[f"component_{j}" for j in range(width)],
                        "functional"])
            for i in range(self.n_paths):
                for g, t in enumerate(self.times):
                    w.writerow([i, repr(float(t)), *[repr(float(v)) for v in flat[i, g]],
                                repr(float(func[i, g]))])
        if sidecar:
            Path(str(path) + ".json").write_text(json.dumps(self.metadata(), indent=2,
                                                            sort_keys=True))


def _time_index(times: np.ndarray, t: float) -> int:
    i = int(np.argmin(np.abs(times - t)))
    if abs(times[i] - t) > 1e-12 * max(1.0, abs(t)):
        raise DomainError(f"time {t} is not on the ensemble grid")
    return i


# ---------------------------------------------------------------------------
# random streams


def block_rng(seed: int, stage: str, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed) & (2 ** 64 - 1), _STAGES[stage], block])
    return np.random.Generator(np.random.Philox(ss))


def _run_blocks(n_paths: int, seed: int, stage: str, fn, workers: int = 1) -> list:
    """Apply fn(rng, start, stop) per block; results in block order."""
    starts = list(range(0, n_paths, BLOCK))
    jobs = [(block_rng(seed, stage, b), s, min(s + BLOCK, n_paths))
            for b, s in enumerate(starts)]
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(lambda j: fn(*j), jobs))
    return [fn(*j) for j in jobs]


# ---------------------------------------------------------------------------
# grids


def log_grid(t_min: float, t_max: float, count: int) -> np.ndarray:
    if not 0 < t_min <= t_max or count < 1:
        raise DomainError("log grid needs 0 < min <= max and count >= 1")
    if count == 1:
        return np.array([t_min])
    return np.geomspace(t_min, t_max, count)


def parse_grid_spec(spec: str) -> np.ndarray:
    """``log:<min>:<max>:<count>``."""
    parts = spec.split(":")
    if len(parts) != 4 or parts[0] != "log":
        raise ConfigError(f"grid spec must look like log:<min>:<max>:<count>, got {spec!r}")
    try:
        lo, hi, n = float(parts[1]), float(parts[2]), int(parts[3])
    except ValueError as exc:
        raise ConfigError(f"bad grid spec {spec!r}: {exc}") from None
    try:
        return log_grid(lo, hi, n)
    except DomainError as exc:
        raise ConfigError(str(exc)) from None


def reciprocal_grid(u_values) -> np.ndarray:
    """Simulation times {1/u}, increasing, so inversion needs no interpolation."""
    u = np.asarray(u_values, dtype=float)
    if np.any(u <= 0):
        raise DomainError("u values must be positive")
    return np.unique(1.0 / u)


def _fine_times(times: np.ndarray, substeps: int) -> tuple[np.ndarray, np.ndarray]:
    """Fine grid from 0 through every observation time, and observation indices."""
    if substeps < 1:
        raise DomainError("substeps must be >= 1")
    knots = np.concatenate([[0.0], times])
    pieces = [np.linspace(knots[i], knots[i + 1], substeps + 1)[1:]
              for i in range(len(times))]
    fine = np.concatenate([[0.0], *pieces])
    idx = substeps * np.arange(1, len(times) + 1)
    return fine, idx


# ---------------------------------------------------------------------------
# samplers


def sample_besq(delta: float, x0, t: float, rng: np.random.Generator, size=None):
    """Exact squared-Bessel transition: Gamma(delta/2 + Poisson(x0/2t), 2t)."""
    if delta <= 0:
        raise DomainError("delta must be positive")
    if t <= 0:
        raise DomainError("t must be positive")
    x0 = np.asarray(x0, dtype=float)
    if np.any(x0 < 0):
        raise DomainError("x0 must be nonnegative")
    if size is None:
        size = x0.shape
    k = rng.poisson(x0 / (2 * t), size=size)
    return rng.gamma(delta / 2 + k, 2 * t, size=size)


def _trapezoid(f_prev, f_new, dt):
    return 0.5 * (f_prev + f_new) * dt


def _capped_inverse(v, counter):
    small = v < ZERO_CUTOFF
    if np.any(small):
        counter[0] += int(np.count_nonzero(small))
    return 1.0 / np.maximum(v, ZERO_CUTOFF)


def _besq_block(delta, x0_sq, fine, idx):
    """Closure simulating BESQ paths on the fine grid.

    Accumulates int ds / X (X the BESQ value),
    which equals int ds / R^2 for the Bessel process R = sqrt(X).
    """
    def run(rng, start, stop):
        n = stop - start
        x = np.full(n, float(x0_sq))
        a = np.zeros(n)
        hits = [0]
        f_prev = _capped_inverse(x, hits) if x0_sq > 0 else np.zeros(n)
        out_x = np.empty((n, len(idx)))
        out_a = np.empty((n, len(idx)))
        j = 0
        for i in range(1, len(fine)):
            dt = fine[i] - fine[i - 1]
            x = sample_besq(delta, x, dt, rng)
            f_new = _capped_inverse(x, hits)
            if i == 1 and x0_sq == 0:
                f_prev = f_new
            a += _trapezoid(f_prev, f_new, dt)
            f_prev = f_new
            if i == idx[j]:
                out_x[:, j] = x
                out_a[:, j] = a
                j += 1
        return out_x, out_a, hits[0]
    return run


def _gather(results):
    xs = np.concatenate([r[0] for r in results])
    fs = np.concatenate([r[1] for r in results])
    count = sum(r[2] for r in results)
    return xs, fs, count


def simulate_besq(delta: float, x0: float, times, paths: int, seed: int,
                  substeps: int = DEFAULT_SUBSTEPS, workers: int = 1,
                  root: bool = False) -> PathEnsemble:
    """BESQ(delta) paths (or Bessel paths sqrt(BESQ) when ``root``)."""
    times = np.asarray(times, dtype=float)
    if x0 < 0:
        raise DomainError("x0 must be nonnegative")
    x0_sq = x0 * x0 if root else x0
    if len(times) == 0:
        return _empty(seed, "bessel-exact" if root else "besq-exact")
    fine, idx = _fine_times(times, substeps)
    res = _run_blocks(paths, seed, "radial", _besq_block(delta, x0_sq, fine, idx), workers)
    xs, fs, hits = _gather(res)
    warnings = []
    if hits:
        warnings.append(f"{hits} fine steps hit the {ZERO_CUTOFF:g} neighbourhood of 0; "
                        "functional increments capped")
    return PathEnsemble(times, np.sqrt(xs) if root else xs, fs, seed,
                        "bessel-exact" if root else "besq-exact",
                        {"delta": delta, "x0": x0, "substeps": substeps}, warnings)


def _empty(seed, scheme):
    return PathEnsemble(np.zeros(0), np.zeros((0, 0)), np.zeros((0, 0)), seed, scheme)


def _wishart_bb_block(delta, m, x0, fine, idx):
    n = int(round(delta))
    b0 = np.zeros((n, m))
    w, v = np.linalg.eigh(x0)
    b0[:m] = (v * np.sqrt(np.clip(w, 0, None))) @ v.T

    def run(rng, start, stop):
        k = stop - start
        b = np.broadcast_to(b0, (k, n, m)).copy()
        hits = [0]
        x = np.swapaxes(b, 1, 2) @ b
        f_prev = np.sum(_capped_inverse(np.linalg.eigvalsh(x), hits), axis=-1)
        a = np.zeros(k)
        out_x = np.empty((k, len(idx), m, m))
        out_a = np.empty((k, len(idx)))
        j = 0
        for i in range(1, len(fine)):
            dt = fine[i] - fine[i - 1]
            b += rng.standard_normal((k, n, m)) * math.sqrt(dt)
            x = np.swapaxes(b, 1, 2) @ b
            f_new = np.sum(_capped_inverse(np.linalg.eigvalsh(x), hits), axis=-1)
            a += _trapezoid(f_prev, f_new, dt)
            f_prev = f_new
            if i == idx[j]:
                out_x[:, j] = x
                out_a[:, j] = a
                j += 1
        return out_x, out_a, hits[0]
    return run


def _wishart_em_block(delta, m, x0, fine, idx):
    eye = np.eye(m)

    def run(rng, start, stop):
        k = stop - start
        x = np.broadcast_to(x0, (k, m, m)).copy()
        hits = [0]
        floors = [0]
        f_prev = np.sum(_capped_inverse(np.linalg.eigvalsh(x), hits), axis=-1)
        a = np.zeros(k)
        out_x = np.empty((k, len(idx), m, m))
        out_a = np.empty((k, len(idx)))
        j = 0
        for i in range(1, len(fine)):
            dt = fine[i] - fine[i - 1]
            w, v = np.linalg.eigh(x)
            root = (v * np.sqrt(np.clip(w, 0, None))[:, None, :]) @ np.swapaxes(v, 1, 2)
            db = rng.standard_normal((k, m, m)) * math.sqrt(dt)
            step = root @ db
            x = x + step + np.swapaxes(step, 1, 2) + delta * dt * eye
            x = 0.5 * (x + np.swapaxes(x, 1, 2))
            w, v = np.linalg.eigh(x)
            low = w < EIG_FLOOR
            if np.any(low):
                floors[0] += int(np.count_nonzero(np.any(low, axis=1)))
                w = np.maximum(w, EIG_FLOOR)
                x = (v * w[:, None, :]) @ np.swapaxes(v, 1, 2)
            f_new = np.sum(_capped_inverse(w, hits), axis=-1)
            a += _trapezoid(f_prev, f_new, dt)
            f_prev = f_new
            if i == idx[j]:
                out_x[:, j] = x
                out_a[:, j] = a
                j += 1
        return out_x, out_a, hits[0], floors[0]
    return run


def simulate_wishart(delta: float, m: int, x0, times, paths: int, seed: int,
                     substeps: int = DEFAULT_SUBSTEPS, workers: int = 1,
                     scheme: str | None = None) -> PathEnsemble:
    """Wishart paths with A_t = int Tr(X^-1) ds.

    Integer delta >= m uses the exact B'B construction; otherwise (or when
    ``scheme="em"``) Euler-Maruyama with an eigenvalue floor.
    """
    x0 = np.asarray(x0, dtype=float).reshape(m, m)
    if np.any(np.linalg.eigvalsh(x0) < 0):
        raise DomainError("x0 must be positive semidefinite")
    times = np.asarray(times, dtype=float)
    exact_ok = float(delta).is_integer() and delta >= m
    if scheme is None:
        scheme = "bb" if exact_ok else "em"
    if scheme == "bb" and not exact_ok:
        raise DomainError("exact B'B construction needs an integer delta >= m")
    name = "wishart-bb" if scheme == "bb" else "wishart-em"
    if len(times) == 0:
        return _empty(seed, name)
    fine, idx = _fine_times(times, substeps)
    params = {"delta": delta, "m": m, "x0": x0.tolist(), "substeps": substeps}
    warnings = []
    if scheme == "bb":
        res = _run_blocks(paths, seed, "radial",
                          _wishart_bb_block(delta, m, x0, fine, idx), workers)
    else:
        res = _run_blocks(paths, seed, "radial",
                          _wishart_em_block(delta, m, x0, fine, idx), workers)
        floors = sum(r[3] for r in res)
        steps = paths * (len(fine) - 1)
        if floors > FLOOR_WARN_FRACTION * steps:
            warnings.append(f"eigenvalue floor triggered in {floors} of {steps} steps")
    xs, fs, hits = _gather(res)
    if hits:
        warnings.append(f"{hits} eigenvalues below {ZERO_CUTOFF:g}; functional capped")
    return PathEnsemble(times, xs, fs, seed, name, params, warnings)


def _simulate_dunkl_orthogonal(model, x0, times, paths, seed, substeps, workers):
    """Radial part of an orthogonal Dunkl process, in ambient coordinates.

    In the root frame each coordinate u_i = <a_i, x>/sqrt(2) has |u_i| a
    Bessel process of index k_i - 1/2 carrying A^i = int ds / u_i^2; the
    complement is Brownian motion.  Signs stay those of x0 until the skew
    product flips them.
    """
    p = model.params
    frame = np.asarray(p["frame"])
    k = np.asarray(p["k"])
    l = len(k)
    n = p["n"]
    u0 = frame @ np.asarray(x0, dtype=float)
    if np.any(u0[:l] == 0):
        raise DomainError("x0 must not lie on a reflecting hyperplane")
    sign0 = np.sign(u0[:l])
    us, fs, warnings = [], [], []
    for i in range(l):
        ens = simulate_besq(2 * k[i] + 1, abs(u0[i]), times, paths, _sub_seed(seed, i),
                            substeps, workers, root=True)
        us.append(ens.paths * sign0[i])
        fs.append(ens.functionals)
        warnings += ens.warnings
    if n > l:
        rng = block_rng(_sub_seed(seed, l), "radial", 0)
        dt = np.diff(np.concatenate([[0.0], times]))
        inc = rng.standard_normal((paths, len(times), n - l)) * np.sqrt(dt)[None, :, None]
        comp = u0[l:] + np.cumsum(inc, axis=1)
    else:
        comp = np.zeros((paths, len(times), 0))
    u = np.concatenate([np.stack(us, axis=-1), comp], axis=-1)
    x = u @ frame
    params = {"n": n, "roots": p["roots"], "k": p["k"], "x0": list(map(float, x0)),
              "substeps": substeps}
    return PathEnsemble(times, x, np.stack(fs, axis=-1), seed, "dunkl-orthogonal-exact",
                        params, warnings)


def _sub_seed(seed: int, i: int) -> int:
    return int(np.random.SeedSequence([int(seed) & (2 ** 64 - 1), 99, i]).generate_state(1,
                                                                              np.uint64)[0])


def simulate_radial(model: ProcessModel, x0, times, paths: int, seed: int,
                    substeps: int = DEFAULT_SUBSTEPS, workers: int = 1) -> PathEnsemble:
    """Radial (unsigned) paths of a catalog model with the functional its
    skew product needs."""
    name = model.name
    p = model.params
    times = np.asarray(times, dtype=float)
    if name == "bessel":
        nu, sigma = p["nu"], p["sigma"]
        if nu <= -1:
            raise DomainError("Bessel simulation needs nu > -1")
        ens = simulate_besq(2 * nu + 2, float(x0) / sigma, times, paths, seed, substeps,
                            workers, root=True)
        if sigma != 1.0 and len(ens.times):
            ens.paths = ens.paths * sigma
            ens.functionals = ens.functionals / sigma ** 2
        ens.params.update(nu=nu, sigma=sigma, x0=float(x0))
        return ens
    if name == "squared_bessel":
        return simulate_besq(p["delta"], float(x0), times, paths, seed, substeps, workers)
    if name in ("gen_dunkl1d", "dunkl1d"):
        k = p["k"]
        ens = simulate_besq(2 * k + 1, abs(float(x0)), times, paths, seed, substeps, workers,
                            root=True)
        ens.params.update(k=k, x0=float(x0))
        return ens
    if name in ("wishart", "skew_wishart"):
        m = p["m"]
        x0 = np.asarray(x0, dtype=float).reshape(m, m)
        w = np.linalg.eigvalsh(x0)
        if np.all(w < 0):
            x0 = -x0
        ens = simulate_wishart(p["delta"], m, x0, times, paths, seed, substeps, workers)
        return ens
    if name == "dunkl_orthogonal":
        return _simulate_dunkl_orthogonal(model, x0, times, paths, seed, substeps, workers)
    if name in ("brownian", "brownian_drift"):
        return simulate_brownian(model, x0, times, paths, seed)
    raise DomainError(f"no path simulator for model {name}")


def simulate_brownian(model: ProcessModel, x0, times, paths: int, seed: int) -> PathEnsemble:
    """Exact Gaussian increments, with the drift of a drifted model."""
    shape = model.state_shape
    drift = np.asarray(model.params.get("b", np.zeros(shape)), dtype=float).reshape(shape)
    times = np.asarray(times, dtype=float)
    dt = np.diff(np.concatenate([[0.0], times]))
    x0 = np.asarray(x0, dtype=float).reshape(shape)

    def run(rng, start, stop):
        z = rng.standard_normal((stop - start, len(times), *shape))
        scale = np.sqrt(dt).reshape((1, -1) + (1,) * len(shape))
        steps = z * scale + drift * dt.reshape((1, -1) + (1,) * len(shape))
        return x0 + np.cumsum(steps, axis=1)

    xs = np.concatenate(_run_blocks(paths, seed, "radial", run))
    return PathEnsemble(times, xs, None, seed, "brownian-exact",
                        {"x0": x0.tolist(), "b": drift.tolist()})


# ---------------------------------------------------------------------------
# skew products


def flip_probability(lam, da):
    """P(odd count) for a Poisson clock of rate lam run for dA: (1 - e^{-2 lam dA})/2."""
    return -0.5 * np.expm1(-2.0 * np.asarray(lam) * da)


def skew_product(base: PathEnsemble, lam, seed: int | None = None) -> PathEnsemble:
    """Attach Poisson-clock sign flips driven by the base functional.

    On each grid interval the sign flips with probability
    (1 - exp(-2 lam dA))/2.  Scalar and matrix states are multiplied by the
    sign; orthogonal Dunkl states are reflected in the corresponding root.
    """
    if base.functionals is None:
        raise DomainError("skew product needs an ensemble carrying A_t")
    seed = base.seed if seed is None else seed
    func = base.functionals
    per_root = func.ndim == 3
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise DomainError("lambda must be nonnegative")
    if per_root:
        lam = np.broadcast_to(lam, (func.shape[2],))
    da = np.diff(np.concatenate([np.zeros_like(func[:, :1]), func], axis=1), axis=1)
    n = base.n_paths

    def run(rng, start, stop):
        pr = flip_probability(lam, da[start:stop])
        flips = rng.random(pr.shape) < pr
        return np.where(np.cumsum(flips, axis=1) % 2 == 1, -1.0, 1.0)

    signs = np.concatenate(_run_blocks(n, seed, "skew", run))
    params = dict(base.params)
    params["lambda"] = lam.tolist()
    if per_root:
        roots = np.asarray(base.params["roots"], dtype=float)
        x = base.paths.copy()
        for i, alpha in enumerate(roots):
            flip = signs[:, :, i] < 0
            proj = x @ alpha
            x = np.where(flip[..., None], x - proj[..., None] * alpha, x)
        paths = x
    else:
        sgn0 = _initial_sign(base)
        extra = (1,) * len(base.state_shape)
        paths = base.paths * (sgn0 * signs).reshape(signs.shape + extra)
    return PathEnsemble(base.times, paths, base.functionals, seed, base.scheme + "+skew",
                        params, list(base.warnings))


def _initial_sign(base: PathEnsemble) -> float:
    x0 = base.params.get("x0")
    if x0 is None:
        return 1.0
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim == 2:
        return -1.0 if np.all(np.linalg.eigvalsh(x0) < 0) else 1.0
    return -1.0 if x0 < 0 else 1.0


def simulate(model: ProcessModel, x0, times, paths: int, seed: int,
             substeps: int = DEFAULT_SUBSTEPS, workers: int = 1) -> PathEnsemble:
    """Paths of any simulable catalog model: radial part plus skew product."""
    ens = simulate_radial(model, x0, times, paths, seed, substeps, workers)
    if model.name in ("gen_dunkl1d", "dunkl1d", "skew_wishart", "dunkl_orthogonal"):
        if len(ens.times) == 0:
            return ens
        lam = model.params.get("lambda", model.params.get("k"))
        if model.name == "skew_wishart":
            ens.params["x0"] = np.asarray(x0, dtype=float).tolist()
        return skew_product(ens, lam, seed)
    return ens


# ---------------------------------------------------------------------------
# time inversion


def invert_paths(ensemble: PathEnsemble, alpha: float, u_values=None) -> PathEnsemble:
    """Y_u = u^alpha X_{1/u}, read off the grid point 1/u (no interpolation)."""
    times = ensemble.times
    if u_values is None:
        u_values = 1.0 / times[::-1]
    u = np.asarray(u_values, dtype=float)
    if np.any(u <= 0) or np.any(np.diff(u) <= 0):
        raise DomainError("u values must be positive and increasing")
    idx = []
    for v in u:
        j = int(np.argmin(np.abs(times - 1.0 / v)))
        if abs(times[j] - 1.0 / v) > 1e-12 * max(1.0, 1.0 / v):
            raise DomainError(f"u={v} is outside the simulated reciprocal grid")
        idx.append(j)
    extra = (1,) * len(ensemble.state_shape)
    scale = (u ** alpha).reshape((1, -1) + extra)
    paths = ensemble.paths[:, idx] * scale
    params = dict(ensemble.params, alpha=alpha)
    return PathEnsemble(u, paths, None, ensemble.seed, ensemble.scheme + "+inverted",
                        params, list(ensemble.warnings))


# ---------------------------------------------------------------------------
# conditional functional given the endpoint


@dataclass(frozen=True)
class BinRow:
    y_low: float
    y_high: float
    count: int
    empirical: float
    analytic: float
    standard_error: float

    @property
    def z_score(self) -> float:
        if self.standard_error == 0:
            return 0.0 if self.empirical == self.analytic else math.inf
        return (self.empirical - self.analytic) / self.standard_error


def bessel_ratio(nu: float, mu: float, z):
    """(I_mu / I_nu)(z), computed in log space."""
    z = np.asarray(z, dtype=float)
    with np.errstate(divide="ignore"):
        return np.exp((mu - nu) * np.log(z) + log_bessel_ix(mu, z) - log_bessel_ix(nu, z))


def matrix_bessel_ratio_m1(nu: float, mu: float, z):
    """(I~_mu / I~_nu)(z) for 1x1 matrices, via the zonal series."""
    from timeinv import matrix_special as ms
    e = np.asarray(z, dtype=float).reshape(-1, 1)
    out = np.exp(ms.log_bessel_matrix(mu, e) - ms.log_bessel_matrix(nu, e))
    return out.reshape(np.shape(z))


def mc_conditional_functional(nu: float, lam: float, x0: float, t: float, paths: int,
                              seed: int, bins: int = 10, substeps: int = 64,
                              analytic: str = "bessel") -> tuple[list, list]:
    """Binned E[exp(-2 lam A_t) | X_t] against (I_mu/I_nu)(x0 y / t).

    Returns (rows, notes).  With ``analytic="wishart"`` the reference is the
    m=1 matrix Bessel ratio at x0^2 y^2 / (4 t^2), which must coincide.
    """
    if paths < 10_000:
        raise DomainError("need at least 10^4 paths")
    mu = math.sqrt(nu * nu + 4 * lam)
    ens = simulate_besq(2 * nu + 2, x0, [t], paths, seed, substeps, root=True)
    y = ens.paths[:, 0]
    a = ens.functionals[:, 0]
    emp = np.exp(-2 * lam * a)
    if analytic == "bessel":
        ref = bessel_ratio(nu, mu, x0 * y / t)
    elif analytic == "wishart":
        ref = matrix_bessel_ratio_m1(nu, mu, (x0 * y) ** 2 / (4 * t * t))
    else:
        raise DomainError(f"unknown analytic reference {analytic!r}")
    edges = np.quantile(y, np.linspace(0, 1, bins + 1))
    which = np.clip(np.searchsorted(edges, y, side="right") - 1, 0, bins - 1)
    rows, notes = [], []
    for b in range(bins):
        sel = which == b
        cnt = int(np.count_nonzero(sel))
        if cnt < 2:
            notes.append(f"bin {b} dropped: {cnt} samples")
            continue
        diff = emp[sel] - ref[sel]
        rows.append(BinRow(float(edges[b]), float(edges[b + 1]), cnt, float(emp[sel].mean()),
                           float(ref[sel].mean()), float(diff.std(ddof=1) / math.sqrt(cnt))))
    return rows, notes
