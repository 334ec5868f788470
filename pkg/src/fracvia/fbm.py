"""Exact sampling of multi-channel fractional Brownian motion with H > 1/2.

Two samplers are provided: a Cholesky factorization of the covariance
matrix (the reference) and Davies-Harte circulant embedding of the
stationary increments (the fast path). Both draw every (replication, channel)
pair from its own counter-derived random stream, so results do not depend on
how the work is scheduled.
"""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .fraccalc import lambda_alpha
from .grid import GridFunction

__all__ = [
    "FbmSpec",
    "covariance",
    "fgn_autocovariance",
    "sample_fbm_cholesky",
    "sample_fbm_circulant",
    "sample_paths",
    "increment_moment_check",
    "empirical_holder_exponent",
    "pathwise_lambda",
    "thread_count",
]

CHOLESKY_MAX_POINTS = 8192
EMBEDDING_TOL = 1e-10


def thread_count() -> int:
    """Worker threads allowed by ``FRACVIA_THREADS`` (defaults to the CPU count)."""
    raw = os.environ.get("FRACVIA_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ValueError(f"FRACVIA_THREADS must be an integer, got {raw!r}")
    return os.cpu_count() or 1


@dataclass(frozen=True)
class FbmSpec:
    """Hurst index, channel count, time window, grid size and master seed."""

    hurst: float
    channels: int = 1
    t0: float = 0.0
    t1: float = 1.0
    grid_points: int = 256
    seed: int = 0
    times: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not 0.5 < self.hurst < 1.0:
            raise ValueError(f"hurst must lie in (1/2, 1), got {self.hurst!r}")
        if int(self.channels) != self.channels or self.channels < 1:
            raise ValueError("channels must be a positive integer")
        if not 0.0 <= self.t0 < self.t1:
            raise ValueError("need 0 <= t0 < t1")
        if int(self.grid_points) != self.grid_points or self.grid_points < 2:
            raise ValueError("grid_points must be an integer >= 2")
        if not 0 <= int(self.seed) < 2**64 or int(self.seed) != self.seed:
            raise ValueError("seed must be a 64-bit unsigned integer")
        times = np.linspace(self.t0, self.t1, int(self.grid_points))
        times.flags.writeable = False
        object.__setattr__(self, "times", times)

    @property
    def step(self) -> float:
        return (self.t1 - self.t0) / (self.grid_points - 1)


def covariance(s, t, hurst: float):
    """Covariance ``R_H(s, t) = (t**2H + s**2H - |t - s|**2H) / 2``."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if not 0.0 < hurst < 1.0:
        raise ValueError("hurst must lie in (0, 1)")
    if np.any(s < 0) or np.any(t < 0):
        raise ValueError("times must be nonnegative")
    h2 = 2.0 * hurst
    out = 0.5 * (t**h2 + s**h2 - np.abs(t - s) ** h2)
    return float(out) if out.ndim == 0 else out


def fgn_autocovariance(lags, hurst: float, dt: float = 1.0):
    """Autocovariance of fBm increments on a lattice of spacing ``dt``."""
    j = np.abs(np.asarray(lags, dtype=float))
    h2 = 2.0 * hurst
    return 0.5 * (np.abs(j + 1) ** h2 + np.abs(j - 1) ** h2 - 2 * j**h2) * dt**h2


def _stream(seed: int, rep: int, channel: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(rep), int(channel)))
    return np.random.Generator(np.random.PCG64(ss))


def _parallel_map(fn, items):
    workers = min(thread_count(), max(1, len(items)))
    if workers == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# --------------------------------------------------------------------------
# Cholesky sampler
# --------------------------------------------------------------------------


def _cholesky_factor(times: np.ndarray, hurst: float) -> np.ndarray:
    """Lower factor of the covariance at the strictly positive ``times``."""
    cov = covariance(times[:, None], times[None, :], hurst)
    cov = np.atleast_2d(cov)
    m = cov.shape[0]
    cov = cov + np.eye(m) * (1e-12 * np.trace(cov) / m)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        smallest = float(np.linalg.eigvalsh(cov)[0])
        raise np.linalg.LinAlgError(
            f"covariance not positive definite after jitter; "
            f"smallest eigenvalue estimate {smallest:.3e}"
        ) from None


def _cholesky_paths(spec: FbmSpec, reps: range) -> np.ndarray:
    n = spec.grid_points
    if n > CHOLESKY_MAX_POINTS:
        raise ValueError(f"Cholesky sampler limited to n <= {CHOLESKY_MAX_POINTS}")
    times = spec.times
    pos = times > 0
    factor = _cholesky_factor(times[pos], spec.hurst)
    m = factor.shape[0]
    k = spec.channels

    def one(rep):
        z = np.stack([_stream(spec.seed, rep, c).standard_normal(m) for c in range(k)])
        out = np.zeros((n, k))
        # einsum keeps the summation order fixed regardless of BLAS threading
        out[pos] = np.einsum("ij,cj->ic", factor, z)
        return out

    return np.stack(_parallel_map(one, list(reps)))


def sample_fbm_cholesky(spec: FbmSpec, rep: int = 0) -> GridFunction:
    """One replication by exact Cholesky factorization.

    The process is sampled at absolute times, so ``B_0 = 0`` holds even when
    the window starts later.
    """
    vals = _cholesky_paths(spec, range(rep, rep + 1))[0]
    return GridFunction(spec.times, vals)


# --------------------------------------------------------------------------
# Circulant embedding sampler
# --------------------------------------------------------------------------


def _embedding_sqrt(count: int, hurst: float, dt: float) -> np.ndarray:
    """Square roots of the scaled circulant eigenvalues for ``count`` increments."""
    lags = np.arange(count + 1)
    gam = fgn_autocovariance(lags, hurst, dt)
    row = np.concatenate([gam, gam[-2:0:-1]])
    eig = np.fft.fft(row).real
    if eig.min() < -EMBEDDING_TOL * eig.max():
        raise np.linalg.LinAlgError(
            f"negative circulant eigenvalue {eig.min():.3e}; embedding invalid"
        )
    return np.sqrt(np.clip(eig, 0.0, None) / row.size)


def _lattice_offset(spec: FbmSpec) -> int:
    pos = spec.t0 / spec.step
    off = int(round(pos))
    if abs(pos - off) > 1e-9 * max(1.0, pos):
        raise ValueError(
            "circulant sampler needs t0 to be a multiple of the grid step "
            "so the path can be pinned at time 0"
        )
    return off


def _circulant_paths(spec: FbmSpec, reps: range) -> np.ndarray:
    n, k = spec.grid_points, spec.channels
    off = _lattice_offset(spec)
    count = off + n - 1
    root = _embedding_sqrt(count, spec.hurst, spec.step)
    size = root.size

    def one(rep):
        out = np.zeros((n, k))
        for c in range(k):
            z = _stream(spec.seed, rep, c).standard_normal((2, size))
            w = np.fft.fft(root * (z[0] + 1j * z[1]))
            path = np.concatenate([[0.0], np.cumsum(w.real[:count])])
            out[:, c] = path[off:]
        return out

    return np.stack(_parallel_map(one, list(reps)))


def sample_fbm_circulant(spec: FbmSpec, rep: int = 0) -> GridFunction:
    """One replication by Davies-Harte circulant embedding, ``O(n log n)``."""
    vals = _circulant_paths(spec, range(rep, rep + 1))[0]
    return GridFunction(spec.times, vals)


def sample_paths(spec: FbmSpec, paths: int, method: str = "circulant") -> np.ndarray:
    """Array of shape ``(paths, n, channels)``; replication ``r`` matches ``rep=r``."""
    if paths < 1:
        raise ValueError("paths must be positive")
    if method == "cholesky":
        return _cholesky_paths(spec, range(paths))
    if method == "circulant":
        return _circulant_paths(spec, range(paths))
    raise ValueError(f"unknown sampling method {method!r}")


# --------------------------------------------------------------------------
# Statistical and pathwise checks
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LagMoment:
    lag: float
    empirical: float
    target: float
    std_error: float
    flagged: bool


@dataclass(frozen=True)
class MomentReport:
    lags: tuple[LagMoment, ...]
    degenerate: bool
    too_few_paths: bool

    @property
    def flagged(self) -> bool:
        return self.degenerate or self.too_few_paths or any(m.flagged for m in self.lags)


def _as_path_array(paths) -> tuple[np.ndarray, np.ndarray]:
    """Accept GridFunctions or a ``(times, array)`` pair with array ``(paths, n, k)``."""
    if isinstance(paths, GridFunction):
        paths = [paths]
    if isinstance(paths, tuple) and len(paths) == 2 and isinstance(paths[1], np.ndarray):
        times, arr = paths
        return np.asarray(times, dtype=float), np.asarray(arr, dtype=float)
    paths = list(paths)
    times = paths[0].times
    arr = np.stack([np.asarray(p.values) for p in paths])
    return times, arr


def increment_moment_check(paths, hurst: float, lags=None, min_paths: int = 100,
                           sigmas: float = 4.0) -> MomentReport:
    """Compare ``E|B_t - B_s|**2`` with ``|t - s|**2H`` lag by lag.

    Each channel of each path counts as one independent sample. The standard
    error is taken across samples, so correlation along a path is handled.
    """
    times, arr = _as_path_array(paths)
    n = times.size
    samples = np.moveaxis(arr, 2, 1).reshape(-1, n)
    h = times[1] - times[0]
    if lags is None:
        lags = [2**j for j in range(int(np.log2(n - 1)) + 1)]
    degenerate = bool(np.all(np.ptp(samples, axis=1) == 0.0))
    count = samples.shape[0]
    out = []
    for lag in lags:
        lag = int(lag)
        inc = samples[:, lag:] - samples[:, :-lag]
        per = np.mean(inc**2, axis=1)
        emp = float(per.mean())
        se = float(per.std(ddof=1) / np.sqrt(count)) if count > 1 else 0.0
        target = float((lag * h) ** (2 * hurst))
        bad = degenerate or se == 0.0 or abs(emp - target) > sigmas * se
        out.append(LagMoment(lag * h, emp, target, se, bool(bad)))
    return MomentReport(tuple(out), degenerate, count < min_paths)


def empirical_holder_exponent(paths, max_level: int | None = None) -> float:
    """Slope of mean ``log sup |B_{s+l} - B_s|`` against ``log l`` over dyadic lags."""
    times, arr = _as_path_array(paths)
    n = times.size
    h = times[1] - times[0]
    samples = np.moveaxis(arr, 2, 1).reshape(-1, n)
    top = int(np.log2(n - 1)) if max_level is None else max_level
    xs, ys = [], []
    for j in range(top):
        lag = 2**j
        sup = np.max(np.abs(samples[:, lag:] - samples[:, :-lag]), axis=1)
        xs.append(np.log(lag * h))
        ys.append(np.mean(np.log(sup)))
    return float(np.polyfit(xs, ys, 1)[0])


def pathwise_lambda(path: GridFunction, alpha: float, hurst: float | None = None) -> float:
    """Largest per-channel ``Lambda_alpha`` of a sampled path over its window."""
    if path.n < 8:
        raise ValueError("grid too coarse for Lambda_alpha (need n >= 8)")
    if hurst is not None and not 1.0 - hurst < alpha < 0.5:
        warnings.warn(
            f"alpha={alpha} outside the recommended range (1-H, 1/2) for H={hurst}",
            stacklevel=2,
        )
    best = 0.0
    for c in range(path.value_shape[0]):
        ch = GridFunction(path.times, path.values[:, c])
        best = max(best, lambda_alpha(ch, alpha, path.t0, path.t1))
    return best
