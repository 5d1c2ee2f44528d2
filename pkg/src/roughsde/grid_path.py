"""Uniform-grid paths with fractional Brownian motion sampling.

Every process in the package (drivers, solutions, composites such as
``sigma(X)``) is a :class:`GridPath`: node values on the uniform grid
``t_k = k * T / n``.  Between nodes a path is read as its linear
interpolant.
"""

from __future__ import annotations

import csv
import functools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import EmbeddingError, InvalidArgumentError

# Largest grid on which holder_seminorm scans every lag.
FULL_SCAN_LIMIT = 2**12


@dataclass(frozen=True)
class Grid:
    """Uniform discretisation of ``[0, T]`` with ``n`` steps."""

    T: float
    n: int

    def __post_init__(self):
        if not (math.isfinite(self.T) and self.T > 0):
            raise InvalidArgumentError(f"horizon T must be positive, got {self.T!r}")
        if int(self.n) != self.n or self.n < 2:
            raise InvalidArgumentError(f"need at least 2 steps, got n={self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "T", float(self.T))

    @property
    def mesh(self) -> float:
        return self.T / self.n

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n + 1)

    def index_of(self, t: float, atol: float = 1e-9) -> int:
        """Index of the node at time ``t``; raises if ``t`` is off-grid."""
        k = round(t / self.mesh)
        if k < 0 or k > self.n or abs(k * self.mesh - t) > atol * max(1.0, self.T):
            raise InvalidArgumentError(f"time {t!r} is not a node of {self}")
        return int(k)

    def coarsen(self, factor: int) -> "Grid":
        if self.n % factor:
            raise InvalidArgumentError(f"{factor} does not divide n={self.n}")
        return Grid(self.T, self.n // factor)


def make_grid(T: float, n: int) -> Grid:
    return Grid(T, n)


class GridPath:
    """Node values of a real function on a :class:`Grid`.

    The value array is copied and frozen, so a path can be shared freely.
    ``allow_nonfinite`` admits infinite endpoint limits, as returned by
    fractional derivatives.
    """

    __slots__ = ("grid", "values")

    def __init__(self, grid: Grid, values, allow_nonfinite: bool = False):
        values = np.array(values, dtype=float)
        if values.ndim != 1 or values.size != grid.n + 1:
            raise InvalidArgumentError(
                f"expected {grid.n + 1} node values, got shape {values.shape}"
            )
        if not allow_nonfinite and not np.all(np.isfinite(values)):
            raise InvalidArgumentError("path values must be finite")
        values.setflags(write=False)
        self.grid = grid
        self.values = values

    def __repr__(self):
        return f"GridPath(T={self.grid.T}, n={self.grid.n})"

    def __len__(self):
        return self.values.size

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def at(self, t):
        """Linear interpolation at arbitrary times in ``[0, T]``."""
        return np.interp(t, self.times, self.values)

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "GridPath":
        """Pointwise composition ``fn(path)``."""
        return GridPath(self.grid, fn(self.values))

    def coarsen(self, factor: int) -> "GridPath":
        """Keep every ``factor``-th node (nested refinement studies)."""
        return GridPath(self.grid.coarsen(factor), self.values[::factor])

    def refine(self, factor: int) -> "GridPath":
        """Insert nodes by linear interpolation; the interpolant is unchanged."""
        if factor == 1:
            return self
        fine = Grid(self.grid.T, self.grid.n * factor)
        return GridPath(fine, np.interp(fine.times, self.times, self.values))

    def __add__(self, other):
        if isinstance(other, GridPath):
            _check_same_grid(self, other)
            return GridPath(self.grid, self.values + other.values)
        return GridPath(self.grid, self.values + other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, GridPath):
            _check_same_grid(self, other)
            return GridPath(self.grid, self.values - other.values)
        return GridPath(self.grid, self.values - other)

    def __mul__(self, other):
        if isinstance(other, GridPath):
            _check_same_grid(self, other)
            return GridPath(self.grid, self.values * other.values)
        return GridPath(self.grid, self.values * other)

    __rmul__ = __mul__

    def __neg__(self):
        return GridPath(self.grid, -self.values)


def _check_same_grid(a: GridPath, b: GridPath):
    if a.grid != b.grid:
        raise InvalidArgumentError(f"paths live on different grids: {a.grid} vs {b.grid}")


# -- drivers -----------------------------------------------------------------


@dataclass(frozen=True)
class FbmSpec:
    """Fractional Brownian motion with Hurst index ``hurst`` and a seed."""

    hurst: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.hurst < 1.0:
            raise InvalidArgumentError(f"Hurst index must lie in (0, 1), got {self.hurst!r}")


def fgn_autocovariance(hurst: float, lags: np.ndarray) -> np.ndarray:
    """Autocovariance of unit-step fractional Gaussian noise."""
    k = np.abs(np.asarray(lags, dtype=float))
    h2 = 2.0 * hurst
    return 0.5 * ((k + 1.0) ** h2 - 2.0 * k**h2 + np.abs(k - 1.0) ** h2)


@functools.lru_cache(maxsize=32)
def _circulant_sqrt_eigenvalues(hurst: float, n: int) -> np.ndarray:
    r = fgn_autocovariance(hurst, np.arange(n + 1))
    row = np.concatenate([r, r[-2:0:-1]])
    eig = np.fft.fft(row).real
    if eig.min() < -1e-10 * max(1.0, eig.max()):
        raise EmbeddingError(
            f"circulant embedding has eigenvalue {eig.min():.3e} for H={hurst}, n={n}"
        )
    out = np.sqrt(np.clip(eig, 0.0, None) / row.size)
    out.setflags(write=False)
    return out


def sample_fgn(hurst: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` unit-step fractional Gaussian noise samples (Davies-Harte)."""
    scale = _circulant_sqrt_eigenvalues(float(hurst), int(n))
    m = scale.size
    xi = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    w = np.fft.ifft(scale * xi) * m
    return w.real[:n]


def sample_fbm(spec: FbmSpec, grid: Grid) -> GridPath:
    """Exact fBm sample on ``grid``: cumulative sum of fGn, ``B_0 = 0``."""
    rng = np.random.default_rng(int(spec.seed) % 2**64)
    noise = sample_fgn(spec.hurst, grid.n, rng) * grid.mesh**spec.hurst
    return GridPath(grid, np.concatenate([[0.0], np.cumsum(noise)]))


def derive_seeds(base_seed: int, count: int) -> list[int]:
    """Deterministic per-replica 64-bit seeds."""
    ss = np.random.SeedSequence(int(base_seed) % 2**64)
    return [int(s) for s in ss.generate_state(count, dtype=np.uint64)]


def deterministic_path(kind: str, grid: Grid) -> GridPath:
    t = grid.times
    if kind == "identity":
        v = t
    elif kind == "square":
        v = t**2
    elif kind == "sine":
        v = np.sin(t)
    else:
        raise InvalidArgumentError(f"unknown deterministic path kind {kind!r}")
    return GridPath(grid, v)


# -- Hölder diagnostics --------------------------------------------------------


def _lags(n: int) -> np.ndarray:
    if n <= FULL_SCAN_LIMIT:
        return np.arange(1, n + 1)
    return 2 ** np.arange(int(math.log2(n)) + 1)


def holder_seminorm(path: GridPath, theta: float) -> float:
    """Grid estimate of ``sup |x(t)-x(s)| / (t-s)^theta``.

    A lower bound for the seminorm of the underlying function.  All lags
    are scanned up to ``FULL_SCAN_LIMIT`` steps, dyadic lags above.
    """
    if not 0.0 < theta <= 1.0:
        raise InvalidArgumentError(f"Hölder order must lie in (0, 1], got {theta!r}")
    x = path.values
    h = path.grid.mesh
    best = 0.0
    for m in _lags(path.grid.n):
        inc = np.max(np.abs(x[m:] - x[:-m]))
        best = max(best, inc / (m * h) ** theta)
    return float(best)


def estimate_holder_exponent(path: GridPath) -> float:
    """Log-log slope of mean absolute increments over dyadic lags.

    Used to pick default fractional orders; returns 1.0 for paths whose
    increments vanish.
    """
    x = path.values
    n = path.grid.n
    lags = [2**j for j in range(int(math.log2(n)) - 2) if 2**j < n]
    if len(lags) < 2:
        lags = [1, 2]
    moments = np.array([np.mean(np.abs(x[m:] - x[:-m])) for m in lags])
    if np.any(moments <= 0):
        return 1.0
    slope = np.polyfit(np.log(np.asarray(lags, dtype=float) * path.grid.mesh), np.log(moments), 1)[0]
    return float(min(1.0, max(slope, 1e-3)))


# -- CSV -------------------------------------------------------------------------


def write_path_csv(path: GridPath, file) -> None:
    """Write ``t,value`` rows at full double precision."""
    with open(file, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "value"])
        for t, v in zip(path.times, path.values):
            w.writerow([f"{t:.17g}", f"{v:.17g}"])


def read_path_csv(file) -> GridPath:
    with open(file, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["t", "value"]:
        raise InvalidArgumentError(f"{file}: expected header 't,value'")
    data = np.array([[float(a), float(b)] for a, b in rows[1:]])
    grid = Grid(data[-1, 0], data.shape[0] - 1)
    return GridPath(grid, data[:, 1])
