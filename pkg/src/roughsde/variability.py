"""Monte Carlo audit of the variability assumption on the driver.

The functional is ``sup_y E int_0^T |X_t - y|^-q dt`` with
``q = (beta + eps) / alpha``.  Time integrals are exact for the linear
interpolant of each sampled path, including cells where the path crosses
the level ``y``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from ._parallel import ordered_map
from .errors import InvalidArgumentError
from .frac_calc import level_time_integral
from .grid_path import FbmSpec, Grid, GridPath, derive_seeds, sample_fbm

MIN_REPLICAS = 100
STABILITY_TOLERANCE = 0.10
DEFAULT_Y_POINTS = 41
DENSITY_BANDS = 300


@dataclass(frozen=True)
class VariabilityParams:
    alpha: float
    beta: float
    eps: float

    def __post_init__(self):
        if not 0.5 < self.alpha < 1.0:
            raise InvalidArgumentError(f"alpha must lie in (1/2, 1), got {self.alpha!r}")
        if not 1.0 - self.alpha < self.beta < self.alpha:
            raise InvalidArgumentError(
                f"beta must lie in (1 - alpha, alpha) = ({1 - self.alpha:g}, {self.alpha:g}), got {self.beta!r}"
            )
        if not self.eps > 0:
            raise InvalidArgumentError(f"eps must be positive, got {self.eps!r}")

    @property
    def q(self) -> float:
        return (self.beta + self.eps) / self.alpha


@dataclass(frozen=True)
class VariabilityReport:
    """Per-level Monte Carlo means and their supremum.

    ``sup`` is ``max_y mean(y)``; ``mean_of_sup`` is the swapped order
    ``E max_y``.  ``stable`` says the sup moved by less than 10% when the
    replica count was doubled (``sup_doubled``).
    """

    y: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    sup: float
    M: int
    stable: bool
    sup_doubled: float
    mean_of_sup: float
    q: float

    @property
    def argmax(self) -> int:
        return int(np.argmax(self.mean))


Driver = Union[FbmSpec, Callable[[int, Grid], GridPath]]


def _sampler(driver: Driver):
    if isinstance(driver, FbmSpec):
        return lambda seed, grid: sample_fbm(FbmSpec(driver.hurst, seed), grid)
    if callable(driver):
        return driver
    raise InvalidArgumentError(f"unsupported driver {driver!r}")


def default_y_grid(paths, num: int = DEFAULT_Y_POINTS) -> np.ndarray:
    """``num`` levels over the sampled range widened by one range on each side."""
    lo = min(float(p.min()) for p in paths)
    hi = max(float(p.max()) for p in paths)
    width = max(hi - lo, 1e-12)
    return np.linspace(lo - width, hi + width, num)


def path_integrals(path: GridPath, y, q: float) -> np.ndarray:
    """``int_0^T |x_t - y|^-q dt`` per level, for one path."""
    return level_time_integral(path.values, path.grid.mesh, y, q)


def _summarise(values: np.ndarray):
    with np.errstate(invalid="ignore"):
        mean = values.mean(axis=0)
        stderr = values.std(axis=0, ddof=1) / math.sqrt(values.shape[0])
    stderr = np.where(np.isfinite(mean), stderr, math.inf)
    return mean, stderr


def estimate_assumption(
    driver: Driver,
    params: VariabilityParams,
    y_grid=None,
    M: int = 2000,
    grid: Grid | None = None,
    seed: int = 0,
    y_points: int = DEFAULT_Y_POINTS,
) -> VariabilityReport:
    """Estimate the variability functional from ``2 M`` seeded paths.

    The report is built from the first ``M`` paths; all ``2 M`` are used
    only for the stability flag.  Without ``y_grid`` the levels are
    :func:`default_y_grid` with ``y_points`` points.  Replica seeds come
    from ``seed`` by :func:`roughsde.grid_path.derive_seeds`.
    """
    if M < MIN_REPLICAS:
        raise InvalidArgumentError(f"need at least {MIN_REPLICAS} replicas, got M={M}")
    grid = grid or Grid(1.0, 1024)
    sample = _sampler(driver)
    seeds = derive_seeds(seed, 2 * M)
    paths = ordered_map(lambda s: sample(s, grid), seeds)
    if y_grid is None:
        y = default_y_grid([p.values for p in paths[:M]], y_points)
    else:
        y = np.asarray(y_grid, dtype=float)
    q = params.q
    rows = np.array(ordered_map(lambda p: path_integrals(p, y, q), paths))
    mean, stderr = _summarise(rows[:M])
    mean2, _ = _summarise(rows)
    sup = float(np.max(mean))
    sup2 = float(np.max(mean2))
    stable = bool(math.isfinite(sup) and math.isfinite(sup2) and abs(sup2 - sup) < STABILITY_TOLERANCE * sup)
    mean_of_sup = float(np.mean(rows[:M].max(axis=1)))
    return VariabilityReport(y, mean, stderr, sup, M, stable, sup2, mean_of_sup, q)


def gaussian_density_criterion(V: Callable, T: float, bands: int = DENSITY_BANDS) -> tuple[bool, float]:
    """Check ``V^-1/2`` is integrable on ``(0, T]``; returns ``(ok, integral)``.

    The interval is cut into dyadic bands ``[T 2^-k-1, T 2^-k]`` with 16
    Gauss-Legendre points each.  The sum over ``bands`` bands must agree
    with the sum over half as many to ``1e-9`` relative, otherwise the
    integral is reported as divergent: ``(False, inf)``.
    """
    if not T > 0:
        raise InvalidArgumentError(f"T must be positive, got {T!r}")
    gx, gw = np.polynomial.legendre.leggauss(16)
    k = np.arange(bands)
    hi = T * 2.0 ** (-k)
    lo = hi / 2.0
    t = 0.5 * (lo + hi)[:, None] + 0.5 * (hi - lo)[:, None] * gx
    v = np.asarray(V(t), dtype=float) * np.ones_like(t)
    if np.any(~(v > 0)):
        bad = t[~(v > 0)][0]
        raise InvalidArgumentError(f"variance must be positive, V({bad:.3g}) = {V(bad)!r}")
    per_band = 0.5 * (hi - lo) * np.sum(gw / np.sqrt(v), axis=1)
    full = float(per_band.sum())
    half = float(per_band[: bands // 2].sum())
    if math.isfinite(full) and abs(full - half) <= 1e-9 * max(1.0, abs(full)):
        return True, full
    return False, math.inf


def write_report_csv(report: VariabilityReport, file) -> None:
    """``y,mean_integral,stderr`` rows and a ``sup,<value>,<flag>`` footer."""
    with open(file, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["y", "mean_integral", "stderr"])
        for y, m, s in zip(report.y, report.mean, report.stderr):
            w.writerow([f"{y:.17g}", f"{m:.17g}", f"{s:.17g}"])
        w.writerow(["sup", f"{report.sup:.17g}", "stable" if report.stable else "unstable"])


def read_report_csv(file):
    """Inverse of :func:`write_report_csv`: ``(y, mean, stderr, sup, stable)``."""
    with open(file, newline="") as fh:
        rows = list(csv.reader(fh))
    if rows[0] != ["y", "mean_integral", "stderr"] or rows[-1][0] != "sup":
        raise InvalidArgumentError(f"{file}: not a variability report")
    body = np.array([[float(c) for c in r] for r in rows[1:-1]])
    return body[:, 0], body[:, 1], body[:, 2], float(rows[-1][1]), rows[-1][2] == "stable"
