"""Lamperti transform solver for ``dX = sigma(X) dY``.

``Lambda(x) = int_a^x dy / sigma(y)`` is increasing whenever ``sigma >= 0``
and ``1/sigma`` is locally integrable, and the solution is the path
``X_t = Lambda^-1(Lambda(X_0) + Y_t - Y_0)``.

Three strategies evaluate ``Lambda``:

* piecewise-constant ``sigma`` (steps, and the Cantor part replaced by its
  staircase at a finite level): ``Lambda`` is exactly piecewise linear and
  so is its inverse;
* a single power cusp ``s|x - c|^gamma``: closed form in both directions;
* anything else: a table of adaptive Gauss-Legendre integrals split at the
  breakpoints of ``sigma``, inverted by bisection plus a secant step.

A nonpositive ``sigma`` is handled through ``-sigma``; ``Lambda`` is then
decreasing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid

from . import zaehle_integral as zi
from .bv_function import BVFunction, CantorPart, Power, mollify
from .errors import InvalidArgumentError, NonIntegrableCoefficientError, RangeExhaustedError
from .grid_path import GridPath, _check_same_grid

DEFAULT_TOL = 1e-12
# Staircase level for Cantor parts: Lambda error <= 3**-level / eps0**2.
DEFAULT_STAIRCASE_LEVEL = 18
# Table cells per unit length for the generic strategy.
DEFAULT_TABLE_DENSITY = 64
MAX_REACH = 1e12
MAX_TABLE_CELLS = 20_000
# cells added per table extension; the adaptive rule refines inside each
EXTENSION_CELLS = 256
GRADING_LEVELS = 48

_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


def _gl(fn, a, b):
    """16-point Gauss-Legendre on ``[a, b]`` (vectorised over interval ends)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    mid = 0.5 * (a + b)[..., None]
    half = 0.5 * (b - a)[..., None]
    return np.sum(fn(mid + half * _GL_X) * _GL_W, axis=-1) * half[..., 0]


def _adaptive_gl(fn, a: float, b: float, tol: float, max_depth: int = 400) -> float:
    """Adaptive Gauss-Legendre; raises if the integral does not settle.

    Endpoints are never evaluated, so integrable endpoint singularities are
    resolved by repeated bisection towards them.  ``tol`` is absolute per
    accepted piece: near a non-integrable zero of ``sigma`` the per-piece
    error does not shrink and the depth cap is hit.
    """
    total = 0.0
    stack = [(a, b, float(_gl(fn, a, b)), 0)]
    while stack:
        lo, hi, whole, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        left = float(_gl(fn, lo, mid))
        right = float(_gl(fn, mid, hi))
        halves = left + right
        if not math.isfinite(halves):
            raise NonIntegrableCoefficientError(f"1/sigma is infinite near {mid:.6g}")
        if abs(halves - whole) <= tol:
            total += halves
        elif depth >= max_depth:
            raise NonIntegrableCoefficientError(
                f"integral of 1/sigma over [{a:.6g}, {b:.6g}] does not converge near {mid:.6g}"
            )
        else:
            stack.append((lo, mid, left, depth + 1))
            stack.append((mid, hi, right, depth + 1))
    return total


# -- strategies ----------------------------------------------------------------------


class _PiecewiseLinearMap:
    """Exact ``Lambda`` for piecewise-constant ``|sigma|``."""

    def __init__(self, sigma: BVFunction, level: int):
        edges = set(float(b) for b in sigma.breakpoints())
        for p in sigma.parts:
            if isinstance(p, CantorPart):
                edges.update(p.staircase_edges(level).tolist())
        e = np.array(sorted(edges)) if edges else np.array([0.0])
        mids = 0.5 * (e[:-1] + e[1:])
        inner = np.abs(np.asarray(sigma(mids), dtype=float)) if mids.size else np.zeros(0)
        left = abs(float(sigma(e[0] - 1.0)))
        right = abs(float(sigma(e[-1] + 1.0)))
        levels = np.concatenate([[left], inner, [right]])
        if np.any(levels <= 0):
            raise NonIntegrableCoefficientError(f"{sigma.name} vanishes on an interval; 1/sigma is not integrable")
        self.edges = e
        self.slopes = 1.0 / levels  # slope on (-inf, e0), (e0, e1), ..., (e_last, inf)
        self.cum = np.concatenate([[0.0], np.cumsum(np.diff(e) * self.slopes[1:-1])])

    def primitive(self, x):
        x = np.asarray(x, dtype=float)
        e, c, s = self.edges, self.cum, self.slopes
        k = np.searchsorted(e, x, side="right")  # x in [e_{k-1}, e_k)
        base = np.where(k == 0, 0.0, c[np.maximum(k - 1, 0)])
        origin = np.where(k == 0, e[0], e[np.maximum(k - 1, 0)])
        return base + (x - origin) * s[k]

    def inverse_primitive(self, v):
        v = np.asarray(v, dtype=float)
        e, c, s = self.edges, self.cum, self.slopes
        k = np.searchsorted(c, v, side="right")
        base = np.where(k == 0, 0.0, c[np.maximum(k - 1, 0)])
        origin = np.where(k == 0, e[0], e[np.maximum(k - 1, 0)])
        return origin + (v - base) / s[k]


class _PowerMap:
    """Closed form for ``|sigma| = s |x - c|^gamma`` with ``gamma < 1``."""

    def __init__(self, part: Power):
        if not part.gamma < 1.0:
            raise NonIntegrableCoefficientError(
                f"1/|x|^{part.gamma:g} is not integrable at the zero of sigma (need gamma < 1)"
            )
        self.part = part

    def primitive(self, x):
        p = self.part
        u = np.asarray(x, dtype=float) - p.center
        e = 1.0 - p.gamma
        return np.sign(u) * np.abs(u) ** e / (abs(p.scale) * e)

    def inverse_primitive(self, v):
        p = self.part
        e = 1.0 - p.gamma
        w = np.asarray(v, dtype=float) * abs(p.scale) * e
        return p.center + np.sign(w) * np.abs(w) ** (1.0 / e)


class _QuadratureMap:
    """Tabulated ``Lambda`` for general ``sigma``; the table grows on demand."""

    def __init__(self, sigma: BVFunction, density: int, tol: float):
        self.sigma = sigma
        self.density = int(density)
        self.tol = tol
        self.recip = lambda y: 1.0 / np.abs(np.asarray(sigma(y), dtype=float))
        self.cusps = sorted({p.center for p in sigma.parts if isinstance(p, Power)})
        lo, hi = sigma.audit_interval()
        self.nodes = np.zeros(0)
        self.cum = np.zeros(0)
        self._build(lo, hi)

    def _segment(self, lo, hi, cells):
        """Nodes on ``[lo, hi]`` (breakpoints included) and per-cell integrals."""
        pts = np.union1d(np.linspace(lo, hi, cells + 1), [b for b in self.sigma.breakpoints() if lo < b < hi])
        # cells shrink geometrically towards power-law cusps so that the
        # in-cell Gauss rule stays accurate next to them
        width = (hi - lo) / cells
        graded = [c + sgn * width * 0.5**k for c in self.cusps for sgn in (-1.0, 1.0) for k in range(1, GRADING_LEVELS)]
        pts = np.union1d(pts, [x for x in graded if lo < x < hi])
        with np.errstate(divide="ignore"):
            pieces = np.array([_adaptive_gl(self.recip, a, b, self.tol) for a, b in zip(pts[:-1], pts[1:])])
            rough = _gl(self.recip, pts[:-1], pts[1:])
        return pts, pieces, pieces / rough

    def _build(self, lo, hi):
        lo = max(lo, self.sigma.domain[0])
        hi = min(hi, self.sigma.domain[1])
        cells = min(MAX_TABLE_CELLS, max(2, int(math.ceil((hi - lo) * self.density))))
        pts, pieces, ratio = self._segment(lo, hi, cells)
        self.nodes, self.cum, self.ratio = pts, np.concatenate([[0.0], np.cumsum(pieces)]), ratio

    def _extend(self, lo, hi):
        """Grow the table to cover ``[lo, hi]``, integrating only the new cells."""
        a, b = self.nodes[0], self.nodes[-1]
        lo = max(lo, self.sigma.domain[0])
        hi = min(hi, self.sigma.domain[1])
        if lo < a:
            cells = min(EXTENSION_CELLS, max(2, int(math.ceil((a - lo) * self.density))))
            pts, pieces, ratio = self._segment(lo, a, cells)
            left = self.cum[0] - np.concatenate([np.cumsum(pieces[::-1])[::-1], [0.0]])
            self.nodes = np.concatenate([pts, self.nodes[1:]])
            self.cum = np.concatenate([left, self.cum[1:]])
            self.ratio = np.concatenate([ratio, self.ratio])
        if hi > b:
            cells = min(EXTENSION_CELLS, max(2, int(math.ceil((hi - b) * self.density))))
            pts, pieces, ratio = self._segment(b, hi, cells)
            self.nodes = np.concatenate([self.nodes, pts[1:]])
            self.cum = np.concatenate([self.cum, self.cum[-1] + np.cumsum(pieces)])
            self.ratio = np.concatenate([self.ratio, ratio])

    def _ensure(self, lo, hi):
        a, b = self.nodes[0], self.nodes[-1]
        if lo >= a and hi <= b:
            return
        if max(abs(lo), abs(hi)) > MAX_REACH:
            raise RangeExhaustedError(f"argument beyond the reachable range |x| <= {MAX_REACH:g}")
        width = b - a
        while lo < a or hi > b:
            if lo < a:
                a -= width
            if hi > b:
                b += width
            width *= 2.0
        self._extend(a, b)

    def primitive(self, x):
        x = np.asarray(x, dtype=float)
        if x.size:
            self._ensure(float(x.min()), float(x.max()))
        k = np.clip(np.searchsorted(self.nodes, x, side="right") - 1, 0, self.nodes.size - 2)
        left = self.nodes[k]
        with np.errstate(divide="ignore", invalid="ignore"):
            partial = np.where(x > left, _gl(self.recip, left, np.maximum(x, left)), 0.0)
        return self.cum[k] + self.ratio[k] * partial

    def inverse_primitive(self, v, tol):
        v = np.atleast_1d(np.asarray(v, dtype=float))
        while v.size and (v.min() < self.cum[0] or v.max() > self.cum[-1]):
            span = self.nodes[-1] - self.nodes[0]
            lo = self.nodes[0] - (span if v.min() < self.cum[0] else 0.0)
            hi = self.nodes[-1] + (span if v.max() > self.cum[-1] else 0.0)
            self._ensure(lo, hi)
        k = np.clip(np.searchsorted(self.cum, v, side="right") - 1, 0, self.nodes.size - 2)
        lo = self.nodes[k].copy()
        hi = self.nodes[k + 1].copy()
        for _ in range(200):
            if np.all(hi - lo <= tol * (1.0 + np.abs(lo))):
                break
            mid = 0.5 * (lo + hi)
            below = self.primitive(mid) < v
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        # one secant step, kept only if it stays in the bracket
        flo, fhi = self.primitive(lo) - v, self.primitive(hi) - v
        with np.errstate(divide="ignore", invalid="ignore"):
            sec = lo - flo * (hi - lo) / (fhi - flo)
        ok = np.isfinite(sec) & (sec >= lo) & (sec <= hi)
        return np.where(ok, sec, 0.5 * (lo + hi))


# -- transform ------------------------------------------------------------------------


@dataclass
class LampertiTransform:
    """``Lambda(x) = int_a^x dy/sigma(y)`` and its inverse.

    ``resolution`` is the Cantor staircase level for piecewise-constant
    coefficients and the number of table cells per unit length otherwise.
    """

    sigma: BVFunction
    a: float = 0.0
    tol: float = DEFAULT_TOL
    resolution: int | None = None
    _map: object = field(init=False, repr=False)

    def __post_init__(self):
        s = self.sigma
        if self.tol <= 0:
            raise InvalidArgumentError("tolerance must be positive")
        self.direction = 1.0 if s.sign == "nonnegative" else -1.0
        powers = [p for p in s.parts if isinstance(p, Power)]
        if s.piecewise_constant:
            level = DEFAULT_STAIRCASE_LEVEL if self.resolution is None else int(self.resolution)
            self._map = _PiecewiseLinearMap(s, level)
            self.strategy = "piecewise-linear"
        elif len(s.parts) == 1 and powers:
            self._map = _PowerMap(powers[0])
            self.strategy = "power"
        else:
            density = DEFAULT_TABLE_DENSITY if self.resolution is None else int(self.resolution)
            self._map = _QuadratureMap(s, density, self.tol)
            self.strategy = "quadrature"
        self._offset = float(self._map.primitive(float(self.a)))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        self.sigma._check_domain(x)
        out = self.direction * (self._map.primitive(x) - self._offset)
        return out if out.ndim else float(out)

    def inverse(self, y):
        y = np.asarray(y, dtype=float)
        v = self.direction * y + self._offset
        if isinstance(self._map, _QuadratureMap):
            out = self._map.inverse_primitive(v, self.tol).reshape(y.shape)
        else:
            out = np.asarray(self._map.inverse_primitive(v))
        if np.any(~np.isfinite(out)) or np.any(np.abs(out) > MAX_REACH):
            raise RangeExhaustedError("Lambda^-1 left the reachable range")
        return out if out.ndim else float(out)

    def table(self, lo: float, hi: float, num: int = 1001) -> tuple[np.ndarray, np.ndarray]:
        """``(x, Lambda(x))`` on a uniform grid, for dumps and plots."""
        x = np.linspace(lo, hi, num)
        return x, np.asarray(self(x))


def lambda_(sigma: BVFunction, a: float, x):
    """``Lambda(x) = int_a^x dy/sigma(y)``."""
    return LampertiTransform(sigma, a)(x)


def lambda_inverse(transform: LampertiTransform, y):
    return transform.inverse(y)


# -- solving -------------------------------------------------------------------------


@dataclass(frozen=True)
class StoppingTime:
    eps: float
    time: float
    reached: bool

    @property
    def reported(self) -> float:
        return self.time


@dataclass
class SolveResult:
    """Solution path with its driver and diagnostics.

    ``lambda_defect`` is ``max |Lambda(X_t) - Lambda(X_0) - (Y_t - Y_0)|``.
    ``beyond_tau`` marks nodes after the earliest requested stopping time,
    where uniqueness is not guaranteed.
    """

    X: GridPath
    Y: GridPath
    taus: list
    lambda_defect: float
    transform: LampertiTransform
    beyond_tau: np.ndarray
    residual: float = math.nan


def default_base_point(sigma: BVFunction, x0: float) -> float:
    """``x0`` if ``1/sigma`` is integrable around it, else 0."""
    try:
        if float(sigma(x0)) != 0.0:
            return float(x0)
        LampertiTransform(sigma, float(x0))
        return float(x0)
    except NonIntegrableCoefficientError:
        return 0.0


def tau_epsilon(sigma: BVFunction, X: GridPath, eps: float) -> float:
    """First node time with ``|sigma(X_t)| <= eps``; ``inf`` if never."""
    if not eps > 0:
        raise InvalidArgumentError(f"eps must be positive, got {eps!r}")
    hit = np.flatnonzero(np.abs(np.asarray(sigma(X.values))) <= eps)
    return float(X.times[hit[0]]) if hit.size else math.inf


def stopping_times(sigma: BVFunction, X: GridPath, eps_list: Sequence[float]) -> list[StoppingTime]:
    """``tau_eps`` per level; unreached levels report ``T`` with ``reached=False``."""
    out = []
    for eps in eps_list:
        t = tau_epsilon(sigma, X, eps)
        out.append(StoppingTime(float(eps), t if math.isfinite(t) else X.grid.T, math.isfinite(t)))
    return out


def solve(
    sigma: BVFunction,
    Y: GridPath,
    X0: float,
    a: float | None = None,
    tol: float = DEFAULT_TOL,
    eps_list: Sequence[float] = (),
    resolution: int | None = None,
    residual_theta=None,
) -> SolveResult:
    """Solve ``dX = sigma(X) dY`` from the constant initial value ``X0``.

    With ``residual_theta`` (a number, or ``"auto"`` for the default order)
    the integral-form defect :func:`sde_residual` is stored in ``residual``.
    """
    X0 = float(X0)
    if a is None:
        a = default_base_point(sigma, X0)
    lam = LampertiTransform(sigma, float(a), tol, resolution)
    z = lam(X0) + (Y.values - Y.values[0])
    try:
        x = lam.inverse(z)
    except RangeExhaustedError:
        bad = _first_unreachable(lam, z)
        raise RangeExhaustedError(
            f"Lambda^-1 cannot reach node {bad} (t={Y.times[bad]:.6g}, Lambda value {z[bad]:.6g})"
        ) from None
    x = np.asarray(x, dtype=float)
    x[0] = X0
    X = GridPath(Y.grid, x)
    defect = float(np.max(np.abs(np.asarray(lam(x)) - lam(X0) - (Y.values - Y.values[0]))))
    taus = stopping_times(sigma, X, eps_list)
    first = min((s.time for s in taus if s.reached), default=math.inf)
    beyond = X.times > first
    result = SolveResult(X, Y, taus, defect, lam, beyond)
    if residual_theta is not None:
        theta = None if residual_theta == "auto" else residual_theta
        result.residual = sde_residual(sigma, X, Y, theta)
    return result


def _first_unreachable(lam, z):
    for k, v in enumerate(z):
        try:
            lam.inverse(v)
        except RangeExhaustedError:
            return k
    return 0


def uniqueness_gap(sigma, Y, X0, eps: float, resolutions=(DEFAULT_STAIRCASE_LEVEL, DEFAULT_STAIRCASE_LEVEL + 2)) -> float:
    """Largest node-wise gap between solves at two table resolutions, before ``tau_eps``."""
    r1 = solve(sigma, Y, X0, eps_list=[eps], resolution=resolutions[0])
    r2 = solve(sigma, Y, X0, eps_list=[eps], resolution=resolutions[1])
    horizon = min(r1.taus[0].time if r1.taus[0].reached else math.inf,
                  r2.taus[0].time if r2.taus[0].reached else math.inf)
    keep = Y.times < horizon
    if not keep.any():
        return 0.0
    return float(np.max(np.abs(r1.X.values[keep] - r2.X.values[keep])))


# -- residuals -----------------------------------------------------------------------


def probe_indices(n: int) -> list[int]:
    """Nodes nearest to ``T/4, T/2, 3T/4, T``."""
    return sorted({max(1, round(n * q)) for q in (0.25, 0.5, 0.75)} | {n})


@dataclass(frozen=True)
class SmoothF:
    """A function ``F`` with derivative ``dF`` for the chain-rule check."""

    F: Callable
    dF: Callable
    name: str = "F"


def linear_F(c: float = 1.0, d: float = 0.0) -> SmoothF:
    return SmoothF(lambda x: c * np.asarray(x) + d, lambda x: np.full_like(np.asarray(x, dtype=float), c), "linear")


def square_F() -> SmoothF:
    return SmoothF(lambda x: np.asarray(x) ** 2, lambda x: 2.0 * np.asarray(x), "square")


def mollified_lambda_F(sigma: BVFunction, n: int, lo: float, hi: float, a: float = 0.0, points: int = 20001) -> SmoothF:
    """``Lambda_n(x) = int_a^x dy / sigma_n(y)`` tabulated on ``[lo, hi]``."""
    s_n = mollify(sigma, n)
    lo, hi = min(lo, a), max(hi, a)
    pad = 0.05 * (hi - lo) + 1e-9
    x = np.linspace(lo - pad, hi + pad, points)
    rec = 1.0 / np.asarray(s_n(x))
    prim = cumulative_trapezoid(rec, x, initial=0.0)
    prim -= np.interp(a, x, prim)
    return SmoothF(lambda y: np.interp(y, x, prim), lambda y: 1.0 / np.asarray(s_n(y)), f"Lambda_{n}")


def _probe_residual(lhs: np.ndarray, f: GridPath, g: GridPath, theta, probes) -> float:
    theta = zi.default_theta(g) if theta is None else theta
    results = zi.integrate_probes(f, g, theta, probes)
    return float(max(abs(lhs[k] - res.value) for k, res in zip(probes, results)))


def ito_residual(F: SmoothF, X: GridPath, theta=None) -> float:
    """``max |F(X_t) - F(X_0) - int_0^t F'(X) dX|`` over the probe times."""
    fx = np.asarray(F.F(X.values))
    dF = X.map(lambda v: np.asarray(F.dF(v), dtype=float))
    return _probe_residual(fx - fx[0], dF, X, theta, probe_indices(X.grid.n))


def sde_residual(sigma: BVFunction, X: GridPath, Y: GridPath, theta=None) -> float:
    """``max |X_t - X_0 - int_0^t sigma(X) dY|`` over the probe times."""
    _check_same_grid(X, Y)
    sx = X.map(lambda v: np.asarray(sigma(v), dtype=float))
    return _probe_residual(X.values - X.values[0], sx, Y, theta, probe_indices(X.grid.n))


def lambda_n_residual(sigma: BVFunction, n: int, X: GridPath, Y: GridPath, theta=None) -> float:
    """Defect of ``Lambda_n(X_t) - Lambda_n(X_0) = int_0^t sigma(X)/sigma_n(X) dY``."""
    _check_same_grid(X, Y)
    F = mollified_lambda_F(sigma, n, float(X.values.min()), float(X.values.max()), a=float(X.values[0]))
    s_n = mollify(sigma, n)
    ratio = X.map(lambda v: np.asarray(sigma(v)) / np.asarray(s_n(v)))
    lhs = np.asarray(F.F(X.values))
    return _probe_residual(lhs - lhs[0], ratio, Y, theta, probe_indices(X.grid.n))
