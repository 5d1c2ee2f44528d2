"""Fractional calculus on grid paths, with the matching function-space norms.

All operators act on the piecewise-linear interpolant of a grid path.  For
that interpolant every kernel integral over a grid cell is available in
closed form, so the Riemann-Liouville integrals and Weyl-Marchaud
derivatives below are exact at the nodes (up to rounding); the norms use
closed-form cell integrals except for the inner trapezoid of the
Gagliardo lag function.

Right-sided operators use the real-valued kernels ``(s - t)^...`` without
the complex phase factors; :mod:`roughsde.zaehle_integral` accounts for
the resulting sign.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve
from scipy.special import gamma as Gamma

from .errors import InvalidArgumentError
from .grid_path import GridPath, holder_seminorm

# A norm that grows by more than this factor under the last mesh doubling is
# reported as divergent.
DIVERGENCE_GROWTH = 2.0


def check_order(theta: float) -> float:
    theta = float(theta)
    if not 0.0 < theta < 1.0:
        raise InvalidArgumentError(f"fractional order must lie in (0, 1), got {theta!r}")
    return theta


@dataclass(frozen=True)
class FractionalOrder:
    theta: float

    def __post_init__(self):
        check_order(self.theta)

    def __float__(self):
        return self.theta


def _theta(theta) -> float:
    return check_order(float(theta))


# -- closed-form kernel pieces ---------------------------------------------------


def _pdiff(m, p):
    """``m**p - (m-1)**p`` for integer ``m >= 1`` without cancellation."""
    m = np.asarray(m, dtype=float)
    out = np.empty_like(m)
    one = m == 1.0
    out[one] = 1.0
    big = ~one
    mb = m[big]
    out[big] = -(mb**p) * np.expm1(p * np.log1p(-1.0 / mb))
    return out


def _power_integral(a, b, e):
    """``int_a^b v**e dv`` for ``0 <= a < b`` (vectorised in ``a``, ``b``)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if e == -1.0:
        return np.log(b / a)
    return (b ** (e + 1.0) - a ** (e + 1.0)) / (e + 1.0)


def cell_weights(m, alpha):
    """Weights of ``int_{m-1}^{m} v**(alpha-1) * (linear) dv`` for ``alpha > 0``.

    Returns ``(lo_w, hi_w)``: the integrals of ``v**(alpha-1)`` against the
    hat functions ``(v - m + 1)`` and ``(m - v)`` respectively, i.e. the
    weights of the value at the *far* and *near* end of the cell measured
    from ``v = 0``.
    """
    m = np.asarray(m, dtype=float)
    d_a = _pdiff(m, alpha) / alpha
    d_a1 = _pdiff(m, alpha + 1.0) / (alpha + 1.0)
    far = d_a1 - (m - 1.0) * d_a
    near = m * d_a - d_a1
    return far, near


# -- Riemann-Liouville integrals -------------------------------------------------


def _rl_left_values(f: np.ndarray, theta: float, h: float) -> np.ndarray:
    n = f.size - 1
    m = np.arange(1, n + 2)
    far, near = cell_weights(m, theta)
    # cell j contributes f_j * far_{k-j} + f_{j+1} * near_{k-j}
    kern_far = np.concatenate([[0.0], far[:n]])
    a = fftconvolve(f, kern_far)[: n + 1]
    b = fftconvolve(f, near)[: n + 1] - f[0] * near[: n + 1]
    out = (a + b) * h**theta / Gamma(theta)
    out[0] = 0.0
    return out


def rl_integral(f: GridPath, theta, side: str = "left") -> GridPath:
    """Riemann-Liouville integral of order ``theta`` at every node.

    ``left``: ``1/Gamma(theta) int_0^t f(s) (t-s)^(theta-1) ds``;
    ``right``: ``1/Gamma(theta) int_t^T f(s) (s-t)^(theta-1) ds``.
    """
    theta = _theta(theta)
    h = f.grid.mesh
    v = f.values
    if side == "left":
        out = _rl_left_values(v, theta, h)
    elif side == "right":
        out = _rl_left_values(v[::-1], theta, h)[::-1]
    else:
        raise InvalidArgumentError(f"side must be 'left' or 'right', got {side!r}")
    return GridPath(f.grid, out)


# -- Weyl-Marchaud derivatives ---------------------------------------------------


def _caputo_left(v: np.ndarray, theta: float, h: float) -> np.ndarray:
    """Node values of ``int_0^t f'(s) (t-s)^-theta ds / Gamma(1-theta)``."""
    n = v.size - 1
    d = np.diff(v)
    b = _pdiff(np.arange(1, n + 1), 1.0 - theta)
    out = np.zeros(n + 1)
    out[1:] = fftconvolve(d, b)[:n]
    return out * h ** (-theta) / Gamma(2.0 - theta)


def _boundary_left(f0: float, t: np.ndarray, theta: float) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        out = f0 * t ** (-theta) / Gamma(1.0 - theta)
    out[0] = 0.0 if f0 == 0.0 else math.copysign(math.inf, f0)
    return out


def _wm_left_values(v: np.ndarray, theta: float, h: float) -> np.ndarray:
    t = np.arange(v.size) * h
    return _boundary_left(v[0], t, theta) + _caputo_left(v, theta, h)


def wm_derivative(f: GridPath, theta, side: str = "left", subtract_terminal: bool = False) -> GridPath:
    """Weyl-Marchaud derivative of order ``theta`` at every node.

    For the interpolant the singular difference quotient integrates in
    closed form: ``D f(t) = (f(0) t^-theta + int_0^t f'(s)(t-s)^-theta ds)
    / Gamma(1-theta)``.  With ``subtract_terminal`` the right derivative is
    taken of ``f - f(T)``.  At the singular endpoint the one-sided limit is
    returned, which is infinite unless the boundary value vanishes.
    """
    theta = _theta(theta)
    h = f.grid.mesh
    v = f.values
    if side == "left":
        if subtract_terminal:
            raise InvalidArgumentError("subtract_terminal only applies to the right derivative")
        out = _wm_left_values(v, theta, h)
    elif side == "right":
        w = v - v[-1] if subtract_terminal else v
        out = _wm_left_values(w[::-1], theta, h)[::-1]
    else:
        raise InvalidArgumentError(f"side must be 'left' or 'right', got {side!r}")
    return GridPath(f.grid, out, allow_nonfinite=True)


# -- norms -------------------------------------------------------------------------


@dataclass(frozen=True)
class SeminormReport:
    """A computed seminorm or norm.

    ``diverging`` flags refinement instability: the value grew by more than
    ``DIVERGENCE_GROWTH`` between the half-resolution grid and this one.
    In that case ``value`` is ``inf`` and the grid value is kept in
    ``grid_value``.
    """

    value: float
    theta: float
    p: float
    kind: str
    grid_value: float = math.nan
    coarse_value: float = math.nan
    diverging: bool = False

    @property
    def finite(self) -> bool:
        return math.isfinite(self.value)


def _report(kind, theta, p, compute, f: GridPath) -> SeminormReport:
    fine = float(compute(f.values, f.grid.mesh))
    coarse = math.nan
    if f.grid.n % 2 == 0 and f.grid.n >= 4:
        coarse = float(compute(f.values[::2], 2.0 * f.grid.mesh))
    diverging = not math.isfinite(fine) or grew_too_fast(fine, coarse)
    value = math.inf if diverging else fine
    return SeminormReport(value, theta, p, kind, fine, coarse, bool(diverging))


def grew_too_fast(fine: float, coarse: float) -> bool:
    """Refinement-instability rule: growth by more than ``DIVERGENCE_GROWTH``."""
    return math.isfinite(coarse) and fine > 0 and fine > DIVERGENCE_GROWTH * coarse


def lag_profile(v: np.ndarray, h: float, p: float = 1.0) -> np.ndarray:
    """``G(m h) = int_0^{T - m h} |f(s + m h) - f(s)|^p ds`` by trapezoid, m = 0..n."""
    n = v.size - 1
    G = np.zeros(n + 1)
    for m in range(1, n):
        a = np.abs(v[m:] - v[:-m])
        if p != 1.0:
            a = a**p
        G[m] = h * (a.sum() - 0.5 * (a[0] + a[-1]))
    return G


def _lag_integral(G: np.ndarray, h: float, theta: float, p: float) -> float:
    """``int_0^T h^(-1-theta p) G(h) dh`` with G linear between lags."""
    n = G.size - 1
    tp = theta * p
    # first lag cell: G(x) ~ G(h) (x/h)^p
    total = G[1] * h ** (-tp) / (p - tp)
    if n >= 2:
        m = np.arange(1, n, dtype=float)
        e = -1.0 - tp
        # weights of G[m] (left) and G[m+1] (right) on [m, m+1]
        i0 = _power_integral(m, m + 1.0, e)
        i1 = _power_integral(m, m + 1.0, e + 1.0)
        w_right = i1 - m * i0
        w_left = i0 - w_right
        total += h ** (-tp) * float(np.sum(w_left * G[1:n] + w_right * G[2 : n + 1]))
    return total


def _gagliardo_value(v, h, theta, p):
    G = lag_profile(v, h, p)
    return (2.0 * _lag_integral(G, h, theta, p)) ** (1.0 / p)


def gagliardo(f: GridPath, theta, p: float = 1.0) -> SeminormReport:
    """Gagliardo seminorm ``[f]_{theta,p}`` over ``[0, T]^2``.

    The double integral is rewritten over the lag ``h = |t - s|``; on the
    first lag cell the interpolant's difference is linear in ``h``.
    """
    theta = _theta(theta)
    if p < 1:
        raise InvalidArgumentError(f"exponent p must be >= 1, got {p!r}")
    return _report("gagliardo", theta, p, lambda v, h: _gagliardo_value(v, h, theta, p), f)


def _first_term_weights(n: int, theta: float, h: float):
    """Cell weights for ``int |f(s)| s^-theta ds`` over cells 0..n-1."""
    alpha = 1.0 - theta
    near, far = cell_weights(np.arange(1, n + 1), alpha)[::-1]
    # on cell j, v = s/h in [j, j+1]: f_j pairs with (j+1-v), f_{j+1} with (v-j)
    return far * h**alpha, near * h**alpha


def _w1_value(v, h, theta):
    n = v.size - 1
    a = np.abs(v)
    w_left, w_right = _first_term_weights(n, theta, h)
    first = float(np.sum(w_left * a[:-1] + w_right * a[1:]))
    G = lag_profile(v, h, 1.0)
    return first + _lag_integral(G, h, theta, 1.0)


def w_theta_1_norm(f: GridPath, theta) -> SeminormReport:
    """``||f||_{theta,1} = int |f| t^-theta dt + one-sided Gagliardo integral``."""
    theta = _theta(theta)
    return _report("w_theta_1", theta, 1.0, lambda v, h: _w1_value(v, h, theta), f)


def _winf_value(v, h, theta):
    n = v.size - 1
    T = n * h
    t = np.arange(n) * h
    first = float(np.max(np.abs(v[-1] - v[:-1]) / (T - t) ** theta))
    acc = np.zeros(n)
    # own cell: |f(s) - f(t)| = |slope| (s - t)
    acc += np.abs(np.diff(v)) * h ** (-theta) / (1.0 - theta)
    e = -1.0 - theta
    prev = np.abs(v[1:] - v[:-1])
    for m in range(1, n):
        cur = np.abs(v[m + 1 :] - v[: -m - 1])
        i0 = _power_integral(m, m + 1.0, e)
        i1 = _power_integral(m, m + 1.0, e + 1.0)
        w_hi = i1 - m * i0
        w_lo = i0 - w_hi
        k = n - m
        acc[:k] += h ** (-theta) * (w_lo * prev[:k] + w_hi * cur[:k])
        prev = cur
    return first + float(acc.max())


def w_infty_norm(g: GridPath, theta) -> SeminormReport:
    """``||g||_{theta,inf}``: terminal Hölder ratio plus the sup of the forward difference integral."""
    theta = _theta(theta)
    return _report("w_infty", theta, math.inf, lambda v, h: _winf_value(v, h, theta), g)


def truncated_w1_norms(f: GridPath, theta, indices) -> dict[int, float]:
    """``||f 1_[0,t_k]||_{theta,1}`` for each node index ``k`` in ``indices``.

    The indicator is applied to the interpolant, so the truncated function
    jumps from ``f(t_k)`` to 0 just after ``t_k``.  One O(n^2) pass serves
    all indices.
    """
    theta = _theta(theta)
    v = f.values
    h = f.grid.mesh
    n = v.size - 1
    idx = sorted({int(k) for k in indices})
    if any(k < 0 or k > n for k in idx):
        raise InvalidArgumentError("truncation index out of range")
    a = np.abs(v)
    w_left, w_right = _first_term_weights(n, theta, h)
    first_cells = np.concatenate([[0.0], np.cumsum(w_left * a[:-1] + w_right * a[1:])])
    # lag profiles restricted to [0, t_k]
    Gk = {k: np.zeros(k + 1) for k in idx}
    for m in range(1, n):
        if m >= idx[-1]:
            break
        d = np.abs(v[m:] - v[:-m])
        c = np.concatenate([[0.0], np.cumsum(d)])
        for k in idx:
            if m < k:
                cnt = k - m + 1
                Gk[k][m] = h * (c[cnt] - 0.5 * (d[0] + d[cnt - 1]))
    out = {}
    alpha = 1.0 - theta
    for k in idx:
        if k == 0:
            out[k] = 0.0
            continue
        inner = _lag_integral(Gk[k], h, theta, 1.0) if k >= 2 else float(
            np.abs(v[1] - v[0]) * h ** (-theta) / (1.0 - theta)
        )
        cross = 0.0
        if k < n:
            # int_0^t |f(s)| ((t-s)^-theta - (T-s)^-theta) / theta ds
            far, near = cell_weights(np.arange(k, 0, -1), alpha)
            to_t = np.sum(far * a[:k] + near * a[1 : k + 1])
            far_T, near_T = cell_weights(np.arange(n, n - k, -1), alpha)
            to_T = np.sum(far_T * a[:k] + near_T * a[1 : k + 1])
            cross = h**alpha * float(to_t - to_T) / theta
        out[k] = float(first_cells[k] + inner + cross)
    return out


def holder(path: GridPath, theta) -> SeminormReport:
    """Hölder seminorm ``[x]_{theta,inf}`` on the grid (see :func:`holder_seminorm`)."""
    theta = float(theta)
    return _report("holder", theta, math.inf, lambda v, h: _holder_value(v, h, theta), path)


def _holder_value(v, h, theta):
    from .grid_path import Grid

    return holder_seminorm(GridPath(Grid(h * (v.size - 1), v.size - 1), v), theta)


# -- level-crossing time integrals -------------------------------------------------


def level_time_integral(values: np.ndarray, h: float, y, q: float) -> np.ndarray:
    """``int_0^T |x(t) - y|^-q dt`` for the interpolant, per level ``y``.

    Each cell is integrated in closed form, including cells where the path
    crosses ``y``; the result is ``inf`` where the integral diverges
    (``q >= 1`` and the path touches ``y``).
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    A = values[None, :-1] - y[:, None]
    B = values[None, 1:] - y[:, None]
    out = np.empty(A.shape)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        flat = np.abs(B - A) <= 1e-12 * np.maximum(np.abs(A), np.abs(B))
        mid = 0.5 * (A + B)
        out_flat = np.abs(mid) ** (-q)
        if q == 1.0:
            F = lambda u: np.sign(u) * np.log(np.abs(u))
        else:
            F = lambda u: np.sign(u) * np.abs(u) ** (1.0 - q) / (1.0 - q)
        out_gen = (F(B) - F(A)) / (B - A)
        if q >= 1.0:
            touch = (A * B <= 0)
            out_gen = np.where(touch, np.inf, out_gen)
        out = np.where(flat, out_flat, out_gen)
    out = np.where(np.isnan(out), np.inf, out)
    return h * out.sum(axis=1)


def composite_bound_rhs(f, x: GridPath, theta, p: float, alpha: float, bins: int = 512) -> float:
    """Right side of the Gagliardo bound for the composite ``f(x)``.

    ``2^(p+1) (theta p)^-1 mu(K)^(p-1) [x]_alpha^(theta p/alpha)
    int_0^T int_K |x_t - y|^(-theta p/alpha) mu(dy) dt`` with ``K`` the
    range of ``x`` and ``mu`` the variation measure of ``f``.  Atoms of
    ``mu`` are summed exactly; the continuous part is integrated over
    ``bins`` equal cells of ``K`` with the cell mass at the midpoint.
    Returns ``inf`` (with a warning) if the time integral diverges.
    """
    theta = _theta(theta)
    if not 0.0 < alpha <= 1.0:
        raise InvalidArgumentError(f"alpha must lie in (0, 1], got {alpha!r}")
    v = x.values
    h = x.grid.mesh
    lo, hi = float(v.min()), float(v.max())
    q = theta * p / alpha
    atoms = [(loc, abs(size)) for loc, size in f.atoms() if lo <= loc <= hi]
    levels = [loc for loc, _ in atoms]
    masses = [mass for _, mass in atoms]
    if hi > lo:
        edges = np.linspace(lo, hi, bins + 1)
        cont = np.asarray(f.continuous_variation(edges[:-1], edges[1:]), dtype=float) * np.ones(bins)
        keep = cont > 0
        levels += list(0.5 * (edges[:-1] + edges[1:])[keep])
        masses += list(cont[keep])
    total_mass = float(np.sum(masses)) if masses else 0.0
    if total_mass == 0.0:
        return 0.0
    times = level_time_integral(v, h, np.asarray(levels), q)
    integral = float(np.dot(masses, times))
    if not math.isfinite(integral):
        warnings.warn(
            f"composite bound diverges: exponent theta*p/alpha = {q:.3g} >= 1 and the path "
            "meets an atom of the variation measure",
            RuntimeWarning,
            stacklevel=2,
        )
        return math.inf
    hold = holder_seminorm(x, alpha)
    return float(2.0 ** (p + 1) / (theta * p) * total_mass ** (p - 1) * hold**q * integral)
