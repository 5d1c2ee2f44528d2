"""Pathwise generalised Lebesgue-Stieltjes integral via fractional derivatives.

For ``f`` in ``W_{theta,1}`` and ``g`` in ``W_{1-theta,inf}``::

    int_0^T f dg = - int_0^T D^theta_{0+} f(s) * D^{1-theta}_{T-}(g - g(T))(s) ds

where both derivatives are the real-valued Weyl-Marchaud operators of
:mod:`roughsde.frac_calc`; the minus sign is the product of the two phase
factors ``(-1)^theta (-1)^(1-theta)``.

The outer integral is split into the singular pieces of ``D f`` (the
``s^-theta`` boundary term and, for a truncated integrand, the jump term
at the truncation time), whose integrals against ``D g`` are known in
closed form, and a regular remainder handled by a cellwise product rule that keeps the
leading non-smooth term of each derivative.  Both paths are first refined
by linear interpolation (``oversample``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import beta as B
from scipy.special import gamma as Gamma

from . import frac_calc as fc
from .errors import InfeasibleIntegrandError, InvalidArgumentError, RoughSDEError
from .grid_path import GridPath, _check_same_grid, estimate_holder_exponent

DEFAULT_BETA = 0.3
DEFAULT_OVERSAMPLE = 8
BOUND_SLACK = 1e-6


class BoundViolationError(RoughSDEError, ArithmeticError):
    """An integral exceeded its a priori fractional-norm bound."""


@dataclass(frozen=True)
class IntegralResult:
    """Value of a pathwise integral together with its a priori bound."""

    value: float
    theta: float
    bound: float
    mesh: float
    f_norm: float = math.nan
    g_norm: float = math.nan

    def __post_init__(self):
        if math.isfinite(self.value) and math.isfinite(self.bound):
            if abs(self.value) > self.bound + BOUND_SLACK:
                raise BoundViolationError(
                    f"|integral| = {abs(self.value):.6g} exceeds bound {self.bound:.6g} (theta={self.theta})"
                )

    def __float__(self):
        return float(self.value)


def default_theta(g: GridPath, beta: float = DEFAULT_BETA) -> float:
    """Midpoint of the admissible window ``(1 - eta, beta)``.

    ``eta`` is the measured Hölder exponent of the integrator.
    """
    eta = estimate_holder_exponent(g)
    theta = 0.5 * (1.0 - eta + beta)
    return float(min(max(theta, 0.01), 0.99))


def _resolve_theta(g, theta):
    if theta is None:
        return default_theta(g)
    return fc.check_order(float(theta))


def _cell_constants(theta: float):
    """Unit-cell integrals of the corrected product rule.

    ``pl(v) = v^(1-theta) - v`` and ``pr(v) = (1-v)^theta - (1-v)`` are the
    non-smooth parts of the two derivatives on a cell, with the linear
    interpolant between the cell ends removed.
    """
    th = theta
    i1 = 1.0 / ((2.0 - th) * (3.0 - th)) - 1.0 / 6.0  # int pl (1-v)
    i2 = 1.0 / (3.0 - th) - 1.0 / 3.0  # int pl v
    j1 = 1.0 / (2.0 + th) - 1.0 / 3.0  # int pr (1-v)
    j2 = 1.0 / ((1.0 + th) * (2.0 + th)) - 1.0 / 6.0  # int pr v
    k = B(2.0 - th, 1.0 + th) - 1.0 / ((2.0 - th) * (3.0 - th)) - 1.0 / ((1.0 + th) * (2.0 + th)) + 1.0 / 6.0
    return i1, i2, j1, j2, k


def _outer(fv: np.ndarray, gv: np.ndarray, h: float, theta: float, stop: int) -> float:
    """``-int D(f 1_[0, t_stop]) * D g`` on a single grid (node arrays).

    On each cell both derivatives are their linear interpolant plus one
    non-smooth power term, ``a (s - t_k)^(1-theta)`` for ``D f`` and
    ``b (t_{k+1} - s)^theta`` for ``D g``, whose coefficients are the
    slope changes of the paths at the cell ends.  Products of these pieces
    are integrated in closed form.
    """
    n = fv.size - 1
    phi = 1.0 - theta
    i1, i2, j1, j2, kk = _cell_constants(theta)
    w = gv - gv[-1]
    Dg = fc._caputo_left(w[::-1], phi, h)[::-1]
    e = np.append(np.diff(w), 0.0)
    b = (e[1:] - e[:-1]) / (h * Gamma(2.0 - phi))

    frozen = fv.copy()
    frozen[stop:] = fv[stop]
    C = fc._caputo_left(frozen, theta, h)
    d = np.diff(frozen)
    a = (d - np.concatenate([[0.0], d[:-1]])) / (h * Gamma(2.0 - theta))

    C0, C1, D0, D1 = C[:-1], C[1:], Dg[:-1], Dg[1:]
    cells = (2.0 * C0 * D0 + C0 * D1 + C1 * D0 + 2.0 * C1 * D1) / 6.0
    cells += a * h**phi * (i1 * D0 + i2 * D1)
    cells += b * h**theta * (j1 * C0 + j2 * C1)
    cells += a * b * h * kk
    total = h * cells.sum()

    # Singular parts.  (s - t_i)^-theta / Gamma(1-theta) is the derivative of
    # the indicator of [t_i, T], so its product with D g integrates to
    # g(t_i) - g(T) exactly.
    if fv[0] != 0.0:
        total += fv[0] * w[0]
    if stop < n:
        total -= fv[stop] * w[stop]
    return -total


def _raise_if_diverging(report: fc.SeminormReport, label: str):
    if report.diverging:
        raise InfeasibleIntegrandError(
            f"{label} diverges at theta={report.theta:.4g} "
            f"(grid value {report.grid_value:.4g}, half-resolution value {report.coarse_value:.4g})",
            norm=label,
            theta=report.theta,
        )


def _truncated_f_norms(f: GridPath, theta: float, stops) -> dict:
    """``||f 1_[0,t_k]||_(theta,1)`` per stop index, audited against the half-resolution grid."""
    fine = fc.truncated_w1_norms(f, theta, stops)
    even = [k for k in stops if k % 2 == 0 and k > 0]
    coarse = {}
    if even and f.grid.n % 2 == 0 and f.grid.n >= 4:
        coarse = fc.truncated_w1_norms(f.coarsen(2), theta, [k // 2 for k in even])
    for k in stops:
        value = fine[k]
        if not math.isfinite(value):
            raise InfeasibleIntegrandError(
                f"||f 1_[0,t]||_(theta,1) is not finite at theta={theta:.4g}", norm="w_theta_1", theta=theta
            )
        c = coarse.get(k // 2) if k % 2 == 0 else None
        if c is not None and fc.grew_too_fast(value, c):
            raise InfeasibleIntegrandError(
                f"||f 1_[0,t]||_(theta,1) diverges at theta={theta:.4g} "
                f"(grid value {value:.4g}, half-resolution value {c:.4g})",
                norm="w_theta_1",
                theta=theta,
            )
    return fine


def _integrate(f: GridPath, g: GridPath, theta, stop: int, oversample: int, audit: bool) -> IntegralResult:
    _check_same_grid(f, g)
    theta = _resolve_theta(g, theta)
    n = f.grid.n
    if stop == 0:
        return IntegralResult(0.0, theta, 0.0, f.grid.mesh, 0.0, math.nan)
    r = int(oversample)
    if r < 1:
        raise InvalidArgumentError(f"oversample must be >= 1, got {oversample!r}")
    fr, gr = f.refine(r), g.refine(r)
    value = _outer(fr.values, gr.values, fr.grid.mesh, theta, stop * r)

    bound = f_norm = g_norm = math.nan
    if audit:
        g_rep = fc.w_infty_norm(g, 1.0 - theta)
        _raise_if_diverging(g_rep, "w_infty")
        if stop == n:
            f_rep = fc.w_theta_1_norm(f, theta)
            _raise_if_diverging(f_rep, "w_theta_1")
            f_norm = f_rep.value
        else:
            f_norm = _truncated_f_norms(f, theta, [stop])[stop]
        g_norm = g_rep.value
        bound = f_norm * g_norm / (Gamma(theta) * Gamma(1.0 - theta))
    return IntegralResult(float(value), theta, float(bound), f.grid.mesh, float(f_norm), float(g_norm))


def integrate(
    f: GridPath, g: GridPath, theta=None, *, oversample: int = DEFAULT_OVERSAMPLE, audit: bool = True
) -> IntegralResult:
    """``int_0^T f dg`` with fractional order ``theta``.

    ``theta`` defaults to :func:`default_theta` of ``g``.  With ``audit``
    the norms ``||f||_{theta,1}`` and ``||g||_{1-theta,inf}`` are computed
    (they give the ``bound`` field) and a divergent one raises
    :class:`InfeasibleIntegrandError`.
    """
    return _integrate(f, g, theta, f.grid.n, oversample, audit)


def integrate_to(
    f: GridPath, g: GridPath, theta=None, t: float = None, *, oversample: int = DEFAULT_OVERSAMPLE, audit: bool = True
) -> IntegralResult:
    """``int_0^t f dg``, computed as the full integral of ``f 1_[0,t]``.

    ``t`` must be a grid node.  The indicator cuts the interpolant at
    ``t``, so the truncated integrand has a jump of size ``f(t)`` there.
    """
    if t is None:
        raise InvalidArgumentError("integrate_to needs an end time t")
    stop = f.grid.index_of(t)
    return _integrate(f, g, theta, stop, oversample, audit)


def integrate_probes(f: GridPath, g: GridPath, theta, indices, *, oversample: int = DEFAULT_OVERSAMPLE, audit: bool = True):
    """``int_0^{t_k} f dg`` for several node indices, sharing the norm computations."""
    _check_same_grid(f, g)
    theta = _resolve_theta(g, theta)
    n = f.grid.n
    indices = [int(k) for k in indices]
    if any(k < 0 or k > n for k in indices):
        raise InvalidArgumentError("probe index out of range")
    fr, gr = f.refine(oversample), g.refine(oversample)
    f_norms = {k: math.nan for k in indices}
    g_norm = math.nan
    if audit:
        g_rep = fc.w_infty_norm(g, 1.0 - theta)
        _raise_if_diverging(g_rep, "w_infty")
        g_norm = g_rep.value
        f_norms = _truncated_f_norms(f, theta, indices)
    denom = Gamma(theta) * Gamma(1.0 - theta)
    out = []
    for k in indices:
        value = 0.0 if k == 0 else _outer(fr.values, gr.values, fr.grid.mesh, theta, k * oversample)
        fn = f_norms[k]
        out.append(IntegralResult(float(value), theta, float(fn * g_norm / denom), f.grid.mesh, float(fn), float(g_norm)))
    return out


def riemann_stieltjes(f: GridPath, g: GridPath) -> float:
    """Left-point sum ``sum f(t_{k-1}) (g(t_k) - g(t_{k-1}))``."""
    _check_same_grid(f, g)
    return float(np.dot(f.values[:-1], np.diff(g.values)))
