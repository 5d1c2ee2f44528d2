"""Coefficients of locally bounded variation.

A :class:`BVFunction` is a finite sum of parts: constants, right-continuous
steps, power cusps ``s|x-c|^gamma``, scaled Cantor functions and continuous
piecewise-linear pieces.  Each part knows its own Jordan decomposition,
which gives the variation measure in closed form; mollification uses a
fixed Gauss rule.

The decomposition of a sum is the sum of the parts' canonical
decompositions.  It is canonical itself unless two parts cancel each
other's variation on some interval; every builtin preset is canonical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DomainError, InvalidArgumentError

AUDIT_POINTS = 10_000
DEFAULT_CANTOR_DEPTH = 30
DEFAULT_MOLLIFIER_NODES = 2048


def cantor(x, depth: int = DEFAULT_CANTOR_DEPTH):
    """Cantor function by the ternary-to-binary digit map, error <= 2**-depth.

    Extended by 0 on ``x < 0`` and 1 on ``x >= 1``.
    """
    x = np.asarray(x, dtype=float)
    y = np.clip(x, 0.0, 1.0)
    out = np.zeros_like(y)
    done = y >= 1.0
    out[done] = 1.0
    scale = 0.5
    for _ in range(depth):
        y = 3.0 * y
        digit = np.floor(y)
        live = ~done
        hit = live & (digit >= 1.0)
        out[hit] += scale
        done = done | (live & (digit == 1.0))
        y = y - digit
        scale *= 0.5
        if done.all():
            break
    return out


# -- parts ---------------------------------------------------------------------


class _Part:
    """One additive piece of a coefficient."""

    piecewise_constant = False

    def value(self, x):
        raise NotImplementedError

    def jordan(self, x, anchor):
        """``(plus, minus)`` with ``plus(anchor) = value(anchor)``, ``minus(anchor) = 0``."""
        raise NotImplementedError

    def atoms(self):
        return []

    def breakpoints(self):
        return []


@dataclass(frozen=True)
class Constant(_Part):
    c: float
    piecewise_constant = True

    def value(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.c)

    def jordan(self, x, anchor):
        x = np.asarray(x, dtype=float)
        return np.full_like(x, self.c), np.zeros_like(x)


@dataclass(frozen=True)
class Step(_Part):
    """``size * 1{x >= location}``; right-continuous."""

    location: float
    size: float
    piecewise_constant = True

    def value(self, x):
        return np.where(np.asarray(x, dtype=float) >= self.location, self.size, 0.0)

    def jordan(self, x, anchor):
        f = self.value(x)
        if self.size >= 0:
            return f, np.zeros_like(f)
        fa = float(self.value(anchor))
        return np.full_like(f, fa), fa - f

    def atoms(self):
        return [(self.location, self.size)]

    def breakpoints(self):
        return [self.location]


@dataclass(frozen=True)
class Power(_Part):
    """``scale * |x - center| ** gamma``."""

    gamma: float
    scale: float = 1.0
    center: float = 0.0

    def value(self, x):
        return self.scale * np.abs(np.asarray(x, dtype=float) - self.center) ** self.gamma

    def _rise_fall(self, x):
        x = np.asarray(x, dtype=float)
        up = self.scale * np.maximum(x - self.center, 0.0) ** self.gamma
        down = self.scale * np.maximum(self.center - x, 0.0) ** self.gamma
        return up, down

    def jordan(self, x, anchor):
        up, down = self._rise_fall(x)
        _, down_a = self._rise_fall(anchor)
        return up + float(down_a), float(down_a) - down

    def breakpoints(self):
        return [self.center]


@dataclass(frozen=True)
class CantorPart(_Part):
    """``scale * cantor((x - lo) / (hi - lo))``."""

    scale: float = 1.0
    lo: float = 0.0
    hi: float = 1.0
    depth: int = DEFAULT_CANTOR_DEPTH
    # Piecewise constant at every finite depth; used by the staircase path.
    piecewise_constant = True

    def value(self, x):
        u = (np.asarray(x, dtype=float) - self.lo) / (self.hi - self.lo)
        return self.scale * cantor(u, self.depth)

    def jordan(self, x, anchor):
        f = self.value(x)
        return f, np.zeros_like(f)

    def breakpoints(self):
        return [self.lo, self.hi]

    def staircase_edges(self, level: int) -> np.ndarray:
        """Endpoints of the ``2**level`` surviving intervals at ``level``."""
        left = np.zeros(1)
        width = 1.0
        for _ in range(level):
            width /= 3.0
            left = np.concatenate([left, left + 2.0 * width])
        left.sort()
        edges = np.concatenate([left, left + width])
        edges.sort()
        return self.lo + (self.hi - self.lo) * edges


@dataclass(frozen=True)
class PiecewiseLinear(_Part):
    """Continuous piecewise-linear part, constant outside its knots."""

    knots: tuple
    levels: tuple

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=float)
        if k.size < 2 or k.size != len(self.levels) or np.any(np.diff(k) <= 0):
            raise InvalidArgumentError("knots must be strictly increasing and match levels")

    @cached_property
    def _cumulative(self):
        k = np.asarray(self.knots, dtype=float)
        d = np.diff(np.asarray(self.levels, dtype=float))
        pos = np.concatenate([[0.0], np.cumsum(np.maximum(d, 0.0))])
        neg = np.concatenate([[0.0], np.cumsum(np.maximum(-d, 0.0))])
        return k, pos, neg

    def value(self, x):
        return np.interp(x, self.knots, self.levels)

    def jordan(self, x, anchor):
        k, pos, neg = self._cumulative
        p = np.interp(x, k, pos)
        m = np.interp(x, k, neg)
        pa, ma = np.interp(anchor, k, pos), np.interp(anchor, k, neg)
        return float(self.value(anchor)) + p - pa, m - ma

    def breakpoints(self):
        return list(self.knots)


# -- the coefficient -------------------------------------------------------------


@dataclass(frozen=True)
class JordanPair:
    """Two nondecreasing callables with ``f = plus - minus``."""

    plus: object
    minus: object


@dataclass(frozen=True)
class BVFunction:
    """A coefficient ``sigma`` of locally bounded variation.

    ``sign`` is the declared sign ("nonnegative" or "nonpositive"); it is
    audited on a dense grid at construction.
    """

    parts: tuple
    name: str = "custom"
    domain: tuple = (-math.inf, math.inf)
    sign: str = "nonnegative"
    audit: bool = field(default=True, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))
        lo, hi = self.domain
        if not lo < hi:
            raise InvalidArgumentError(f"empty domain {self.domain}")
        if self.sign not in ("nonnegative", "nonpositive"):
            raise InvalidArgumentError(f"unknown sign {self.sign!r}")
        for p in self.parts:
            if isinstance(p, Power) and not 0.0 < p.gamma:
                raise InvalidArgumentError("power exponent must be positive")
        if self.audit:
            v = self(self.audit_grid())
            bad = v < 0 if self.sign == "nonnegative" else v > 0
            if np.any(bad):
                x = self.audit_grid()[np.argmax(bad)]
                raise InvalidArgumentError(f"{self.name}: declared {self.sign} but sigma({x:g}) = {self(x):g}")

    # evaluation

    def _check_domain(self, x):
        lo, hi = self.domain
        if np.any(x < lo) or np.any(x > hi) or np.any(np.isnan(x)):
            raise DomainError(f"{self.name}: argument outside domain {self.domain}")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        self._check_domain(x)
        out = np.zeros_like(x)
        for p in self.parts:
            out = out + p.value(x)
        return out if out.ndim else float(out)

    eval = __call__

    @property
    def anchor(self) -> float:
        lo, hi = self.domain
        if math.isfinite(lo):
            return lo
        return min(max(0.0, lo), hi)

    def breakpoints(self) -> np.ndarray:
        pts = sorted({float(b) for p in self.parts for b in p.breakpoints()})
        return np.asarray(pts)

    def atoms(self) -> list[tuple[float, float]]:
        """Jump locations and signed sizes, same locations merged."""
        merged = {}
        for p in self.parts:
            for loc, size in p.atoms():
                merged[loc] = merged.get(loc, 0.0) + size
        return sorted((k, v) for k, v in merged.items() if v != 0.0)

    def jumps(self) -> list[tuple[float, float, float]]:
        """``(location, left value, right value)`` for every jump."""
        out = []
        for loc, size in self.atoms():
            right = float(self(loc))
            out.append((loc, right - size, right))
        return out

    @property
    def piecewise_constant(self) -> bool:
        return all(p.piecewise_constant for p in self.parts)

    def audit_interval(self) -> tuple[float, float]:
        bp = self.breakpoints()
        lo, hi = (bp.min() - 2.0, bp.max() + 2.0) if bp.size else (-2.0, 2.0)
        lo = max(lo, self.domain[0])
        hi = min(hi, self.domain[1])
        return lo, hi

    def audit_grid(self, num: int = AUDIT_POINTS) -> np.ndarray:
        lo, hi = self.audit_interval()
        return np.union1d(np.linspace(lo, hi, num), self.breakpoints().clip(lo, hi))

    # Jordan decomposition and variation

    def _jordan_values(self, x):
        x = np.asarray(x, dtype=float)
        self._check_domain(x)
        plus = np.zeros_like(x)
        minus = np.zeros_like(x)
        a = self.anchor
        for p in self.parts:
            pp, mm = p.jordan(x, a)
            plus = plus + pp
            minus = minus + mm
        return plus, minus

    def plus(self, x):
        return self._jordan_values(x)[0]

    def minus(self, x):
        return self._jordan_values(x)[1]

    def continuous_variation(self, a, b):
        """Variation over ``(a, b]`` of the parts without atoms."""
        total = 0.0
        for p in self.parts:
            if isinstance(p, Step):
                continue
            pa, ma = p.jordan(np.asarray(a, dtype=float), self.anchor)
            pb, mb = p.jordan(np.asarray(b, dtype=float), self.anchor)
            total = total + (pb - pa) + (mb - ma)
        return total


def jordan(f: BVFunction) -> JordanPair:
    """Jordan decomposition ``f = plus - minus`` of ``f``.

    ``plus`` is ``f(anchor)`` plus the positive variation from the anchor,
    ``minus`` the negative variation; the anchor is the left end of a finite
    domain and 0 otherwise.
    """
    for p in f.parts:
        if isinstance(p, CantorPart) and p.depth < 1:
            raise InvalidArgumentError("Cantor part needs depth >= 1")
    return JordanPair(plus=f.plus, minus=f.minus)


def variation(f: BVFunction, a: float, b: float) -> float:
    """Variation ``|mu|((a, b])`` from the Jordan parts."""
    if a > b:
        raise InvalidArgumentError(f"need a <= b, got [{a}, {b}]")
    p, m = f._jordan_values(np.array([a, b]))
    return float((p[1] - p[0]) + (m[1] - m[0]))


# -- presets --------------------------------------------------------------------


def step_sigma(beta_plus, beta_minus, a=0.0, sigma0=None) -> BVFunction:
    """``beta_plus`` on ``x >= a``, ``beta_minus`` below, plus optional ``sigma0``.

    ``1/sigma`` is bounded by ``1/min(beta_plus, beta_minus)``, hence
    locally integrable.
    """
    if not (beta_plus > 0 and beta_minus > 0):
        raise InvalidArgumentError("step needs beta_plus, beta_minus > 0")
    parts = [Constant(float(beta_minus)), Step(float(a), float(beta_plus) - float(beta_minus))]
    if sigma0 is not None:
        if sigma0.sign != "nonnegative":
            raise InvalidArgumentError("sigma0 must be nonnegative")
        parts.extend(sigma0.parts)
    return BVFunction(tuple(parts), name=f"step({beta_plus:g},{beta_minus:g},{a:g})")


def power_sigma(gamma, scale=1.0, center=0.0) -> BVFunction:
    """``scale |x - center|^gamma``; ``1/sigma`` has an integrable cusp for gamma < 1."""
    if not 0.0 < gamma < 1.0:
        raise InvalidArgumentError(f"power exponent must lie in (0, 1), got {gamma!r}")
    if not scale > 0:
        raise InvalidArgumentError("power scale must be positive")
    return BVFunction((Power(float(gamma), float(scale), float(center)),), name=f"power({gamma:g})")


def cantor_sigma(eps0, depth=DEFAULT_CANTOR_DEPTH) -> BVFunction:
    """``eps0 + cantor(x)``; bounded below by ``eps0``."""
    if not eps0 > 0:
        raise InvalidArgumentError("cantor needs eps0 > 0")
    if int(depth) != depth or depth < 1:
        raise InvalidArgumentError("cantor depth must be a positive integer")
    return BVFunction(
        (Constant(float(eps0)), CantorPart(depth=int(depth))), name=f"cantor({eps0:g},{int(depth)})"
    )


PRESETS = {"step": step_sigma, "power": power_sigma, "cantor": cantor_sigma}


def builtin_sigma(preset: str, *args, **kwargs) -> BVFunction:
    """Build a preset coefficient by its name in :data:`PRESETS`."""
    try:
        factory = PRESETS[preset]
    except KeyError:
        raise InvalidArgumentError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}") from None
    try:
        return factory(*args, **kwargs)
    except TypeError as exc:
        raise InvalidArgumentError(f"bad parameters for {preset}: {exc}") from None


def two_level_step(alpha: float) -> BVFunction:
    """``1/alpha`` on ``x >= 0`` and ``1/(1-alpha)`` below."""
    if not 0.0 < alpha < 1.0:
        raise InvalidArgumentError(f"alpha must lie in (0, 1), got {alpha!r}")
    return step_sigma(1.0 / alpha, 1.0 / (1.0 - alpha), 0.0)


def constant_sigma(c: float) -> BVFunction:
    sign = "nonnegative" if c >= 0 else "nonpositive"
    return BVFunction((Constant(float(c)),), name=f"const({c:g})", sign=sign)


# -- mollification ----------------------------------------------------------------


@dataclass(frozen=True)
class Mollifier:
    """Bump density ``exp(-1/(u(1-u)))`` on [0, 1] at ``nodes`` midpoints."""

    nodes: int = DEFAULT_MOLLIFIER_NODES

    @staticmethod
    def density_unnormalised(u):
        u = np.asarray(u, dtype=float)
        out = np.zeros_like(u)
        inside = (u > 0) & (u < 1)
        ui = u[inside]
        out[inside] = np.exp(-1.0 / (ui * (1.0 - ui)))
        return out

    @cached_property
    def rule(self):
        u = (np.arange(self.nodes) + 0.5) / self.nodes
        w = self.density_unnormalised(u)
        w = w / w.sum()
        return u, w

    @cached_property
    def normaliser(self) -> float:
        """Integral of the unnormalised bump under the midpoint rule."""
        u = (np.arange(self.nodes) + 0.5) / self.nodes
        return float(self.density_unnormalised(u).sum() / self.nodes)

    def density(self, u):
        return self.density_unnormalised(u) / self.normaliser


class MollifiedFunction:
    """``sigma_n(x) = E plus(x + xi/n) - E minus(x - xi/n)``."""

    _CHUNK = 1 << 22

    def __init__(self, f: BVFunction, n: int, mollifier: Mollifier):
        self.f = f
        self.n = n
        self.mollifier = mollifier

    def __repr__(self):
        return f"MollifiedFunction({self.f.name}, n={self.n}, nodes={self.mollifier.nodes})"

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        flat = x.ravel()
        u, w = self.mollifier.rule
        shift = u / self.n
        out = np.empty_like(flat)
        step = max(1, self._CHUNK // u.size)
        for i in range(0, flat.size, step):
            xs = flat[i : i + step, None]
            plus = self.f.plus(xs + shift)
            minus = self.f.minus(xs - shift)
            out[i : i + step] = plus @ w - minus @ w
        out = out.reshape(x.shape)
        return out if out.ndim else float(out)


def mollify(f: BVFunction, n: int, m: Mollifier | None = None) -> MollifiedFunction:
    if n < 1:
        raise InvalidArgumentError(f"mollification index must be >= 1, got {n}")
    return MollifiedFunction(f, int(n), m or Mollifier())


# -- integrability audit -------------------------------------------------------------


def reciprocal_integral_audit(f: BVFunction, a: float, b: float, start: int = 64, doublings: int = 8):
    """Composite midpoint estimates of the integral of ``1/|sigma|`` over ``[a, b]``.

    Returns ``(estimates, stable)``.  ``stable`` means every estimate is
    finite and the successive changes shrink geometrically, i.e. the
    sequence converges under refinement.
    """
    if a >= b:
        raise InvalidArgumentError(f"need a < b, got [{a}, {b}]")
    est = []
    for k in range(doublings + 1):
        m = start * 2**k
        x = a + (b - a) * (np.arange(m) + 0.5) / m
        with np.errstate(divide="ignore"):
            est.append(float(np.sum(1.0 / np.abs(f(x))) * (b - a) / m))
    est = np.asarray(est)
    if not np.all(np.isfinite(est)):
        return est, False
    d = np.abs(np.diff(est))
    scale = max(1.0, abs(est[-1]))
    if d[-1] <= 1e-12 * scale:
        return est, True
    ratios = d[-4:-1] / np.maximum(d[-3:], 1e-300)
    return est, bool(np.all(ratios > 1.1))
