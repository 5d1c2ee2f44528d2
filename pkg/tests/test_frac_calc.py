import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import gamma as G

from roughsde.bv_function import cantor_sigma, constant_sigma, step_sigma, two_level_step
from roughsde.errors import InvalidArgumentError
from roughsde.frac_calc import (
    FractionalOrder,
    composite_bound_rhs,
    gagliardo,
    holder,
    level_time_integral,
    rl_integral,
    truncated_w1_norms,
    w_infty_norm,
    w_theta_1_norm,
    wm_derivative,
)
from roughsde.grid_path import FbmSpec, Grid, GridPath, derive_seeds, sample_fbm

# Reference values below were computed independently with mpmath quadrature
# of the defining integrals (30 digits) and frozen here.
I_HALF_OF_ONE = 1.1283791670955126  # 2/sqrt(pi)
I_HALF_OF_T = 0.75225277806367504  # 1/Gamma(5/2)
D_HALF_OF_ONE = 0.56418958354775629  # 1/sqrt(pi)
D_HALF_OF_T = 1.1283791670955126  # 1/Gamma(3/2)
GAGLIARDO_T = 8 / 3
SINGLE_ATOM_RHS = 127.02500296726438  # theta=0.1, alpha=1, jump 8/3, x = t - 1/2


def line(n=2048, T=1.0, slope=1.0, offset=0.0):
    g = Grid(T, n)
    return GridPath(g, offset + slope * g.times)


def const(c, n=256):
    g = Grid(1.0, n)
    return GridPath(g, np.full(n + 1, float(c)))


def test_order_validation():
    with pytest.raises(InvalidArgumentError):
        FractionalOrder(1.0)
    with pytest.raises(InvalidArgumentError):
        rl_integral(line(8), 0.0)
    with pytest.raises(InvalidArgumentError):
        rl_integral(line(8), 0.5, side="up")


def test_rl_integral_examples():
    assert rl_integral(const(1.0), 0.5).values[-1] == pytest.approx(I_HALF_OF_ONE, abs=1e-6)
    assert rl_integral(const(1.0), 0.5).values[0] == 0.0
    assert rl_integral(line(), 0.5).values[-1] == pytest.approx(I_HALF_OF_T, abs=1e-5)


@pytest.mark.parametrize("theta", [0.2, 0.5, 0.8])
def test_rl_power_rule_along_the_grid(theta):
    p = line(512)
    t = p.times
    assert np.allclose(rl_integral(p, theta).values, t ** (1 + theta) / G(2 + theta), atol=1e-12)


def test_right_integral_mirrors_left():
    p = line(512)
    # right integral of s over [t, 1]: int_t^1 s (s-t)^(theta-1) ds / Gamma(theta)
    t = p.times
    theta = 0.5
    expect = ((1 - t) ** (theta + 1) / (theta + 1) + t * (1 - t) ** theta / theta) / G(theta)
    assert np.allclose(rl_integral(p, theta, "right").values, expect, atol=1e-12)


def test_wm_derivative_examples():
    assert wm_derivative(const(1.0), 0.5).values[-1] == pytest.approx(D_HALF_OF_ONE, abs=1e-6)
    assert wm_derivative(line(), 0.5).values[-1] == pytest.approx(D_HALF_OF_T, abs=1e-4)


def test_wm_endpoint_limits():
    d = wm_derivative(const(2.0), 0.4)
    assert d.values[0] == math.inf
    assert wm_derivative(line(), 0.4).values[0] == 0.0
    # the right derivative of g - g(T) vanishes at T
    assert wm_derivative(line(), 0.4, "right", subtract_terminal=True).values[-1] == 0.0
    with pytest.raises(InvalidArgumentError):
        wm_derivative(line(), 0.4, "left", subtract_terminal=True)


def test_right_derivative_of_line():
    # D_{T-}^theta (t - 1) at t = 0 is -(1 + theta/(1-theta)) / Gamma(1-theta)
    theta = 0.5
    d = wm_derivative(line(), theta, "right", subtract_terminal=True).values[0]
    assert d == pytest.approx(-(1 + theta / (1 - theta)) / G(1 - theta), abs=1e-9)


def _round_trip_error(theta, n):
    g = Grid(1.0, n)
    f = GridPath(g, np.sin(g.times))
    back = wm_derivative(rl_integral(f, theta), theta)
    return float(np.max(np.abs(back.values[1:] - f.values[1:])))


@pytest.mark.parametrize("theta", [0.25, 0.5, 0.75])
def test_inverse_property_and_rate(theta):
    e1, e2 = _round_trip_error(theta, 2048), _round_trip_error(theta, 4096)
    assert e1 <= 1e-2
    assert e1 / e2 >= 1.5


@given(a=st.floats(-5, 5), b=st.floats(-5, 5), theta=st.floats(0.05, 0.95))
def test_rl_integral_is_linear(a, b, theta):
    g = Grid(1.0, 64)
    f1 = GridPath(g, np.cos(3 * g.times))
    f2 = GridPath(g, g.times**2)
    lhs = rl_integral(f1 * a + f2 * b, theta).values
    rhs = a * rl_integral(f1, theta).values + b * rl_integral(f2, theta).values
    assert np.allclose(lhs, rhs, atol=1e-10)


def test_gagliardo_examples():
    assert gagliardo(line(), 0.5, 1).value == pytest.approx(GAGLIARDO_T, abs=1e-2)
    assert gagliardo(const(3.0), 0.5, 1).value == 0.0
    assert gagliardo(line(), 0.5, 2).value == pytest.approx(1.0, abs=1e-3)


def test_w_theta_1_examples():
    assert w_theta_1_norm(const(1.0, 2048), 0.5).value == pytest.approx(2.0, abs=1e-6)
    assert w_theta_1_norm(line(), 0.5).value == pytest.approx(2.0, abs=1e-2)
    assert w_theta_1_norm(const(0.0), 0.5).value == 0.0


def test_w_infty_examples():
    assert w_infty_norm(line(), 0.5).value == pytest.approx(3.0, abs=1e-2)
    assert w_infty_norm(const(5.0), 0.5).value == 0.0
    assert math.isfinite(w_infty_norm(line(), 0.99).value)


def test_holder_report():
    r = holder(line(64, slope=2.0), 0.5)
    assert r.kind == "holder" and r.value == pytest.approx(2.0)


def test_mesh_scale_oscillation_is_flagged():
    g = Grid(1.0, 256)
    saw = GridPath(g, (np.arange(257) % 2).astype(float))
    for rep in (gagliardo(saw, 0.3, 1), w_theta_1_norm(saw, 0.3), w_infty_norm(saw, 0.3)):
        assert rep.diverging and rep.value == math.inf and rep.grid_value > 0


@given(c=st.floats(-10, 10), theta=st.floats(0.05, 0.95))
def test_seminorms_scale_with_constant(c, theta):
    p = sample_fbm(FbmSpec(0.7, 1), Grid(1.0, 128))
    base = gagliardo(p, theta, 1).value
    assert gagliardo(p * c, theta, 1).value == pytest.approx(abs(c) * base, rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("theta", [0.2, 0.5])
def test_bounded_equivalence(seed, theta):
    # ||f||_{theta,1} is the first term plus the one-sided half of [f]_{theta,1}
    f = sample_fbm(FbmSpec(0.75, seed), Grid(1.0, 512))
    full = w_theta_1_norm(f, theta).value
    half = 0.5 * gagliardo(f, theta, 1).value
    bound = np.max(np.abs(f.values)) / (1 - theta)
    assert abs(full - half) <= bound + 1e-12


@pytest.mark.parametrize("seed", range(3))
def test_indicator_restriction_closed_form(seed):
    theta = 0.3
    f = sample_fbm(FbmSpec(0.75, seed), Grid(1.0, 512))
    k = 200
    t = f.times[k]
    truncated = truncated_w1_norms(f, theta, [k])[k]
    head = w_theta_1_norm(GridPath(Grid(t, k), f.values[: k + 1]), theta).grid_value
    # int_0^t int_t^T (r - s)^(-1-theta) dr ds in closed form
    cross = (t ** (1 - theta) - (1 - (1 - t) ** (1 - theta))) / (theta * (1 - theta))
    assert head <= truncated + 1e-9
    assert truncated <= head + np.max(np.abs(f.values)) * cross + 1e-9


def test_truncated_norm_at_horizon_is_full_norm():
    f = sample_fbm(FbmSpec(0.75, 4), Grid(1.0, 256))
    assert truncated_w1_norms(f, 0.4, [256])[256] == pytest.approx(w_theta_1_norm(f, 0.4).grid_value)
    assert truncated_w1_norms(f, 0.4, [0])[0] == 0.0


def test_level_time_integral_constant_path():
    g = Grid(1.0, 8)
    c = GridPath(g, np.zeros(9))
    out = level_time_integral(c.values, g.mesh, [0.0, 2.0], 0.5)
    assert out[0] == math.inf
    assert out[1] == pytest.approx(2**-0.5)


def test_level_time_integral_through_crossing():
    p = line(1000, offset=-0.5)
    # int_0^1 |t - 1/2|^-q dt = 2 (1/2)^(1-q) / (1-q)
    q = 0.6
    assert level_time_integral(p.values, p.grid.mesh, 0.0, q)[0] == pytest.approx(2 * 0.5 ** (1 - q) / (1 - q))
    assert level_time_integral(p.values, p.grid.mesh, 0.0, 1.0)[0] == math.inf


@given(q1=st.floats(0.05, 0.95), q2=st.floats(0.05, 0.95), seed=st.integers(0, 50))
def test_exponent_comparison(q1, q2, seed):
    lo, hi = sorted((q1, q2))
    p = sample_fbm(FbmSpec(0.75, seed), Grid(1.0, 256))
    y = np.linspace(-2, 2, 9)
    small = level_time_integral(p.values, p.grid.mesh, y, lo)
    big = level_time_integral(p.values, p.grid.mesh, y, hi)
    assert np.all(small <= 1.0 + big + 1e-9)


def test_composite_bound_examples():
    x = line(1000, offset=-0.5)
    assert composite_bound_rhs(constant_sigma(2.0), x, 0.3, 1.0, 0.74) == 0.0
    step = step_sigma(4.0, 4.0 / 3.0, 0.0)
    assert composite_bound_rhs(step, x, 0.1, 1.0, 1.0) == pytest.approx(SINGLE_ATOM_RHS, rel=1e-3)


def test_composite_bound_diverges_with_warning():
    x = line(1000, offset=-0.5)
    with pytest.warns(RuntimeWarning):
        assert composite_bound_rhs(two_level_step(0.25), x, 0.9, 1.0, 0.5) == math.inf


@pytest.mark.parametrize("seed", derive_seeds(3, 5))
@pytest.mark.parametrize("sigma", [two_level_step(0.25), cantor_sigma(0.5)], ids=["step", "cantor"])
def test_composite_bound_holds(seed, sigma):
    X = sample_fbm(FbmSpec(0.75, seed), Grid(1.0, 512))
    lhs = gagliardo(X.map(sigma), 0.3, 1).grid_value
    assert lhs <= composite_bound_rhs(sigma, X, 0.3, 1.0, 0.74)
