import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roughsde.bv_function import mollify, two_level_step
from roughsde.errors import InfeasibleIntegrandError, InvalidArgumentError
from roughsde.grid_path import FbmSpec, Grid, GridPath, sample_fbm
from roughsde.zaehle_integral import (
    BoundViolationError,
    IntegralResult,
    default_theta,
    integrate,
    integrate_probes,
    integrate_to,
    riemann_stieltjes,
)


def paths(n=1024, T=1.0):
    g = Grid(T, n)
    t = g.times
    return GridPath(g, np.ones_like(t)), GridPath(g, t), GridPath(g, t**2)


def sub(p, i, j):
    return GridPath(Grid(p.times[j] - p.times[i], j - i), p.values[i : j + 1])


def test_integral_of_one():
    one, _, sq = paths()
    assert integrate(one, sq, 0.4).value == pytest.approx(1.0, abs=1e-3)


def test_classical_stieltjes_value():
    _, t, sq = paths()
    r = integrate(t, sq, 0.4)
    assert r.value == pytest.approx(2 / 3, abs=1e-3)
    assert r.theta == 0.4 and r.mesh == pytest.approx(1 / 1024)
    assert abs(r.value) <= r.bound


def test_theta_independence():
    _, t, sq = paths()
    assert integrate(t, sq, 0.3).value == pytest.approx(integrate(t, sq, 0.6).value, abs=2e-3)


def test_integrate_to_examples():
    one, t, sq = paths()
    assert integrate_to(one, sq, 0.4, 0.0).value == 0.0
    assert integrate_to(t, sq, 0.4, 1.0) == integrate(t, sq, 0.4)
    assert integrate_to(one, sq, 0.4, 0.5).value == pytest.approx(0.25, abs=1e-3)


def test_integrate_to_rejects_off_grid_time():
    one, _, sq = paths(16)
    with pytest.raises(InvalidArgumentError):
        integrate_to(one, sq, 0.4, 0.01)
    with pytest.raises(InvalidArgumentError):
        integrate_to(one, sq, 0.4)


def test_riemann_stieltjes_examples():
    one, t, sq = paths(4096)
    assert riemann_stieltjes(one * 3.0, sq) == 3.0
    assert riemann_stieltjes(t, sq) == pytest.approx(2 / 3, abs=1e-3)


def test_rejects_mismatched_grids():
    a, _, _ = paths(64)
    _, _, b = paths(128)
    with pytest.raises(InvalidArgumentError):
        integrate(a, b, 0.4)
    with pytest.raises(InvalidArgumentError):
        riemann_stieltjes(a, b)


def test_rejects_bad_oversample():
    one, _, sq = paths(16)
    with pytest.raises(InvalidArgumentError):
        integrate(one, sq, 0.4, oversample=0)


@settings(max_examples=15)
@given(a=st.floats(-3, 3), b=st.floats(-3, 3), seed=st.integers(0, 100))
def test_linearity(a, b, seed):
    g = sample_fbm(FbmSpec(0.75, seed), Grid(1.0, 256))
    f1, f2 = g.map(np.sin), GridPath(g.grid, g.times**2)
    lhs = integrate(f1 * a + f2 * b, g, 0.4, audit=False).value
    rhs = a * integrate(f1, g, 0.4, audit=False).value + b * integrate(f2, g, 0.4, audit=False).value
    assert lhs == pytest.approx(rhs, abs=1e-10)


@pytest.mark.parametrize("seed", range(3))
def test_additivity(seed):
    g = sample_fbm(FbmSpec(0.75, seed), Grid(1.0, 1024))
    f = g.map(np.sin)
    head = integrate_to(f, g, 0.4, 0.25).value
    middle = integrate(sub(f, 256, 768), sub(g, 256, 768), 0.4).value
    assert head + middle == pytest.approx(integrate_to(f, g, 0.4, 0.75).value, abs=1e-4)


@pytest.mark.parametrize("seed", range(3))
def test_chain_rule_along_fbm(seed):
    # int sin(g) dg = cos(g(0)) - cos(g(t))
    g = sample_fbm(FbmSpec(0.75, seed), Grid(1.0, 1024))
    res = integrate_probes(g.map(np.sin), g, 0.4, [256, 512, 1024])
    for k, r in zip([256, 512, 1024], res):
        assert r.value == pytest.approx(1.0 - math.cos(g.values[k]), abs=5e-4)
        assert abs(r.value) <= r.bound


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("theta", [0.3, 0.45])
def test_bound_compliance(seed, theta):
    g = sample_fbm(FbmSpec(0.8, seed), Grid(1.0, 512))
    f = g.map(lambda x: np.sign(x) * np.abs(x) ** 0.7)
    r = integrate(f, g, theta)
    assert math.isfinite(r.bound)
    assert abs(r.value) <= r.bound + 1e-6


def test_result_constructor_enforces_bound():
    with pytest.raises(BoundViolationError):
        IntegralResult(2.0, 0.4, 1.0, 0.01)
    IntegralResult(2.0, 0.4, math.nan, 0.01)


def test_oscillating_integrand_is_infeasible():
    g = Grid(1.0, 256)
    saw = GridPath(g, (np.arange(257) % 2).astype(float))
    with pytest.raises(InfeasibleIntegrandError) as info:
        integrate(saw, GridPath(g, g.times), 0.4)
    assert info.value.norm == "w_theta_1"
    assert "w_theta_1" in str(info.value)
    with pytest.raises(InfeasibleIntegrandError) as info:
        integrate(GridPath(g, g.times), saw, 0.4)
    assert info.value.norm == "w_infty"


def test_default_theta_is_inside_window():
    g = sample_fbm(FbmSpec(0.75, 1), Grid(1.0, 2048))
    theta = default_theta(g, beta=0.5)
    assert 0.25 - 0.1 < theta < 0.5
    assert integrate(GridPath(g.grid, g.times), g).theta == default_theta(g)


@pytest.mark.parametrize("seed", range(3))
def test_riemann_stieltjes_consistency(seed):
    fine = sample_fbm(FbmSpec(0.75, seed), Grid(1.0, 8192))
    gaps = []
    for r in (16, 8, 4):
        g = fine.coarsen(r)
        f = GridPath(g.grid, np.sin(3 * g.times))
        gaps.append(abs(integrate(f, g, 0.4).value - riemann_stieltjes(f, g)))
    assert gaps[0] / gaps[1] >= 1.4 and gaps[1] / gaps[2] >= 1.4


def test_young_integral_of_smoothed_coefficient():
    fine = sample_fbm(FbmSpec(0.75, 11), Grid(1.0, 8192))
    sigma_n = mollify(two_level_step(0.25), 8)
    g = fine.coarsen(2)
    f = g.map(sigma_n)
    assert integrate(f, g, 0.4).value == pytest.approx(riemann_stieltjes(f, g), abs=2e-2)
