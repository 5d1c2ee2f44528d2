import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roughsde.errors import InvalidArgumentError
from roughsde.grid_path import FbmSpec, Grid, GridPath, sample_fbm
from roughsde.variability import (
    VariabilityParams,
    default_y_grid,
    estimate_assumption,
    gaussian_density_criterion,
    path_integrals,
    read_report_csv,
    write_report_csv,
)

PARAMS = VariabilityParams(0.74, 0.3, 0.05)
SMALL = Grid(1.0, 256)


def test_params_validation():
    assert PARAMS.q == pytest.approx(0.35 / 0.74)
    for bad in [(0.5, 0.3, 0.05), (1.0, 0.3, 0.05), (0.74, 0.2, 0.05), (0.74, 0.74, 0.05), (0.74, 0.3, 0.0)]:
        with pytest.raises(InvalidArgumentError):
            VariabilityParams(*bad)


def test_constant_path_examples():
    c = GridPath(Grid(1.0, 16), np.full(17, 1.0))
    out = path_integrals(c, [1.0, 3.0], 0.5)
    assert out[0] == math.inf
    assert out[1] == pytest.approx(2**-0.5, abs=1e-15)


def test_needs_enough_replicas():
    with pytest.raises(InvalidArgumentError):
        estimate_assumption(FbmSpec(0.75), PARAMS, M=99)


@pytest.fixture(scope="module")
def report():
    return estimate_assumption(FbmSpec(0.75), PARAMS, np.linspace(-3, 3, 41), M=200, grid=SMALL, seed=3)


def test_report_shape(report):
    assert report.M == 200 and report.q == PARAMS.q
    assert report.y.shape == report.mean.shape == report.stderr.shape == (41,)
    assert np.all(report.mean > 0)
    assert report.sup == np.max(report.mean)
    assert math.isfinite(report.sup) and math.isfinite(report.mean_of_sup)
    assert report.mean_of_sup >= report.sup


def test_sup_is_interior(report):
    assert 0 < report.argmax < report.y.size - 1


def test_default_grid_covers_paths():
    paths = [sample_fbm(FbmSpec(0.75, s), SMALL).values for s in range(4)]
    y = default_y_grid(paths, 41)
    lo, hi = min(p.min() for p in paths), max(p.max() for p in paths)
    assert y.size == 41
    assert y[0] == pytest.approx(lo - (hi - lo)) and y[-1] == pytest.approx(hi + (hi - lo))


def test_translation_covariance():
    shift = 0.37
    y = np.linspace(-2, 2, 9)
    base = estimate_assumption(FbmSpec(0.75), PARAMS, y, M=100, grid=SMALL, seed=1)
    moved = estimate_assumption(
        lambda s, g: sample_fbm(FbmSpec(0.75, s), g) + shift, PARAMS, y + shift, M=100, grid=SMALL, seed=1
    )
    assert np.allclose(base.mean, moved.mean, rtol=0, atol=1e-12)
    assert base.sup == pytest.approx(moved.sup, abs=1e-12)


@settings(max_examples=25)
@given(q1=st.floats(0.05, 0.95), q2=st.floats(0.05, 0.95), seed=st.integers(0, 1000))
def test_exponent_monotonicity(q1, q2, seed):
    lo, hi = sorted((q1, q2))
    p = sample_fbm(FbmSpec(0.75, seed), SMALL)
    y = np.linspace(-2, 2, 21)
    assert np.all(path_integrals(p, y, lo) <= p.grid.T + path_integrals(p, y, hi) + 1e-9)


def test_gaussian_density_examples():
    ok, value = gaussian_density_criterion(lambda t: t**1.5, 1.0)
    assert ok and value == pytest.approx(4.0, abs=1e-6)
    assert gaussian_density_criterion(lambda t: t**2, 1.0) == (False, math.inf)
    ok, value = gaussian_density_criterion(lambda t: 1.0, 2.0)
    assert ok and value == pytest.approx(2.0, abs=1e-12)


def test_gaussian_density_rejects_bad_variance():
    with pytest.raises(InvalidArgumentError):
        gaussian_density_criterion(lambda t: t - 0.5, 1.0)
    with pytest.raises(InvalidArgumentError):
        gaussian_density_criterion(lambda t: t, 0.0)


def test_report_csv_round_trip(report, tmp_path):
    f = tmp_path / "rep.csv"
    write_report_csv(report, f)
    y, mean, stderr, sup, stable = read_report_csv(f)
    assert np.array_equal(y, report.y) and np.array_equal(mean, report.mean)
    assert np.array_equal(stderr, report.stderr)
    assert sup == report.sup and stable == report.stable
    (tmp_path / "bad.csv").write_text("a,b\n")
    with pytest.raises(InvalidArgumentError):
        read_report_csv(tmp_path / "bad.csv")
