import csv
import subprocess
import sys

import numpy as np
import pytest

from roughsde.cli import EXIT_AUDIT, EXIT_OK, EXIT_PRECONDITION, EXIT_USAGE, run
from roughsde.grid_path import FbmSpec, Grid, read_path_csv, sample_fbm


def outputs(d, prefix):
    return sorted(p for p in d.iterdir() if p.name.startswith(prefix) and p.suffix == ".csv")


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_gen_path_round_trip_and_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run(["gen-path", "--n", "64", "--seed", "5", "--out", str(d)]) == EXIT_OK
    (pa,), (pb,) = outputs(a, "gen-path"), outputs(b, "gen-path")
    assert pa.read_bytes() == pb.read_bytes()
    p = read_path_csv(pa)
    assert np.array_equal(p.values, sample_fbm(FbmSpec(0.75, 5), Grid(1.0, 64)).values)
    manifest = (a / "manifest.txt").read_text()
    assert "seed: 5" in manifest and pa.name in manifest


def test_bad_flags_exit_with_usage(tmp_path, capsys):
    assert run(["no-such-command"]) == EXIT_USAGE
    assert run(["solve", "--sigma", "wobble:1", "--out", str(tmp_path)]) == EXIT_USAGE
    assert run(["solve", "--sigma", "step:1", "--out", str(tmp_path)]) == EXIT_USAGE
    assert run(["solve", "--n", "ten", "--out", str(tmp_path)]) == EXIT_USAGE


def test_precondition_failure(tmp_path, capsys):
    assert run(["gen-path", "--H", "1.5", "--out", str(tmp_path)]) == EXIT_PRECONDITION
    assert "error:" in capsys.readouterr().err
    assert run(["check-variability", "--M", "10", "--out", str(tmp_path)]) == EXIT_PRECONDITION


def test_transform_table(tmp_path):
    assert run(["transform", "--lo", "-2", "--hi", "2", "--points", "5", "--out", str(tmp_path)]) == EXIT_OK
    (f,) = outputs(tmp_path, "transform")
    table = rows(f)
    assert table[0] == ["x", "lambda"]
    assert [float(r[1]) for r in table[1:]] == pytest.approx([-1.5, -0.75, 0.0, 0.25, 0.5])


def test_solve_writes_path_and_taus(tmp_path):
    argv = ["solve", "--sigma", "cantor:0.5", "--n", "128", "--eps-list", "0.9,0.6", "--out", str(tmp_path)]
    assert run(argv) == EXIT_OK
    files = outputs(tmp_path, "solve")
    assert len(files) == 2
    path, tau = (f for f in sorted(files, key=lambda f: f.name.endswith("-tau.csv")))
    assert rows(path)[0] == ["t", "Y", "X", "beyond_tau"] and len(rows(path)) == 130
    assert [r[0] for r in rows(tau)[1:]] == ["0.90000000000000002", "0.59999999999999998"]


def test_verify_ito(tmp_path):
    argv = ["verify-ito", "--seeds", "3", "--n-list", "256,1024", "--theta", "0.4", "--out", str(tmp_path)]
    assert run(argv) == EXIT_OK
    summary = next(f for f in outputs(tmp_path, "verify-ito") if not f.name.endswith("per-seed.csv"))
    med = [float(r[1]) for r in rows(summary)[1:]]
    assert med[1] < med[0]


def test_verify_bound(tmp_path):
    assert run(["verify-bound", "--seeds", "4", "--n", "256", "--out", str(tmp_path)]) == EXIT_OK
    (f,) = outputs(tmp_path, "verify-bound")
    assert all(r[3] == "true" for r in rows(f)[1:])


def test_verify_mollifier(tmp_path):
    assert run(["verify-mollifier", "--seeds", "2", "--n", "256", "--out", str(tmp_path)]) == EXIT_OK
    summary = next(f for f in outputs(tmp_path, "verify-mollifier") if not f.name.endswith("per-seed.csv"))
    med = [float(r[1]) for r in rows(summary)[1:]]
    assert med[-1] <= med[0]


def test_check_variability(tmp_path):
    assert run(["check-variability", "--M", "200", "--n", "128", "--out", str(tmp_path)]) == EXIT_OK
    (f,) = outputs(tmp_path, "check-variability")
    assert rows(f)[-1][0] == "sup"


@pytest.mark.parametrize("preset", ["step", "power", "cantor"])
def test_experiment_presets(tmp_path, preset):
    assert run(["experiment", preset, "--n", "512", "--out", str(tmp_path)]) == EXIT_OK
    summary = next(f for f in outputs(tmp_path, "experiment") if not f.name.endswith("path.csv") and "tau" not in f.name)
    table = rows(summary)
    assert table[0] == ["n", "sde_residual", "lambda_defect"]
    assert all(float(r[2]) <= 1e-8 for r in table[1:])


def test_audit_failure_exit(tmp_path, capsys):
    # q = 0.9 / 0.74 > 1: every crossing level is infinite, so the sup cannot be stable
    argv = ["check-variability", "--M", "100", "--n", "64", "--alpha", "0.74", "--beta", "0.7", "--var-eps", "0.2"]
    assert run(argv + ["--out", str(tmp_path)]) == EXIT_AUDIT
    assert "audit failed" in capsys.readouterr().err
    assert (tmp_path / "manifest.txt").exists()


def test_console_entry_point(tmp_path):
    res = subprocess.run(
        [sys.executable, "-m", "roughsde.cli", "gen-path", "--n", "16", "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert res.returncode == 0, res.stderr
    assert "gen-path" in res.stdout
