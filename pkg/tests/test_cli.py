"""Command-line interface: subcommands, outputs and exit codes."""

import os

import numpy as np
import pytest

from hexmask import cli
from hexmask import io as hio
from hexmask.hexgrid import build_grid

from helpers import TINY_CONFIG, annulus, component_count


@pytest.fixture
def tiny_ini(tmp_path):
    path = tmp_path / "tiny.ini"
    path.write_text(TINY_CONFIG)
    return path


def test_analytic_case_one(capsys):
    assert cli.main(["analytic", "--p", "2", "--vstar", "2", "--xm", "0.5", "--eps", "0.5"]) == 0
    out = capsys.readouterr().out
    assert "best: case I, x = (1, 0.5, 0.5)" in out


def test_analytic_zero_relaxation_is_infeasible(capsys):
    assert cli.main(["analytic", "--p", "2", "--vstar", "2", "--xm", "0.5", "--eps", "0"]) == 0
    out = capsys.readouterr().out
    row = next(line for line in out.splitlines() if line.startswith("I "))
    assert row.split()[1] == "no"


def test_analytic_rejects_bad_exponent(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["analytic", "--p", "3", "--vstar", "2", "--xm", "0.5", "--eps", "0"])
    assert exc.value.code == 2


def test_skeletonize_annulus(tmp_path, capsys):
    g = build_grid(20, 20, 1.0)
    src = tmp_path / "ring.csv"
    src.write_text(hio.density_csv(g, annulus(g).astype(float)))
    svg = tmp_path / "ring.svg"
    assert cli.main(["skeletonize", str(src), "--svg", str(svg)]) == 0
    out = capsys.readouterr().out
    assert "special case: False" in out
    n_cols, n_rows, skel = hio.read_density_csv(tmp_path / "ring_skeleton.csv")
    assert (n_cols, n_rows) == (20, 20)
    s = skel > 0.5
    assert component_count(g, s) == 1
    assert component_count(g, ~s, with_outer=True) == 2
    assert "<svg" in svg.read_text()


def test_skeletonize_rejects_bad_csv(tmp_path, capsys):
    src = tmp_path / "bad.csv"
    src.write_text("row,col,density\n0,0,x\n")
    assert cli.main(["skeletonize", str(src)]) == 2
    assert "line 2" in capsys.readouterr().err


def test_missing_config_exits_2(tmp_path, capsys):
    assert cli.main(["optimize", str(tmp_path / "nope.ini")]) == 2
    assert "nope.ini" in capsys.readouterr().err


def test_bad_config_reports_file_and_line(tmp_path, capsys):
    path = tmp_path / "bad.ini"
    path.write_text("[grid]\nn_cols = 5\nn_rows = twelve\n")
    assert cli.main(["optimize", str(path)]) == 2
    err = capsys.readouterr().err
    assert f"{path}:3:" in err
    assert "n_rows" in err


def test_fd_check_passes(tiny_ini, capsys):
    assert cli.main(["fd-check", str(tiny_ini), "--samples", "6"]) == 0
    out = capsys.readouterr().out
    assert "PASS" in out
    assert sum(line.split()[0] in ("phi", "volume", "g_min", "g_max") for line in out.splitlines()[1:-1]) == 24


def test_fd_check_fails_at_impossible_tolerance(tiny_ini, capsys):
    assert cli.main(["fd-check", str(tiny_ini), "--samples", "6", "--tol", "0"]) == 1
    assert "FAIL" in capsys.readouterr().out


@pytest.fixture(scope="module")
def tiny_run_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("run")
    ini = d / "tiny.ini"
    ini.write_text(TINY_CONFIG)
    assert cli.main(["optimize", str(ini), "--outdir", str(d / "out")]) == 0
    return d / "out"


def test_optimize_writes_every_output(tiny_run_dir):
    for name in cli.OUTPUT_FILES + ("state.json", "regions.csv", "projected.svg"):
        assert (tiny_run_dir / name).is_file(), name
    assert not [f for f in os.listdir(tiny_run_dir) if f.startswith(".tmp-")]


def test_optimize_report_and_history(tiny_run_dir):
    report = (tiny_run_dir / "report.txt").read_text()
    assert "status: accepted" in report
    assert "load_path_connected:" in report
    rows = hio.parse_history_csv((tiny_run_dir / "history.csv").read_text())
    n_evals = int(next(line for line in report.splitlines() if line.startswith("evaluations:")).split()[1])
    assert len(rows) == n_evals
    eps = [r[6] for r in rows]
    assert eps == sorted(eps)


def test_render_reproduces_final_svg(tiny_run_dir, tmp_path, capsys):
    out = tmp_path / "again.svg"
    assert cli.main(["render", str(tiny_run_dir / "state.json"), "--out", str(out)]) == 0
    assert out.read_text() == (tiny_run_dir / "final.svg").read_text()


def test_render_rejects_malformed_state(tmp_path, capsys):
    bad = tmp_path / "state.json"
    bad.write_text('{"config": ""}')
    assert cli.main(["render", str(bad)]) == 2


def test_density_csv_of_run_matches_masks(tiny_run_dir):
    n_cols, n_rows, rho = hio.read_density_csv(tiny_run_dir / "density.csv")
    assert (n_cols, n_rows) == (20, 12)
    assert np.all((rho >= 0) & (rho <= 1))
