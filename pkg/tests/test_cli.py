import json
import warnings
from pathlib import Path

import pytest

from rwtree import cli
from rwtree.errors import ConvergenceWarning


def run(tmp_path, *argv, out="out"):
    return cli.main([*argv, "--out", str(tmp_path / out)])


def files(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_calibrate(tmp_path, capsys):
    assert run(tmp_path, "calibrate") == 0
    law = json.loads((tmp_path / "out/calibrate/law.json").read_text())
    assert "_meta" in law
    assert (tmp_path / "out/calibrate/manifest.json").exists()


def test_calibrate_two_point_infeasible(tmp_path, capsys):
    params = json.dumps({"N": 2, "p": 0.9, "d_minus": -1.0, "d_plus": 1.0})
    assert run(tmp_path, "calibrate", "--family", "two-point", "--params", params) == 2


def test_bad_config_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("walk:\n  n: lots\n")
    assert run(tmp_path, "walk", "--config", str(bad)) == 2
    assert "walk.n" in capsys.readouterr().err
    assert run(tmp_path, "walk", "--set", "nosuch.key=1") == 2
    assert run(tmp_path, "walk", "--set", "broken") == 2


def test_budget_exit_3(tmp_path, capsys):
    code = run(tmp_path, "walk", "--mode", "fixed_steps", "--n", "100", "--set", "budgets.max_steps=10")
    assert code == 3


def test_strict_convergence_exit_4(tmp_path, monkeypatch, capsys):
    def noisy(cfg, args):
        warnings.warn("still drifting", ConvergenceWarning)
        return 0

    monkeypatch.setitem(cli.COMMANDS, "appendix", noisy)
    assert run(tmp_path, "appendix", "--strict") == 4
    with pytest.warns(ConvergenceWarning):
        assert run(tmp_path, "appendix") == 0


def test_walk_rerun_byte_identical(tmp_path, capsys):
    args = ("walk", "--n", "50", "--replicas", "4", "--seed", "7")
    assert run(tmp_path, *args, out="a") == 0
    assert run(tmp_path, *args, "--workers", "2", out="b") == 0
    a, b = files(tmp_path / "a"), files(tmp_path / "b")
    assert a == b and "walk/walks.jsonl" in a


def test_quenched_and_experiment(tmp_path, capsys):
    assert run(tmp_path, "quenched", "--trees", "2", "--depth", "4", "--ell", "3") == 0
    lines = (tmp_path / "out/quenched/quenched.jsonl").read_text().splitlines()
    assert len(lines) == 3
    code = run(tmp_path, "experiment", "range", "--replicas", "2", "--set", "grids.n_grid=[100]")
    assert code == 0
    assert (tmp_path / "out/experiment-range/range.csv").read_text().startswith("# {")


def test_unknown_experiment(tmp_path, capsys):
    assert run(tmp_path, "experiment") == 2


def test_report(tmp_path, capsys):
    run(tmp_path, "calibrate")
    run(tmp_path, "quenched", "--depth", "3", "--ell", "2")
    out = tmp_path / "report.csv"
    assert cli.main(["report", str(tmp_path / "out"), "--output", str(out)]) == 0
    text = out.read_text()
    assert "calibrate" in text and "quenched" in text
