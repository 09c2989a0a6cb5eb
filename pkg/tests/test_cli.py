import json

import numpy as np
import pytest

from forgetwin import cli, twin
from forgetwin.config import RunConfig
from forgetwin.env import read_pieces_csv
from forgetwin.patterns import read_ranking_csv
from forgetwin.ppo import read_metrics_csv


@pytest.fixture
def small_yaml(tmp_path):
    p = tmp_path / "small.yaml"
    p.write_text("ppo.hidden: [8, 8]\nppo.steps_per_epoch: 120\nppo.epochs: 2\n")
    return p


def test_train_then_eval(tmp_path, small_yaml, capsys):
    out = tmp_path / "run"
    assert cli.main(["train", "--mode", "normal", "--config", str(small_yaml), "--seed", "3", "--out", str(out)]) == 0
    assert len(read_metrics_csv(out / "metrics.csv")) == 2
    assert (out / "final.npz").exists() and (out / "config.yaml").exists()
    ev = tmp_path / "ev"
    assert cli.main(["eval", "--checkpoint", str(out / "final.npz"), "--episodes", "2", "--config", str(small_yaml),
                     "--out", str(ev)]) == 0
    summary = json.loads((ev / "summary.json").read_text())
    assert summary["pieces"] == 16 == len(read_pieces_csv(ev / "pieces.csv"))
    fr = [summary[k] for k in ("frac_below_required", "frac_in_required", "frac_above_required")]
    assert all(0 <= f <= 1 for f in fr) and sum(fr) == pytest.approx(1.0)
    assert 0 <= summary["frac_in_desired"] <= 1
    assert summary["overheat_pieces"] == 0


def test_eval_warm_holding_checkpoint_mode(tmp_path, small_yaml):
    out = tmp_path / "wh"
    assert cli.main(["train", "--mode", "warm-holding", "--config", str(small_yaml), "--out", str(out)]) == 0
    cfg = RunConfig()
    _, summary = cli.cmd_eval(cfg, out / "final.npz", 1, tmp_path / "ev")
    assert summary["mode"] == "warm_holding"


def test_pattern_search_cli(tmp_path):
    cfgp = tmp_path / "p.yaml"
    cfgp.write_text("patterns.candidates: [60, 64]\n")
    assert cli.main(["pattern-search", "--config", str(cfgp), "--out", str(tmp_path)]) == 0
    ranking = read_ranking_csv(tmp_path / "ranking.csv")
    assert len(ranking) == 16


def test_simulate_zero_schedule_cools(tmp_path):
    sched = tmp_path / "s.csv"
    sched.write_text("P3,P4,P5\n" + "0,0,0\n" * 100)
    # head at 10 m keeps the bar clear of every zone (first starts at 15 m) for the whole run
    assert cli.main(["simulate", "--schedule", str(sched), "--init-temp", "1000", "--head-pos", "10",
                     "--out", str(tmp_path)]) == 0
    rows = twin.read_trajectory_csv(tmp_path / "trajectory.csv")
    assert len(rows) == 101  # initial snapshot plus one per step
    temps = np.array([r[2] for r in rows])
    assert np.all(np.diff(temps, axis=0) <= 0)
    assert temps[-1].max() < 1000


def test_simulate_schedule_errors(tmp_path, capsys):
    bad = tmp_path / "b.csv"
    bad.write_text("P3,P4\n1,2\n")
    assert cli.main(["simulate", "--schedule", str(bad), "--out", str(tmp_path)]) == 2
    assert "expected 3 power columns" in capsys.readouterr().err
    bad.write_text("P3,P4,P5\n1,x,2\n")
    assert cli.main(["simulate", "--schedule", str(bad), "--out", str(tmp_path)]) == 2
    too_big = tmp_path / "c.csv"
    too_big.write_text("P3,P4,P5\n1e9,0,0\n")
    assert cli.main(["simulate", "--schedule", str(too_big), "--out", str(tmp_path)]) == 2


def test_p_max_flag_overrides_file(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("zones.p_max: 0.3e6\n")
    args = cli.build_parser().parse_args(["pattern-search", "--config", str(p), "--p-max", "0.5e6"])
    assert cli._config_from_args(args).zones.p_max == 0.5e6


def test_missing_checkpoint(tmp_path, capsys):
    assert cli.main(["eval", "--checkpoint", str(tmp_path / "nope.npz"), "--out", str(tmp_path)]) == 2
    assert "not found" in capsys.readouterr().err
