import json
import os

import numpy as np
import pytest

from anytime_mc import cli
from anytime_mc.smc import ParticleCollapseError


def _read(path):
    with open(path, "rb") as fh:
        return fh.read()


def test_validate_anytime_outputs(tmp_path):
    out = tmp_path / "va"
    rc = cli.main(["validate-anytime", "--p", "0", "1", "--chains", "256",
                   "--horizon", "5", "--seed", "3", "--out", str(out)])
    assert rc == 0
    assert (out / "config.json").exists()
    assert (out / "anytime.csv").exists()
    assert (out / "anytime_p0.svg").exists()
    assert (out / "anytime_p1.svg").exists()
    rows = _read(out / "anytime.csv").decode().strip().splitlines()
    assert len(rows) == 1 + 2 * 5  # header + p-values x horizon


def test_smc_runs_and_replays_byte_identical(tmp_path):
    a = tmp_path / "a"
    rc = cli.main(["smc", "--model", "lgssm", "--K", "64", "--n-v", "2",
                   "--seed", "5", "--out", str(a)])
    assert rc == 0
    b = tmp_path / "b"
    rc = cli.main(["replay", str(a / "config.json"), "--out", str(b)])
    assert rc == 0
    assert _read(a / "posterior.csv") == _read(b / "posterior.csv")


def test_dist_outputs_profile_and_gantt(tmp_path):
    out = tmp_path / "d"
    rc = cli.main(["dist", "--model", "lgssm", "--K", "64",
                   "--processors", "4", "--n-v", "1", "--contend", "0:2.0",
                   "--seed", "1", "--out", str(out)])
    assert rc == 0
    assert (out / "profile.csv").exists()
    assert (out / "gantt.svg").exists()
    summary = json.loads(_read(out / "summary.json"))
    assert summary["wait"]["move_wait_fraction"] > 0.0


def test_lorenz_data_row_counts(tmp_path):
    out = tmp_path / "l"
    rc = cli.main(["lorenz-data", "--n-obs", "7", "--seed", "2",
                   "--out", str(out)])
    assert rc == 0
    obs = _read(out / "observations.csv").decode().strip().splitlines()
    path = _read(out / "path.csv").decode().strip().splitlines()
    assert len(obs) == 8  # header + 7 observations
    assert len(path) == 8
    assert obs[0] == "t,y1,y2,y3,y4"


def test_usage_error_exit_code_2(tmp_path):
    assert cli.main(["smc", "--model", "no-such-model",
                     "--out", str(tmp_path / "x")]) == 2


def test_bad_shares_exit_code_2(tmp_path):
    rc = cli.main(["dist", "--model", "lgssm", "--K", "64",
                   "--processors", "4", "--shares", "1", "1", "1", "1",
                   "--out", str(tmp_path / "x")])
    assert rc == 2


def test_numerical_failure_exit_code_3(tmp_path, monkeypatch):
    def explode(*a, **k):
        raise ParticleCollapseError("all weights vanished")

    monkeypatch.setattr(cli, "run_smc", explode)
    rc = cli.main(["smc", "--model", "lgssm", "--K", "16",
                   "--out", str(tmp_path / "x")])
    assert rc == 3


def test_replay_missing_config_exit_code_2(tmp_path):
    assert cli.main(["replay", str(tmp_path / "nope.json")]) == 2
