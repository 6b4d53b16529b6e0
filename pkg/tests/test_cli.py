import json

import numpy as np
import pytest

from loctimes.cli import main


@pytest.fixture()
def twostate(tmp_path):
    path = tmp_path / "twostate.json"
    path.write_text(json.dumps(
        {"states": [1, 2], "rates": [[1, 2, 1.0], [2, 1, 1.0]]}))
    return str(path)


def test_density_command_prints_value_and_certificate(twostate, capsys):
    status = main(["density", "--generator", twostate, "--R", "1,2",
                   "--a", "1", "--b", "2", "--l", "0.5,0.5"])
    out = capsys.readouterr().out
    assert status == 0
    assert out.startswith("0.4657596")
    assert "certified truncation error" in out


def test_bound_command(twostate, capsys):
    status = main(["bound", "--generator", twostate, "--R", "1,2",
                   "--a", "1", "--b", "2", "--l", "0.5,0.5"])
    assert status == 0
    assert float(capsys.readouterr().out.strip()) == pytest.approx(
        np.exp(2.5), rel=1e-9)


def test_rate_command(twostate, capsys):
    status = main(["rate", "--generator", twostate, "--mu", "0.75,0.25"])
    out = capsys.readouterr().out
    assert status == 0
    assert "value = 0.133974596" in out
    assert "dirichlet form" in out


def test_ldp_command_halfspace(twostate, capsys):
    status = main(["ldp", "--generator", twostate, "--S", "1,2",
                   "--T", "10", "--mode", "prob", "--halfspace", "2:0.8"])
    out = capsys.readouterr().out
    assert status == 0
    assert "inf_rate = 0.2" in out


def test_malformed_generator_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(
        {"states": [1, 2], "rates": [[1, 2, 1.0], [2, 0.5]]}))
    status = main(["density", "--generator", str(bad), "--R", "1,2",
                   "--a", "1", "--b", "2", "--l", "0.5,0.5"])
    assert status == 2
    assert "#1" in capsys.readouterr().err


def test_unreadable_config_exits_2(tmp_path, capsys):
    missing = tmp_path / "nope.json"
    status = main(["verify-density", "--config", str(missing)])
    assert status == 2


def test_simulate_is_deterministic(twostate, capsys):
    args = ["simulate", "--generator", twostate, "--start", "1",
            "--T", "2.0", "--samples", "500", "--seed", "42"]
    assert main(args) == 0
    first = capsys.readouterr().out
    assert main(args) == 0
    assert capsys.readouterr().out == first


def test_simulate_inverse_mode(twostate, capsys):
    status = main(["simulate", "--generator", twostate, "--start", "1",
                   "--pivot", "2", "--level", "0.5", "--samples", "1",
                   "--seed", "3"])
    out = capsys.readouterr().out
    assert status == 0
    assert "endpoint=2" in out


def test_chi_discrete_zero_functional(capsys):
    status = main(["chi-discrete", "--radius", "2", "--alpha", "2.0"])
    assert status == 0
    assert abs(float(capsys.readouterr().out.strip())) < 1e-9


def test_verify_density_cli_roundtrip(tmp_path, twostate, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "kind": "verify-density",
        "name": "cli-two-state",
        "generator": {"states": [1, 2], "rates": [[1, 2, 1.0], [2, 1, 1.0]]},
        "start": 1, "endpoint": 2, "range": [1, 2],
        "T": 1.0, "samples": 50_000, "cells": 20, "seed": 9,
    }))
    out_dir = tmp_path / "results"
    status = main(["verify-density", "--config", str(cfg), "--out", str(out_dir)])
    assert status == 0
    summary = json.loads((out_dir / "summary.json").read_text())
    assert summary["all_passed"] is True
