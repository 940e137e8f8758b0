import json

import numpy as np
import pytest
from click.testing import CliRunner

from torcan.cli import main


@pytest.fixture()
def runner():
    return CliRunner()


def test_model_list_names(runner):
    res = runner.invoke(main, ["model", "list"])
    assert res.exit_code == 0
    assert res.output.split() == ["fvdp", "hr", "mlt", "ph", "radial_oracle", "wci"]


def test_model_list_json(runner):
    res = runner.invoke(main, ["model", "list", "--json"])
    info = json.loads(res.output)
    assert set(info) == {"fvdp", "hr", "mlt", "ph", "radial_oracle", "wci"}
    assert info["mlt"]["default_params"]["g_K"] == 2.0


def test_model_show_unknown_exits_64(runner):
    res = runner.invoke(main, ["model", "show", "bogus"])
    assert res.exit_code == 64
    assert "radial_oracle" in res.output      # enumerates the registry


def test_bad_param_flag_exits_64(runner, tmp_path):
    res = runner.invoke(main, ["simulate", "--model", "fvdp", "--t-end", "5",
                               "--param", "oops", "--out", str(tmp_path)])
    assert res.exit_code == 64


def test_simulate_writes_artifacts_and_is_reproducible(runner, tmp_path):
    args = ["simulate", "--model", "radial_oracle", "--eps", "0.01",
            "--t-end", "50", "--init", "1.3,0,-0.5,0",
            "--rel-tol", "1e-8", "--abs-tol", "1e-10",
            "--out", str(tmp_path / "a"), "--classify"]
    res = runner.invoke(main, args)
    assert res.exit_code == 0, res.output
    traj = (tmp_path / "a" / "traj.csv").read_text()
    assert traj.startswith("# config_hash: ")
    header = traj.splitlines()[1].split(",")
    assert header == ["t", "u", "v", "y1", "y2"]
    assert (tmp_path / "a" / "envelope.csv").exists()
    assert (tmp_path / "a" / "rhythm.json").exists()
    args2 = args[:-2] + [str(tmp_path / "b"), "--classify"]
    res2 = runner.invoke(main, args2)
    assert res2.exit_code == 0
    assert (tmp_path / "a" / "traj.csv").read_bytes() == \
        (tmp_path / "b" / "traj.csv").read_bytes()


def test_cycle_solve_and_fold(runner, tmp_path):
    res = runner.invoke(main, ["cycle", "solve", "--model", "fvdp",
                               "--y", "-0.5", "--out", str(tmp_path)])
    assert res.exit_code == 0, res.output
    payload = json.loads(res.output.strip().splitlines()[-1])
    assert abs(payload["T"] - 2 * np.pi) < 1e-8
    assert abs(payload["multiplier_trivial"] - 1.0) < 1e-6

    res = runner.invoke(main, ["cycle", "fold", "--model", "fvdp",
                               "--out", str(tmp_path)])
    assert res.exit_code == 0, res.output
    payload = json.loads(res.output.strip().splitlines()[-1])
    assert abs(payload["y"][0] + 2.0 / 3.0) < 1e-7


def test_explosion_command(runner, tmp_path):
    res = runner.invoke(main, ["explosion", "--model", "fvdp", "--eps", "0.01",
                               "--out", str(tmp_path)])
    assert res.exit_code == 0, res.output
    payload = json.loads(res.output.strip().splitlines()[-1])
    assert abs(payload["predicted_value"] - 0.99875) < 1e-6
    data = json.loads((tmp_path / "explosion.json").read_text())
    assert "config_hash" in data


def test_explosion_wrong_k_exits_2(runner, tmp_path):
    res = runner.invoke(main, ["explosion", "--model", "radial_oracle",
                               "--eps", "0.01", "--sweep-param", "sigma",
                               "--out", str(tmp_path)])
    assert res.exit_code == 2


def test_tfs_classify_oracle(runner, tmp_path):
    res = runner.invoke(main, ["tfs", "classify", "--model", "radial_oracle",
                               "--param", "sigma=-1.05", "--out", str(tmp_path)])
    assert res.exit_code == 0, res.output
    payload = json.loads(res.output.strip().splitlines()[-1])
    assert payload["kind"] == "folded-node"
    assert payload["s_max"] == 4
    assert abs(payload["y_star"][0] + 1.0) < 1e-6


def test_regime_map_small_grid(runner, tmp_path):
    res = runner.invoke(main, [
        "regime-map", "--model", "fvdp", "--eps", "0.01",
        "--grid-param1", "alpha=1.05:1.2:2", "--grid-param2", "omega=1:1.5:2",
        "--t-end", "800", "--init", "1.3,0,-0.5", "--threads", "2",
        "--out", str(tmp_path)])
    assert res.exit_code == 0, res.output
    lines = (tmp_path / "regime_map.csv").read_text().splitlines()
    assert len(lines) == 2 + 4
    assert "spiking" in lines[2]
