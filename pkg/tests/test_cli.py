import json
import os

import numpy as np
import pytest
from click.testing import CliRunner

from symmlift.cli import main
from symmlift.dataset import load_dataset

CONFIGS = os.path.join(os.path.dirname(__file__), "..", "configs")
ROBOT = os.path.join(CONFIGS, "robot_dual_arm.json")
MORPH = os.path.join(CONFIGS, "symmetry_morphological.json")
SO2_SPEC = os.path.join(CONFIGS, "symmetry_so2.json")
SCALING_SPEC = os.path.join(CONFIGS, "symmetry_scaling.json")


@pytest.fixture
def runner():
    # click >= 8.2 separates stderr by default
    return CliRunner()


@pytest.fixture
def tiny_config(tmp_path):
    """A fast configuration: short demonstrations, few features."""
    path = tmp_path / "tiny.toml"
    path.write_text(
        f"""
seed = 42
out = "{(tmp_path / 'out').as_posix()}"

[robot]
file = "{os.path.abspath(ROBOT)}"

[letters]
scale = 0.4
samples = 40
duration = 1.5
demos = 2

[augment]
grid = "fig5_90deg"
flow_step = 0.01

[policy]
features = 300
ridge = 1e-6

[rollout]
step = 0.01
"""
    )
    return str(path)


class TestVerify:
    def test_missing_robot_is_usage_error(self, runner):
        result = runner.invoke(main, ["verify"])
        assert result.exit_code == 2

    def test_default_robot_passes(self, runner, tmp_path):
        result = runner.invoke(
            main, ["verify", "--robot", ROBOT, "--out", str(tmp_path)]
        )
        assert result.exit_code == 0, result.output
        report = json.loads((tmp_path / "verify_report.json").read_text())
        assert report["descend"]["passed"]
        assert report["composition_structure"]["rotation_vs_scaling"] == "direct"
        assert report["composition_structure"]["morphological_vs_rotation"] == "semidirect"

    def test_broken_reflection_fails_descend(self, runner, tmp_path):
        result = runner.invoke(
            main,
            ["verify", "--robot", ROBOT, "--out", str(tmp_path), "--break-reflection"],
        )
        assert result.exit_code == 1
        assert "descend" in result.stderr


class TestTransferCommands:
    def test_descend_report(self, runner, tmp_path):
        result = runner.invoke(
            main,
            ["descend", "--robot", ROBOT, "--symmetry", MORPH, "--out", str(tmp_path)],
        )
        assert result.exit_code == 0, result.output
        report = json.loads((tmp_path / "descend_report.json").read_text())
        assert report["passed"] and report["samples"] == 100

    def test_lift_writes_flow_csv(self, runner, tmp_path):
        result = runner.invoke(
            main,
            [
                "lift", "--robot", ROBOT, "--symmetry", SO2_SPEC,
                "--t-max", "0.5", "--step", "0.001", "--out", str(tmp_path),
            ],
        )
        assert result.exit_code == 0, result.output
        report = json.loads((tmp_path / "lift_report.json").read_text())
        assert report["passed"]
        csv_head = (tmp_path / "lifted_flow.csv").read_text().splitlines()[0]
        assert csv_head.startswith("t,q_0") and csv_head.endswith("theta,lambda,sigma")

    def test_lift_rejects_morphological(self, runner, tmp_path):
        result = runner.invoke(
            main,
            ["lift", "--robot", ROBOT, "--symmetry", MORPH, "--out", str(tmp_path)],
        )
        assert result.exit_code == 2


class TestComposeCommand:
    def test_direct_rotation_scaling(self, runner, tmp_path):
        result = runner.invoke(
            main,
            [
                "compose", "--symmetry", SO2_SPEC, "--symmetry", SCALING_SPEC,
                "--kind", "direct", "--out", str(tmp_path),
            ],
        )
        assert result.exit_code == 0, result.output
        report = json.loads((tmp_path / "compose_report.json").read_text())
        assert report["passed"] and report["group_law_error"] <= 1e-10

    def test_direct_morph_rotation_fails(self, runner, tmp_path):
        result = runner.invoke(
            main,
            [
                "compose", "--symmetry", MORPH, "--symmetry", SO2_SPEC,
                "--robot", ROBOT, "--kind", "direct", "--out", str(tmp_path),
            ],
        )
        assert result.exit_code == 1
        report = json.loads((tmp_path / "compose_report.json").read_text())
        assert "do not commute" in report["error"]

    def test_semidirect_morph_rotation(self, runner, tmp_path):
        result = runner.invoke(
            main,
            [
                "compose", "--symmetry", MORPH, "--symmetry", SO2_SPEC,
                "--robot", ROBOT, "--kind", "semidirect", "--out", str(tmp_path),
            ],
        )
        assert result.exit_code == 0, result.output


class TestPipelineCommands:
    def test_augment_writes_dataset(self, runner, tiny_config, tmp_path):
        grid_file = tmp_path / "grid.json"
        grid_file.write_text(
            json.dumps({"thetas_deg": [0, 90], "lambdas": [1.0, 0.8], "sigmas": [1]})
        )
        result = runner.invoke(
            main, ["augment", "--config", tiny_config, "--grid", str(grid_file)]
        )
        assert result.exit_code == 0, result.output
        out_dir = tmp_path / "out" / "dataset_augmented"
        ds = load_dataset(out_dir)
        assert len(ds) == 2 * 4
        manifest = json.loads((out_dir / "manifest.json").read_text())
        assert manifest["demos"][0]["provenance"] == "original"

    def test_train_then_eval(self, runner, tiny_config, tmp_path):
        result = runner.invoke(main, ["train", "--config", tiny_config])
        assert result.exit_code == 0, result.output
        model_path = tmp_path / "out" / "policy.npz"
        assert model_path.exists()
        report = json.loads((tmp_path / "out" / "train_report.json").read_text())
        assert report["train_rmse"] < 1.0
        grid_file = tmp_path / "testgrid.json"
        grid_file.write_text(json.dumps({"thetas_deg": [0], "lambdas": [1.0], "sigmas": [1]}))
        result = runner.invoke(
            main,
            [
                "eval", "--config", tiny_config, "--model", str(model_path),
                "--test-grid", str(grid_file),
            ],
        )
        assert result.exit_code == 0, result.output
        assert (tmp_path / "out" / "eval.csv").exists()

    def test_train_from_dataset_dir(self, runner, tiny_config, tmp_path):
        result = runner.invoke(
            main, ["augment", "--config", tiny_config, "--grid", "fig5_90deg"]
        )
        assert result.exit_code == 0, result.output
        result = runner.invoke(
            main,
            [
                "train", "--config", tiny_config,
                "--in", str(tmp_path / "out" / "dataset_augmented"),
            ],
        )
        assert result.exit_code == 0, result.output


class TestExperimentCommands:
    def test_reproduce_table1_tiny(self, runner, tiny_config, tmp_path):
        result = runner.invoke(main, ["reproduce-table1", "--config", tiny_config])
        assert result.exit_code == 0, result.output
        out = tmp_path / "out"
        table = (out / "table1.csv").read_text()
        assert table.splitlines()[0].startswith("policy,original_mean")
        assert len(table.splitlines()) == 5
        assert (out / "table1_trajectories.svg").exists()
        for name in ("pi", "pi_r", "pi_rt", "pi_mrt"):
            assert (out / f"policy_{name}.npz").exists()

    def test_density_sweep_tiny(self, runner, tiny_config, tmp_path, monkeypatch):
        import symmlift.experiment as E

        monkeypatch.setattr(E, "DENSITY_EVAL_THETAS_DEG", (0.0, 90.0))
        result = runner.invoke(main, ["density-sweep", "--config", tiny_config])
        assert result.exit_code == 0, result.output
        csv = (tmp_path / "out" / "density_sweep.csv").read_text()
        assert csv.splitlines()[0].startswith("interval_deg,")
        assert (tmp_path / "out" / "density_sweep.svg").exists()
