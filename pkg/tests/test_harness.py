"""Orchestration: config parsing, train/eval/compare commands, CLI exit codes."""

import json
import time

import numpy as np
import pytest

from tapscount import cli
from tapscount.dataset import load_dataset
from tapscount.errors import ConfigError
from tapscount.harness import (
    RunConfig,
    cmd_baseline,
    cmd_compare,
    cmd_eval,
    cmd_generate,
    cmd_train,
    config_from_dict,
    evaluation_report,
    load_config,
)
from tapscount.network import load_checkpoint


def toy_config(tmp_path, **overrides):
    raw = {
        "dataset": {
            "path": str(tmp_path / "toy.taps"),
            "classes": [1, 2, 3],
            "n_per_class": 34,
            "n_tx": 32,
            "cir_length": 16,
            "max_delay": 16.0,
        },
        "architecture": {"width": 24, "depth": 2, "dropout": 0.1},
        "optimizer": {"batch_size": 16},
        "epochs": 30,
        "seed": 11,
        "out_dir": str(tmp_path / "run"),
    }
    raw.update(overrides)
    return config_from_dict(raw)


class TestConfig:
    def test_defaults(self):
        config = config_from_dict({})
        assert config.width == 300
        assert config.lr == 1e-3
        assert config.batch_size == 128
        assert config.sched_factor == 0.8
        assert config.sched_patience == 18

    def test_round_trip_through_file(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"epochs": 7, "seed": 3, "dataset": {"classes": [1, 2]}}))
        config = load_config(path)
        assert config.epochs == 7
        assert config.seed == 3
        assert config.classes == (1, 2)

    def test_unknown_top_key(self):
        with pytest.raises(ConfigError):
            config_from_dict({"epoch": 7})

    def test_unknown_group_key(self):
        with pytest.raises(ConfigError):
            config_from_dict({"optimizer": {"learning_rate": 0.1}})

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.json")

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError):
            load_config(path)


class TestCmdTrain:
    def test_toy_run_curve_and_accuracy(self, tmp_path):
        config = toy_config(tmp_path)
        result = cmd_train(config)
        lines = result.curve_path.read_text().strip().splitlines()
        assert lines[0] == "epoch,train_loss,val_loss,train_acc,val_acc,lr"
        assert len(lines) == 1 + 30
        final = lines[-1].split(",")
        assert float(final[4]) > 1.0 / 3.0  # above chance on the validation part
        assert result.checkpoint_path.exists()

    def test_zero_epochs(self, tmp_path):
        config = toy_config(tmp_path, epochs=0)
        result = cmd_train(config)
        lines = result.curve_path.read_text().strip().splitlines()
        assert lines == ["epoch,train_loss,val_loss,train_acc,val_acc,lr"]
        net = load_checkpoint(result.checkpoint_path)
        assert net.n_classes == 3

    def test_two_runs_identical_artifacts(self, tmp_path):
        config_a = toy_config(tmp_path / "a", epochs=8)
        config_b = toy_config(tmp_path / "b", epochs=8)
        ra = cmd_train(config_a)
        rb = cmd_train(config_b)
        assert ra.curve_path.read_text() == rb.curve_path.read_text()
        assert ra.checkpoint_path.read_bytes() == rb.checkpoint_path.read_bytes()
        ds_a = (tmp_path / "a" / "toy.taps").read_bytes()
        ds_b = (tmp_path / "b" / "toy.taps").read_bytes()
        assert ds_a == ds_b

    def test_width_below_classes_rejected(self, tmp_path):
        config = toy_config(tmp_path, architecture={"width": 2})
        with pytest.raises(ConfigError):
            cmd_train(config)


class TestEvaluationReport:
    def test_perfect_classifier(self):
        true = np.array([0, 1, 0, 1])
        report = evaluation_report(true, true, {0: 1, 1: 2})
        assert report.accuracy == 1.0
        np.testing.assert_array_equal(report.confusion, np.eye(2))
        assert report.tolerance_accuracy[0] == 1.0

    def test_constant_classifier_balanced_classes(self):
        true = np.repeat(np.arange(4), 25)
        preds = np.zeros(100, dtype=int)
        report = evaluation_report(true, preds, {j: j + 1 for j in range(4)})
        assert report.accuracy == 0.25
        np.testing.assert_allclose(report.confusion[:, 0], 1.0)

    def test_tolerance_monotone_and_saturates(self):
        rng = np.random.default_rng(0)
        true = rng.integers(0, 5, 200)
        preds = rng.integers(0, 5, 200)
        class_map = {j: j + 1 for j in range(5)}
        report = evaluation_report(true, preds, class_map)
        values = [report.tolerance_accuracy[k] for k in sorted(report.tolerance_accuracy)]
        assert all(b >= a for a, b in zip(values, values[1:]))
        assert report.tolerance_accuracy[0] == report.accuracy
        assert report.tolerance_accuracy[max(class_map.values())] == 1.0

    def test_absent_class_row_is_zero(self):
        report = evaluation_report(np.array([0, 0]), np.array([0, 1]), {0: 1, 1: 2})
        np.testing.assert_array_equal(report.confusion[1], 0.0)


class TestCmdEval:
    def test_eval_writes_reports(self, tmp_path):
        config = toy_config(tmp_path)
        cmd_train(config)
        report = cmd_eval(config)
        assert 0.0 <= report.accuracy <= 1.0
        out = tmp_path / "run"
        assert (out / "test_confusion.csv").exists()
        assert (out / "test_tolerance.csv").exists()
        assert (out / "test_report.txt").exists()
        rows = report.confusion.sum(axis=1)
        assert np.all((np.isclose(rows, 1.0)) | (rows == 0.0))

    def test_eval_missing_checkpoint(self, tmp_path):
        config = toy_config(tmp_path)
        cmd_generate(config)
        with pytest.raises(FileNotFoundError):
            cmd_eval(config)


class TestCompare:
    def test_single_tap_dataset_all_methods_easy(self, tmp_path):
        config = toy_config(
            tmp_path,
            dataset={
                "path": str(tmp_path / "single.taps"),
                "classes": [1],
                "n_per_class": 40,
                "n_tx": 32,
                "cir_length": 16,
                "max_delay": 16.0,
            },
            epochs=3,
        )
        cmd_train(config)
        report = cmd_compare(config)
        for name in ("dnn", "swiss", "iht"):
            assert report.methods[name].accuracy >= 0.99, name
        assert (tmp_path / "run" / "compare.csv").exists()
        assert (tmp_path / "run" / "compare_test_indices.csv").exists()

    def test_compare_requires_checkpoint(self, tmp_path):
        config = toy_config(tmp_path)
        cmd_generate(config)
        with pytest.raises(FileNotFoundError):
            cmd_compare(config)

    def test_baselines_standalone(self, tmp_path):
        config = toy_config(tmp_path, epochs=1)
        cmd_generate(config)
        swiss = cmd_baseline(config, "swiss")
        iht = cmd_baseline(config, "iht")
        assert swiss.n_samples == iht.n_samples
        assert 0.0 <= swiss.accuracy <= 1.0
        assert 0.0 <= iht.accuracy <= 1.0

    def test_inference_cost_independent_of_class(self, tmp_path):
        # constant matrix multiplications: per-class timing spread stays small
        config = toy_config(tmp_path, epochs=2)
        cmd_train(config)
        net = load_checkpoint(tmp_path / "run" / "checkpoint.tapn")
        ds = load_dataset(config.dataset_path)
        per_class = []
        for j in range(ds.n_classes):
            rows = ds.features[ds.labels == j][:30].astype(np.float64)
            best = np.inf
            for _ in range(7):
                started = time.perf_counter()
                net.forward(rows, train=False)
                best = min(best, time.perf_counter() - started)
            per_class.append(best)
        spread = (max(per_class) - min(per_class)) / np.mean(per_class)
        assert spread <= 0.2


class TestCli:
    def write_config(self, tmp_path, **overrides):
        raw = {
            "dataset": {
                "path": str(tmp_path / "toy.taps"),
                "classes": [1, 2, 3],
                "n_per_class": 12,
                "n_tx": 32,
                "cir_length": 16,
                "max_delay": 16.0,
            },
            "architecture": {"width": 16, "depth": 1},
            "optimizer": {"batch_size": 8},
            "epochs": 3,
            "seed": 5,
            "out_dir": str(tmp_path / "run"),
        }
        raw.update(overrides)
        path = tmp_path / "config.json"
        path.write_text(json.dumps(raw))
        return path

    def test_generate_train_eval_compare(self, tmp_path, capsys):
        config = self.write_config(tmp_path)
        assert cli.main(["generate", "--config", str(config)]) == cli.EXIT_OK
        assert (tmp_path / "toy.taps").exists()
        assert cli.main(["train", "--config", str(config)]) == cli.EXIT_OK
        assert cli.main(["eval", "--config", str(config)]) == cli.EXIT_OK
        assert cli.main(["swiss", "--config", str(config)]) == cli.EXIT_OK
        assert cli.main(["iht", "--config", str(config)]) == cli.EXIT_OK
        assert cli.main(["compare", "--config", str(config)]) == cli.EXIT_OK
        out = capsys.readouterr().out
        assert "dnn" in out and "swiss" in out and "iht" in out

    def test_bad_config_exit_code(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{broken")
        assert cli.main(["train", "--config", str(path)]) == cli.EXIT_CONFIG

    def test_unknown_key_exit_code(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"optimiser": {}}))
        assert cli.main(["train", "--config", str(path)]) == cli.EXIT_CONFIG

    def test_missing_dataset_exit_code(self, tmp_path):
        config = self.write_config(tmp_path)
        assert cli.main(["eval", "--config", str(config)]) == cli.EXIT_MISSING

    def test_seed_override_changes_dataset(self, tmp_path):
        config = self.write_config(tmp_path)
        assert cli.main(["generate", "--config", str(config)]) == cli.EXIT_OK
        first = (tmp_path / "toy.taps").read_bytes()
        (tmp_path / "toy.taps").unlink()
        assert cli.main(["generate", "--config", str(config), "--seed", "99"]) == cli.EXIT_OK
        assert (tmp_path / "toy.taps").read_bytes() != first
