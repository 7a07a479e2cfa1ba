#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Tests for the command-line interface and its artifacts.
"""

import json

import numpy as np
import pandas as pd
import pytest

from mgmd_gan import cli
from mgmd_gan.analysis import collect_scores, gap_metrics
from mgmd_gan.cli import EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC, load_data, main, matrix_cells, resolve_run_config
from mgmd_gan.training import load_checkpoint

SMALL_RUN = {
    "method": "mgmd",
    "k": 2,
    "epochs": 2,
    "batch_size": 16,
    "seed": 0,
    "generator_spec": {"widths": [4, 16, 2]},
    "discriminator_spec": {"widths": [2, 16, 1]},
    "dataset": {"source": "toy", "n": 96},
    "eval_size": 20,
}


def write_json(path, document):
    path.write_text(json.dumps(document))
    return str(path)


@pytest.fixture
def trained_run(tmp_path):
    out = tmp_path / "run"
    assert main(["train", "--config", write_json(tmp_path / "run.json", SMALL_RUN), "--out", str(out)]) == 0
    return out


class TestRunConfig:
    def test_that_defaults_are_filled_in(self):
        run = resolve_run_config({"dataset": {"n": 64}})
        assert run.dataset["source"] == "toy"
        assert run.resolved["train"]["epochs"] == 1500
        assert run.eval_size is None

    def test_that_the_output_directory_does_not_enter_the_hash(self):
        assert resolve_run_config({**SMALL_RUN, "out": "a"}).hash == resolve_run_config({**SMALL_RUN, "out": "b"}).hash

    def test_that_any_result_affecting_change_changes_the_hash(self):
        base = resolve_run_config(SMALL_RUN).hash
        assert resolve_run_config({**SMALL_RUN, "seed": 1}).hash != base
        assert resolve_run_config({**SMALL_RUN, "dataset": {"source": "toy", "n": 97}}).hash != base

    def test_that_the_default_toy_size_is_used(self):
        train_data, holdout_data = load_data(resolve_run_config({}).dataset)
        assert len(train_data) + len(holdout_data) == 512

    def test_that_classic_cells_run_with_a_single_pair(self):
        matrix = {"methods": ["mgmd", "classic"], "k": [2, 5], "objectives": ["js"]}
        assert matrix_cells(matrix) == [("mgmd", 2, "js"), ("mgmd", 5, "js"), ("classic", 1, "js")]


class TestTrain:
    def test_that_training_writes_all_artifacts(self, trained_run):
        for name in ("model.ckpt", "history.csv", "manifest.json"):
            assert (trained_run / name).exists()

        manifest = json.loads((trained_run / "manifest.json").read_text())
        assert manifest["config_hash"] == resolve_run_config(SMALL_RUN).hash
        assert manifest["seed"] == 0
        assert manifest["wall_time_seconds"] >= 0

        history = pd.read_csv(trained_run / "history.csv", comment="#")
        assert set(history["epoch"]) == {0, 1}

        model = load_checkpoint(trained_run / "model.ckpt")
        assert model.k == 2
        assert model.metadata["config_hash"] == manifest["config_hash"]

    def test_that_reruns_give_byte_identical_checkpoints(self, tmp_path):
        config = write_json(tmp_path / "run.json", SMALL_RUN)
        assert main(["train", "--config", config, "--out", str(tmp_path / "a")]) == 0
        assert main(["train", "--config", config, "--out", str(tmp_path / "b")]) == 0
        assert (tmp_path / "a" / "model.ckpt").read_bytes() == (tmp_path / "b" / "model.ckpt").read_bytes()
        assert (tmp_path / "a" / "history.csv").read_bytes() == (tmp_path / "b" / "history.csv").read_bytes()

    def test_that_the_checkpoint_path_is_printed(self, tmp_path, capsys):
        out = tmp_path / "printed"
        main(["train", "--config", write_json(tmp_path / "run.json", SMALL_RUN), "--out", str(out)])
        assert str(out / "model.ckpt") in capsys.readouterr().out

    @pytest.mark.parametrize(
        "document",
        [
            {**SMALL_RUN, "k": 0},
            {**SMALL_RUN, "learning_rate_schedule": "cosine"},
            {**SMALL_RUN, "method": "classic", "k": 2},
            {**SMALL_RUN, "dataset": {"source": "cifar"}},
        ],
    )
    def test_that_invalid_configs_exit_with_code_1(self, tmp_path, capsys, document):
        code = main(["train", "--config", write_json(tmp_path / "bad.json", document), "--out", str(tmp_path / "out")])
        assert code == EXIT_CONFIG
        assert "invalid configuration" in capsys.readouterr().err
        assert not (tmp_path / "out" / "model.ckpt").exists()

    def test_that_malformed_json_exits_with_code_1(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{"method": "mgmd",')
        assert main(["train", "--config", str(path)]) == EXIT_CONFIG

    def test_that_diverging_training_exits_with_code_3(self, tmp_path, capsys):
        document = {**SMALL_RUN, "optimizer": "sgd", "learning_rate": 1e200}
        with np.errstate(all="ignore"):
            code = main(["train", "--config", write_json(tmp_path / "run.json", document), "--out", str(tmp_path / "o")])
        assert code == EXIT_NUMERIC
        assert "Epoch 0" in capsys.readouterr().err


class TestAttack:
    def test_that_both_targets_are_attacked_by_default(self, trained_run):
        assert main(["attack", "--checkpoint", str(trained_run / "model.ckpt"), "--seed", "0"]) == 0

        for target in ("discriminators", "generators"):
            result = json.loads((trained_run / f"attack-{target}.json").read_text())
            assert result["target"] == target
            assert 0.5 <= result["accuracy"] <= 1.0
            assert result["seed"] == 0
            assert result["config_hash"] == resolve_run_config(SMALL_RUN).hash

    def test_that_a_single_target_can_be_selected(self, trained_run, tmp_path):
        out = tmp_path / "attack"
        out.mkdir()
        args = ["attack", "--checkpoint", str(trained_run / "model.ckpt"), "--seed", "1", "--target", "generators"]
        assert main(args + ["--out", str(out)]) == 0
        assert [path.name for path in out.iterdir()] == ["attack-generators.json"]

    def test_that_attacks_with_the_same_seed_are_identical(self, trained_run, tmp_path):
        checkpoint = str(trained_run / "model.ckpt")
        (tmp_path / "a").mkdir()
        (tmp_path / "b").mkdir()
        for name in ("a", "b"):
            assert main(["attack", "--checkpoint", checkpoint, "--seed", "3", "--out", str(tmp_path / name)]) == 0
        for target in ("discriminators", "generators"):
            first = (tmp_path / "a" / f"attack-{target}.json").read_bytes()
            assert first == (tmp_path / "b" / f"attack-{target}.json").read_bytes()

    def test_that_aggregation_and_per_partition_are_recorded(self, trained_run):
        args = ["attack", "--checkpoint", str(trained_run / "model.ckpt"), "--seed", "0", "--target", "discriminators"]
        assert main(args + ["--aggregation", "mean", "--per-partition"]) == 0
        result = json.loads((trained_run / "attack-discriminators.json").read_text())
        assert (result["aggregation"], result["per_partition"]) == ("mean", True)

    def test_that_a_missing_checkpoint_exits_with_code_2(self, tmp_path):
        assert main(["attack", "--checkpoint", str(tmp_path / "nothing.ckpt"), "--seed", "0"]) == EXIT_DATA

    def test_that_a_corrupt_checkpoint_exits_with_code_2(self, trained_run, capsys):
        path = trained_run / "model.ckpt"
        path.write_bytes(path.read_bytes()[:-10])
        assert main(["attack", "--checkpoint", str(path), "--seed", "0"]) == EXIT_DATA
        assert "digest" in capsys.readouterr().err


class TestReport:
    def test_that_the_report_matches_the_library(self, trained_run):
        assert main(["report", "--checkpoint", str(trained_run / "model.ckpt")]) == 0

        scores = pd.read_csv(trained_run / "scores.csv", comment="#")
        assert set(scores["discriminator_index"]) == {0, 1}
        train_data, holdout_data = load_data(resolve_run_config(SMALL_RUN).dataset)
        assert (scores["side"] == "train").sum() == len(train_data)
        assert (scores["side"] == "holdout").sum() == len(holdout_data)

        gap = json.loads((trained_run / "gap.json").read_text())
        model = load_checkpoint(trained_run / "model.ckpt")
        expected = gap_metrics(collect_scores(model, train_data, holdout_data))
        assert (gap["mean_gap"], gap["w1"]) == pytest.approx(expected)
        assert gap["k"] == 2

    def test_that_all_holdout_samples_can_be_scored_by_every_discriminator(self, trained_run):
        assert main(["report", "--checkpoint", str(trained_run / "model.ckpt"), "--holdout", "all"]) == 0
        scores = pd.read_csv(trained_run / "scores.csv", comment="#")
        assert (scores["side"] == "holdout").sum() == 2 * 48


class TestCompare:
    @pytest.fixture
    def matrix(self, tmp_path):
        document = {
            "base": {key: value for key, value in SMALL_RUN.items() if key not in ("method", "k", "seed")},
            "methods": ["mgmd", "pargan"],
            "k": [2, 3],
            "objectives": ["js"],
            "seeds": [0],
        }
        return write_json(tmp_path / "matrix.json", document)

    def test_that_every_cell_gets_a_row(self, matrix, tmp_path):
        assert main(["compare", "--matrix", matrix, "--out", str(tmp_path / "out")]) == 0

        summary = pd.read_csv(tmp_path / "out" / "summary.csv")
        assert len(summary) == 4
        assert list(summary[["method", "k"]].itertuples(index=False, name=None)) == [
            ("mgmd", 2),
            ("mgmd", 3),
            ("pargan", 2),
            ("pargan", 3),
        ]
        assert summary["error"].isna().all()
        assert summary["mia_d"].between(0.5, 1.0).all()
        assert (summary["seeds_averaged"] == 1).all()

    def test_that_cached_cells_are_not_retrained(self, matrix, tmp_path, monkeypatch):
        assert main(["compare", "--matrix", matrix, "--out", str(tmp_path / "out")]) == 0
        first = (tmp_path / "out" / "summary.csv").read_text()

        def refuse(*args, **kwargs):
            raise AssertionError("a cached cell was retrained")

        monkeypatch.setattr(cli, "_train_run", refuse)
        assert main(["compare", "--matrix", matrix, "--out", str(tmp_path / "out")]) == 0
        assert (tmp_path / "out" / "summary.csv").read_text() == first

    def test_that_failing_cells_are_reported_in_their_row(self, tmp_path):
        base = {key: value for key, value in SMALL_RUN.items() if key not in ("method", "k", "seed")}
        matrix = write_json(tmp_path / "matrix.json", {"base": base, "methods": ["pargan", "mgmd"], "k": [1]})
        assert main(["compare", "--matrix", matrix, "--out", str(tmp_path / "out")]) == 0

        summary = pd.read_csv(tmp_path / "out" / "summary.csv")
        pargan, mgmd = summary.iloc[0], summary.iloc[1]
        assert "InvalidParameterError" in pargan["error"]
        assert pargan["seeds_averaged"] == 0
        assert np.isnan(pargan["mia_d"])
        assert mgmd["seeds_averaged"] == 1

    def test_that_a_matrix_base_may_not_fix_the_swept_keys(self, tmp_path):
        matrix = write_json(tmp_path / "matrix.json", {"base": {"k": 4}})
        assert main(["compare", "--matrix", matrix, "--out", str(tmp_path / "out")]) == EXIT_CONFIG


if __name__ == "__main__":
    pytest.main(args=[__file__, "-v", "--capture=sys", "--doctest-modules", "--maxfail=1"])
