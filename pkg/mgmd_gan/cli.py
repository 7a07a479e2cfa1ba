#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Command-line interface.

    mgmd-gan train   --config run.json [--out DIR]
    mgmd-gan attack  --checkpoint DIR/model.ckpt --seed 0 [--target discriminators|generators]
                     [--aggregation max|mean] [--per-partition] [--out DIR]
    mgmd-gan report  --checkpoint DIR/model.ckpt [--out DIR]
    mgmd-gan compare --matrix matrix.json --out DIR [--n-jobs N]

Everything that affects results lives in the JSON run config, flags only select
outputs. A run config holds the TrainConfig parameters plus a ``dataset``
object, an optional ``eval_size`` and an optional ``out`` directory:

    {"method": "mgmd", "k": 2, "epochs": 200, "objective": "js", "seed": 0,
     "dataset": {"source": "toy", "n": 512}}

Exit codes: 0 success, 1 invalid configuration, 2 unreadable data or
checkpoint, 3 numeric failure during training.
"""

import argparse
import json
import logging
import os
import sys
import time
from numbers import Integral, Real

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from sklearn.utils import Bunch
from sklearn.utils._param_validation import (
    Interval,
    InvalidParameterError,
    StrOptions,
    validate_parameter_constraints,
)
from tabulate import tabulate

from mgmd_gan.analysis import collect_scores, gap_metrics, write_report
from mgmd_gan.attacks import TARGETS, AttackConfig, make_eval_set, run_mia
from mgmd_gan.datasets import DATASET_DIRECTORY, SplitSpec, load_mnist, split, synth_gaussian_ring
from mgmd_gan.exceptions import CheckpointError, ConfigError, ContractError, FormatError, NumericError
from mgmd_gan.training import TrainConfig, load_checkpoint, save_checkpoint, train
from mgmd_gan.utils import atomic_write, config_hash, set_logger

log = logging.getLogger(__name__)

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3

TRAIN_KEYS = set(TrainConfig._get_param_names())
RUN_KEYS = {"dataset", "eval_size", "out"}

DATASET_DEFAULTS = {
    "source": "toy",
    "n": None,
    "modes": 8,
    "radius": 2.0,
    "sigma": 0.1,
    "num_features": 2,
    "seed": 0,
    "directory": None,
    "kind": "train",
    "train_size": 0.5,
    "holdout_size": None,
    "split_seed": 0,
}
DATASET_CONSTRAINTS = {
    "source": [StrOptions({"toy", "mnist"})],
    "n": [Interval(Integral, 2, None, closed="left"), None],
    "modes": [Interval(Integral, 1, None, closed="left")],
    "radius": [Interval(Real, 0, None, closed="neither")],
    "sigma": [Interval(Real, 0, None, closed="neither")],
    "num_features": [Interval(Integral, 2, None, closed="left")],
    "seed": [Interval(Integral, 0, None, closed="left")],
    "directory": [str, None],
    "kind": [StrOptions({"train", "test"})],
    "train_size": SplitSpec._parameter_constraints["train_size"],
    "holdout_size": SplitSpec._parameter_constraints["holdout_size"],
    "split_seed": [Interval(Integral, 0, None, closed="left")],
}
TOY_NUM_SAMPLES = 512

MATRIX_DEFAULTS = {
    "base": {},
    "methods": ["mgmd", "classic"],
    "k": [2],
    "objectives": ["js"],
    "seeds": [0],
    "attack_seed": 0,
}
SUMMARY_COLUMNS = ["method", "k", "objective", "mia_d", "mia_g", "mean_gap", "w1", "seeds_averaged", "error"]


# =============================================================================
# RUN CONFIGS AND DATA
# =============================================================================


def resolve_run_config(document):
    """Validate a run config document and fill in every default.

    Returns
    -------
    Bunch
        ``train_config``, ``dataset``, ``eval_size``, ``out``, the fully
        defaulted ``resolved`` dict and its SHA-256 ``hash``. The output
        directory does not enter the hash.

    Examples
    --------
    >>> run = resolve_run_config({"method": "classic", "k": 1, "dataset": {"n": 64}})
    >>> run.train_config
    TrainConfig(k=1, method='classic')
    >>> run.dataset["n"], len(run.hash)
    (64, 64)
    """
    if not isinstance(document, dict):
        raise ConfigError("A run config must be a JSON object")
    unknown = set(document) - TRAIN_KEYS - RUN_KEYS
    if unknown:
        raise ConfigError(f"Unknown config keys: {sorted(unknown)}")

    dataset = document.get("dataset", {})
    if not isinstance(dataset, dict):
        raise ConfigError("'dataset' must be a JSON object")
    unknown = set(dataset) - set(DATASET_DEFAULTS)
    if unknown:
        raise ConfigError(f"Unknown dataset keys: {sorted(unknown)}")
    dataset = {**DATASET_DEFAULTS, **dataset}
    validate_parameter_constraints(DATASET_CONSTRAINTS, dataset, caller_name="dataset")
    if dataset["source"] == "toy" and dataset["n"] is None:
        dataset["n"] = TOY_NUM_SAMPLES

    run_params = {"eval_size": document.get("eval_size"), "out": document.get("out")}
    validate_parameter_constraints(
        {"eval_size": [Interval(Integral, 1, None, closed="left"), None], "out": [str, None]},
        run_params,
        caller_name="run config",
    )

    try:
        train_config = TrainConfig.from_dict({key: value for key, value in document.items() if key in TRAIN_KEYS})
    except (TypeError, KeyError) as exc:
        raise ConfigError(f"Malformed training parameters: {exc}") from exc
    train_config._validate_params()

    resolved = {"train": train_config.to_dict(), "dataset": dataset, "eval_size": run_params["eval_size"]}
    return Bunch(
        train_config=train_config,
        dataset=dataset,
        eval_size=run_params["eval_size"],
        out=run_params["out"],
        resolved=resolved,
        hash=config_hash(resolved),
    )


def read_run_config(path):
    with open(path, "r", encoding="utf-8") as file:
        return resolve_run_config(json.load(file))


def load_data(dataset):
    """Build the (train, holdout) datasets a resolved dataset config describes."""
    if dataset["source"] == "toy":
        data = synth_gaussian_ring(
            dataset["n"],
            modes=dataset["modes"],
            radius=dataset["radius"],
            sigma=dataset["sigma"],
            num_features=dataset["num_features"],
            seed=dataset["seed"],
        )
    else:
        data = load_mnist(dataset["directory"] or DATASET_DIRECTORY, kind=dataset["kind"])
        if dataset["n"] is not None:
            data = data.subset(np.arange(min(dataset["n"], len(data))))

    spec = SplitSpec(dataset["train_size"], holdout_size=dataset["holdout_size"], seed=dataset["split_seed"])
    return split(data, spec)


def _run_from_model(model):
    if "run_config" not in model.metadata:
        raise CheckpointError("The checkpoint carries no run config. Train it with `mgmd-gan train`.")
    resolved = model.metadata["run_config"]
    return Bunch(dataset=resolved["dataset"], eval_size=resolved["eval_size"], hash=model.metadata["config_hash"])


def _with_header(run_hash, seed, body):
    return f"# config_hash: {run_hash}\n# seed: {seed}\n" + body


def write_run(model, out, run, wall_time):
    """Write model.ckpt, history.csv and, last, manifest.json into `out`."""
    os.makedirs(out, exist_ok=True)
    save_checkpoint(model, os.path.join(out, "model.ckpt"))

    seed = run.train_config.seed
    history = model.history_frame().to_csv(index=False)
    atomic_write(os.path.join(out, "history.csv"), _with_header(run.hash, seed, history))

    # Wall time is the one field that differs between otherwise identical runs
    manifest = {
        "config": run.resolved,
        "config_hash": run.hash,
        "seed": seed,
        "method": model.label,
        "numerics": model.metadata.get("numerics"),
        "wall_time_seconds": wall_time,
    }
    atomic_write(os.path.join(out, "manifest.json"), json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _train_run(run, out, verbose=0):
    train_data, _ = load_data(run.dataset)
    metadata = {"run_config": run.resolved, "config_hash": run.hash}
    start = time.perf_counter()
    model = train(train_data, run.train_config, metadata=metadata, checkpoint_dir=out, verbose=verbose)
    write_run(model, out, run, time.perf_counter() - start)
    return model


# =============================================================================
# SUBCOMMANDS
# =============================================================================


def cmd_train(args):
    run = read_run_config(args.config)
    out = args.out or run.out or os.path.join("runs", run.hash[:16])
    log.info(f"Training run {run.hash[:16]} into {out}")
    _train_run(run, out, verbose=args.verbose)
    print(os.path.join(out, "model.ckpt"))


def cmd_attack(args):
    model = load_checkpoint(args.checkpoint)
    run = _run_from_model(model)
    train_data, holdout_data = load_data(run.dataset)
    eval_set = make_eval_set(train_data, holdout_data, size=run.eval_size, seed=args.seed)
    config = AttackConfig(aggregation=args.aggregation, seed=args.seed, per_partition=args.per_partition)

    out = args.out or os.path.dirname(os.path.abspath(args.checkpoint))
    rows = []
    for target in [args.target] if args.target else TARGETS:
        result = run_mia(model, eval_set, target, config).to_dict()
        result["config_hash"] = run.hash
        atomic_write(os.path.join(out, f"attack-{target}.json"), json.dumps(result, indent=2, sort_keys=True) + "\n")
        rows.append([target, result["aggregation"], result["accuracy"]])
    print(tabulate(rows, headers=["target", "aggregation", "accuracy"], floatfmt=".4f"))


def cmd_report(args):
    model = load_checkpoint(args.checkpoint)
    run = _run_from_model(model)
    train_data, holdout_data = load_data(run.dataset)
    report = collect_scores(model, train_data, holdout_data, holdout=args.holdout)

    out = args.out or os.path.dirname(os.path.abspath(args.checkpoint))
    gap = write_report(report, out, config_hash=run.hash)
    print(tabulate([[gap["mean_gap"], gap["w1"]]], headers=["mean_gap", "w1"], floatfmt=".4f"))


def read_matrix(path):
    with open(path, "r", encoding="utf-8") as file:
        document = json.load(file)
    if not isinstance(document, dict):
        raise ConfigError("A comparison matrix must be a JSON object")
    unknown = set(document) - set(MATRIX_DEFAULTS)
    if unknown:
        raise ConfigError(f"Unknown matrix keys: {sorted(unknown)}")
    matrix = {**MATRIX_DEFAULTS, **document}
    validate_parameter_constraints(
        {
            "base": [dict],
            "methods": [list],
            "k": [list],
            "objectives": [list],
            "seeds": [list],
            "attack_seed": [Interval(Integral, 0, None, closed="left")],
        },
        matrix,
        caller_name="matrix",
    )
    if set(matrix["base"]) & {"method", "k", "objective", "seed"}:
        raise ConfigError("The matrix base must not set method, k, objective or seed")
    return matrix


def matrix_cells(matrix):
    """(method, k, objective) cells in matrix order. Classic always runs with k = 1."""
    cells = []
    for method in matrix["methods"]:
        for k in matrix["k"]:
            for objective in matrix["objectives"]:
                cell = (method, 1 if method == "classic" else k, objective)
                if cell not in cells:
                    cells.append(cell)
    return cells


def run_cell(document, cells_directory, attack_seed):
    """Train (or reuse) one run and attack it. Failures are returned, not raised."""
    try:
        run = resolve_run_config(document)
        out = os.path.join(cells_directory, run.hash[:16])
        manifest_path = os.path.join(out, "manifest.json")

        model = None
        if os.path.exists(manifest_path):
            with open(manifest_path, "r", encoding="utf-8") as file:
                if json.load(file).get("config_hash") == run.hash:
                    model = load_checkpoint(os.path.join(out, "model.ckpt"))
                    log.info(f"Reusing cached cell {run.hash[:16]}")
        if model is None:
            model = _train_run(run, out)

        train_data, holdout_data = load_data(run.dataset)
        eval_set = make_eval_set(train_data, holdout_data, size=run.eval_size, seed=attack_seed)
        attack_config = AttackConfig(seed=attack_seed)
        mean_gap, w1 = gap_metrics(collect_scores(model, train_data, holdout_data))
        return {
            "mia_d": run_mia(model, eval_set, "discriminators", attack_config).accuracy,
            "mia_g": run_mia(model, eval_set, "generators", attack_config).accuracy,
            "mean_gap": mean_gap,
            "w1": w1,
            "error": "",
        }
    except (
        ConfigError,
        InvalidParameterError,
        ContractError,
        FormatError,
        CheckpointError,
        NumericError,
        OSError,
    ) as exc:
        log.warning(f"Cell failed: {type(exc).__name__}: {exc}")
        return {"mia_d": np.nan, "mia_g": np.nan, "mean_gap": np.nan, "w1": np.nan, "error": f"{type(exc).__name__}: {exc}"}


def compare(matrix, out, n_jobs=None):
    """Run every cell of a comparison matrix and return the summary DataFrame."""
    cells = matrix_cells(matrix)
    jobs = [
        {**matrix["base"], "method": method, "k": k, "objective": objective, "seed": seed}
        for (method, k, objective) in cells
        for seed in matrix["seeds"]
    ]
    cells_directory = os.path.join(out, "cells")

    if n_jobs in (None, 1):
        results = [run_cell(job, cells_directory, matrix["attack_seed"]) for job in jobs]
    else:
        results = Parallel(n_jobs=n_jobs)(delayed(run_cell)(job, cells_directory, matrix["attack_seed"]) for job in jobs)

    rows = []
    num_seeds = len(matrix["seeds"])
    for index, (method, k, objective) in enumerate(cells):
        outcomes = results[index * num_seeds : (index + 1) * num_seeds]
        succeeded = [outcome for outcome in outcomes if not outcome["error"]]
        errors = sorted({outcome["error"] for outcome in outcomes if outcome["error"]})
        row = {"method": method, "k": k, "objective": objective}
        for column in ("mia_d", "mia_g", "mean_gap", "w1"):
            row[column] = float(np.mean([outcome[column] for outcome in succeeded])) if succeeded else np.nan
        row["seeds_averaged"] = len(succeeded)
        row["error"] = "; ".join(errors)
        rows.append(row)
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)


def cmd_compare(args):
    matrix = read_matrix(args.matrix)
    summary = compare(matrix, args.out, n_jobs=args.n_jobs)
    atomic_write(os.path.join(args.out, "summary.csv"), summary.to_csv(index=False))
    print(tabulate(summary, headers="keys", showindex=False, floatfmt=".4f"))


# =============================================================================
# ENTRY POINT
# =============================================================================


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mgmd-gan",
        description="Train multi-generator multi-discriminator GANs and measure their membership privacy.",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0, help="Log progress (repeat for more detail).")
    subparsers = parser.add_subparsers(dest="command", required=True)

    train_parser = subparsers.add_parser("train", help="Train a model from a JSON run config.")
    train_parser.add_argument("--config", required=True, help="Path to the run config.")
    train_parser.add_argument("--out", default=None, help="Output directory. Overrides 'out' in the config.")
    train_parser.set_defaults(func=cmd_train)

    attack_parser = subparsers.add_parser("attack", help="Run membership inference attacks on a checkpoint.")
    attack_parser.add_argument("--checkpoint", required=True, help="Path to model.ckpt.")
    attack_parser.add_argument("--target", choices=TARGETS, default=None, help="Attack one target only.")
    attack_parser.add_argument("--aggregation", choices=["max", "mean"], default="max")
    attack_parser.add_argument("--seed", type=int, required=True, help="Seed of the eval set and generator pool.")
    attack_parser.add_argument("--per-partition", action="store_true", help="Score members with their own D only.")
    attack_parser.add_argument("--out", default=None, help="Output directory. Defaults to the checkpoint's.")
    attack_parser.set_defaults(func=cmd_attack)

    report_parser = subparsers.add_parser("report", help="Write the train/holdout score report of a checkpoint.")
    report_parser.add_argument("--checkpoint", required=True, help="Path to model.ckpt.")
    report_parser.add_argument("--holdout", choices=["folds", "all"], default="folds")
    report_parser.add_argument("--out", default=None, help="Output directory. Defaults to the checkpoint's.")
    report_parser.set_defaults(func=cmd_report)

    compare_parser = subparsers.add_parser("compare", help="Train and attack a matrix of configurations.")
    compare_parser.add_argument("--matrix", required=True, help="Path to the matrix JSON.")
    compare_parser.add_argument("--out", required=True, help="Output directory.")
    compare_parser.add_argument("--n-jobs", type=int, default=None, help="Cells run in parallel.")
    compare_parser.set_defaults(func=cmd_compare)

    return parser


def main(argv=None):
    """Run the command line and return the exit code."""
    args = build_parser().parse_args(argv)
    set_logger(level={0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG))

    try:
        args.func(args)
    except (ConfigError, InvalidParameterError, json.JSONDecodeError) as exc:
        print(f"mgmd-gan: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FormatError, CheckpointError, ContractError, OSError) as exc:
        print(f"mgmd-gan: cannot read input: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"mgmd-gan: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":
    sys.exit(main())
