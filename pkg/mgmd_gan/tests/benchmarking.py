#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Privacy experiments on a sparse toy ring.

The toy problem is the 8-mode ring with 30 extra noise dimensions: 64 training
and 64 holdout points in 32 dimensions, far enough apart for a discriminator to
memorize the training points. Models are compared at an equal budget, the same
number of discriminator updates summed over all discriminators. Every
partition fits in one batch, so a pair takes one update per epoch and k pairs
train for ``total_updates // k`` epochs each.

The slow tests assert on these runs. Running this file prints the tables.
"""
import functools
from time import perf_counter

import numpy as np
from sklearn.utils import Bunch
from tabulate import tabulate

from mgmd_gan.analysis import collect_scores, gap_metrics
from mgmd_gan.attacks import REFERENCE_ACCURACY, AttackConfig, make_eval_set, run_mia
from mgmd_gan.datasets import SplitSpec, split, synth_gaussian_ring
from mgmd_gan.training import TrainConfig, train

NUM_TRAIN = 64
NUM_FEATURES = 32
TOTAL_UPDATES = 5000
SEEDS = (0, 1, 2, 3, 4)


def toy_problem(seed):
    data = synth_gaussian_ring(2 * NUM_TRAIN, sigma=1.0, num_features=NUM_FEATURES, seed=seed)
    return split(data, SplitSpec(train_size=NUM_TRAIN, seed=seed))


@functools.lru_cache(maxsize=None)
def budget_run(method, k, seed, total_updates=TOTAL_UPDATES, objective="js"):
    """Train on the toy problem of `seed`. Returns (model, train, holdout).

    Runs are cached, so tests and tables asking for the same run share it.
    """
    train_data, holdout_data = toy_problem(seed)
    config = TrainConfig(
        method=method,
        k=k,
        objective=objective,
        epochs=total_updates // k,
        batch_size=NUM_TRAIN,
        latent_dim=NUM_FEATURES,
        seed=seed,
    )
    return train(train_data, config), train_data, holdout_data


def evaluate(method, k, seed, total_updates=TOTAL_UPDATES, objective="js"):
    """Attack accuracies and gap metrics of one run."""
    model, train_data, holdout_data = budget_run(method, k, seed, total_updates, objective)
    eval_set = make_eval_set(train_data, holdout_data, seed=seed)
    mean_gap, w1 = gap_metrics(collect_scores(model, train_data, holdout_data))
    return Bunch(
        mia_d=run_mia(model, eval_set, "discriminators", AttackConfig(seed=seed)).accuracy,
        mia_g=run_mia(model, eval_set, "generators", AttackConfig(seed=seed)).accuracy,
        mean_gap=mean_gap,
        w1=w1,
    )


def average(method, k, seeds=SEEDS, total_updates=TOTAL_UPDATES, objective="js"):
    """Seed average of :func:`evaluate`."""
    results = [evaluate(method, k, seed, total_updates, objective) for seed in seeds]
    return Bunch(**{key: float(np.mean([result[key] for result in results])) for key in results[0]})


HEADERS = ["mia_d", "mia_g", "mean_gap", "w1"]


def overfitting():
    # A classic GAN memorizes its 64 training points
    start_time = perf_counter()
    rows = [[seed, *evaluate("classic", 1, seed).values()] for seed in SEEDS]
    rows.append(["mean", *average("classic", 1).values()])
    print(f"Classic JS, {TOTAL_UPDATES} updates, in {perf_counter() - start_time:.1f}s (expect mean mia_d >= 0.7)")
    print(tabulate(rows, headers=["seed", *HEADERS], floatfmt=".4f"))
    print()


def ordering(objective="js"):
    # At an equal budget, more partitions leak less
    rows = []
    for method, k in [("classic", 1), ("mgmd", 2), ("mgmd", 5), ("pargan", 2), ("pargan", 5)]:
        result = average(method, k, objective=objective)
        reference = REFERENCE_ACCURACY["discriminators"].get((method, k, objective), np.nan)
        rows.append([method, k, *result.values(), reference])

    print(f"Objective {objective} (expect mia_d of mgmd k=5 < mgmd k=2 < classic, each by 0.02)")
    print(tabulate(rows, headers=["method", "k", *HEADERS, "reference mia_d (MNIST)"], floatfmt=".4f"))
    print()


if __name__ == "__main__":
    """
    Reference accuracies are full-scale MNIST runs and are shown for direction
    only.
    """

    overfitting()
    for objective in ["js", "wasserstein"]:
        ordering(objective=objective)
