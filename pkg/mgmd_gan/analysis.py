#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Generalization gap between discriminator scores on training and holdout data.

Every discriminator scores the training samples of its own partition and a
share of the holdout set. The scores are merged into one training and one
holdout distribution, summarized by their mean difference and their 1-D
Wasserstein distance, and binned into histograms.

>>> counts, edges = histogram([0.5] * 10, bins=2)
>>> counts.tolist(), edges.tolist()
([0, 10], [0.0, 0.5, 1.0])

"""

import json
import logging
import os

import numpy as np
import pandas as pd
from scipy.special import expit
from scipy.stats import wasserstein_distance
from sklearn.utils import Bunch

from mgmd_gan.exceptions import ContractError
from mgmd_gan.models import discriminator_forward
from mgmd_gan.utils import atomic_write

log = logging.getLogger(__name__)

DEFAULT_BINS = 50
DEFAULT_RANGE = (0.0, 1.0)
BINNING_NOTE = "bins half-open [lo, hi), last bin closed, out-of-range scores clamped to the end bins"


class ScoreReport:
    """Merged and per-discriminator scores of a model on train and holdout data.

    Attributes
    ----------
    train_scores, holdout_scores : np.ndarray
        Merged scores, in [0, 1]. Wasserstein critic outputs are passed
        through the logistic function.
    train_raw, holdout_raw : np.ndarray
        Merged scores before the logistic function.
    per_discriminator : list of Bunch
        ``train``, ``holdout``, ``train_raw`` and ``holdout_raw`` of every
        discriminator. The merged arrays are their concatenations in order.
    histogram : Bunch
        ``edges``, ``train_counts`` and ``holdout_counts``.
    info : dict
        Method, k, objective, seed and holdout assignment.
    """

    def __init__(self, per_discriminator, *, bins=DEFAULT_BINS, range=DEFAULT_RANGE, info=None):
        self.per_discriminator = per_discriminator
        self.train_scores = np.concatenate([part.train for part in per_discriminator])
        self.holdout_scores = np.concatenate([part.holdout for part in per_discriminator])
        self.train_raw = np.concatenate([part.train_raw for part in per_discriminator])
        self.holdout_raw = np.concatenate([part.holdout_raw for part in per_discriminator])

        train_counts, edges = histogram(self.train_scores, bins=bins, range=range)
        holdout_counts, _ = histogram(self.holdout_scores, bins=bins, range=range)
        self.histogram = Bunch(edges=edges, train_counts=train_counts, holdout_counts=holdout_counts)
        self.info = {} if info is None else info

    @property
    def k(self):
        return len(self.per_discriminator)

    def __repr__(self):
        return f"ScoreReport(k={self.k}, num_train={len(self.train_scores)}, num_holdout={len(self.holdout_scores)})"


def collect_scores(model, train_data, holdout_data, *, holdout="folds", bins=DEFAULT_BINS, range=DEFAULT_RANGE):
    """Score training and holdout data with every discriminator of `model`.

    Parameters
    ----------
    model : TrainedModel
    train_data : Dataset
        The dataset the model was trained on. Its rows are those the
        partition of the model indexes.
    holdout_data : Dataset
        Samples the model never saw.
    holdout : str, optional
        "folds" splits the holdout set into k equal folds and discriminator i
        scores fold i. "all" lets every discriminator score the whole holdout
        set. The default is "folds".
    bins : int, optional
        Histogram bins. The default is 50.
    range : tuple, optional
        Histogram range. The default is (0, 1).

    Returns
    -------
    ScoreReport
    """
    if len(train_data) == 0 or len(holdout_data) == 0:
        raise ContractError("Train and holdout data must be non-empty")
    if not np.array_equal(train_data.ids, model.partition.parent_ids):
        raise ContractError("train_data is not the dataset the model was partitioned on")
    if holdout not in ("folds", "all"):
        raise ContractError(f"Unknown holdout assignment '{holdout}', choose 'folds' or 'all'")
    if holdout == "folds" and len(holdout_data) < model.k:
        raise ContractError(f"Holdout folds need at least k={model.k} samples, got {len(holdout_data)}")

    bounded = expit if model.objective.kind == "wasserstein" else np.asarray
    folds = np.array_split(np.arange(len(holdout_data)), model.k)

    per_discriminator = []
    for i, discriminator in enumerate(model.discriminators):
        holdout_rows = folds[i] if holdout == "folds" else np.arange(len(holdout_data))
        train_raw = discriminator_forward(discriminator, train_data.samples[model.partition.parts[i]], model.objective)
        holdout_raw = discriminator_forward(discriminator, holdout_data.samples[holdout_rows], model.objective)
        per_discriminator.append(
            Bunch(
                train=bounded(train_raw),
                holdout=bounded(holdout_raw),
                train_raw=train_raw,
                holdout_raw=holdout_raw,
            )
        )

    info = {
        "method": model.method,
        "k": model.k,
        "objective": model.objective.kind,
        "seed": model.config.get("seed"),
        "holdout": holdout,
    }
    return ScoreReport(per_discriminator, bins=bins, range=range, info=info)


def gap_metrics(report):
    """Mean difference and W1 distance between train and holdout scores.

    Examples
    --------
    >>> from sklearn.utils import Bunch
    >>> part = Bunch(train=np.array([1.0, 1.0]), holdout=np.array([0.0, 0.0]))
    >>> part.update(train_raw=part.train, holdout_raw=part.holdout)
    >>> gap_metrics(ScoreReport([part]))
    (1.0, 1.0)
    """
    if len(report.train_scores) == 0 or len(report.holdout_scores) == 0:
        raise ContractError("Both score lists must be non-empty")
    mean_gap = float(np.mean(report.train_scores) - np.mean(report.holdout_scores))
    w1 = float(wasserstein_distance(report.train_scores, report.holdout_scores))
    return mean_gap, w1


def histogram(scores, bins=DEFAULT_BINS, range=DEFAULT_RANGE):
    """Bin scores, clamping out-of-range values into the end bins.

    Bins are half-open [lo, hi), the last one closed.

    Returns
    -------
    counts : np.ndarray
    edges : np.ndarray
        ``bins + 1`` strictly increasing edges.

    Examples
    --------
    >>> histogram([-3.0, 0.2, 7.0], bins=2)[0]
    array([2, 1])
    """
    if bins < 1:
        raise ContractError(f"bins must be at least 1, got {bins}")
    low, high = range
    scores = np.clip(np.asarray(scores, dtype=np.float64).ravel(), low, high)
    return np.histogram(scores, bins=bins, range=(low, high))


def _with_header(header_lines, body):
    return "".join(f"# {line}\n" for line in header_lines) + body


def write_report(report, directory, *, config_hash=None):
    """Write scores.csv, hist.csv and gap.json into `directory`.

    The CSV files start with "#" comment lines naming the binning, the config
    hash and the seed. Read them with ``pd.read_csv(path, comment="#")``.
    """
    os.makedirs(directory, exist_ok=True)
    seed = report.info.get("seed")
    edges = report.histogram.edges
    header = [
        f"config_hash: {config_hash}",
        f"seed: {seed}",
        f"binning: {len(edges) - 1} bins over [{edges[0]}, {edges[-1]}], {BINNING_NOTE}",
        f"holdout: {report.info.get('holdout')}",
    ]

    rows = []
    for side in ("train", "holdout"):
        for i, part in enumerate(report.per_discriminator):
            rows.append(
                pd.DataFrame(
                    {
                        "side": side,
                        "discriminator_index": i,
                        "score": part[side],
                        "score_raw": part[f"{side}_raw"],
                    }
                )
            )
    scores = pd.concat(rows, ignore_index=True)
    atomic_write(os.path.join(directory, "scores.csv"), _with_header(header, scores.to_csv(index=False)))

    hist = pd.DataFrame(
        {
            "bin_lo": edges[:-1],
            "bin_hi": edges[1:],
            "train_count": report.histogram.train_counts,
            "holdout_count": report.histogram.holdout_counts,
        }
    )
    atomic_write(os.path.join(directory, "hist.csv"), _with_header(header, hist.to_csv(index=False)))

    mean_gap, w1 = gap_metrics(report)
    gap = {
        "mean_gap": mean_gap,
        "w1": w1,
        "k": report.info.get("k"),
        "objective": report.info.get("objective"),
        "method": report.info.get("method"),
        "seed": seed,
        "config_hash": config_hash,
        "holdout": report.info.get("holdout"),
        "binning": {"bins": len(edges) - 1, "range": [float(edges[0]), float(edges[-1])], "rule": BINNING_NOTE},
    }
    atomic_write(os.path.join(directory, "gap.json"), json.dumps(gap, indent=2, sort_keys=True) + "\n")
    log.info(f"Wrote score report to {directory}: mean gap {mean_gap:.4f}, W1 {w1:.4f}")
    return gap


if __name__ == "__main__":
    import pytest

    pytest.main(args=[__file__, "--capture=sys", "--doctest-modules", "--maxfail=1"])
