#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""

Multi-Generator Multi-Discriminator GANs
----------------------------------------

A single GAN trained on a whole dataset lets its discriminator memorize the
training samples, which a membership inference attacker can exploit. Here the
training set is split into k disjoint partitions and generator-discriminator
pair i trains on partition i only. The generators together model the mixture
of the partition distributions, and every discriminator sees only a fraction
of the data.

The package trains such ensembles (and a classic GAN and a PAR-GAN-style
baseline), attacks their discriminators and generators with white-box
membership inference, and measures the gap between discriminator scores on
training and holdout data.

>>> from mgmd_gan import TrainConfig, train_mgmd, synth_gaussian_ring, split, SplitSpec
>>> train, holdout = split(synth_gaussian_ring(64, seed=0), SplitSpec(train_size=32, seed=0))
>>> model = train_mgmd(train, TrainConfig(k=2, epochs=2, batch_size=16))
>>> model
TrainedModel(method='mgmd', k=2, objective='js')

"""

import importlib.metadata

from mgmd_gan.analysis import ScoreReport, collect_scores, gap_metrics, histogram, write_report
from mgmd_gan.attacks import (
    AttackConfig,
    AttackResult,
    MembershipEvalSet,
    best_threshold_accuracy,
    discriminator_membership_scores,
    generator_membership_scores,
    make_eval_set,
    run_mia,
)
from mgmd_gan.datasets import (
    Dataset,
    PartitionSet,
    SplitSpec,
    load_mnist,
    load_mnist_idx,
    partition,
    save_mnist_idx,
    split,
    synth_gaussian_ring,
)
from mgmd_gan.models import MlpParams, MlpSpec, NoisePrior, init_params, sample_ensemble
from mgmd_gan.objectives import Objective, discriminator_loss, generator_loss, value_function
from mgmd_gan.training import (
    GANTrainer,
    TrainConfig,
    TrainedModel,
    load_checkpoint,
    save_checkpoint,
    train,
    train_classic,
    train_mgmd,
    train_pargan,
)

__version__ = importlib.metadata.version("mgmd-gan")

__all__ = [
    # Data
    "Dataset",
    "PartitionSet",
    "SplitSpec",
    "load_mnist",
    "load_mnist_idx",
    "save_mnist_idx",
    "synth_gaussian_ring",
    "split",
    "partition",
    # Models and objectives
    "MlpSpec",
    "MlpParams",
    "NoisePrior",
    "init_params",
    "sample_ensemble",
    "Objective",
    "discriminator_loss",
    "generator_loss",
    "value_function",
    # Training
    "TrainConfig",
    "TrainedModel",
    "GANTrainer",
    "train",
    "train_mgmd",
    "train_classic",
    "train_pargan",
    "save_checkpoint",
    "load_checkpoint",
    # Attacks
    "MembershipEvalSet",
    "AttackConfig",
    "AttackResult",
    "make_eval_set",
    "discriminator_membership_scores",
    "generator_membership_scores",
    "best_threshold_accuracy",
    "run_mia",
    # Analysis
    "ScoreReport",
    "collect_scores",
    "gap_metrics",
    "histogram",
    "write_report",
]
