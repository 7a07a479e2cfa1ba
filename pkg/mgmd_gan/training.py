#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Training of generator-discriminator pairs on disjoint data partitions.

Three methods share one code path:

- "mgmd": k pairs, pair i trains on partition i only.
- "classic": a single pair on the whole training set (k = 1).
- "pargan": one generator and k discriminators, discriminator j trains on
  partition j and the generator descends the mean of its loss against all of
  them. This is a reconstruction of PAR-GAN from its published description and
  is labeled "pargan-style" in reports.

>>> from mgmd_gan.datasets import synth_gaussian_ring
>>> data = synth_gaussian_ring(32, seed=0)
>>> model = train_mgmd(data, TrainConfig(method="mgmd", k=2, epochs=3, batch_size=8))
>>> len(model.generators), len(model.discriminators), len(model.history)
(2, 2, 3)

"""

import copy
import hashlib
import json
import logging
import os
import struct
import warnings
from numbers import Integral, Real

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator
from sklearn.utils import Bunch
from sklearn.utils._param_validation import Interval, InvalidParameterError, StrOptions

from mgmd_gan.datasets import PartitionSet, partition
from mgmd_gan.exceptions import CheckpointError, ContractError, NumericError
from mgmd_gan.models import (
    MlpParams,
    MlpSpec,
    NoisePrior,
    bind_params,
    default_specs,
    generator_forward,
    init_params,
    mlp_forward,
)
from mgmd_gan.numerics import OPTIMIZERS, SeededRNG, Tape, clip_weights, optimizer_step
from mgmd_gan.objectives import Objective, as_objective, discriminator_objective, generator_objective
from mgmd_gan.utils import atomic_write, canonical_json, format_float

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"MGMDCKPT"
CHECKPOINT_VERSION = 1
DIGEST_SIZE = 32

METHOD_LABELS = {"mgmd": "mgmd", "classic": "classic", "pargan": "pargan-style"}


def _json_normalize(obj):
    # Tuples become lists, exactly as after a round trip through a checkpoint
    return json.loads(canonical_json(obj))


class TrainConfig(BaseEstimator):
    """Settings of a training run.

    Parameters
    ----------
    method : str, optional
        "mgmd", "classic" or "pargan". The default is "mgmd".
    k : int, optional
        Number of partitions. Must be 1 for "classic" and at least 2 for
        "pargan". The default is 2.
    epochs : int, optional
        Passes over every partition. The default is 1500.
    batch_size : int, optional
        Real samples per minibatch. The default is 64.
    objective : str or Objective, optional
        "js", "wasserstein" or a configured Objective. The default is "js".
    optimizer : str or None, optional
        "adam" or "sgd". None means adam. The default is None.
    learning_rate : float or None, optional
        None means 2e-4 for JS and 5e-5 for Wasserstein. The default is None.
    beta1, beta2, epsilon : float, optional
        Adam settings. The defaults are 0.5, 0.999 and 1e-8.
    d_steps_per_g_step : int or None, optional
        Discriminator updates per generator update. None means 1 for JS and 5
        for Wasserstein. The default is None.
    clip_c : float or None, optional
        Critic weight clipping bound, used with the Wasserstein objective only.
        None means 0.01. The default is None.
    seed : int, optional
        Master seed. Partitions, initializations and every minibatch derive
        from it. The default is 0.
    checkpoint_interval : int or None, optional
        Save a checkpoint every this many epochs, if the trainer has a
        checkpoint directory. The default is None.
    stratified : bool, optional
        Stratify partitions by label. The default is False.
    generator_spec, discriminator_spec : MlpSpec or None, optional
        Architectures. None picks the MNIST or toy presets by data width.
    latent_dim : int or None, optional
        Overrides the latent dimension of the default generator.
    n_jobs : int or None, optional
        Threads used to update pairs concurrently. Results do not depend on
        it. The default is None (sequential).

    Examples
    --------
    >>> TrainConfig(method="classic", k=1, epochs=10)
    TrainConfig(epochs=10, k=1, method='classic')
    """

    _parameter_constraints: dict = {
        "method": [StrOptions({"mgmd", "classic", "pargan"})],
        "k": [Interval(Integral, 1, None, closed="left")],
        "epochs": [Interval(Integral, 1, None, closed="left")],
        "batch_size": [Interval(Integral, 1, None, closed="left")],
        "objective": [StrOptions({"js", "wasserstein"}), Objective],
        "optimizer": [StrOptions(set(OPTIMIZERS.keys())), None],
        "learning_rate": [Interval(Real, 0, None, closed="neither"), None],
        "beta1": [Interval(Real, 0, 1, closed="left")],
        "beta2": [Interval(Real, 0, 1, closed="left")],
        "epsilon": [Interval(Real, 0, None, closed="neither")],
        "d_steps_per_g_step": [Interval(Integral, 1, None, closed="left"), None],
        "clip_c": [Interval(Real, 0, None, closed="neither"), None],
        "seed": [Interval(Integral, 0, None, closed="left")],
        "checkpoint_interval": [Interval(Integral, 1, None, closed="left"), None],
        "stratified": ["boolean"],
        "generator_spec": [MlpSpec, None],
        "discriminator_spec": [MlpSpec, None],
        "latent_dim": [Interval(Integral, 1, None, closed="left"), None],
        "n_jobs": [Integral, None],
    }

    def __init__(
        self,
        method="mgmd",
        *,
        k=2,
        epochs=1500,
        batch_size=64,
        objective="js",
        optimizer=None,
        learning_rate=None,
        beta1=0.5,
        beta2=0.999,
        epsilon=1e-8,
        d_steps_per_g_step=None,
        clip_c=None,
        seed=0,
        checkpoint_interval=None,
        stratified=False,
        generator_spec=None,
        discriminator_spec=None,
        latent_dim=None,
        n_jobs=None,
    ):
        self.method = method
        self.k = k
        self.epochs = epochs
        self.batch_size = batch_size
        self.objective = objective
        self.optimizer = optimizer
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.d_steps_per_g_step = d_steps_per_g_step
        self.clip_c = clip_c
        self.seed = seed
        self.checkpoint_interval = checkpoint_interval
        self.stratified = stratified
        self.generator_spec = generator_spec
        self.discriminator_spec = discriminator_spec
        self.latent_dim = latent_dim
        self.n_jobs = n_jobs

    def _validate_params(self):
        super()._validate_params()

        if self.method == "classic" and self.k != 1:
            raise InvalidParameterError(f"The classic method trains a single pair, so k must be 1, got k={self.k}")
        if self.method == "pargan" and self.k < 2:
            raise InvalidParameterError(f"The pargan method needs k >= 2 discriminators, got k={self.k}")

        self._objective = as_objective(self.objective)
        is_js = self._objective.kind == "js"

        self._optimizer = "adam" if self.optimizer is None else self.optimizer
        self._learning_rate = (2e-4 if is_js else 5e-5) if self.learning_rate is None else self.learning_rate
        self._d_steps = (1 if is_js else 5) if self.d_steps_per_g_step is None else self.d_steps_per_g_step

        if is_js and self.clip_c is not None:
            warnings.warn("`clip_c` only applies to the Wasserstein objective and is ignored.", UserWarning)
        self._clip_c = None if is_js else (0.01 if self.clip_c is None else self.clip_c)

    def make_optimizer(self):
        """A fresh optimizer state for one network."""
        if self._optimizer == "adam":
            return OPTIMIZERS["adam"](
                learning_rate=self._learning_rate,
                beta1=self.beta1,
                beta2=self.beta2,
                epsilon=self.epsilon,
            )
        return OPTIMIZERS[self._optimizer](learning_rate=self._learning_rate)

    def to_dict(self):
        """JSON-compatible echo of the configuration.

        Examples
        --------
        >>> TrainConfig(objective=Objective("wasserstein")).to_dict()["objective"]["kind"]
        'wasserstein'
        """
        params = self.get_params(deep=False)
        objective = params["objective"]
        params["objective"] = objective.get_params() if isinstance(objective, Objective) else objective
        for key in ("generator_spec", "discriminator_spec"):
            if params[key] is not None:
                params[key] = params[key].to_dict()
        return _json_normalize(params)

    @classmethod
    def from_dict(cls, params):
        params = dict(params)
        if isinstance(params.get("objective"), dict):
            params["objective"] = Objective(**params["objective"])
        for key in ("generator_spec", "discriminator_spec"):
            if isinstance(params.get(key), dict):
                params[key] = MlpSpec.from_dict(params[key])
        return cls(**params)


class TrainedModel:
    """Generators, discriminators and bookkeeping of a finished run.

    Attributes
    ----------
    method : str
        "mgmd", "classic" or "pargan".
    generators, discriminators : list of MlpParams
        k of each for mgmd/classic, one generator and k discriminators for
        pargan.
    objective : Objective
    prior : NoisePrior
    partition : PartitionSet
        The partition of the training set the pairs trained on.
    config : dict
        Echo of the TrainConfig.
    history : list of dict
        One entry per epoch with the mean discriminator objective per
        discriminator and the generator loss (descended and literal) per
        generator.
    metadata : dict
        Free-form JSON metadata (numerics settings, run config, hashes).
    """

    def __init__(self, *, method, generators, discriminators, objective, prior, partition, config, history, metadata):
        self.method = method
        self.generators = generators
        self.discriminators = discriminators
        self.objective = objective
        self.prior = prior
        self.partition = partition
        self.config = config
        self.history = history
        self.metadata = metadata

    @property
    def k(self):
        return len(self.discriminators)

    @property
    def label(self):
        return METHOD_LABELS[self.method]

    def __repr__(self):
        return f"TrainedModel(method={self.method!r}, k={self.k}, objective={self.objective.kind!r})"

    def __eq__(self, other):
        if type(self) is not type(other):
            return False
        return (
            self.method == other.method
            and self.generators == other.generators
            and self.discriminators == other.discriminators
            and self.objective == other.objective
            and self.prior == other.prior
            and self.partition == other.partition
            and self.config == other.config
            and self.history == other.history
            and self.metadata == other.metadata
        )

    def history_frame(self):
        """Loss history in long format, one row per epoch, network and quantity."""
        rows = []
        for entry in self.history:
            for index, value in enumerate(entry["d_loss"]):
                rows.append((entry["epoch"], "discriminator", index, "objective", value))
            for quantity in ("g_loss", "g_value"):
                for index, value in enumerate(entry[quantity]):
                    rows.append((entry["epoch"], "generator", index, quantity[2:], value))
        return pd.DataFrame(rows, columns=["epoch", "network", "index", "quantity", "value"])


class GANTrainer:
    """Alternating gradient training of generator-discriminator pairs.

    Parameters
    ----------
    config : TrainConfig
    callback : callable, optional
        Called after every generator update with a Bunch holding ``epoch``,
        ``pair``, ``step``, ``generator`` and ``discriminator``. With
        ``n_jobs > 1`` it is called from worker threads.
    track_routing : bool, optional
        Record the ids of the real samples every discriminator receives in
        ``results_.routing``. The default is False.
    checkpoint_dir : str, optional
        Directory for periodic checkpoints. They are deleted again if training
        fails with a NumericError.
    metadata : dict, optional
        Extra JSON metadata stored on the TrainedModel.
    verbose : int, optional
        1 logs one line per epoch, 2 also logs every pair. The default is 0.
    """

    def __init__(self, config, *, callback=None, track_routing=False, checkpoint_dir=None, metadata=None, verbose=0):
        self.config = config
        self.callback = callback
        self.track_routing = track_routing
        self.checkpoint_dir = checkpoint_dir
        self.metadata = metadata
        self.verbose = verbose

    def _resolve_specs(self, num_features):
        config = self.config
        g_default, d_default, _ = default_specs(num_features, latent_dim=config.latent_dim)
        g_spec = g_default if config.generator_spec is None else config.generator_spec
        d_spec = d_default if config.discriminator_spec is None else config.discriminator_spec
        g_spec._validate_params()
        d_spec._validate_params()

        if g_spec.widths[-1] != num_features or d_spec.widths[0] != num_features:
            raise ContractError(f"Architectures {g_spec.widths} / {d_spec.widths} do not fit {num_features} features")
        if d_spec.widths[-1] != 1:
            raise ContractError("A discriminator must output a single score")
        return g_spec, d_spec, NoisePrior(latent_dim=g_spec.widths[0])

    def fit(self, train_data):
        """Train on `train_data` and return a TrainedModel."""
        config = self.config
        config._validate_params()
        if config.k > len(train_data):
            raise ContractError(f"Cannot train k={config.k} pairs on {len(train_data)} samples")

        self.partition_ = partition(train_data, config.k, config.seed, stratified=config.stratified)
        g_spec, d_spec, self.prior_ = self._resolve_specs(train_data.num_features)
        self._X, self._ids = train_data.samples, train_data.ids

        master = SeededRNG(config.seed)
        num_generators = 1 if config.method == "pargan" else config.k
        self.generators_ = [init_params(g_spec, master.substream("generator", i)) for i in range(num_generators)]
        self.discriminators_ = [init_params(d_spec, master.substream("discriminator", i)) for i in range(config.k)]
        self._g_optimizers = [config.make_optimizer() for _ in self.generators_]
        self._d_optimizers = [config.make_optimizer() for _ in self.discriminators_]
        self._pair_rngs = [master.substream("pair", i) for i in range(config.k)]
        self._generator_rng = master.substream("generator-steps")
        self._max_critic_weight = [0.0] * config.k

        self.results_ = Bunch(
            history=[],
            routing=[set() for _ in range(config.k)] if self.track_routing else None,
            max_critic_weight=None,
        )
        self.run_metadata_ = {
            "precision": "float64",
            "initialization": "he_normal",
            "optimizer": config._optimizer,
            "learning_rate": config._learning_rate,
            "d_steps_per_g_step": config._d_steps,
            "clip_c": config._clip_c,
            "generator_mode": config._objective.resolved_generator_mode,
            "generator_coupling": config._objective.generator_coupling,
            "normal_sampling": "box_muller",
        }
        log.info(f"Training {METHOD_LABELS[config.method]} with k={config.k}: {self.run_metadata_}")

        self._written_checkpoints = []
        try:
            self._run_epochs()
        except NumericError:
            # A failed run leaves no checkpoints behind
            for path in self._written_checkpoints:
                if os.path.exists(path):
                    os.remove(path)
            log.info(f"Removed {len(self._written_checkpoints)} checkpoints of the failed run")
            raise

        if config._clip_c is not None:
            self.results_.max_critic_weight = max(self._max_critic_weight)

        return self._to_model()

    def _run_epochs(self):
        config = self.config
        for epoch in range(config.epochs):
            if config.method == "pargan":
                entry = self._pargan_epoch(epoch)
            else:
                entry = self._pairs_epoch(epoch)
            self.results_.history.append(entry)

            if self.verbose >= 1:
                lpad = len(str(config.epochs))
                msg = f"Epoch: {str(epoch + 1).rjust(lpad, ' ')}/{config.epochs}   "
                msg += f"D objective: {format_float(np.mean(entry['d_loss']))}   "
                msg += f"G loss: {format_float(np.mean(entry['g_value']))}"
                log.info(msg)

            interval = config.checkpoint_interval
            if self.checkpoint_dir is not None and interval is not None and (epoch + 1) % interval == 0:
                path = os.path.join(self.checkpoint_dir, f"checkpoint-epoch{epoch + 1:05d}.ckpt")
                save_checkpoint(self._to_model(), path)
                self._written_checkpoints.append(path)

    def _to_model(self):
        metadata = {"numerics": self.run_metadata_}
        metadata.update(self.metadata or {})
        return TrainedModel(
            method=self.config.method,
            generators=[g.copy() for g in self.generators_],
            discriminators=[d.copy() for d in self.discriminators_],
            objective=copy.deepcopy(self.config._objective),
            prior=copy.deepcopy(self.prior_),
            partition=self.partition_,
            config=self.config.to_dict(),
            history=_json_normalize(self.results_.history),
            metadata=_json_normalize(metadata),
        )

    def _critic_step(self, i, real, fake):
        """One ascent step of discriminator i. Returns the objective value."""
        config = self.config
        objective = config._objective
        D = self.discriminators_[i]

        tape = Tape()
        nodes = bind_params(tape, D, trainable=True)
        activation = objective.discriminator_activation
        real_scores = mlp_forward(tape, D.spec, nodes, tape.constant(real), output_activation=activation)
        fake_scores = mlp_forward(tape, D.spec, nodes, tape.constant(fake), output_activation=activation)
        value = discriminator_objective(tape, objective, real_scores, fake_scores)
        loss = tape.forward("mul_scalar", value, c=-1.0)  # Ascend by descending the negation

        arrays = optimizer_step(self._d_optimizers[i], D.arrays, tape.backward(loss))
        if config._clip_c is not None:
            arrays = clip_weights(arrays, config._clip_c)
        self.discriminators_[i] = MlpParams.from_arrays(D.spec, arrays)

        if config._clip_c is not None:
            self._max_critic_weight[i] = max(self._max_critic_weight[i], self.discriminators_[i].max_abs())
        return float(value.value)

    def _generator_step(self, g, z, coupled):
        """One descent step of generator g against the coupled discriminators."""
        objective = self.config._objective
        G = self.generators_[g]

        tape = Tape()
        g_nodes = bind_params(tape, G, trainable=True)
        fake = mlp_forward(tape, G.spec, g_nodes, tape.constant(z))
        scores = []
        for D in coupled:
            d_nodes = bind_params(tape, D, trainable=False)
            scores.append(mlp_forward(tape, D.spec, d_nodes, fake, output_activation=objective.discriminator_activation))
        loss, value = generator_objective(tape, objective, scores, self.config.k)

        arrays = optimizer_step(self._g_optimizers[g], G.arrays, tape.backward(loss))
        self.generators_[g] = MlpParams.from_arrays(G.spec, arrays)
        return float(loss.value), float(value.value)

    def _real_batch(self, i, batch):
        if self.track_routing:
            self.results_.routing[i].update(self._ids[batch].tolist())
        return self._X[batch]

    def _notify(self, epoch, pair, step, g):
        if self.callback is not None:
            self.callback(
                Bunch(
                    epoch=epoch,
                    pair=pair,
                    step=step,
                    generator=self.generators_[g],
                    discriminator=self.discriminators_[pair],
                )
            )

    def _pair_epoch(self, i, epoch, snapshot):
        """One pass of pair i over partition i."""
        config = self.config
        rng = self._pair_rngs[i]
        part = self.partition_.parts[i]
        order = part[rng.permutation(len(part))]

        d_values, g_losses, g_values = [], [], []
        try:
            for step, start in enumerate(range(0, len(order), config.batch_size)):
                batch = order[start : start + config.batch_size]
                real = self._real_batch(i, batch)

                for _ in range(config._d_steps):
                    fake = generator_forward(self.generators_[i], self.prior_.sample(len(batch), rng))
                    d_values.append(self._critic_step(i, real, fake))

                if config._objective.generator_coupling == "all":
                    coupled = [self.discriminators_[i] if j == i else snapshot[j] for j in range(config.k)]
                else:
                    coupled = [self.discriminators_[i]]
                g_loss, g_value = self._generator_step(i, self.prior_.sample(len(batch), rng), coupled)
                g_losses.append(g_loss)
                g_values.append(g_value)

                self._notify(epoch, i, step, i)
                if self.verbose >= 2:
                    log.info(f"  Pair {i} step {step}: D {format_float(d_values[-1])}  G {format_float(g_value)}")
        except NumericError as exc:
            raise NumericError(f"Epoch {epoch}, pair {i}: {exc}", op_id=exc.op_id) from exc

        return float(np.mean(d_values)), float(np.mean(g_losses)), float(np.mean(g_values))

    def _pairs_epoch(self, epoch):
        """One epoch of mgmd or classic training.

        Pairs only write their own networks. With coupling "all", generator i
        reads the other discriminators from a snapshot taken at the start of
        the epoch, so the update order of pairs does not matter.
        """
        k = self.config.k
        snapshot = None
        if self.config._objective.generator_coupling == "all":
            snapshot = [d.copy() for d in self.discriminators_]

        if self.config.n_jobs in (None, 1) or k == 1:
            results = [self._pair_epoch(i, epoch, snapshot) for i in range(k)]
        else:
            results = Parallel(n_jobs=self.config.n_jobs, prefer="threads")(
                delayed(self._pair_epoch)(i, epoch, snapshot) for i in range(k)
            )

        d_loss, g_loss, g_value = (list(column) for column in zip(*results))
        return {"epoch": epoch, "d_loss": d_loss, "g_loss": g_loss, "g_value": g_value}

    def _pargan_epoch(self, epoch):
        """One epoch of pargan-style training: k discriminators, one generator."""
        config = self.config
        batch_size = config.batch_size
        parts = self.partition_.parts
        orders = [part[rng.permutation(len(part))] for part, rng in zip(parts, self._pair_rngs)]
        num_steps = max(int(np.ceil(len(order) / batch_size)) for order in orders)

        d_values = [[] for _ in parts]
        g_losses, g_values = [], []
        try:
            for step in range(num_steps):
                for j, order in enumerate(orders):
                    batch = order[step * batch_size : (step + 1) * batch_size]
                    if len(batch) == 0:
                        continue
                    real = self._real_batch(j, batch)
                    for _ in range(config._d_steps):
                        z = self.prior_.sample(len(batch), self._pair_rngs[j])
                        d_values[j].append(self._critic_step(j, real, generator_forward(self.generators_[0], z)))

                z = self.prior_.sample(batch_size, self._generator_rng)
                g_loss, g_value = self._generator_step(0, z, self.discriminators_)
                g_losses.append(g_loss)
                g_values.append(g_value)
                self._notify(epoch, 0, step, 0)
        except NumericError as exc:
            raise NumericError(f"Epoch {epoch}, pargan: {exc}", op_id=exc.op_id) from exc

        return {
            "epoch": epoch,
            "d_loss": [float(np.mean(values)) for values in d_values],
            "g_loss": [float(np.mean(g_losses))],
            "g_value": [float(np.mean(g_values))],
        }


def _train(train_data, config, method, **kwargs):
    if config.method != method:
        raise ContractError(f"train_{method} needs config.method == '{method}', got '{config.method}'")
    return GANTrainer(config, **kwargs).fit(train_data)


def train_mgmd(train_data, config, **kwargs):
    """Train k pairs, pair i on partition i. Keyword arguments go to GANTrainer."""
    return _train(train_data, config, "mgmd", **kwargs)


def train_classic(train_data, config, **kwargs):
    """Train a single pair on the whole training set.

    This runs the mgmd code path with k = 1, so the two give identical
    parameters at every step for the same seed.
    """
    return _train(train_data, config, "classic", **kwargs)


def train_pargan(train_data, config, **kwargs):
    """Train one generator against k partition discriminators."""
    return _train(train_data, config, "pargan", **kwargs)


def train(train_data, config, **kwargs):
    """Dispatch on ``config.method``."""
    return {"mgmd": train_mgmd, "classic": train_classic, "pargan": train_pargan}[config.method](
        train_data, config, **kwargs
    )


# =============================================================================
# CHECKPOINTS
# =============================================================================


def save_checkpoint(model, path):
    """Write a model to a checkpoint file.

    Layout: the magic bytes ``MGMDCKPT``, a little-endian u32 header length, a
    JSON header {format_version, method, k, objective, specs, ...}, the arrays
    of every network as little-endian float64 (generators first), and a
    SHA-256 digest of everything before it.
    """
    networks = model.generators + model.discriminators
    header = {
        "format_version": CHECKPOINT_VERSION,
        "method": model.method,
        "k": model.k,
        "objective": model.objective.get_params(),
        "prior": model.prior.get_params(),
        "specs": {
            "generators": [g.spec.to_dict() for g in model.generators],
            "discriminators": [d.spec.to_dict() for d in model.discriminators],
        },
        "partition": {
            "seed": model.partition.seed,
            "parent_ids": model.partition.parent_ids.tolist(),
            "parts": [part.tolist() for part in model.partition.parts],
        },
        "config": model.config,
        "history": model.history,
        "metadata": model.metadata,
    }
    header_bytes = canonical_json(header).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for net in networks for a in net.arrays)

    body = CHECKPOINT_MAGIC + struct.pack("<I", len(header_bytes)) + header_bytes + payload
    atomic_write(path, body + hashlib.sha256(body).digest())


def load_checkpoint(path):
    """Read a checkpoint written by :func:`save_checkpoint`.

    Raises
    ------
    CheckpointError
        If the file is not a checkpoint, is truncated or corrupt, or has an
        unsupported format version. No partial model is returned.
    """
    with open(path, "rb") as file:
        content = file.read()

    prefix_size = len(CHECKPOINT_MAGIC) + 4
    if len(content) < prefix_size + DIGEST_SIZE:
        raise CheckpointError(f"{path}: file too short to be a checkpoint ({len(content)} bytes)")
    if content[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")

    body, digest = content[:-DIGEST_SIZE], content[-DIGEST_SIZE:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError(f"{path}: digest mismatch, the file is truncated or corrupt")

    (header_size,) = struct.unpack("<I", body[len(CHECKPOINT_MAGIC) : prefix_size])
    try:
        header = json.loads(body[prefix_size : prefix_size + header_size].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable header") from exc

    if header.get("format_version") != CHECKPOINT_VERSION:
        msg = f"{path}: format version {header.get('format_version')}, expected {CHECKPOINT_VERSION}"
        raise CheckpointError(msg)

    payload = body[prefix_size + header_size :]
    offset = 0

    def read_network(spec_dict):
        nonlocal offset
        spec = MlpSpec.from_dict(spec_dict)
        arrays = []
        for fan_in, fan_out in zip(spec.widths[:-1], spec.widths[1:]):
            for shape in ((fan_in, fan_out), (fan_out,)):
                count = int(np.prod(shape))
                if offset + 8 * count > len(payload):
                    raise CheckpointError(f"{path}: payload shorter than the header describes")
                array = np.frombuffer(payload, dtype="<f8", count=count, offset=offset)
                arrays.append(array.astype(np.float64).reshape(shape))
                offset += 8 * count
        return MlpParams.from_arrays(spec, arrays)

    generators = [read_network(s) for s in header["specs"]["generators"]]
    discriminators = [read_network(s) for s in header["specs"]["discriminators"]]
    if offset != len(payload):
        raise CheckpointError(f"{path}: {len(payload) - offset} unexpected trailing payload bytes")

    partition_header = header["partition"]
    return TrainedModel(
        method=header["method"],
        generators=generators,
        discriminators=discriminators,
        objective=Objective(**header["objective"]),
        prior=NoisePrior(**header["prior"]),
        partition=PartitionSet(
            partition_header["parts"],
            parent_ids=partition_header["parent_ids"],
            seed=partition_header["seed"],
        ),
        config=header["config"],
        history=header["history"],
        metadata=header["metadata"],
    )


if __name__ == "__main__":
    import pytest

    pytest.main(args=[__file__, "--capture=sys", "--doctest-modules", "--maxfail=1"])
