#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Datasets: MNIST IDX ingestion, a synthetic 2-D Gaussian ring, train/holdout
splitting and the disjoint partitions that each generator-discriminator pair
trains on.

>>> data = synth_gaussian_ring(100, modes=4, radius=1.0, sigma=0.05, seed=0)
>>> train, holdout = split(data, SplitSpec(train_size=50, seed=0))
>>> len(train), len(holdout)
(50, 50)
>>> parts = partition(train, k=3, seed=0)
>>> [len(part) for part in parts.parts]
[17, 17, 16]

"""

import numbers
import os
import struct
from numbers import Integral, Real

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.model_selection import train_test_split
from sklearn.utils import check_scalar
from sklearn.utils._param_validation import Interval

from mgmd_gan.exceptions import ContractError, FormatError
from mgmd_gan.numerics import as_rng

DATASET_DIRECTORY, _ = os.path.split(os.path.realpath(__file__))

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


class Dataset:
    """Samples as rows of a float64 matrix, with stable integer ids.

    Parameters
    ----------
    samples : np.ndarray
        Array of shape (num_samples, num_features).
    source : str
        Either "mnist" or "synthetic".
    ids : np.ndarray, optional
        Unique integer ids. The default is range(num_samples).
    labels : np.ndarray, optional
        Class labels, used for stratified partitioning.

    Examples
    --------
    >>> data = Dataset(np.zeros((3, 2)), source="synthetic")
    >>> data
    Dataset(source='synthetic', num_samples=3, num_features=2)
    >>> data.subset([2, 0]).ids
    array([2, 0])
    """

    def __init__(self, samples, *, source, ids=None, labels=None):
        samples = np.asarray(samples, dtype=np.float64)
        if samples.ndim != 2 or samples.shape[0] < 1:
            raise ContractError(f"A dataset needs a non-empty 2D sample matrix, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ContractError("Dataset samples must be finite")

        ids = np.arange(samples.shape[0]) if ids is None else np.asarray(ids, dtype=np.int64)
        if ids.shape != (samples.shape[0],):
            raise ContractError("There must be exactly one id per sample")
        if len(np.unique(ids)) != len(ids):
            raise ContractError("Sample ids must be unique")
        if labels is not None:
            labels = np.asarray(labels)
            if labels.shape != ids.shape:
                raise ContractError("There must be exactly one label per sample")

        self.samples = samples
        self.source = source
        self.ids = ids
        self.labels = labels

    def __len__(self):
        return self.samples.shape[0]

    def __repr__(self):
        num_samples, num_features = self.samples.shape
        return f"Dataset(source={self.source!r}, num_samples={num_samples}, num_features={num_features})"

    @property
    def num_features(self):
        return self.samples.shape[1]

    def subset(self, indices):
        """A new Dataset with the rows at `indices`, keeping their ids."""
        indices = np.asarray(indices, dtype=np.int64)
        labels = None if self.labels is None else self.labels[indices]
        return Dataset(self.samples[indices], source=self.source, ids=self.ids[indices], labels=labels)


class PartitionSet:
    """K pairwise disjoint index sets covering a parent dataset.

    Parameters
    ----------
    parts : list of np.ndarray
        Index arrays into the parent dataset.
    parent_ids : np.ndarray
        The ids of the parent dataset, used to report the sample ids per part.
    seed : int
        The seed the partition was drawn with.
    """

    def __init__(self, parts, *, parent_ids, seed):
        self.parts = [np.asarray(part, dtype=np.int64) for part in parts]
        self.parent_ids = np.asarray(parent_ids, dtype=np.int64)
        self.seed = seed

        all_indices = np.concatenate(self.parts) if self.parts else np.array([], dtype=np.int64)
        if len(all_indices) != len(self.parent_ids) or not np.array_equal(
            np.sort(all_indices), np.arange(len(self.parent_ids))
        ):
            raise ContractError("Partitions must be disjoint and cover every parent index")
        sizes = [len(part) for part in self.parts]
        if max(sizes) - min(sizes) > 1:
            raise ContractError(f"Partition sizes differ by more than one: {sizes}")

    @property
    def k(self):
        return len(self.parts)

    @property
    def ids(self):
        """Sample ids in each part."""
        return [self.parent_ids[part] for part in self.parts]

    def __repr__(self):
        return f"PartitionSet(k={self.k}, sizes={[len(p) for p in self.parts]}, seed={self.seed})"

    def __eq__(self, other):
        if type(self) is not type(other):
            return False
        return (
            self.seed == other.seed
            and np.array_equal(self.parent_ids, other.parent_ids)
            and len(self.parts) == len(other.parts)
            and all(np.array_equal(a, b) for (a, b) in zip(self.parts, other.parts))
        )


class SplitSpec(BaseEstimator):
    """How to split a dataset into train and holdout sets.

    Parameters
    ----------
    train_size : int or float, optional
        Number of training samples, or a fraction in (0, 1). The default is 0.5.
    holdout_size : int, float or None, optional
        Number or fraction of holdout samples. If None, the complement of the
        training set is used. The default is None.
    seed : int, optional
        Seed of the shuffle. The default is 0.
    """

    _parameter_constraints: dict = {
        "train_size": [Interval(Integral, 1, None, closed="left"), Interval(Real, 0, 1, closed="neither")],
        "holdout_size": [Interval(Integral, 1, None, closed="left"), Interval(Real, 0, 1, closed="neither"), None],
        "seed": [Interval(Integral, 0, None, closed="left")],
    }

    def __init__(self, train_size=0.5, *, holdout_size=None, seed=0):
        self.train_size = train_size
        self.holdout_size = holdout_size
        self.seed = seed

    def resolve(self, num_samples):
        """Return (num_train, num_holdout) for a dataset of `num_samples`.

        Examples
        --------
        >>> SplitSpec(train_size=0.5).resolve(10)
        (5, 5)
        >>> SplitSpec(train_size=3, holdout_size=2).resolve(10)
        (3, 2)
        """
        self._validate_params()

        def to_count(size):
            if isinstance(size, numbers.Integral):
                return int(size)
            return int(np.floor(size * num_samples))

        num_train = to_count(self.train_size)
        num_holdout = num_samples - num_train if self.holdout_size is None else to_count(self.holdout_size)

        if num_train < 1 or num_holdout < 1 or num_train + num_holdout > num_samples:
            msg = f"Cannot split {num_samples} samples into {num_train} train and {num_holdout} holdout samples"
            raise ContractError(msg)
        return num_train, num_holdout


def save_mnist_idx(dataset, images_path, labels_path=None, *, shape=(28, 28)):
    """Write a dataset in the IDX format, the inverse of :func:`load_mnist_idx`.

    Pixel values are mapped back with round(255 * value).
    """
    rows, cols = shape
    pixels = np.rint(dataset.samples * 255).astype(np.uint8)
    if pixels.shape[1] != rows * cols:
        raise ContractError(f"Samples have {pixels.shape[1]} features, expected {rows * cols}")

    with open(images_path, "wb") as file:
        file.write(struct.pack(">IIII", IMAGES_MAGIC, len(dataset), rows, cols))
        file.write(pixels.tobytes())

    if labels_path is not None:
        labels = np.zeros(len(dataset), dtype=np.uint8) if dataset.labels is None else dataset.labels
        with open(labels_path, "wb") as file:
            file.write(struct.pack(">II", LABELS_MAGIC, len(dataset)))
            file.write(np.asarray(labels, dtype=np.uint8).tobytes())


def _read_idx(path, magic, num_dims):
    with open(path, "rb") as file:
        content = file.read()

    header_size = 4 * (1 + num_dims)
    if len(content) < header_size:
        raise FormatError(f"{path}: header truncated, {len(content)} bytes", offset=len(content))

    found_magic, *dims = struct.unpack(">" + "I" * (1 + num_dims), content[:header_size])
    if found_magic != magic:
        raise FormatError(f"{path}: magic number 0x{found_magic:08x}, expected 0x{magic:08x}", offset=0)

    expected = int(np.prod(dims, dtype=np.int64))
    payload = content[header_size:]
    if len(payload) < expected:
        raise FormatError(f"{path}: payload truncated, {len(payload)} of {expected} bytes", offset=len(content))
    if len(payload) > expected:
        raise FormatError(f"{path}: {len(payload) - expected} trailing bytes", offset=header_size + expected)

    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def load_mnist_idx(images_path, labels_path=None):
    """Load MNIST images (and labels) from IDX files.

    Each image is flattened row-wise and scaled by 1/255 into [0, 1].

    Parameters
    ----------
    images_path : str
        Path to an uncompressed ``*-images-idx3-ubyte`` file.
    labels_path : str, optional
        Path to the matching ``*-labels-idx1-ubyte`` file.

    Returns
    -------
    Dataset
        With ``source="mnist"``.

    Examples
    --------
    >>> import tempfile
    >>> data = Dataset(np.full((2, 4), 51 / 255), source="mnist", labels=[3, 7])
    >>> with tempfile.TemporaryDirectory() as tmp:
    ...     save_mnist_idx(data, f"{tmp}/img", f"{tmp}/lbl", shape=(2, 2))
    ...     loaded = load_mnist_idx(f"{tmp}/img", f"{tmp}/lbl")
    >>> loaded
    Dataset(source='mnist', num_samples=2, num_features=4)
    >>> loaded.labels
    array([3, 7], dtype=uint8)
    """
    images = _read_idx(images_path, IMAGES_MAGIC, num_dims=3)
    count, rows, cols = images.shape
    if count < 1:
        raise FormatError(f"{images_path}: the file holds no images", offset=4)

    labels = None
    if labels_path is not None:
        labels = _read_idx(labels_path, LABELS_MAGIC, num_dims=1)
        if len(labels) != count:
            raise FormatError(f"{labels_path}: {len(labels)} labels for {count} images", offset=4)

    samples = images.reshape(count, rows * cols).astype(np.float64) / 255.0
    return Dataset(samples, source="mnist", labels=labels)


def load_mnist(directory=DATASET_DIRECTORY, kind="train"):
    """Load the standard MNIST files from `directory`.

    Expects ``train-images-idx3-ubyte`` and ``train-labels-idx1-ubyte`` (or the
    ``t10k`` pair for ``kind="test"``). Nothing is downloaded.
    """
    prefix = {"train": "train", "test": "t10k"}[kind]
    return load_mnist_idx(
        os.path.join(directory, f"{prefix}-images-idx3-ubyte"),
        os.path.join(directory, f"{prefix}-labels-idx1-ubyte"),
    )


def synth_gaussian_ring(n, *, modes=8, radius=2.0, sigma=0.1, num_features=2, seed=0):
    """Points from equally weighted Gaussians spaced evenly on a circle.

    Each point picks a mode uniformly, then adds isotropic noise with standard
    deviation `sigma`. The circle lies in the first two coordinates and any
    further coordinates carry noise only, so a few dozen points in many
    dimensions lie far apart from each other. The cube
    [-(radius + 4 sigma), radius + 4 sigma]^d is mapped affinely onto [0, 1]^d
    and the rare points outside it are clipped.

    Parameters
    ----------
    n : int
        Number of points.
    modes : int, optional
        Number of mixture components. The default is 8.
    radius : float, optional
        Radius of the circle. The default is 2.0.
    sigma : float, optional
        Standard deviation of each component. The default is 0.1.
    num_features : int, optional
        Dimension of the points, at least 2. The default is 2.
    seed : int or SeededRNG, optional
        The default is 0.

    Returns
    -------
    Dataset
        With ``source="synthetic"`` and the mode index as label.

    Examples
    --------
    >>> data = synth_gaussian_ring(5, modes=1, radius=0.0, sigma=0.01, seed=1)
    >>> data.samples.shape
    (5, 2)
    >>> bool(np.all((data.samples > 0.3) & (data.samples < 0.7)))
    True
    >>> synth_gaussian_ring(5, num_features=32).samples.shape
    (5, 32)
    """
    n = check_scalar(n, name="n", target_type=numbers.Integral, min_val=1)
    modes = check_scalar(modes, name="modes", target_type=numbers.Integral, min_val=1)
    radius = check_scalar(radius, name="radius", target_type=numbers.Real, min_val=0)
    sigma = check_scalar(sigma, name="sigma", target_type=numbers.Real, min_val=0, include_boundaries="neither")
    num_features = check_scalar(num_features, name="num_features", target_type=numbers.Integral, min_val=2)
    rng = as_rng(seed)

    mode = rng.integers(modes, size=n)
    angles = 2 * np.pi * np.arange(modes) / modes
    centers = np.zeros((modes, num_features))
    centers[:, 0], centers[:, 1] = radius * np.cos(angles), radius * np.sin(angles)
    points = centers[mode] + sigma * rng.normal((n, num_features))

    half_width = radius + 4 * sigma
    samples = np.clip((points + half_width) / (2 * half_width), 0.0, 1.0)
    return Dataset(samples, source="synthetic", labels=mode)


def split(dataset, spec):
    """Split into disjoint train and holdout datasets, reproducibly per seed.

    Examples
    --------
    >>> data = Dataset(np.arange(20.0).reshape(10, 2), source="synthetic")
    >>> train, holdout = split(data, SplitSpec(train_size=6, holdout_size=4, seed=1))
    >>> sorted(np.concatenate([train.ids, holdout.ids]).tolist()) == list(range(10))
    True
    """
    num_train, num_holdout = spec.resolve(len(dataset))
    train_idx, holdout_idx = train_test_split(
        np.arange(len(dataset)),
        train_size=num_train,
        test_size=num_holdout,
        random_state=spec.seed,
        shuffle=True,
    )
    return dataset.subset(train_idx), dataset.subset(holdout_idx)


def partition(train, k, seed, *, stratified=False):
    """Shuffle by seed, then deal indices round-robin into k disjoint parts.

    Parameters
    ----------
    train : Dataset
        The training set.
    k : int
        Number of partitions, 1 <= k <= len(train).
    seed : int or SeededRNG
        Seed of the shuffle.
    stratified : bool, optional
        If True, the shuffled indices are stably sorted by label before being
        dealt, so every part gets an even share of each class. The default is
        False.

    Returns
    -------
    PartitionSet

    Examples
    --------
    >>> data = Dataset(np.zeros((10, 1)), source="synthetic")
    >>> [len(p) for p in partition(data, k=3, seed=0).parts]
    [4, 3, 3]
    >>> bool(np.array_equal(np.sort(partition(data, k=1, seed=0).parts[0]), np.arange(10)))
    True
    """
    k = check_scalar(k, name="k", target_type=numbers.Integral, min_val=1)
    if k > len(train):
        raise ContractError(f"Cannot split {len(train)} samples into k={k} partitions")

    rng = as_rng(seed)
    order = rng.permutation(len(train))
    if stratified:
        if train.labels is None:
            raise ContractError("Stratified partitioning needs labels")
        order = order[np.argsort(train.labels[order], kind="stable")]

    parts = [order[i::k] for i in range(k)]
    return PartitionSet(parts, parent_ids=train.ids, seed=getattr(seed, "seed", seed))


if __name__ == "__main__":
    import pytest

    pytest.main(args=[__file__, "--capture=sys", "--doctest-modules", "--maxfail=1"])
