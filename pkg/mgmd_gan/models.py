#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Generator and discriminator multilayer perceptrons.

Networks are described by an :class:`MlpSpec` and their weights live in an
:class:`MlpParams`. Forward passes are evaluated on a :class:`Tape`, so the
same code computes values for evaluation and gradients for training.

>>> spec = MlpSpec((2, 4, 1))
>>> params = init_params(spec, seed=0)
>>> params.shapes
[(2, 4), (4,), (4, 1), (1,)]

"""

from numbers import Integral, Real

import numpy as np
from sklearn.base import BaseEstimator, clone
from sklearn.utils._param_validation import Interval, StrOptions

from mgmd_gan.exceptions import ContractError, DimensionError
from mgmd_gan.numerics import Tape, as_rng

EVAL_BATCH_SIZE = 4096


class MlpSpec(BaseEstimator):
    """Layer widths and activations of a fully connected network.

    Parameters
    ----------
    widths : tuple of int
        Input width followed by the output width of every layer. At least two
        entries (one layer).
    hidden_activation : str, optional
        One of "leaky_relu", "relu", "tanh" or "sigmoid". The default is
        "leaky_relu".
    alpha : float, optional
        Negative slope of the leaky ReLU. The default is 0.2.
    output_activation : str, optional
        One of "sigmoid", "tanh" or "identity". Discriminators ignore this and
        use the activation dictated by the objective. The default is "sigmoid".

    Examples
    --------
    >>> MlpSpec((8, 32, 32, 2))
    MlpSpec(widths=(8, 32, 32, 2))
    >>> MlpSpec((8, 32, 32, 2)).num_layers
    3
    """

    _parameter_constraints: dict = {
        "widths": [list, tuple],
        "hidden_activation": [StrOptions({"leaky_relu", "relu", "tanh", "sigmoid"})],
        "alpha": [Interval(Real, 0, 1, closed="both")],
        "output_activation": [StrOptions({"sigmoid", "tanh", "identity"})],
    }

    def __init__(self, widths=(2, 32, 32, 1), *, hidden_activation="leaky_relu", alpha=0.2, output_activation="sigmoid"):
        self.widths = widths
        self.hidden_activation = hidden_activation
        self.alpha = alpha
        self.output_activation = output_activation

    def _validate_params(self):
        super()._validate_params()
        if len(self.widths) < 2:
            raise ContractError(f"An MLP needs at least one layer, got widths {self.widths}")
        if not all(isinstance(w, Integral) and w >= 1 for w in self.widths):
            raise ContractError(f"Widths must be positive integers, got {self.widths}")

    @property
    def num_layers(self):
        return len(self.widths) - 1

    def to_dict(self):
        params = self.get_params()
        params["widths"] = [int(w) for w in self.widths]
        return params

    @classmethod
    def from_dict(cls, params):
        params = dict(params)
        params["widths"] = tuple(params["widths"])
        return cls(**params)

    def __eq__(self, other):
        if type(self) is not type(other):
            return False
        return self.to_dict() == other.to_dict()


class NoisePrior(BaseEstimator):
    """The latent distribution p_z of the generators.

    Examples
    --------
    >>> from mgmd_gan.numerics import SeededRNG
    >>> NoisePrior(latent_dim=8).sample(5, SeededRNG(0)).shape
    (5, 8)
    """

    _parameter_constraints: dict = {
        "latent_dim": [Interval(Integral, 1, None, closed="left")],
        "kind": [StrOptions({"normal"})],
    }

    def __init__(self, latent_dim=8, *, kind="normal"):
        self.latent_dim = latent_dim
        self.kind = kind

    def sample(self, n, rng):
        self._validate_params()
        return as_rng(rng).normal((n, self.latent_dim))

    def __eq__(self, other):
        if type(self) is not type(other):
            return False
        return self.get_params() == other.get_params()


# Architectures. MNIST images are 28 x 28 = 784 pixels in [0, 1].
MNIST_GENERATOR = MlpSpec((64, 128, 256, 784), output_activation="sigmoid")
MNIST_DISCRIMINATOR = MlpSpec((784, 256, 128, 1), output_activation="identity")
TOY_GENERATOR = MlpSpec((8, 32, 32, 2), output_activation="sigmoid")
TOY_DISCRIMINATOR = MlpSpec((2, 32, 32, 1), output_activation="identity")


def default_specs(num_features, latent_dim=None):
    """Return fresh (generator spec, discriminator spec, prior) for a data width.

    Examples
    --------
    >>> generator, discriminator, prior = default_specs(784)
    >>> generator.widths, prior.latent_dim
    ((64, 128, 256, 784), 64)
    >>> default_specs(2)[1].widths
    (2, 32, 32, 1)
    """
    if num_features == 784:
        generator, discriminator = clone(MNIST_GENERATOR), clone(MNIST_DISCRIMINATOR)
    else:
        generator, discriminator = clone(TOY_GENERATOR), clone(TOY_DISCRIMINATOR)
        generator.set_params(widths=(*generator.widths[:-1], num_features))
        discriminator.set_params(widths=(num_features, *discriminator.widths[1:]))

    if latent_dim is not None:
        generator.set_params(widths=(latent_dim, *generator.widths[1:]))

    return generator, discriminator, NoisePrior(latent_dim=generator.widths[0])


class MlpParams:
    """Weights and biases of one network, together with its spec.

    Examples
    --------
    >>> params = init_params(MlpSpec((3, 2)), seed=0)
    >>> params == params.copy()
    True
    >>> [a.shape for a in params.arrays]
    [(3, 2), (2,)]
    """

    def __init__(self, spec, weights, biases):
        if len(weights) != spec.num_layers or len(biases) != spec.num_layers:
            raise ContractError(f"{spec} has {spec.num_layers} layers, got {len(weights)} weights")
        for layer, (W, b) in enumerate(zip(weights, biases)):
            fan_in, fan_out = spec.widths[layer], spec.widths[layer + 1]
            if np.shape(W) != (fan_in, fan_out) or np.shape(b) != (fan_out,):
                raise DimensionError(f"Layer {layer} expects shapes {(fan_in, fan_out)} and {(fan_out,)}")

        self.spec = spec
        self.weights = [np.asarray(W, dtype=np.float64) for W in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]

    @property
    def arrays(self):
        """Parameters as a flat list [W1, b1, W2, b2, ...]."""
        return [array for pair in zip(self.weights, self.biases) for array in pair]

    @property
    def shapes(self):
        return [array.shape for array in self.arrays]

    @classmethod
    def from_arrays(cls, spec, arrays):
        return cls(spec, list(arrays[0::2]), list(arrays[1::2]))

    def copy(self):
        return MlpParams(self.spec, [W.copy() for W in self.weights], [b.copy() for b in self.biases])

    def max_abs(self):
        return max(float(np.max(np.abs(array))) for array in self.arrays)

    def __eq__(self, other):
        if type(self) is not type(other):
            return False
        return self.spec == other.spec and all(np.array_equal(a, b) for (a, b) in zip(self.arrays, other.arrays))

    def __repr__(self):
        return f"MlpParams(widths={tuple(self.spec.widths)})"


def init_params(spec, seed):
    """He-initialized weights N(0, 2 / fan_in) and zero biases.

    Examples
    --------
    >>> params = init_params(MlpSpec((2, 4, 1)), seed=1)
    >>> [float(b.sum()) for b in params.biases]
    [0.0, 0.0]
    """
    spec._validate_params()
    rng = as_rng(seed)

    weights, biases = [], []
    for fan_in, fan_out in zip(spec.widths[:-1], spec.widths[1:]):
        weights.append(rng.normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in))
        biases.append(np.zeros(fan_out))
    return MlpParams(spec, weights, biases)


def bind_params(tape, params, *, trainable):
    """Put the arrays of `params` on a tape, as parameters or constants."""
    create = tape.parameter if trainable else tape.constant
    return [create(array) for array in params.arrays]


def _activate(tape, node, activation, alpha):
    if activation == "identity":
        return node
    if activation == "leaky_relu":
        return tape.forward("leaky_relu", node, alpha=alpha)
    return tape.forward(activation, node)


def mlp_forward(tape, spec, nodes, x, *, output_activation=None):
    """Record a forward pass of the network on a tape.

    Parameters
    ----------
    tape : Tape
    spec : MlpSpec
    nodes : list of Node
        Tape nodes of [W1, b1, W2, b2, ...], see :func:`bind_params`.
    x : Node
        Input node of shape (batch, widths[0]).
    output_activation : str, optional
        Overrides ``spec.output_activation``.

    Returns
    -------
    Node
        Output of shape (batch, widths[-1]).
    """
    if x.value.ndim != 2 or x.value.shape[1] != spec.widths[0]:
        raise DimensionError(f"Network expects inputs with {spec.widths[0]} columns, got shape {x.value.shape}")
    output_activation = spec.output_activation if output_activation is None else output_activation

    h = x
    for layer in range(spec.num_layers):
        W, b = nodes[2 * layer], nodes[2 * layer + 1]
        h = tape.forward("row_broadcast_add", tape.forward("matmul", h, W), b)
        is_last = layer == spec.num_layers - 1
        h = _activate(tape, h, output_activation if is_last else spec.hidden_activation, spec.alpha)
    return h


def _evaluate(params, inputs, output_activation=None):
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[1] != params.spec.widths[0]:
        msg = f"Network expects inputs with {params.spec.widths[0]} columns, got shape {inputs.shape}"
        raise DimensionError(msg)

    outputs = []
    for start in range(0, max(len(inputs), 1), EVAL_BATCH_SIZE):
        tape = Tape()
        nodes = bind_params(tape, params, trainable=False)
        x = tape.constant(inputs[start : start + EVAL_BATCH_SIZE])
        outputs.append(mlp_forward(tape, params.spec, nodes, x, output_activation=output_activation).value)
    return np.vstack(outputs)


def generator_forward(params, z):
    """Map latent noise of shape (b, latent_dim) to samples of shape (b, d).

    Examples
    --------
    >>> spec = MlpSpec((3, 2))
    >>> zero = MlpParams(spec, [np.zeros((3, 2))], [np.zeros(2)])
    >>> generator_forward(zero, np.ones((1, 3)))
    array([[0.5, 0.5]])
    """
    return _evaluate(params, z)


def discriminator_forward(params, x, objective):
    """Score samples of shape (b, d), returning a vector of length b.

    JS discriminators end in a sigmoid, Wasserstein critics are linear.

    Examples
    --------
    >>> spec = MlpSpec((2, 1))
    >>> zero = MlpParams(spec, [np.zeros((2, 1))], [np.zeros(1)])
    >>> discriminator_forward(zero, np.ones((3, 2)), "js")
    array([0.5, 0.5, 0.5])
    >>> discriminator_forward(zero, np.ones((2, 2)), "wasserstein")
    array([0., 0.])
    """
    from mgmd_gan.objectives import as_objective

    objective = as_objective(objective)
    return _evaluate(params, x, output_activation=objective.discriminator_activation).ravel()


def sample_ensemble(generators, prior, n, seed):
    """Draw n samples from the uniform mixture of the generators.

    Every sample picks a generator uniformly at random, then the latent
    vectors are drawn for all samples at once. The random stream consumed does
    not depend on the number of generators.

    Examples
    --------
    >>> spec = MlpSpec((2, 2))
    >>> generators = [init_params(spec, seed=s) for s in range(3)]
    >>> sample_ensemble(generators, NoisePrior(latent_dim=2), n=7, seed=0).shape
    (7, 2)
    """
    if len(generators) == 0:
        raise ContractError("Cannot sample from an empty list of generators")
    rng = as_rng(seed)

    choice = rng.integers(len(generators), size=n)
    z = prior.sample(n, rng)

    samples = np.empty((n, generators[0].spec.widths[-1]))
    for j, generator in enumerate(generators):
        mask = choice == j
        if np.any(mask):
            samples[mask] = generator_forward(generator, z[mask])
    return samples


def sample_generator(generator, prior, n, seed):
    """Draw n samples from a single generator."""
    return sample_ensemble([generator], prior, n, seed)


if __name__ == "__main__":
    import pytest

    pytest.main(args=[__file__, "--capture=sys", "--doctest-modules", "--maxfail=1"])
