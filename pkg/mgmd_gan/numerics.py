#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Dense float64 arithmetic with reverse-mode differentiation.

A :class:`Tape` records primitive operations as they are evaluated. Calling
:meth:`Tape.backward` on a scalar node replays the records in reverse and
returns one gradient per parameter leaf.

>>> tape = Tape()
>>> w = tape.parameter(np.array([[2.0]]))
>>> x = tape.constant(np.array([[3.0]]))
>>> loss = tape.forward("mean", tape.forward("matmul", x, w))
>>> float(loss.value)
6.0
>>> tape.backward(loss)
[array([[3.]])]

"""

import numbers
import zlib
from abc import ABC, abstractmethod
from collections import namedtuple

import numpy as np
from scipy import special
from sklearn.utils import check_scalar

from mgmd_gan.exceptions import ContractError, DimensionError, NumericError

LOG_CLAMP = 1e-12

Node = namedtuple("Node", ["id", "value"])
Record = namedtuple("Record", ["op_id", "kind", "inputs", "output", "kwargs", "cache"])


# =============================================================================
# PRIMITIVE OPERATIONS
# =============================================================================


class Op(ABC):
    """A differentiable primitive. Subclasses are stateless."""

    num_inputs = 1

    @abstractmethod
    def forward(self, *values, **kwargs):
        # Returns (output, cache)
        pass

    @abstractmethod
    def backward(self, grad, cache, *values, **kwargs):
        # Returns one gradient per input
        pass

    def check_shapes(self, *values, **kwargs):
        pass


class MatMul(Op):
    name = "matmul"
    num_inputs = 2

    def check_shapes(self, a, b):
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise DimensionError(f"matmul of shapes {a.shape} and {b.shape}")

    def forward(self, a, b):
        return a @ b, None

    def backward(self, grad, cache, a, b):
        return grad @ b.T, a.T @ grad


class Add(Op):
    name = "add"
    num_inputs = 2

    def check_shapes(self, a, b):
        if a.shape != b.shape:
            raise DimensionError(f"add of shapes {a.shape} and {b.shape}")

    def forward(self, a, b):
        return a + b, None

    def backward(self, grad, cache, a, b):
        return grad, grad


class Sub(Add):
    name = "sub"

    def check_shapes(self, a, b):
        if a.shape != b.shape:
            raise DimensionError(f"sub of shapes {a.shape} and {b.shape}")

    def forward(self, a, b):
        return a - b, None

    def backward(self, grad, cache, a, b):
        return grad, -grad


class MulScalar(Op):
    name = "mul_scalar"

    def forward(self, a, *, c):
        return a * c, None

    def backward(self, grad, cache, a, *, c):
        return (grad * c,)


class RowBroadcastAdd(Op):
    """Add a bias vector of length n to every row of a (b x n) matrix."""

    name = "row_broadcast_add"
    num_inputs = 2

    def check_shapes(self, a, bias):
        if a.ndim != 2 or bias.ndim != 1 or a.shape[1] != bias.shape[0]:
            raise DimensionError(f"row_broadcast_add of shapes {a.shape} and {bias.shape}")

    def forward(self, a, bias):
        return a + bias[None, :], None

    def backward(self, grad, cache, a, bias):
        return grad, grad.sum(axis=0)


class ReLU(Op):
    name = "relu"

    def forward(self, a):
        return np.maximum(a, 0.0), None

    def backward(self, grad, cache, a):
        return (grad * (a > 0),)


class LeakyReLU(Op):
    name = "leaky_relu"

    def forward(self, a, *, alpha=0.2):
        return np.where(a > 0, a, alpha * a), None

    def backward(self, grad, cache, a, *, alpha=0.2):
        return (grad * np.where(a > 0, 1.0, alpha),)


class Sigmoid(Op):
    name = "sigmoid"

    def forward(self, a):
        out = special.expit(a)
        return out, out

    def backward(self, grad, out, a):
        return (grad * out * (1.0 - out),)


class Tanh(Op):
    name = "tanh"

    def forward(self, a):
        out = np.tanh(a)
        return out, out

    def backward(self, grad, out, a):
        return (grad * (1.0 - out**2),)


class Log(Op):
    """Natural logarithm of the input clamped to at least LOG_CLAMP."""

    name = "log"

    def forward(self, a):
        clamped = np.maximum(a, LOG_CLAMP)
        return np.log(clamped), clamped

    def backward(self, grad, clamped, a):
        # The clamped region is flat
        return (np.where(a >= LOG_CLAMP, grad / clamped, 0.0),)


class Mean(Op):
    """Mean over every entry, producing a 0-dimensional array."""

    name = "mean"

    def check_shapes(self, a):
        if a.size == 0:
            raise DimensionError("mean of an empty tensor")

    def forward(self, a):
        return np.asarray(np.mean(a)), None

    def backward(self, grad, cache, a):
        return (np.full_like(a, grad / a.size),)


class Clamp(Op):
    name = "clamp"

    def forward(self, a, *, low=-np.inf, high=np.inf):
        return np.clip(a, low, high), None

    def backward(self, grad, cache, a, *, low=-np.inf, high=np.inf):
        return (grad * ((a >= low) & (a <= high)),)


# Dict comprehension instead of hard-coding the names again here
OPS = {op.name: op() for op in [MatMul, Add, Sub, MulScalar, RowBroadcastAdd, ReLU, LeakyReLU, Sigmoid, Tanh, Log, Mean, Clamp]}


# =============================================================================
# TAPE
# =============================================================================


class Tape:
    """Record of evaluated operations, in topological order.

    Every node gets an integer id. Leaves are created with :meth:`parameter`
    (gradients are returned by :meth:`backward`) or :meth:`constant`
    (gradients are discarded). A tape belongs to one thread of work.

    Examples
    --------
    >>> tape = Tape()
    >>> a = tape.constant(np.array([[1.0, 2.0], [3.0, 4.0]]))
    >>> b = tape.constant(np.array([[1.0], [1.0]]))
    >>> tape.forward("matmul", a, b).value
    array([[3.],
           [7.]])
    >>> float(tape.forward("sigmoid", tape.constant(np.array(0.0))).value)
    0.5
    >>> float(tape.forward("log", tape.constant(np.array(1e-20))).value) == float(np.log(1e-12))
    True
    """

    def __init__(self):
        self.values = []
        self.records = []
        self.parameters = []

    def __len__(self):
        return len(self.values)

    def _new_node(self, value):
        self.values.append(value)
        return Node(len(self.values) - 1, value)

    def _as_array(self, value):
        value = np.array(value, dtype=np.float64)
        if not np.all(np.isfinite(value)):
            raise NumericError(f"leaf {len(self.values)} has non-finite entries")
        return value

    def parameter(self, value):
        """Create a leaf whose gradient is returned by :meth:`backward`."""
        node = self._new_node(self._as_array(value))
        self.parameters.append(node.id)
        return node

    def constant(self, value):
        """Create a leaf that is not differentiated."""
        return self._new_node(self._as_array(value))

    def forward(self, op_kind, *inputs, **kwargs):
        """Evaluate a primitive on recorded nodes and record the result.

        Parameters
        ----------
        op_kind : str
            A key of :data:`OPS`.
        *inputs : Node
            Nodes previously created on this tape.
        **kwargs
            Static arguments, e.g. ``alpha`` for leaky_relu or ``c`` for
            mul_scalar.

        Returns
        -------
        Node
            The recorded output node.
        """
        try:
            op = OPS[op_kind]
        except KeyError:
            raise ContractError(f"Unknown op '{op_kind}'. Choose from: {sorted(OPS)}") from None

        if len(inputs) != op.num_inputs:
            raise ContractError(f"Op '{op_kind}' takes {op.num_inputs} inputs, got {len(inputs)}")
        if any(node.id >= len(self.values) or self.values[node.id] is not node.value for node in inputs):
            raise ContractError(f"Op '{op_kind}' received a node from another tape")

        values = [node.value for node in inputs]
        op.check_shapes(*values, **kwargs)
        out, cache = op.forward(*values, **kwargs)

        op_id = len(self.records)
        if not np.all(np.isfinite(out)):
            raise NumericError(f"op {op_id} ({op_kind}) produced non-finite values", op_id=op_id)

        node = self._new_node(out)
        self.records.append(Record(op_id, op_kind, tuple(n.id for n in inputs), node.id, kwargs, cache))
        return node

    def backward(self, loss):
        """Gradients of a scalar node with respect to every parameter leaf.

        The tape is not modified, so repeated calls give identical results.

        Returns
        -------
        list of np.ndarray
            One gradient per parameter, in creation order, each with the shape
            of its parameter.
        """
        if loss.value.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.value.shape}")

        grads = {loss.id: np.ones_like(loss.value)}
        for record in reversed(self.records):
            grad = grads.get(record.output)
            if grad is None:
                continue

            values = [self.values[i] for i in record.inputs]
            input_grads = OPS[record.kind].backward(grad, record.cache, *values, **record.kwargs)

            for node_id, input_grad in zip(record.inputs, input_grads):
                if node_id in grads:
                    grads[node_id] = grads[node_id] + input_grad
                else:
                    grads[node_id] = input_grad

        return [np.array(grads.get(i, np.zeros_like(self.values[i])), dtype=np.float64) for i in self.parameters]


def numerical_gradient(function, params, h=1e-5):
    """Central finite-difference gradient of `function(params) -> float`.

    Examples
    --------
    >>> grads = numerical_gradient(lambda p: float(np.sum(p[0] ** 2)), [np.array([1.0, -2.0])])
    >>> np.allclose(grads[0], [2.0, -4.0])
    True
    """
    params = [np.array(p, dtype=np.float64) for p in params]
    grads = []
    for p in params:
        grad = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            original = p[idx]
            p[idx] = original + h
            f_plus = function(params)
            p[idx] = original - h
            f_minus = function(params)
            p[idx] = original
            grad[idx] = (f_plus - f_minus) / (2 * h)
        grads.append(grad)
    return grads


def relative_error(grads_a, grads_b):
    """Relative error ||a - b|| / max(||a||, ||b||) over stacked gradients.

    Examples
    --------
    >>> relative_error([np.array([1.0, 1.0])], [np.array([1.0, 1.0])])
    0.0
    """
    a = np.concatenate([np.ravel(g) for g in grads_a])
    b = np.concatenate([np.ravel(g) for g in grads_b])
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    if scale == 0:
        return 0.0
    return float(np.linalg.norm(a - b) / scale)


# =============================================================================
# OPTIMIZERS
# =============================================================================


class OptimizerState(ABC):
    """Base class for first-order optimizers over a list of parameter arrays."""

    kind = None

    def __init__(self, learning_rate):
        self.learning_rate = check_scalar(
            learning_rate,
            name="learning_rate",
            target_type=numbers.Real,
            min_val=0,
            include_boundaries="neither",
        )
        self.step_count = 0

    def _check(self, params, grads):
        if len(params) != len(grads):
            raise ContractError(f"Got {len(params)} parameters but {len(grads)} gradients")
        for p, g in zip(params, grads):
            if np.shape(p) != np.shape(g):
                raise ContractError(f"Parameter of shape {np.shape(p)} got gradient of shape {np.shape(g)}")

    @abstractmethod
    def step(self, params, grads):
        pass


class SGD(OptimizerState):
    """Plain gradient descent: p <- p - lr * g.

    Examples
    --------
    >>> SGD(learning_rate=0.1).step([np.array([1.0])], [np.array([2.0])])
    [array([0.8])]
    """

    kind = "sgd"

    def step(self, params, grads):
        self._check(params, grads)
        self.step_count += 1
        return [p - self.learning_rate * g for p, g in zip(params, grads)]


class Adam(OptimizerState):
    """Adam with bias-corrected first and second moments.

    Examples
    --------
    >>> adam = Adam(learning_rate=0.1)
    >>> adam.step([np.array([1.0])], [np.array([0.0])])
    [array([1.])]
    >>> adam.step_count
    1
    """

    kind = "adam"

    def __init__(self, learning_rate=2e-4, beta1=0.5, beta2=0.999, epsilon=1e-8):
        super().__init__(learning_rate)
        self.beta1 = check_scalar(beta1, "beta1", numbers.Real, min_val=0, max_val=1, include_boundaries="left")
        self.beta2 = check_scalar(beta2, "beta2", numbers.Real, min_val=0, max_val=1, include_boundaries="left")
        self.epsilon = check_scalar(epsilon, "epsilon", numbers.Real, min_val=0, include_boundaries="neither")
        self.first_moments = None
        self.second_moments = None

    def step(self, params, grads):
        self._check(params, grads)
        if self.first_moments is None:
            self.first_moments = [np.zeros_like(p, dtype=np.float64) for p in params]
            self.second_moments = [np.zeros_like(p, dtype=np.float64) for p in params]
        self._check(self.first_moments, params)

        self.step_count += 1
        t = self.step_count
        updated = []
        for idx, (p, g) in enumerate(zip(params, grads)):
            m = self.beta1 * self.first_moments[idx] + (1 - self.beta1) * g
            v = self.beta2 * self.second_moments[idx] + (1 - self.beta2) * g**2
            self.first_moments[idx], self.second_moments[idx] = m, v

            m_hat = m / (1 - self.beta1**t)
            v_hat = v / (1 - self.beta2**t)
            updated.append(p - self.learning_rate * m_hat / (np.sqrt(v_hat) + self.epsilon))
        return updated


OPTIMIZERS = {optimizer.kind: optimizer for optimizer in [SGD, Adam]}


def optimizer_step(state, params, grads):
    """Apply one update of `state` and return the new parameter list."""
    return state.step(params, grads)


def clip_weights(params, c):
    """Clamp every entry of every array to [-c, c].

    Examples
    --------
    >>> clip_weights([np.array([0.5, -0.005, -2.0])], c=0.01)
    [array([ 0.01 , -0.005, -0.01 ])]
    """
    c = check_scalar(c, name="c", target_type=numbers.Real, min_val=0, include_boundaries="neither")
    return [np.clip(p, -c, c) for p in params]


# =============================================================================
# RANDOM NUMBERS
# =============================================================================


def _key_to_int(component):
    if isinstance(component, numbers.Integral):
        return int(component)
    return zlib.crc32(str(component).encode("utf-8"))


class SeededRNG:
    """Deterministic stream of uniform and standard normal variates.

    Uniforms come from a PCG64 generator seeded through a
    :class:`numpy.random.SeedSequence`. Normals are produced from pairs of
    uniforms with the Box-Muller transform,

        r = sqrt(-2 log(1 - u1)),  z = (r cos(2 pi u2), r sin(2 pi u2)),

    interleaved, so the normal stream only depends on the uniform stream.

    Examples
    --------
    >>> a, b = SeededRNG(7), SeededRNG(7)
    >>> bool(np.all(a.uniform(100) == b.uniform(100)))
    True
    >>> SeededRNG(7).normal((2, 3)).shape
    (2, 3)
    """

    def __init__(self, seed=0, *, spawn_key=()):
        self.seed = seed
        self.spawn_key = tuple(spawn_key)
        seed_sequence = np.random.SeedSequence(entropy=seed, spawn_key=self.spawn_key)
        self._generator = np.random.Generator(np.random.PCG64(seed_sequence))

    def __repr__(self):
        return f"SeededRNG(seed={self.seed}, spawn_key={self.spawn_key})"

    def substream(self, *key):
        """An independent stream derived from this stream's seed and `key`.

        Substreams do not depend on how much of the parent stream was used.

        Examples
        --------
        >>> rng = SeededRNG(1)
        >>> first = rng.substream("pair", 0).uniform(3)
        >>> _ = rng.uniform(10)
        >>> bool(np.all(first == rng.substream("pair", 0).uniform(3)))
        True
        """
        return SeededRNG(self.seed, spawn_key=self.spawn_key + tuple(_key_to_int(c) for c in key))

    def uniform(self, size=None):
        """Uniform variates on [0, 1)."""
        return self._generator.random(size)

    def normal(self, size):
        """Standard normal variates via Box-Muller."""
        shape = (size,) if isinstance(size, numbers.Integral) else tuple(size)
        count = int(np.prod(shape, dtype=np.int64))
        num_pairs = (count + 1) // 2

        u1 = 1.0 - self.uniform(num_pairs)  # In (0, 1]
        u2 = self.uniform(num_pairs)
        radius = np.sqrt(-2.0 * np.log(u1))
        angle = 2.0 * np.pi * u2
        z = np.column_stack([radius * np.cos(angle), radius * np.sin(angle)]).ravel()
        return z[:count].reshape(shape)

    def integers(self, high, size):
        """Integers uniform on {0, ..., high - 1}, drawn by flooring uniforms.

        The number of uniforms consumed does not depend on `high`.
        """
        high = check_scalar(high, name="high", target_type=numbers.Integral, min_val=1)
        values = np.floor(self.uniform(size) * high).astype(np.int64)
        return np.minimum(values, high - 1)

    def permutation(self, n):
        """A random permutation of range(n).

        Examples
        --------
        >>> sorted(SeededRNG(3).permutation(5).tolist())
        [0, 1, 2, 3, 4]
        """
        return np.argsort(self.uniform(n), kind="stable")


def as_rng(seed):
    """Return `seed` if it already is a SeededRNG, else wrap it."""
    if isinstance(seed, SeededRNG):
        return seed
    if seed is None:
        raise ContractError("A seed is required. Randomness is never implicit.")
    return SeededRNG(seed)


def seeded_rng(seed):
    """Create a deterministic random stream from an integer seed."""
    return SeededRNG(seed)


if __name__ == "__main__":
    import pytest

    pytest.main(args=[__file__, "--capture=sys", "--doctest-modules", "--maxfail=1"])
