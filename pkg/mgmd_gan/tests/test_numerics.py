#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Tests for the tape, the optimizers and the seeded random streams.
"""

import numpy as np
import pytest

from mgmd_gan.exceptions import ContractError, DimensionError, NumericError
from mgmd_gan.models import MlpSpec, bind_params, init_params, mlp_forward
from mgmd_gan.numerics import (
    OPS,
    SGD,
    Adam,
    SeededRNG,
    Tape,
    as_rng,
    clip_weights,
    numerical_gradient,
    relative_error,
)
from mgmd_gan.objectives import Objective, discriminator_objective, generator_objective


def smooth_spec(widths):
    # tanh has no kinks, so finite differences are accurate everywhere
    return MlpSpec(widths, hidden_activation="tanh", output_activation="identity")


class TestGradientsAgainstFiniteDifferences:
    @pytest.mark.parametrize("seed", list(range(50)))
    @pytest.mark.parametrize("kind", ["js", "wasserstein"])
    def test_that_discriminator_gradients_match_finite_differences(self, seed, kind):
        rng = np.random.default_rng(seed)
        objective = Objective(kind)
        discriminator = init_params(smooth_spec((3, 4, 1)), seed=seed)
        real = rng.normal(size=(5, 3))
        fake = rng.normal(size=(6, 3))

        def record(arrays, trainable):
            tape = Tape()
            nodes = [tape.parameter(a) if trainable else tape.constant(a) for a in arrays]
            act = objective.discriminator_activation
            real_scores = mlp_forward(tape, discriminator.spec, nodes, tape.constant(real), output_activation=act)
            fake_scores = mlp_forward(tape, discriminator.spec, nodes, tape.constant(fake), output_activation=act)
            return tape, discriminator_objective(tape, objective, real_scores, fake_scores)

        tape, value = record(discriminator.arrays, trainable=True)
        analytic = tape.backward(value)
        numeric = numerical_gradient(lambda arrays: float(record(arrays, trainable=False)[1].value), discriminator.arrays)

        assert relative_error(analytic, numeric) < 1e-4

    @pytest.mark.parametrize("seed", list(range(25)))
    @pytest.mark.parametrize("kind", ["js", "wasserstein"])
    @pytest.mark.parametrize("mode", ["minimax", "non_saturating"])
    def test_that_generator_gradients_match_finite_differences(self, seed, kind, mode):
        rng = np.random.default_rng(seed)
        objective = Objective(kind, generator_mode=mode)
        generator = init_params(MlpSpec((2, 3, 3), hidden_activation="tanh"), seed=seed)
        discriminators = [init_params(smooth_spec((3, 4, 1)), seed=seed + 100 + j) for j in range(2)]
        z = rng.normal(size=(4, 2))

        def record(arrays, trainable):
            tape = Tape()
            nodes = [tape.parameter(a) if trainable else tape.constant(a) for a in arrays]
            fake = mlp_forward(tape, generator.spec, nodes, tape.constant(z))
            scores = [
                mlp_forward(
                    tape,
                    d.spec,
                    bind_params(tape, d, trainable=False),
                    fake,
                    output_activation=objective.discriminator_activation,
                )
                for d in discriminators
            ]
            loss, _ = generator_objective(tape, objective, scores, k=2)
            return tape, loss

        tape, loss = record(generator.arrays, trainable=True)
        analytic = tape.backward(loss)
        numeric = numerical_gradient(lambda arrays: float(record(arrays, trainable=False)[1].value), generator.arrays)

        assert relative_error(analytic, numeric) < 1e-4

    @pytest.mark.parametrize("op_kind", ["relu", "leaky_relu", "sigmoid", "tanh", "log", "clamp"])
    def test_that_elementwise_op_gradients_match_finite_differences(self, op_kind):
        rng = np.random.default_rng(42)
        # Stay away from the kinks at 0 (and the clamp bounds)
        signs = rng.choice([-1.0, 1.0], size=(4, 3))
        x = signs * rng.uniform(0.1, 2.0, size=(4, 3))
        if op_kind == "log":
            x = np.abs(x)
        kwargs = {"low": -0.05, "high": 0.05} if op_kind == "clamp" else {}
        if op_kind == "clamp":
            x = signs * rng.uniform(0.1, 2.0, size=(4, 3))
            x[0, 0] = 0.01

        def record(arrays, trainable):
            tape = Tape()
            leaf = tape.parameter(arrays[0]) if trainable else tape.constant(arrays[0])
            return tape, tape.forward("mean", tape.forward(op_kind, leaf, **kwargs))

        tape, value = record([x], trainable=True)
        analytic = tape.backward(value)
        numeric = numerical_gradient(lambda arrays: float(record(arrays, trainable=False)[1].value), [x])
        assert relative_error(analytic, numeric) < 1e-6


class TestTape:
    def test_that_unknown_ops_are_rejected(self):
        tape = Tape()
        with pytest.raises(ContractError, match="Unknown op"):
            tape.forward("softmax", tape.constant([1.0]))

    def test_that_wrong_arity_is_rejected(self):
        tape = Tape()
        a = tape.constant([[1.0]])
        with pytest.raises(ContractError):
            tape.forward("matmul", a)

    def test_that_nodes_from_another_tape_are_rejected(self):
        tape, other = Tape(), Tape()
        other.constant([1.0])
        foreign = other.constant([2.0])
        with pytest.raises(ContractError):
            tape.forward("relu", foreign)

    def test_that_non_conformable_matmul_raises_dimension_error(self):
        tape = Tape()
        with pytest.raises(DimensionError):
            tape.forward("matmul", tape.constant(np.ones((2, 3))), tape.constant(np.ones((2, 3))))

    def test_that_add_requires_equal_shapes(self):
        tape = Tape()
        with pytest.raises(DimensionError):
            tape.forward("add", tape.constant(np.ones(3)), tape.constant(np.ones(2)))

    def test_that_backward_needs_a_scalar(self):
        tape = Tape()
        x = tape.parameter(np.ones((2, 2)))
        with pytest.raises(ContractError, match="scalar"):
            tape.backward(tape.forward("relu", x))

    def test_that_non_finite_outputs_raise_with_the_op_id(self):
        tape = Tape()
        x = tape.constant(np.array([1e308]))
        y = tape.forward("relu", x)
        with pytest.raises(NumericError) as excinfo:
            with np.errstate(over="ignore"):
                tape.forward("mul_scalar", y, c=10.0)
        assert excinfo.value.op_id == 1

    def test_that_non_finite_leaves_are_rejected(self):
        with pytest.raises(NumericError):
            Tape().constant([np.nan])

    def test_that_log_clamps_small_inputs(self):
        tape = Tape()
        x = tape.parameter(np.array([0.0, 1.0]))
        out = tape.forward("log", x)
        assert np.all(np.isfinite(out.value))
        assert out.value[0] == np.log(1e-12)

        # The clamped entry has zero gradient
        grad = tape.backward(tape.forward("mean", out))[0]
        assert grad[0] == 0.0
        assert grad[1] == pytest.approx(0.5)

    def test_that_unused_parameters_get_zero_gradients(self):
        tape = Tape()
        used = tape.parameter(np.array([2.0]))
        unused = tape.parameter(np.ones((2, 2)))
        grads = tape.backward(tape.forward("mean", tape.forward("mul_scalar", used, c=3.0)))
        assert grads[0].tolist() == [3.0]
        assert np.array_equal(grads[1], np.zeros_like(unused.value))

    def test_that_backward_is_repeatable(self):
        rng = np.random.default_rng(0)
        tape = Tape()
        params = init_params(MlpSpec((3, 5, 1)), seed=0)
        nodes = bind_params(tape, params, trainable=True)
        out = tape.forward("mean", mlp_forward(tape, params.spec, nodes, tape.constant(rng.normal(size=(7, 3)))))

        first = tape.backward(out)
        second = tape.backward(out)
        assert all(np.array_equal(a, b) for (a, b) in zip(first, second))

    def test_that_gradients_accumulate_over_shared_nodes(self):
        tape = Tape()
        x = tape.parameter(np.array([3.0]))
        y = tape.forward("add", x, x)
        assert tape.backward(tape.forward("mean", y))[0].tolist() == [2.0]

    def test_that_row_broadcast_add_sums_the_bias_gradient_over_rows(self):
        tape = Tape()
        a = tape.constant(np.zeros((4, 2)))
        b = tape.parameter(np.zeros(2))
        out = tape.forward("mean", tape.forward("row_broadcast_add", a, b))
        assert np.allclose(tape.backward(out)[0], [0.5, 0.5])

    def test_that_every_op_is_registered_by_name(self):
        assert set(OPS) == {
            "matmul",
            "add",
            "sub",
            "mul_scalar",
            "row_broadcast_add",
            "relu",
            "leaky_relu",
            "sigmoid",
            "tanh",
            "log",
            "mean",
            "clamp",
        }


class TestOptimizers:
    def test_that_sgd_steps_against_the_gradient(self):
        sgd = SGD(learning_rate=0.5)
        (updated,) = sgd.step([np.array([1.0, 1.0])], [np.array([1.0, -2.0])])
        assert updated.tolist() == [0.5, 2.0]

    def test_that_the_first_adam_step_has_the_size_of_the_learning_rate(self):
        adam = Adam(learning_rate=0.01)
        grads = [np.array([3.0, -0.2, 1e-3])]
        (updated,) = adam.step([np.zeros(3)], grads)
        # Bias correction makes the first step lr * g / |g|
        assert np.allclose(updated, -0.01 * np.sign(grads[0]), rtol=1e-4)

    def test_that_adam_matches_a_manual_computation(self):
        adam = Adam(learning_rate=0.1, beta1=0.5, beta2=0.9, epsilon=1e-8)
        p = np.array([1.0])
        g1, g2 = np.array([0.2]), np.array([-0.4])
        p1 = adam.step([p], [g1])[0]
        p2 = adam.step([p1], [g2])[0]

        m = 0.5 * (0.5 * 0.2) + 0.5 * -0.4
        v = 0.9 * (0.1 * 0.04) + 0.1 * 0.16
        expected = p1 - 0.1 * (m / (1 - 0.25)) / (np.sqrt(v / (1 - 0.81)) + 1e-8)
        assert np.allclose(p2, expected)

    def test_that_mismatched_gradients_are_rejected(self):
        with pytest.raises(ContractError):
            SGD(learning_rate=0.1).step([np.ones(2)], [np.ones(3)])
        with pytest.raises(ContractError):
            Adam().step([np.ones(2), np.ones(1)], [np.ones(2)])

    def test_that_non_positive_learning_rates_are_rejected(self):
        with pytest.raises(ValueError):
            SGD(learning_rate=0.0)

    def test_that_clip_weights_bounds_every_entry(self):
        rng = np.random.default_rng(1)
        clipped = clip_weights([rng.normal(size=(10, 10)), rng.normal(size=10)], c=0.01)
        assert all(np.max(np.abs(p)) <= 0.01 for p in clipped)

    @pytest.mark.parametrize("c", [0.01, 0.5, 3.0])
    def test_that_clip_weights_is_idempotent(self, c):
        rng = np.random.default_rng(2)
        once = clip_weights([rng.normal(size=(6, 4)), rng.normal(size=4)], c)
        twice = clip_weights(once, c)
        assert all(np.array_equal(a, b) for a, b in zip(once, twice))

    def test_that_clip_weights_needs_a_positive_bound(self):
        with pytest.raises(ValueError):
            clip_weights([np.ones(2)], c=0)


class TestSeededRNG:
    @pytest.mark.parametrize("seed", list(range(5)))
    def test_that_equal_seeds_give_equal_streams(self, seed):
        a, b = SeededRNG(seed), SeededRNG(seed)
        assert np.array_equal(a.normal((10, 3)), b.normal((10, 3)))
        assert np.array_equal(a.uniform(7), b.uniform(7))

    def test_that_different_seeds_give_different_streams(self):
        assert not np.array_equal(SeededRNG(0).uniform(5), SeededRNG(1).uniform(5))

    def test_that_substreams_are_distinct_and_reproducible(self):
        rng = SeededRNG(3)
        pair_0, pair_1 = rng.substream("pair", 0), rng.substream("pair", 1)
        assert not np.array_equal(pair_0.uniform(5), pair_1.uniform(5))
        assert np.array_equal(SeededRNG(3).substream("pair", 1).uniform(5), rng.substream("pair", 1).uniform(5))

    def test_that_box_muller_normals_have_standard_moments(self):
        z = SeededRNG(0).normal(200_000)
        assert abs(np.mean(z)) < 0.01
        assert abs(np.std(z) - 1) < 0.01
        # Fourth moment of a standard normal is 3
        assert abs(np.mean(z**4) - 3) < 0.1

    def test_that_odd_normal_counts_are_supported(self):
        assert SeededRNG(0).normal((3, 3)).shape == (3, 3)

    def test_that_integers_consume_the_stream_independently_of_the_upper_bound(self):
        a, b = SeededRNG(9), SeededRNG(9)
        low = a.integers(2, size=50)
        high = b.integers(1000, size=50)
        assert low.max() <= 1 and high.max() <= 999
        assert np.array_equal(a.uniform(3), b.uniform(3))

    @pytest.mark.parametrize("n", [1, 2, 10, 101])
    def test_that_permutations_are_permutations(self, n):
        assert sorted(SeededRNG(n).permutation(n).tolist()) == list(range(n))

    def test_that_as_rng_requires_a_seed(self):
        with pytest.raises(ContractError):
            as_rng(None)
        rng = SeededRNG(1)
        assert as_rng(rng) is rng


if __name__ == "__main__":
    pytest.main(args=[__file__, "-v", "--capture=sys", "--doctest-modules", "--maxfail=1"])
