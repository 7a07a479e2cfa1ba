#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Measuring functions and the adversarial losses built from them.

With a measuring function phi, a single pair plays

    min_G max_D  E_x[phi(D(x))] + E_z[phi(1 - D(G(z)))],

and with k pairs each discriminator D_i ascends the same expression on its own
partition while generator G_i descends

    L_G_i = (1/k) sum_j E_z[phi(1 - D_j(G_i(z)))],

where the sum runs over the pair's own discriminator (coupling "own") or over
every discriminator (coupling "all"). phi(x) = log(x) gives the Jensen-Shannon
objective and phi(x) = x the Wasserstein objective.

>>> float(phi("js", 1.0))
0.0
>>> float(phi("wasserstein", 0.37))
0.37

"""

from abc import ABC, abstractmethod

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils import Bunch
from sklearn.utils._param_validation import StrOptions

from mgmd_gan.exceptions import ContractError
from mgmd_gan.models import bind_params, generator_forward, mlp_forward
from mgmd_gan.numerics import LOG_CLAMP, Tape


class Measure(ABC):
    # A measuring function phi, evaluated either on arrays or on tape nodes
    @abstractmethod
    def __call__(self, v):
        pass

    @abstractmethod
    def node(self, tape, v):
        pass

    def __eq__(self, other):
        return type(self) is type(other)


class LogMeasure(Measure):
    r"""phi(v) = log(max(v, 1e-12))"""

    name = "log"

    def __call__(self, v):
        """
        Examples
        --------
        >>> LogMeasure()(np.array([1.0, 0.5, 0.0]))
        array([  0.        ,  -0.69314718, -27.63102112])
        """
        return np.log(np.maximum(v, LOG_CLAMP))

    def node(self, tape, v):
        return tape.forward("log", v)


class IdentityMeasure(Measure):
    r"""phi(v) = v"""

    name = "identity"

    def __call__(self, v):
        return np.asarray(v, dtype=np.float64)

    def node(self, tape, v):
        return v


MEASURES = {measure.name: measure for measure in [LogMeasure, IdentityMeasure]}


class Objective(BaseEstimator):
    """Objective family of the adversarial game.

    Parameters
    ----------
    kind : str, optional
        "js" (phi = log, sigmoid discriminators) or "wasserstein" (phi = identity,
        linear critics with weight clipping). The default is "js".
    generator_mode : str or None, optional
        "minimax" descends the literal generator loss. "non_saturating"
        descends -(1/k) sum_j mean phi(D_j(G_i(z))) instead, while the literal
        loss is still computed and reported. None picks non_saturating for JS
        and minimax for Wasserstein. The default is None.
    generator_coupling : str, optional
        "own" couples G_i to D_i only, "all" couples G_i to every
        discriminator. The default is "own".

    Examples
    --------
    >>> Objective()
    Objective()
    >>> Objective("wasserstein").resolved_generator_mode
    'minimax'
    >>> Objective("js").discriminator_activation
    'sigmoid'
    """

    _parameter_constraints: dict = {
        "kind": [StrOptions({"js", "wasserstein"})],
        "generator_mode": [StrOptions({"minimax", "non_saturating"}), None],
        "generator_coupling": [StrOptions({"own", "all"})],
    }

    def __init__(self, kind="js", *, generator_mode=None, generator_coupling="own"):
        self.kind = kind
        self.generator_mode = generator_mode
        self.generator_coupling = generator_coupling

    @property
    def measure(self):
        return MEASURES["log" if self.kind == "js" else "identity"]()

    @property
    def discriminator_activation(self):
        return "sigmoid" if self.kind == "js" else "identity"

    @property
    def uses_weight_clipping(self):
        return self.kind == "wasserstein"

    @property
    def resolved_generator_mode(self):
        if self.generator_mode is not None:
            return self.generator_mode
        return "non_saturating" if self.kind == "js" else "minimax"

    def __eq__(self, other):
        if type(self) is not type(other):
            return False
        return self.get_params() == other.get_params()


def as_objective(objective):
    """Accept an Objective or the name of its kind.

    Examples
    --------
    >>> as_objective("wasserstein")
    Objective(kind='wasserstein')
    """
    if isinstance(objective, str):
        objective = Objective(kind=objective)
    objective._validate_params()
    return objective


def phi(objective, v):
    """Apply the measuring function of `objective` to `v`.

    Examples
    --------
    >>> float(phi("js", 0.5))
    -0.6931471805599453
    """
    return as_objective(objective).measure(v)


# =============================================================================
# LOSSES ON A TAPE
# =============================================================================


def _one_minus(tape, scores):
    return tape.forward("sub", tape.constant(np.ones_like(scores.value)), scores)


def discriminator_objective(tape, objective, real_scores, fake_scores):
    """Record mean phi(D(x)) + mean phi(1 - D(G(z))) on a tape.

    This is the quantity a discriminator ascends. The arguments are score
    nodes, i.e. discriminator outputs on a real and on a generated batch.

    Examples
    --------
    >>> tape = Tape()
    >>> value = discriminator_objective(
    ...     tape, Objective("wasserstein"), tape.constant([0.8]), tape.constant([0.3])
    ... )
    >>> round(float(value.value), 12)
    1.5
    """
    measure = as_objective(objective).measure
    real_term = tape.forward("mean", measure.node(tape, real_scores))
    fake_term = tape.forward("mean", measure.node(tape, _one_minus(tape, fake_scores)))
    return tape.forward("add", real_term, fake_term)


def generator_objective(tape, objective, fake_scores, k):
    """Record the generator loss for one generator on a tape.

    Parameters
    ----------
    tape : Tape
    objective : Objective
    fake_scores : list of Node
        Scores D_j(G_i(z)) from every coupled discriminator.
    k : int
        Number of pairs, the 1/k factor of the loss.

    Returns
    -------
    (Node, Node)
        The node to descend and the literal loss value, which coincide in
        minimax mode.
    """
    if not fake_scores:
        raise ContractError("A generator loss needs at least one discriminator score")
    objective = as_objective(objective)
    measure = objective.measure

    def scaled_sum(terms, c):
        total = terms[0]
        for term in terms[1:]:
            total = tape.forward("add", total, term)
        return tape.forward("mul_scalar", total, c=c)

    value_terms = [tape.forward("mean", measure.node(tape, _one_minus(tape, s))) for s in fake_scores]
    value = scaled_sum(value_terms, 1.0 / k)

    if objective.resolved_generator_mode == "minimax":
        return value, value

    surrogate_terms = [tape.forward("mean", measure.node(tape, s)) for s in fake_scores]
    return scaled_sum(surrogate_terms, -1.0 / k), value


# =============================================================================
# LOSSES ON PARAMETERS
# =============================================================================


def _scores_node(tape, objective, discriminator, x, trainable=False):
    nodes = bind_params(tape, discriminator, trainable=trainable)
    out = mlp_forward(tape, discriminator.spec, nodes, x, output_activation=objective.discriminator_activation)
    return out


def discriminator_loss(objective, discriminator, real_batch, fake_batch):
    """Value of the discriminator objective, to be maximized.

    Parameters
    ----------
    objective : Objective or str
    discriminator : MlpParams
    real_batch : np.ndarray
        Real samples, drawn from the discriminator's own partition.
    fake_batch : np.ndarray
        Samples produced by the pair's generator.

    Returns
    -------
    float
    """
    objective = as_objective(objective)
    if len(real_batch) == 0 or len(fake_batch) == 0:
        raise ContractError("Batches must be non-empty")

    tape = Tape()
    nodes = bind_params(tape, discriminator, trainable=False)
    activation = objective.discriminator_activation
    real = mlp_forward(tape, discriminator.spec, nodes, tape.constant(real_batch), output_activation=activation)
    fake = mlp_forward(tape, discriminator.spec, nodes, tape.constant(fake_batch), output_activation=activation)
    return float(discriminator_objective(tape, objective, real, fake).value)


def generator_loss(objective, generators, discriminators, i, noise_batch):
    """Loss of generator i under the configured coupling.

    Parameters
    ----------
    objective : Objective or str
    generators : list of MlpParams
    discriminators : list of MlpParams
        k discriminators, k = len(discriminators).
    i : int
        Index of the generator. With a single generator and several
        discriminators, use i = 0 and coupling "all".
    noise_batch : np.ndarray
        Latent vectors of shape (b, latent_dim).

    Returns
    -------
    Bunch
        ``loss`` is the quantity descended and ``value`` is the literal loss.
    """
    objective = as_objective(objective)
    k = len(discriminators)
    if not 0 <= i < len(generators):
        raise ContractError(f"Generator index {i} out of range for {len(generators)} generators")
    if len(noise_batch) == 0:
        raise ContractError("The noise batch must be non-empty")

    if objective.generator_coupling == "own":
        coupled = [discriminators[i] if len(generators) == k else discriminators[0]]
    else:
        coupled = discriminators

    tape = Tape()
    g_nodes = bind_params(tape, generators[i], trainable=False)
    fake = mlp_forward(tape, generators[i].spec, g_nodes, tape.constant(noise_batch))
    scores = [_scores_node(tape, objective, d, fake) for d in coupled]
    loss, value = generator_objective(tape, objective, scores, k)
    return Bunch(loss=float(loss.value), value=float(value.value))


def value_function(objective, generator, discriminator, real_batch, noise_batch):
    """Empirical value of the two-player game for a single pair.

    Examples
    --------
    >>> from mgmd_gan.models import MlpParams, MlpSpec
    >>> zero_d = MlpParams(MlpSpec((2, 1)), [np.zeros((2, 1))], [np.zeros(1)])
    >>> zero_g = MlpParams(MlpSpec((3, 2)), [np.zeros((3, 2))], [np.zeros(2)])
    >>> round(value_function("js", zero_g, zero_d, np.ones((4, 2)), np.ones((4, 3))), 6)
    -1.386294
    """
    fake_batch = generator_forward(generator, noise_batch)
    return discriminator_loss(objective, discriminator, real_batch, fake_batch)


if __name__ == "__main__":
    import pytest

    pytest.main(args=[__file__, "--capture=sys", "--doctest-modules", "--maxfail=1"])
