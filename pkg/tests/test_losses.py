import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aspectgate import autodiff as ad
from aspectgate.autodiff import Tensor
from aspectgate.losses import (batch_objective, focal_loss, neighbor_loss, one_hot,
                               total_objective)


def scalar_focal(p_vec, true_index, gamma):
    """Hand evaluation of the loss formula with plain math calls."""
    total = 0.0
    for i, p in enumerate(p_vec):
        y = 1.0 if i == true_index else 0.0
        total -= y * (1.0 - p) ** gamma * math.log(max(p, 1e-12))
    return total


def prob_vector(p_true, true_index=0, n=3):
    rest = (1.0 - p_true) / (n - 1)
    p = np.full(n, rest)
    p[true_index] = p_true
    return p


def test_perfect_prediction_has_zero_loss():
    loss = focal_loss(prob_vector(1.0), one_hot(0), gamma=2.0)
    assert loss.values.item() == 0.0


def test_gamma_zero_at_half_is_log_two():
    loss = focal_loss(prob_vector(0.5), one_hot(0), gamma=0.0)
    assert math.isclose(loss.values.item(), math.log(2.0), rel_tol=1e-12)
    assert math.isclose(loss.values.item(), 0.693147, abs_tol=1e-6)


def test_gamma_two_at_half_is_quarter_log_two():
    loss = focal_loss(prob_vector(0.5), one_hot(0), gamma=2.0)
    assert math.isclose(loss.values.item(), 0.25 * math.log(2.0), rel_tol=1e-12)
    assert math.isclose(loss.values.item(), 0.173287, abs_tol=1e-6)
    assert math.isclose(loss.values.item(), scalar_focal(prob_vector(0.5), 0, 2.0),
                        rel_tol=1e-12)


def test_clamped_probability_stays_finite():
    p = np.array([0.0, 0.5, 0.5])
    loss = focal_loss(p, one_hot(0), gamma=0.0)
    assert np.isfinite(loss.values.item())
    assert math.isclose(loss.values.item(), -math.log(1e-12), rel_tol=1e-12)


def test_rejects_non_one_hot_target():
    with pytest.raises(ValueError, match="one-hot"):
        focal_loss(prob_vector(0.5), np.array([0.5, 0.5, 0.0]), gamma=1.0)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(min_value=-6, max_value=6, allow_nan=False),
                min_size=3, max_size=3),
       st.integers(min_value=0, max_value=2))
def test_gamma_zero_recovers_cross_entropy(logits, true_index):
    z = np.asarray(logits, dtype=np.float64)
    e = np.exp(z - z.max())
    p = e / e.sum()
    loss = focal_loss(p, one_hot(true_index), gamma=0.0)
    assert abs(loss.values.item() - (-math.log(max(p[true_index], 1e-12)))) <= 1e-12


@settings(max_examples=100, deadline=None)
@given(st.floats(min_value=0.01, max_value=0.98),
       st.floats(min_value=0.005, max_value=0.019),
       st.floats(min_value=0.5, max_value=4.0))
def test_loss_strictly_decreases_in_confidence(p_true, bump, gamma):
    low = focal_loss(prob_vector(p_true), one_hot(0), gamma).values.item()
    high = focal_loss(prob_vector(p_true + bump), one_hot(0), gamma).values.item()
    assert high < low


def test_well_classified_instances_are_down_weighted(rng):
    for _ in range(200):
        p_true = rng.uniform(0.9, 1.0 - 1e-9)
        p = prob_vector(p_true)
        focal = focal_loss(p, one_hot(0), gamma=2.0).values.item()
        ce = focal_loss(p, one_hot(0), gamma=0.0).values.item()
        assert focal <= 0.01 * ce


# ---------------------------------------------------------------------------
# Neighbor loss and the combined objective
# ---------------------------------------------------------------------------

def test_no_neighbors_means_zero_loss():
    loss = neighbor_loss([], [], gamma=2.0)
    assert loss.values.item() == 0.0


def test_perfect_neighbors_mean_zero():
    loss = neighbor_loss([prob_vector(1.0), prob_vector(1.0, 1)],
                         [one_hot(0), one_hot(1)], gamma=2.0)
    assert loss.values.item() == 0.0


def test_two_neighbor_hand_value():
    loss = neighbor_loss([prob_vector(0.5), prob_vector(0.8, 1)],
                         [one_hot(0), one_hot(1)], gamma=2.0)
    oracle = (scalar_focal(prob_vector(0.5), 0, 2.0)
              + scalar_focal(prob_vector(0.8, 1), 1, 2.0)) / 2.0
    assert math.isclose(loss.values.item(), oracle, rel_tol=1e-12)
    assert math.isclose(loss.values.item(), 0.091106, abs_tol=1e-6)


def test_neighbor_loss_rejects_misaligned_lists():
    with pytest.raises(ValueError, match="vs"):
        neighbor_loss([prob_vector(0.5)], [], gamma=1.0)


def test_zero_weight_recovers_target_loss():
    target = focal_loss(prob_vector(0.5), one_hot(0), gamma=2.0)
    aux = focal_loss(prob_vector(0.6), one_hot(0), gamma=2.0)
    combined = total_objective(target, aux, weight=0.0)
    assert combined.values.item() == target.values.item()


def test_linear_combination_value():
    combined = total_objective(Tensor(np.asarray(1.0)), Tensor(np.asarray(0.5)), 0.4)
    assert math.isclose(combined.values.item(), 1.2, rel_tol=1e-12)


def test_weight_must_be_finite_and_non_negative():
    with pytest.raises(ValueError, match="weight"):
        total_objective(Tensor(np.asarray(1.0)), Tensor(np.asarray(1.0)), -0.1)


def test_domain_default_weights_come_from_config():
    from aspectgate.training import TrainConfig
    assert TrainConfig(domain="restaurant", variant="miad").effective_loss_weight() == 0.4
    assert TrainConfig(domain="laptop", variant="miad").effective_loss_weight() == 0.2


def test_batch_objective_is_reorder_invariant(rng):
    keyed = [(i, focal_loss(prob_vector(rng.uniform(0.2, 0.9)), one_hot(0), 2.0))
             for i in range(7)]
    value = batch_objective(keyed).values.item()
    shuffled = [keyed[i] for i in rng.permutation(7)]
    assert batch_objective(shuffled).values.item() == value
    oracle = sum(loss.values.item() for _, loss in keyed) / 7.0
    assert math.isclose(value, oracle, rel_tol=1e-12)


def test_focal_gradient_flows_through_modulating_factor(rng):
    # d/dp of -(1-p)^g log p at one-hot truth, against central differences
    logits = Tensor(rng.uniform(-1, 1, 3))

    def build():
        return ad.focal_term(ad.softmax(logits), one_hot(1), 2.0)

    logits.zero_grad()
    ad.backward(build())
    analytic = logits.grad.copy()
    eps = 1e-6
    numeric = np.zeros(3)
    for i in range(3):
        orig = logits.values[i]
        logits.values[i] = orig + eps
        up = build().values.item()
        logits.values[i] = orig - eps
        down = build().values.item()
        logits.values[i] = orig
        numeric[i] = (up - down) / (2 * eps)
    assert np.allclose(analytic, numeric, rtol=1e-5, atol=1e-8)
