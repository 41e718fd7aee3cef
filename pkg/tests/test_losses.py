"""Partial BCE masking, soft targets, and the combined objective."""

import numpy as np
import pytest

from sarb.autodiff import Var, backward, sigmoid
from sarb.losses import classification_loss, known_counts, partial_bce, total_loss


def test_hand_evaluated_example():
    # known entries at s=0.5 contribute ln 2 each; the unknown contributes 0
    loss = partial_bce(np.array([1.0, -1.0, 0.0]), Var(np.array([0.5, 0.5, 0.9])))
    assert loss.item() == pytest.approx(np.log(2.0), abs=1e-12)


def test_perfect_prediction_loss_vanishes():
    for eps in (1e-3, 1e-5, 1e-7):
        loss = partial_bce(np.array([1.0]), Var(np.array([1.0 - eps])))
        assert loss.item() < 2 * eps


def test_soft_target_minimized_at_target():
    values = np.linspace(0.05, 0.95, 19)
    losses = [partial_bce(np.array([0.5]), Var(np.array([s]))).item() for s in values]
    assert np.argmin(losses) == 9  # s = 0.5
    assert losses[9] == pytest.approx(np.log(2.0), abs=1e-12)


def test_unknown_gradient_is_exactly_zero():
    rng = np.random.default_rng(0)
    for _ in range(50):
        y = rng.choice([-1.0, 0.0, 1.0], size=12)
        s = Var(rng.uniform(0.05, 0.95, size=12), trainable=True)
        backward(partial_bce(y, s))
        unknown = y == 0.0
        assert (s.grad[unknown] == 0.0).all()
        known = ~unknown
        targets = (y[known] + 1.0) / 2.0
        differs = s.data[known] != targets
        assert (s.grad[known][differs] != 0.0).all()


def test_gradient_flows_through_scores_only_when_known():
    y = np.array([[1.0, 0.0], [0.0, -1.0]])
    logits = Var(np.zeros((2, 2)), trainable=True)
    backward(partial_bce(y, sigmoid(logits)).mean())
    assert logits.grad[0, 0] != 0.0
    assert logits.grad[0, 1] == 0.0
    assert logits.grad[1, 0] == 0.0
    assert logits.grad[1, 1] != 0.0


def test_no_known_entries_contributes_zero():
    loss = partial_bce(np.zeros(4), Var(np.full(4, 0.7)))
    assert loss.item() == 0.0


def test_per_sample_normalization():
    # one known entry vs four known entries at the same score give equal loss
    one = partial_bce(np.array([1.0, 0.0, 0.0, 0.0]), Var(np.full(4, 0.3)))
    four = partial_bce(np.array([1.0, 1.0, 1.0, 1.0]), Var(np.full(4, 0.3)))
    assert one.item() == pytest.approx(four.item(), abs=1e-12)


def test_loss_invariant_to_unknown_scores():
    y = np.array([1.0, 0.0, -1.0, 0.0])
    base = partial_bce(y, Var(np.array([0.7, 0.1, 0.2, 0.9]))).item()
    permuted = partial_bce(y, Var(np.array([0.7, 0.9, 0.2, 0.1]))).item()
    assert base == permuted


def test_batch_shape_gives_per_sample_vector():
    y = np.array([[1.0, -1.0], [0.0, 1.0]])
    s = Var(np.array([[0.8, 0.2], [0.5, 0.6]]))
    loss = partial_bce(y, s)
    assert loss.shape == (2,)
    np.testing.assert_array_equal(known_counts(y), [2, 1])


def test_classification_loss_branch_gating():
    rng = np.random.default_rng(1)
    y = rng.choice([-1.0, 1.0], size=(4, 3))
    s = Var(rng.uniform(0.1, 0.9, size=(4, 3)))
    main_only = classification_loss((y, s))
    assert main_only.item() == pytest.approx(partial_bce(y, s).mean().item(), abs=1e-12)
    tripled = classification_loss((y, s), ilrb=(y, s), plrb=(y, s))
    assert tripled.item() == pytest.approx(3.0 * main_only.item(), abs=1e-9)


def test_blended_branch_without_blends_equals_main():
    rng = np.random.default_rng(2)
    y = rng.choice([-1.0, 1.0], size=(3, 4))
    s = Var(rng.uniform(0.1, 0.9, size=(3, 4)))
    assert classification_loss((y, s), ilrb=(y, s)).item() == pytest.approx(
        2.0 * partial_bce(y, s).mean().item(), abs=1e-12)


def test_total_loss_weighting():
    l_cls = Var(1.0)
    l_cst = Var(2.0)
    assert total_loss(l_cls, l_cst, 0.05).item() == pytest.approx(1.1, abs=1e-12)
    assert total_loss(l_cls, None).item() == 1.0
    assert total_loss(l_cls, l_cst, 0.0).item() == 1.0


def test_mismatched_shapes_rejected():
    with pytest.raises(ValueError):
        partial_bce(np.zeros(3), Var(np.zeros(4)))
