"""Instance-level blending: pairing, the blend rule, matrix/scalar agreement."""

import numpy as np
import pytest

from sarb.autodiff import Var, backward
from sarb.ilrb import BlendCoefficients, blend_batch, blend_pair, pair_assignment


def test_pair_assignment_is_a_derangement():
    for size in (2, 3, 8, 17):
        perm = pair_assignment(size, seed=0, step=4)
        assert sorted(perm) == list(range(size))
        assert not np.any(perm == np.arange(size))


def test_pair_assignment_size_two_is_swap():
    np.testing.assert_array_equal(pair_assignment(2, seed=9, step=1), [1, 0])


def test_pair_assignment_determinism():
    a = pair_assignment(10, seed=3, step=5)
    b = pair_assignment(10, seed=3, step=5)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, pair_assignment(10, seed=3, step=6))


def test_pair_assignment_rejects_singleton():
    with pytest.raises(ValueError):
        pair_assignment(1, seed=0, step=0)


def test_blend_pair_rule():
    f_n, f_m = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    rep, label = blend_pair(f_n, f_m, y_n=0.0, y_m=1.0, alpha=0.5)
    np.testing.assert_array_equal(rep, [0.5, 0.5])
    assert label == 0.5
    # known entries pass through for any partner
    rep, label = blend_pair(f_n, f_m, y_n=1.0, y_m=1.0, alpha=0.5)
    np.testing.assert_array_equal(rep, f_n)
    assert label == 1.0
    rep, label = blend_pair(f_n, f_m, y_n=-1.0, y_m=1.0, alpha=0.3)
    assert label == -1.0
    # unknown partner label never fires
    rep, label = blend_pair(f_n, f_m, y_n=0.0, y_m=0.0, alpha=0.3)
    assert label == 0.0
    np.testing.assert_array_equal(rep, f_n)


def test_coefficients_initialize_at_half_and_stay_bounded():
    coeff = BlendCoefficients(6)
    np.testing.assert_allclose(coeff.values(), np.full(6, 0.5), atol=1e-15)
    coeff.raw.data[...] = np.array([-50.0, -1.0, 0.0, 1.0, 50.0, 3.0])
    vals = coeff.values()
    assert ((vals > 0) & (vals < 1)).all()


def test_fixed_coefficients_validate_range():
    with pytest.raises(ValueError):
        BlendCoefficients(3, fixed=0.0)
    with pytest.raises(ValueError):
        BlendCoefficients(3, fixed=1.2)
    assert BlendCoefficients(3, fixed=1.0).values().tolist() == [1.0, 1.0, 1.0]


def random_batch(rng, n=6, c=5, d=4):
    reps = rng.standard_normal((n, c, d))
    labels = rng.choice([-1.0, 0.0, 1.0], size=(n, c))
    return reps, labels


def test_blend_batch_matches_scalar_loop_bitwise():
    rng = np.random.default_rng(11)
    for _ in range(200):
        reps, labels = random_batch(rng)
        alpha = rng.random(5) * 0.9 + 0.05
        perm = pair_assignment(6, seed=int(rng.integers(1000)), step=0)
        out = blend_batch(Var(reps), labels, Var(alpha), perm)
        for i in range(6):
            for c in range(5):
                rep, label = blend_pair(reps[i, c], reps[perm[i], c],
                                        labels[i, c], labels[perm[i], c], alpha[c])
                np.testing.assert_array_equal(out.reps.data[i, c], rep)
                assert out.labels[i, c] == label


def test_blend_batch_all_known_is_identity_bitwise():
    rng = np.random.default_rng(12)
    reps = rng.standard_normal((4, 3, 5))
    labels = rng.choice([-1.0, 1.0], size=(4, 3))
    out = blend_batch(Var(reps), labels, BlendCoefficients(3), pair_assignment(4, 0, 0))
    np.testing.assert_array_equal(out.reps.data, reps)
    np.testing.assert_array_equal(out.labels, labels)
    assert not out.mask.any()


def test_blend_mask_counts_fire_condition():
    rng = np.random.default_rng(13)
    reps, labels = random_batch(rng)
    perm = pair_assignment(6, 1, 1)
    out = blend_batch(Var(reps), labels, BlendCoefficients(5), perm)
    expected = (labels == 0.0) & (labels[perm] == 1.0)
    np.testing.assert_array_equal(out.mask, expected)
    assert out.mask.sum() == expected.sum()


def test_soft_labels_equal_one_minus_alpha():
    rng = np.random.default_rng(14)
    reps, labels = random_batch(rng)
    alpha = BlendCoefficients(5)
    alpha.raw.data[...] = rng.standard_normal(5)
    perm = pair_assignment(6, 2, 2)
    out = blend_batch(Var(reps), labels, alpha, perm)
    vals = alpha.values()
    for i, c in zip(*np.nonzero(out.mask)):
        assert out.labels[i, c] == 1.0 - vals[c]
        assert 0.0 < out.labels[i, c] < 1.0


def test_gradient_only_through_fired_categories():
    rng = np.random.default_rng(15)
    reps, labels = random_batch(rng)
    labels[:, 2] = 1.0  # category 2 never unknown: no blend can fire
    alpha = BlendCoefficients(5)
    perm = pair_assignment(6, 3, 3)
    reps_v = Var(reps, trainable=True)
    out = blend_batch(reps_v, labels, alpha, perm)
    backward((out.reps * out.reps).sum())
    assert not out.mask[:, 2].any()
    assert alpha.raw.grad[2] == 0.0
    fired_categories = sorted(set(np.nonzero(out.mask)[1]))
    for c in fired_categories:
        assert alpha.raw.grad[c] != 0.0


def test_shared_coefficient_broadcasts():
    rng = np.random.default_rng(16)
    reps, labels = random_batch(rng)
    shared = BlendCoefficients(5, shared=True)
    assert shared.raw.shape == (1,)
    out = blend_batch(Var(reps), labels, shared, pair_assignment(6, 4, 4))
    assert out.reps.shape == (6, 5, 4)
    np.testing.assert_allclose(out.labels[out.mask], 0.5)


def test_alpha_one_is_identity_limit():
    rng = np.random.default_rng(17)
    reps, labels = random_batch(rng)
    out = blend_batch(Var(reps), labels, BlendCoefficients(5, fixed=1.0),
                      pair_assignment(6, 5, 5))
    assert np.abs(out.reps.data - reps).max() < 1e-12
    np.testing.assert_array_equal(out.labels, labels)


def test_blend_batch_rejects_non_derangement():
    rng = np.random.default_rng(18)
    reps, labels = random_batch(rng)
    with pytest.raises(ValueError):
        blend_batch(Var(reps), labels, BlendCoefficients(5), np.arange(6))
