"""Synthetic dataset generation, label dropping, batching, and on-disk format."""

import numpy as np
import pytest

from sarb.data import (Dataset, DatasetSpec, batches, category_directions, drop_labels,
                       generate, load_dataset, save_dataset)


def small_spec(**kw):
    defaults = dict(n_samples=50, n_categories=6, height=3, width=3, depth=8, seed=7)
    defaults.update(kw)
    return DatasetSpec(**defaults)


def test_generation_is_deterministic():
    a = generate(small_spec())
    b = generate(small_spec())
    np.testing.assert_array_equal(a.features, b.features)
    np.testing.assert_array_equal(a.labels, b.labels)


def test_generation_labels_are_hard_with_a_positive_per_sample():
    ds = generate(small_spec())
    assert np.isin(ds.labels, (-1.0, 1.0)).all()
    assert (ds.labels == 1.0).any(axis=1).all()
    per_sample = (ds.labels == 1.0).sum(axis=1)
    assert per_sample.min() >= 1 and per_sample.max() <= 3


def test_snr_zero_gives_pure_noise():
    spec = small_spec(snr=0.0)
    ds = generate(spec)
    noise_only = generate(small_spec(snr=0.0))
    np.testing.assert_array_equal(ds.features, noise_only.features)
    # still standard normal in the aggregate
    assert abs(ds.features.mean()) < 0.05
    assert abs(ds.features.std() - 1.0) < 0.05


def test_planted_signal_aligns_with_category_direction():
    spec = small_spec(snr=8.0)
    ds = generate(spec)
    dirs = category_directions(spec)
    hits = 0
    for i in range(len(ds)):
        for cat in np.flatnonzero(ds.labels[i] == 1.0):
            cells = ds.features[i].reshape(-1, spec.depth)
            projections = cells @ dirs[cat]
            hits += projections.max() > 4.0
    total = int((ds.labels == 1.0).sum())
    assert hits / total > 0.9


def test_infeasible_spec_rejected():
    with pytest.raises(ValueError):
        DatasetSpec(n_samples=1).validate()
    with pytest.raises(ValueError):
        DatasetSpec(positives_min=0).validate()
    with pytest.raises(ValueError):
        DatasetSpec(n_samples=4, n_categories=100).validate()


def test_drop_labels_rejects_bad_proportion():
    ds = generate(small_spec())
    for p in (0.0, -0.2, 1.5):
        with pytest.raises(ValueError):
            drop_labels(ds, p, seed=0)


def test_drop_labels_identity_at_full_proportion():
    ds = generate(small_spec())
    partial, achieved = drop_labels(ds, 1.0, seed=0)
    np.testing.assert_array_equal(partial.labels, ds.labels)
    assert achieved == 1.0


def test_drop_labels_never_flips_and_guards_each_sample():
    ds = generate(small_spec(n_samples=200))
    partial, achieved = drop_labels(ds, 0.15, seed=3)
    known = partial.labels != 0.0
    np.testing.assert_array_equal(partial.labels[known], ds.labels[known])
    assert known.any(axis=1).all()
    assert 0.05 < achieved < 0.3


def test_drop_labels_proportion_concentrates():
    # the per-sample guard biases the proportion up by roughly
    # p*(1-p)^C/(1-(1-p)^C); at C=20 that stays inside the 2% tolerance
    spec = DatasetSpec(n_samples=1000, n_categories=20, height=2, width=2, depth=4, seed=1)
    ds = generate(spec)
    for p in (0.1, 0.5):
        for seed in range(3):
            _, achieved = drop_labels(ds, p, seed=seed)
            assert abs(achieved - p) < 0.02


def test_drop_labels_stratified_counts():
    spec = DatasetSpec(n_samples=400, n_categories=8, height=2, width=2, depth=4, seed=2)
    ds = generate(spec)
    partial, achieved = drop_labels(ds, 0.25, seed=0, stratified=True)
    known_per_cat = (partial.labels != 0.0).sum(axis=0)
    assert (known_per_cat >= 100).all()  # the per-sample guard can only add
    assert abs(achieved - 0.25) < 0.02


def test_batches_sizes_and_short_tail():
    ds = generate(small_spec(n_samples=5))
    sizes = [len(b) for b in batches(ds, 2, seed=0, epoch=0)]
    assert sizes == [2, 2, 1]


def test_batches_epoch_determinism_and_reshuffling():
    ds = generate(small_spec(n_samples=40))
    first = [b.labels.copy() for b in batches(ds, 8, seed=5, epoch=2)]
    again = [b.labels.copy() for b in batches(ds, 8, seed=5, epoch=2)]
    for a, b in zip(first, again):
        np.testing.assert_array_equal(a, b)
    # different epochs give a different order with overwhelming probability
    differing = 0
    for epoch in range(1, 100):
        other = next(iter(batches(ds, 8, seed=5, epoch=epoch)))
        differing += not np.array_equal(other.labels, first[0])
    assert differing >= 98


def test_batches_rejects_batch_of_one():
    ds = generate(small_spec())
    with pytest.raises(ValueError):
        next(batches(ds, 1, seed=0, epoch=0))


def test_dataset_roundtrip(tmp_path):
    ds = generate(small_spec())
    partial, _ = drop_labels(ds, 0.5, seed=0)
    save_dataset(tmp_path, partial)
    loaded = load_dataset(tmp_path)
    np.testing.assert_array_equal(loaded.labels, partial.labels)
    np.testing.assert_array_equal(loaded.features, partial.features)
    header = (tmp_path / "labels.csv").read_text().splitlines()[0]
    assert set(header.split(",")) <= {"-1", "0", "1"}


def test_dataset_export_rejects_soft_labels(tmp_path):
    ds = generate(small_spec())
    ds.labels[0, 0] = 0.5
    with pytest.raises(ValueError):
        save_dataset(tmp_path, ds)


def test_split_is_disjoint_and_deterministic():
    ds = generate(small_spec(n_samples=40))
    train, eval_set = ds.split(0.25)
    assert len(train) == 30 and len(eval_set) == 10
    np.testing.assert_array_equal(eval_set.features, ds.features[30:])
