"""Synthetic multi-label datasets with planted category signals.

Each sample is a small H x W x D feature map: unit Gaussian noise plus,
for every positive category, a category-specific unit direction added at
one random spatial cell and scaled by the signal-to-noise ratio.  Labels
use the encoding +1 present / -1 absent / 0 unknown; blended soft targets
in (0,1) appear only in tensors produced by the blending modules.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class DatasetSpec:
    n_samples: int = 2000
    n_categories: int = 10
    height: int = 4
    width: int = 4
    depth: int = 16
    positives_min: int = 1
    positives_max: int = 3
    snr: float = 5.0
    seed: int = 0

    def validate(self):
        if self.n_samples < 2:
            raise ValueError("n_samples must be at least 2")
        if self.n_categories < 2:
            raise ValueError("n_categories must be at least 2")
        if min(self.height, self.width, self.depth) < 1:
            raise ValueError("feature-map geometry must be positive")
        if not (1 <= self.positives_min <= self.positives_max <= self.n_categories):
            raise ValueError("positives range must satisfy 1 <= min <= max <= C")
        if self.snr < 0:
            raise ValueError("snr must be non-negative")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        # every category needs positives in expectation, or prototypes starve
        expected = self.n_samples * (self.positives_min + self.positives_max) / 2.0
        if expected < self.n_categories:
            raise ValueError("spec infeasible: expected positives per category below 1")


@dataclass
class Dataset:
    features: np.ndarray  # (N, H, W, D)
    labels: np.ndarray    # (N, C)

    def __len__(self):
        return self.features.shape[0]

    @property
    def n_categories(self):
        return self.labels.shape[1]

    @property
    def feature_shape(self):
        return self.features.shape[1:]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.features[idx], self.labels[idx])

    def split(self, eval_fraction: float) -> tuple["Dataset", "Dataset"]:
        """Deterministic train/eval split (samples are i.i.d. by construction)."""
        n_eval = int(round(len(self) * eval_fraction))
        n_eval = min(max(n_eval, 1), len(self) - 1)
        cut = len(self) - n_eval
        return self.subset(slice(0, cut)), self.subset(slice(cut, len(self)))


def category_directions(spec: DatasetSpec) -> np.ndarray:
    """Unit signal directions per category, a pure function of the seed."""
    rng = np.random.default_rng([spec.seed, 7])
    dirs = rng.standard_normal((spec.n_categories, spec.depth))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return dirs


def generate(spec: DatasetSpec) -> Dataset:
    """Sample a fully-labeled dataset; bit-identical for identical specs."""
    spec.validate()
    dirs = category_directions(spec)
    rng = np.random.default_rng([spec.seed, 11])
    n, c = spec.n_samples, spec.n_categories
    labels = -np.ones((n, c))
    for i in range(n):
        k = int(rng.integers(spec.positives_min, spec.positives_max + 1))
        labels[i, rng.choice(c, size=k, replace=False)] = 1.0
    features = rng.standard_normal((n, spec.height, spec.width, spec.depth))
    cells = spec.height * spec.width
    for i in range(n):
        for cat in np.flatnonzero(labels[i] == 1.0):
            cell = int(rng.integers(cells))
            h, w = divmod(cell, spec.width)
            features[i, h, w] += spec.snr * dirs[cat]
    return Dataset(features, labels)


def drop_labels(dataset: Dataset, known_proportion: float, seed,
                stratified: bool = False) -> tuple[Dataset, float]:
    """Simulate partial annotation by independently dropping label entries.

    Each (sample, category) entry is kept with probability
    ``known_proportion``; dropped entries become 0 (unknown).  A sample
    whose mask comes up empty is redrawn until it keeps at least one
    label, so no sample is left without supervision.  Returns the partial
    dataset and the achieved known proportion.
    """
    if not (0.0 < known_proportion <= 1.0):
        raise ValueError(f"known_proportion must lie in (0, 1], got {known_proportion}")
    rng = np.random.default_rng(seed)
    n, c = dataset.labels.shape
    if stratified:
        # fixed per-category known counts instead of Bernoulli draws
        keep = np.zeros((n, c), dtype=bool)
        n_keep = int(round(known_proportion * n))
        for cat in range(c):
            keep[rng.permutation(n)[:n_keep], cat] = True
        for i in range(n):
            if not keep[i].any():
                keep[i, rng.integers(c)] = True
    else:
        keep = rng.random((n, c)) < known_proportion
        for i in range(n):
            while not keep[i].any():
                keep[i] = rng.random(c) < known_proportion
    labels = np.where(keep, dataset.labels, 0.0)
    return Dataset(dataset.features, labels), float(keep.mean())


def batches(dataset: Dataset, batch_size: int, seed: int, epoch: int):
    """Epoch-deterministic shuffled minibatches; the short tail is kept."""
    if batch_size < 2:
        raise ValueError("batch_size must be at least 2")
    perm = np.random.default_rng([seed, epoch]).permutation(len(dataset))
    for start in range(0, len(dataset), batch_size):
        yield dataset.subset(perm[start:start + batch_size])


# -- on-disk format ------------------------------------------------------

_FEATURES_HEADER = "<4I"  # N, H, W, D


def save_dataset(directory, dataset: Dataset):
    """Write labels.csv (integer labels) and features.bin (f64 payload)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    labels = dataset.labels
    if not np.isin(labels, (-1.0, 0.0, 1.0)).all():
        raise ValueError("export supports hard/partial labels only (values in {1,-1,0})")
    with open(directory / "labels.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in labels.astype(int):
            writer.writerow(row.tolist())
    n, h, w, d = dataset.features.shape
    with open(directory / "features.bin", "wb") as fh:
        fh.write(struct.pack(_FEATURES_HEADER, n, h, w, d))
        fh.write(np.ascontiguousarray(dataset.features, dtype="<f8").tobytes())


def load_dataset(directory) -> Dataset:
    directory = Path(directory)
    with open(directory / "features.bin", "rb") as fh:
        n, h, w, d = struct.unpack(_FEATURES_HEADER, fh.read(16))
        features = np.frombuffer(fh.read(), dtype="<f8").reshape(n, h, w, d).astype(np.float64)
    labels = np.loadtxt(directory / "labels.csv", delimiter=",", dtype=np.float64, ndmin=2)
    if labels.shape[0] != n:
        raise ValueError(f"labels.csv has {labels.shape[0]} rows but features.bin holds {n} samples")
    return Dataset(features, labels)


__all__ = [
    "DatasetSpec", "Dataset", "generate", "category_directions",
    "drop_labels", "batches", "save_dataset", "load_dataset",
]
