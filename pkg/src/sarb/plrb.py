"""Prototype-level representation blending and the contrastive loss.

Per category, the representations of known-positive samples are clustered
into K prototypes with k-means (k-means++ init, Lloyd iterations, restart
budget).  During training each sample picks one unknown category with a
valid prototype set uniformly at random, picks one of its K prototypes
uniformly, and blends ``beta*f + (1-beta)*p`` with soft target
``1-beta``.  Prototypes are constants between rebuilds: no gradient flows
into the bank.

The contrastive term pulls same-category representations of two
known-positive samples together (1 - cosine) and pushes other admitted
pairs apart (1 + cosine).  By default only pairs with both labels known
enter the sum; the ``literal`` policy admits every ordered pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Var, cosine, einsum, lift, no_grad, sqrt, where
from .ilrb import BlendCoefficients, BlendedBatch
from .model import CsrlParams, decouple

_PLRB_TAG = 1031
_NORM_EPS = 1e-12


# -- k-means ---------------------------------------------------------------


@dataclass
class KMeansResult:
    centroids: np.ndarray   # (K, D)
    assignment: np.ndarray  # (M,)
    sse: float


def _sse(points, centroids, assignment) -> float:
    diff = points - centroids[assignment]
    return float(np.sum(diff * diff))


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    m = points.shape[0]
    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[rng.integers(m)]
    d2 = np.sum((points - centroids[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            idx = rng.integers(m)
        else:
            idx = rng.choice(m, p=d2 / total)
        centroids[j] = points[idx]
        d2 = np.minimum(d2, np.sum((points - centroids[j]) ** 2, axis=1))
    return centroids


def _lloyd(points: np.ndarray, centroids: np.ndarray, max_iters: int) -> KMeansResult:
    k = centroids.shape[0]
    assignment = None
    prev_sse = np.inf
    for _ in range(max_iters):
        d2 = np.sum((points[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
        new_assignment = np.argmin(d2, axis=1)
        for j in range(k):
            if not np.any(new_assignment == j):
                # re-seed an empty cluster from the farthest point
                farthest = int(np.argmax(d2[np.arange(len(points)), new_assignment]))
                centroids[j] = points[farthest]
                new_assignment[farthest] = j
                d2[:, j] = np.sum((points - centroids[j]) ** 2, axis=1)
        for j in range(k):
            members = points[new_assignment == j]
            if members.shape[0]:  # a reseed may have emptied another cluster
                centroids[j] = members.mean(axis=0)
        sse = _sse(points, centroids, new_assignment)
        if not sse <= prev_sse + 1e-9:
            raise AssertionError(f"k-means SSE increased: {prev_sse} -> {sse}")
        if assignment is not None and np.array_equal(assignment, new_assignment):
            break
        assignment = new_assignment
        prev_sse = sse
    return KMeansResult(centroids, assignment, prev_sse)


def _hartigan_polish(points: np.ndarray, result: KMeansResult) -> KMeansResult:
    """Single-point improvement moves until no reassignment lowers the SSE.

    Lloyd stops at assignment fixpoints whose basins can exclude the true
    optimum even on tiny inputs; exact one-point move deltas (with the
    centroid shift accounted for) escape most of them.  Deterministic scan
    order, strictly decreasing SSE, so termination is guaranteed.
    """
    k = result.centroids.shape[0]
    assignment = result.assignment.copy()
    counts = np.bincount(assignment, minlength=k).astype(float)
    centroids = result.centroids.copy()
    improved = True
    while improved:
        improved = False
        for i in range(len(points)):
            a = assignment[i]
            if counts[a] <= 1:
                continue
            d_a = float(((points[i] - centroids[a]) ** 2).sum())
            removal_gain = counts[a] / (counts[a] - 1.0) * d_a
            best_j, best_delta = -1, -1e-12
            for j in range(k):
                if j == a:
                    continue
                d_j = float(((points[i] - centroids[j]) ** 2).sum())
                delta = counts[j] / (counts[j] + 1.0) * d_j - removal_gain
                if delta < best_delta:
                    best_j, best_delta = j, delta
            if best_j >= 0:
                centroids[a] = (centroids[a] * counts[a] - points[i]) / (counts[a] - 1.0)
                centroids[best_j] = (centroids[best_j] * counts[best_j] + points[i]) / (counts[best_j] + 1.0)
                counts[a] -= 1.0
                counts[best_j] += 1.0
                assignment[i] = best_j
                improved = True
    for j in range(k):
        members = points[assignment == j]
        if members.shape[0]:
            centroids[j] = members.mean(axis=0)
    return KMeansResult(centroids, assignment, _sse(points, centroids, assignment))


def kmeans(points, k: int, seed, max_iters: int = 100, restarts: int = 5) -> KMeansResult:
    """Best of ``restarts`` k-means++ / Lloyd runs (with a one-point-move
    polish), deterministic per seed."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError(f"points must be (M, D), got shape {points.shape}")
    if k < 1:
        raise ValueError("k must be positive")
    if points.shape[0] < k:
        raise ValueError(f"k-means needs at least k={k} points, got {points.shape[0]}")
    rng = np.random.default_rng(seed)
    best: KMeansResult | None = None
    for _ in range(restarts):
        init = _kmeans_pp_init(points, k, rng)
        result = _hartigan_polish(points, _lloyd(points, init.copy(), max_iters))
        if best is None or result.sse < best.sse:
            best = result
    return best


# -- prototype bank ----------------------------------------------------------


@dataclass
class PrototypeBank:
    prototypes: np.ndarray  # (C, K, D)
    valid: np.ndarray       # (C,) bool: category has >= K known-positive samples
    built_at_epoch: int = -1

    @property
    def k(self) -> int:
        return self.prototypes.shape[1]

    @property
    def any_valid(self) -> bool:
        return bool(self.valid.any())


def _all_reps(dataset, csrl: CsrlParams, chunk: int = 256) -> np.ndarray:
    """Representations for every sample, computed without tape recording."""
    out = []
    with no_grad():
        for start in range(0, len(dataset), chunk):
            out.append(decouple(dataset.features[start:start + chunk], csrl).data)
    return np.concatenate(out, axis=0)


def collect_category_reps(dataset, csrl: CsrlParams, category: int) -> np.ndarray:
    """Representations of the samples whose label for ``category`` is known-positive."""
    members = np.flatnonzero(dataset.labels[:, category] == 1.0)
    if members.size == 0:
        return np.empty((0, csrl.proj.shape[0]))
    with no_grad():
        reps = decouple(dataset.features[members], csrl).data
    return reps[:, category, :]


def build_bank(dataset, csrl: CsrlParams, k: int, seed: int, epoch: int,
               restarts: int = 5) -> PrototypeBank:
    """Cluster known-positive representations of each category into K prototypes.

    Categories with fewer than K known-positive samples are flagged
    invalid and never sampled for blending.
    """
    reps = _all_reps(dataset, csrl)
    n_categories = dataset.labels.shape[1]
    depth = reps.shape[2]
    prototypes = np.zeros((n_categories, k, depth))
    valid = np.zeros(n_categories, dtype=bool)
    for cat in range(n_categories):
        members = reps[dataset.labels[:, cat] == 1.0, cat, :]
        if members.shape[0] < k:
            continue
        result = kmeans(members, k, seed=[seed, epoch, cat], restarts=restarts)
        prototypes[cat] = result.centroids
        valid[cat] = True
    return PrototypeBank(prototypes, valid, built_at_epoch=epoch)


def save_bank_csv(path, bank: PrototypeBank):
    """Dump prototypes for inspection: category, k, then the D components."""
    import csv as _csv

    with open(path, "w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["category", "k", "valid"] + [f"d{i}" for i in range(bank.prototypes.shape[2])])
        for cat in range(bank.prototypes.shape[0]):
            for j in range(bank.k):
                writer.writerow([cat, j, int(bank.valid[cat])] + [repr(x) for x in bank.prototypes[cat, j]])


# -- contrastive loss --------------------------------------------------------


def contrastive_pair(f_n, f_m, y_n: float, y_m: float) -> Var:
    """1 - cos for two known-positive labels, 1 + cos otherwise; in [0, 2]."""
    c = cosine(f_n, f_m, eps=_NORM_EPS)
    if y_n == 1.0 and y_m == 1.0:
        return 1.0 - c
    return 1.0 + c


def contrastive_batch(reps: Var, labels: np.ndarray, policy: str = "known-only") -> Var:
    """Mean contrastive term over admitted ordered pairs (n != m) and categories.

    ``known-only`` admits a (n, m, c) term only when both labels for c are
    known; ``literal`` admits every ordered pair, repelling pairs that
    involve unknown labels as well.
    """
    if policy not in ("known-only", "literal"):
        raise ValueError(f"unknown contrastive policy {policy!r}")
    labels = np.asarray(labels, dtype=np.float64)
    n = labels.shape[0]
    if n < 2:
        raise ValueError("contrastive loss needs a batch of at least 2")
    pos = labels == 1.0
    known = labels != 0.0
    off_diag = ~np.eye(n, dtype=bool)[:, :, None]
    if policy == "known-only":
        admit = known[:, None, :] & known[None, :, :] & off_diag
    else:
        admit = np.broadcast_to(off_diag, (n, n, labels.shape[1])).copy()
    count = int(admit.sum())
    if count == 0:
        return Var(0.0)
    sign = np.where(pos[:, None, :] & pos[None, :, :], -1.0, 1.0)

    norms = sqrt((reps * reps).sum(axis=2, keepdims=True)) + _NORM_EPS
    unit = reps / norms
    cos = einsum("ncd,mcd->nmc", unit, unit)
    terms = (1.0 + sign * cos) * admit.astype(np.float64)
    return terms.sum() / float(count)


# -- prototype blending -------------------------------------------------------


def blend_with_prototypes(reps: Var, labels: np.ndarray, beta, bank: PrototypeBank,
                          seed: int, step: int) -> BlendedBatch:
    """Blend one unknown category per sample with a random prototype.

    For each sample, one category with an unknown label and a valid
    prototype set is chosen uniformly (if any), one of the K prototypes is
    chosen uniformly, and the entry becomes ``beta*f + (1-beta)*p`` with
    soft label ``1-beta``.  Everything else passes through bit-exactly.
    Like the instance-level module, soft labels are detached targets.
    """
    labels = np.asarray(labels, dtype=np.float64)
    n, n_categories = labels.shape
    rng = np.random.default_rng([seed, _PLRB_TAG, step])
    mask = np.zeros((n, n_categories), dtype=bool)
    pick = np.full(n, -1, dtype=int)
    chosen = np.zeros((n, n_categories, bank.prototypes.shape[2]))
    for i in range(n):
        eligible = np.flatnonzero((labels[i] == 0.0) & bank.valid)
        if eligible.size == 0:
            continue
        cat = int(rng.choice(eligible))
        proto_idx = int(rng.integers(bank.k))
        mask[i, cat] = True
        pick[i] = proto_idx
        chosen[i, cat] = bank.prototypes[cat, proto_idx]

    b = beta.effective() if isinstance(beta, BlendCoefficients) else lift(beta)
    b_rep = b.reshape((1, b.size, 1)) if b.size > 1 else b.reshape((1, 1, 1))
    blended = b_rep * reps + (1.0 - b_rep) * chosen
    out_reps = where(mask[:, :, None], blended, reps)

    b_row = np.broadcast_to(b.data, (1, n_categories)) if b.size > 1 else b.data.reshape(1, 1)
    out_labels = np.where(mask, 1.0 - b_row, labels)
    return BlendedBatch(out_reps, out_labels, mask, pick=pick)
