"""Partial binary cross-entropy and the combined training objective.

Labels map to targets as +1 -> 1, -1 -> 0, soft t in (0,1) -> t; unknown
entries (0) get weight zero, so their scores receive an exactly-zero
gradient.  Each sample's loss is normalized by its known count, and the
batch loss is the mean over samples, which keeps the scale independent of
both the known-label proportion and the batch size.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Var, clip, lift, log, where

SCORE_CLAMP = 1e-7  # keeps log finite for scores at the sigmoid's limits


@dataclass
class LossReport:
    main: float
    ilrb: float
    plrb: float
    cst: float
    total: float
    known_counts: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def cls(self) -> float:
        return self.main + self.ilrb + self.plrb


def partial_bce(labels, scores) -> Var:
    """Per-sample BCE over known and soft entries, normalized by known count.

    Accepts a single sample (C,) -> scalar Var, or a batch (N, C) -> (N,)
    Var of per-sample losses.  A sample with no known entries contributes
    an exact 0 with zero gradient.
    """
    y = lift(labels)
    s = lift(scores)
    if y.shape != s.shape:
        raise ValueError(f"labels {y.shape} and scores {s.shape} differ in shape")
    values = y.data
    weight = (values != 0.0).astype(np.float64)
    hard = np.abs(values) == 1.0
    target = where(hard, (y + 1.0) * 0.5, y)
    sc = clip(s, SCORE_CLAMP, 1.0 - SCORE_CLAMP)
    loglik = target * log(sc) + (1.0 - target) * log(1.0 - sc)
    weighted = (loglik * weight).sum(axis=-1)
    denom = np.maximum(weight.sum(axis=-1), 1.0)
    return weighted * (-1.0 / denom)


def classification_loss(main, ilrb=None, plrb=None) -> Var:
    """Batch mean of the summed per-sample losses of the active branches.

    Each branch is a (labels, scores) pair; pass None for a disabled
    branch, which contributes exactly zero.
    """
    total = partial_bce(*main).mean()
    if ilrb is not None:
        total = total + partial_bce(*ilrb).mean()
    if plrb is not None:
        total = total + partial_bce(*plrb).mean()
    return total


def total_loss(l_cls: Var, l_cst=None, contrastive_weight: float = 0.05) -> Var:
    """Classification loss plus the weighted contrastive term."""
    if l_cst is None:
        return l_cls
    return l_cls + contrastive_weight * l_cst


def known_counts(labels) -> np.ndarray:
    """Number of known (non-zero) label entries per sample."""
    values = labels.data if isinstance(labels, Var) else np.asarray(labels)
    return (values != 0.0).sum(axis=-1)
