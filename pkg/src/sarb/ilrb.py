"""Instance-level representation blending.

Pairs every sample n in a minibatch with a partner m through a random
derangement.  Wherever category c is unknown for n but known-positive for
m, the representation becomes ``alpha*f_n + (1-alpha)*f_m`` and the label
the soft target ``1-alpha``; all other entries pass through bit-exactly.
The per-category coefficients live in (0,1) via a sigmoid
reparameterization and start at 0.5.

Blended labels are detached targets: the coefficients learn only through
the blended representations.  Letting gradient flow through the soft
targets makes 0.5 an unstable equilibrium (the target path rewards
pushing every soft label toward 0 or 1) and drives the coefficients to
the extremes, which defeats blending.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Var, clip, lift, no_grad, sigmoid, where

_PAIR_TAG = 1021
_COEFF_MARGIN = 1e-12  # keeps sigmoid saturation from reaching exactly 0 or 1


@dataclass
class BlendedBatch:
    reps: Var            # (N, C, D) blended representations
    labels: np.ndarray   # (N, C) labels with soft entries where blending fired
    mask: np.ndarray     # (N, C) bool, True exactly where blending fired
    pick: np.ndarray | None = None  # prototype blending: chosen k per sample, -1 if none


class BlendCoefficients:
    """Per-category blend weights constrained to (0,1).

    Learnable by default (sigmoid of a raw vector initialized at 0, so
    every coefficient starts at 0.5).  ``fixed`` freezes all categories at
    one value in (0,1]; ``shared`` learns a single scalar used for every
    category.
    """

    def __init__(self, n_categories: int, fixed: float | None = None,
                 shared: bool = False, name: str = "alpha"):
        self.n_categories = n_categories
        self.name = name
        if fixed is not None:
            if not (0.0 < fixed <= 1.0):
                raise ValueError(f"fixed {name} must lie in (0, 1], got {fixed}")
            self.raw = None
            self._fixed = Var(np.full(n_categories, float(fixed)))
        else:
            size = 1 if shared else n_categories
            self.raw = Var(np.zeros(size), trainable=True, name=f"{name}.raw")
            self._fixed = None

    @property
    def learnable(self) -> bool:
        return self.raw is not None

    def effective(self) -> Var:
        """Coefficients in (0,1): (C,) when fixed/per-category, (1,) when shared."""
        if self.raw is None:
            return self._fixed
        return clip(sigmoid(self.raw), _COEFF_MARGIN, 1.0 - _COEFF_MARGIN)

    def values(self) -> np.ndarray:
        with no_grad():
            return np.broadcast_to(self.effective().data, (self.n_categories,)).copy()

    def named(self) -> dict[str, Var]:
        return {f"{self.name}.raw": self.raw} if self.raw is not None else {}


def pair_assignment(batch_size: int, seed: int, step: int) -> np.ndarray:
    """Fixed-point-free permutation of the batch, deterministic per (seed, step)."""
    if batch_size < 2:
        raise ValueError("pairing needs a batch of at least 2")
    rng = np.random.default_rng([seed, _PAIR_TAG, step])
    idx = np.arange(batch_size)
    while True:
        perm = rng.permutation(batch_size)
        if not np.any(perm == idx):
            return perm


def blend_pair(f_n: np.ndarray, f_m: np.ndarray, y_n: float, y_m: float,
               alpha: float) -> tuple[np.ndarray, float]:
    """Reference single-entry rule: blend only when y_n is unknown and y_m positive."""
    if y_n == 0.0 and y_m == 1.0:
        return alpha * f_n + (1.0 - alpha) * f_m, 1.0 - alpha
    return f_n, y_n


def blend_batch(reps: Var, labels: np.ndarray, alpha, perm: np.ndarray) -> BlendedBatch:
    """Vectorized blending over a batch, elementwise-identical to blend_pair.

    ``alpha`` is a BlendCoefficients or an effective (C,)/(1,) Var.
    Gradient reaches the coefficients only through the representations of
    entries where blending fired; everywhere else the output selects the
    untouched operand, and the soft labels are plain (detached) values.
    """
    perm = np.asarray(perm)
    n = reps.shape[0]
    if perm.shape != (n,) or np.any(np.sort(perm) != np.arange(n)) or np.any(perm == np.arange(n)):
        raise ValueError("perm must be a derangement of the batch indices")
    a = alpha.effective() if isinstance(alpha, BlendCoefficients) else lift(alpha)
    labels = np.asarray(labels, dtype=np.float64)
    mask = (labels == 0.0) & (labels[perm] == 1.0)

    a_rep = a.reshape((1, a.size, 1)) if a.size > 1 else a.reshape((1, 1, 1))
    blended = a_rep * reps + (1.0 - a_rep) * reps[perm]
    out_reps = where(mask[:, :, None], blended, reps)

    a_row = np.broadcast_to(a.data, (1, labels.shape[1])) if a.size > 1 else a.data.reshape(1, 1)
    out_labels = np.where(mask, 1.0 - a_row, labels)
    return BlendedBatch(out_reps, out_labels, mask)
