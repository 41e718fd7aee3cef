"""Category-specific representations and the shared gated classifier.

``decouple`` turns a feature map into one D-vector per category via
dot-product attention: each category owns a learnable query, attention
over the H*W cells is softmax-normalized, and the attended feature is
passed through a shared linear projection.  ``classify`` scores each
category vector with a per-category sigmoid gate followed by a linear
head and a sigmoid, so scores always lie in (0, 1).  The same classifier
instance scores the original and both blended branches.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Var, einsum, lift, mul, sigmoid, softmax


@dataclass
class CsrlParams:
    queries: Var    # (C, D) one semantic query per category
    proj: Var       # (D, D) shared output projection
    proj_bias: Var  # (D,)

    @classmethod
    def init(cls, n_categories: int, depth: int, rng: np.random.Generator) -> "CsrlParams":
        # 1/sqrt(D) keeps the initial attention soft; unit-scale queries
        # saturate the cell softmax at random cells and stall learning
        scale = 1.0 / np.sqrt(depth)
        return cls(
            queries=Var(rng.standard_normal((n_categories, depth)) * scale, trainable=True, name="csrl.queries"),
            proj=Var(rng.standard_normal((depth, depth)) * scale, trainable=True, name="csrl.proj"),
            proj_bias=Var(np.zeros(depth), trainable=True, name="csrl.proj_bias"),
        )

    def named(self) -> dict[str, Var]:
        return {"csrl.queries": self.queries, "csrl.proj": self.proj,
                "csrl.proj_bias": self.proj_bias}


@dataclass
class ClassifierParams:
    gate: Var         # (C, D, D) per-category gating matrix
    gate_bias: Var    # (C, D)
    linear: Var       # (C, D) per-category weight vector
    linear_bias: Var  # (C,)

    @classmethod
    def init(cls, n_categories: int, depth: int, rng: np.random.Generator) -> "ClassifierParams":
        scale = 1.0 / np.sqrt(depth)
        return cls(
            gate=Var(rng.standard_normal((n_categories, depth, depth)) * scale, trainable=True, name="clf.gate"),
            gate_bias=Var(np.zeros((n_categories, depth)), trainable=True, name="clf.gate_bias"),
            linear=Var(rng.standard_normal((n_categories, depth)) * scale, trainable=True, name="clf.linear"),
            linear_bias=Var(np.zeros(n_categories), trainable=True, name="clf.linear_bias"),
        )

    def named(self) -> dict[str, Var]:
        return {"clf.gate": self.gate, "clf.gate_bias": self.gate_bias,
                "clf.linear": self.linear, "clf.linear_bias": self.linear_bias}


def _as_cells(feature_maps) -> tuple[Var, bool]:
    """(N,H,W,D) or (H,W,D) -> constant (N, H*W, D) Var plus a single flag."""
    fm = lift(feature_maps)
    single = fm.ndim == 3
    if single:
        fm = fm.reshape((1,) + fm.shape)
    if fm.ndim != 4:
        raise ValueError(f"feature maps must be (N,H,W,D) or (H,W,D), got {fm.shape}")
    n, h, w, d = fm.shape
    return fm.reshape((n, h * w, d)), single


def decouple(feature_maps, params: CsrlParams) -> Var:
    """Per-category attention pooling: (N,H,W,D) -> (N,C,D) representations."""
    cells, single = _as_cells(feature_maps)
    logits = einsum("cd,npd->ncp", params.queries, cells)
    attn = softmax(logits, axis=2)
    pooled = einsum("ncp,npd->ncd", attn, cells)
    reps = einsum("ncd,de->nce", pooled, params.proj) + params.proj_bias
    return reps[0] if single else reps


def attention_map(feature_map, params: CsrlParams) -> np.ndarray:
    """Attention weights (C, H*W) for one feature map, for inspection."""
    from .autodiff import no_grad

    with no_grad():
        cells, _ = _as_cells(feature_map)
        logits = einsum("cd,npd->ncp", params.queries, cells)
        return softmax(logits, axis=2).data[0]


def classify(reps, params: ClassifierParams) -> Var:
    """Score category representations: (N,C,D) -> (N,C) in (0,1)."""
    reps = lift(reps)
    single = reps.ndim == 2
    if single:
        reps = reps.reshape((1,) + reps.shape)
    gate_lin = einsum("ncd,cde->nce", reps, params.gate) + params.gate_bias
    gated = mul(reps, sigmoid(gate_lin))
    logits = einsum("ncd,cd->nc", gated, params.linear) + params.linear_bias
    scores = sigmoid(logits)
    return scores[0] if single else scores
