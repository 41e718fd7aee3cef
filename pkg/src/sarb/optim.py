"""Adam optimizer with bias correction and decoupled weight decay."""

from __future__ import annotations

import numpy as np

from .autodiff import Var


class Adam:
    """Standard bias-corrected Adam; weight decay is applied directly to
    the parameters (decoupled), never through the gradient.

    ``params`` is an ordered name -> Var mapping; iteration order is the
    insertion order, which keeps runs bit-reproducible.  Names listed in
    ``no_decay`` are exempt from weight decay (used for the bounded blend
    coefficients), and ``lr_scale`` applies per-parameter multipliers on
    top of the shared learning rate.
    """

    def __init__(self, params, lr=1e-5, beta1=0.9, beta2=0.999, eps=1e-8,
                 weight_decay=5e-4, no_decay=(), lr_scale=None):
        self.params: dict[str, Var] = dict(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self.no_decay = frozenset(no_decay)
        self.lr_scale = dict(lr_scale or {})
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in self.params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in self.params.items()}

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def step(self):
        """One update over all parameters (no-op on an empty set)."""
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            lr = self.lr * self.lr_scale.get(name, 1.0)
            g = p.grad
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            m_hat = m / bc1
            v_hat = v / bc2
            p.data -= lr * m_hat / (np.sqrt(v_hat) + self.eps)
            if self.weight_decay != 0.0 and name not in self.no_decay:
                p.data -= lr * self.weight_decay * p.data

    # -- checkpointing ---------------------------------------------------

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Flat name -> array view of the optimizer state."""
        out = {"adam.t": np.array([float(self.t)])}
        for name in self.params:
            out[f"adam.m.{name}"] = self.m[name]
            out[f"adam.v.{name}"] = self.v[name]
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]):
        self.t = int(arrays["adam.t"][0])
        for name, p in self.params.items():
            m = arrays[f"adam.m.{name}"]
            v = arrays[f"adam.v.{name}"]
            if m.shape != p.data.shape or v.shape != p.data.shape:
                raise ValueError(f"optimizer state shape mismatch for {name}")
            self.m[name] = m.copy()
            self.v[name] = v.copy()
