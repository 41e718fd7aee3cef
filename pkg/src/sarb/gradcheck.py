"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Var, backward, no_grad, zero_grads


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_param: str
    worst_index: int
    tolerance: float
    per_param: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance


def grad_check(build_loss, params: dict[str, Var], tolerance: float = 1e-4,
               step: float = 1e-5, floor: float = 1e-3) -> GradCheckReport:
    """Compare analytic gradients against central differences.

    ``build_loss`` must deterministically rebuild the same scalar loss on
    every call (the parameters are perturbed in place between calls).
    The relative error uses an absolute floor in the denominator so that
    entries with (near-)zero gradient are judged against finite-difference
    noise instead of dividing by ~0.
    """
    zero_grads(params)
    loss = build_loss()
    backward(loss)
    analytic = {name: p.grad.copy() for name, p in params.items()}

    def loss_value() -> float:
        with no_grad():
            return float(build_loss().data)

    worst = (0.0, "", 0)
    per_param = {}
    for name, p in params.items():
        flat = p.data.reshape(-1)
        grads = analytic[name].reshape(-1)
        param_worst = 0.0
        for i in range(flat.size):
            x0 = flat[i]
            flat[i] = x0 + step
            up = loss_value()
            flat[i] = x0 - step
            down = loss_value()
            flat[i] = x0
            fd = (up - down) / (2.0 * step)
            a = grads[i]
            rel = abs(a - fd) / max(abs(a), abs(fd), floor)
            if rel > param_worst:
                param_worst = rel
            if rel > worst[0]:
                worst = (rel, name, i)
        per_param[name] = param_worst
    return GradCheckReport(max_rel_error=worst[0], worst_param=worst[1],
                           worst_index=worst[2], tolerance=tolerance,
                           per_param=per_param)
