"""SGD with momentum and Adam, operating on :class:`ParamSet` gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError


@dataclass
class OptimizerState:
    """Hyperparameters plus per-parameter slots.

    ``kind`` is ``"sgd-momentum"`` or ``"adam"``.  Slots are keyed by
    parameter name and created lazily on the first step.
    """

    kind: str
    lr: float
    momentum: float = 0.9
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    slots: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("sgd-momentum", "adam"):
            raise ValueError(f"unknown optimizer kind {self.kind!r}")


def sgd(lr, momentum=0.9, weight_decay=0.0) -> OptimizerState:
    return OptimizerState("sgd-momentum", lr=lr, momentum=momentum, weight_decay=weight_decay)


def adam(lr, weight_decay=0.0, beta1=0.9, beta2=0.999, eps=1e-8) -> OptimizerState:
    return OptimizerState("adam", lr=lr, weight_decay=weight_decay, beta1=beta1, beta2=beta2, eps=eps)


def optimizer_step(state: OptimizerState, params) -> None:
    """Apply one descent update in place using each tensor's ``grad``."""
    for name, p in params.items():
        if p.grad is None:
            raise ContractError(f"parameter {name!r} has no gradient")
    state.step_count += 1
    t = state.step_count
    for name, p in params.items():
        g = p.grad
        if state.weight_decay:
            g = g + state.weight_decay * p.data
        if state.kind == "sgd-momentum":
            v = state.slots.get(name)
            v = g.copy() if v is None else state.momentum * v + g
            state.slots[name] = v
            p.data -= state.lr * v
        else:
            m, s = state.slots.get(name, (np.zeros_like(p.data), np.zeros_like(p.data)))
            m = state.beta1 * m + (1.0 - state.beta1) * g
            s = state.beta2 * s + (1.0 - state.beta2) * g * g
            state.slots[name] = (m, s)
            mhat = m / (1.0 - state.beta1 ** t)
            shat = s / (1.0 - state.beta2 ** t)
            p.data -= state.lr * mhat / (np.sqrt(shat) + state.eps)
