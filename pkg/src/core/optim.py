"""
Adam with classic L2 weight decay (decay added to the gradient before the moments).
"""
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from .errors import ConfigError, UsageError
from .tensor import Parameter


@dataclass
class AdamState:
    """Optimizer hyperparameters plus per-parameter moment buffers keyed by parameter name."""
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.lr < 0 or self.weight_decay < 0:
            raise ConfigError("lr and weight_decay must be non-negative")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError("Adam betas must lie in [0, 1)")


def adam_step(params: Sequence[Parameter], state: AdamState):
    """
    Apply one bias-corrected Adam update in place.

    Raises:
        UsageError: If a parameter has no gradient.
    """
    missing = [p.name or repr(p) for p in params if p.grad is None]
    if missing:
        raise UsageError(f"adam_step: no gradient for {', '.join(missing[:5])}")

    state.step += 1
    correction1 = 1.0 - state.beta1 ** state.step
    correction2 = 1.0 - state.beta2 ** state.step
    for index, p in enumerate(params):
        key = p.name or str(index)
        grad = p.grad + state.weight_decay * p.data if state.weight_decay else p.grad
        m = state.m.get(key)
        v = state.v.get(key)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
        state.m[key] = m
        state.v[key] = v
        p.data -= state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)


class Adam:
    """
    Thin stateful wrapper around `adam_step`, owning the parameters it updates.

    Args:
        params: Parameters to optimise (names should be unique).
        lr, beta1, beta2, eps, weight_decay: see AdamState.
    """

    def __init__(self, params: Sequence[Parameter], lr: float = 1e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8, weight_decay: float = 0.0):
        self.params: List[Parameter] = list(params)
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps, weight_decay=weight_decay)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        # Parameters outside the loss graph (e.g. unused student heads) keep a zero gradient.
        for p in self.params:
            if p.grad is None:
                p.grad = np.zeros_like(p.data)
        adam_step(self.params, self.state)
