"""Adam with bias correction."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_update(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState,
                lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                eps: float = 1e-8) -> tuple[dict[str, np.ndarray], AdamState]:
    """One Adam step. Returns new parameter arrays and the advanced state;
    the inputs are not modified."""
    if params.keys() != grads.keys():
        raise ValueError("parameter and gradient names differ")
    step = state.step + 1
    new_params, m_new, v_new = {}, {}, {}
    c1 = 1.0 - beta1**step
    c2 = 1.0 - beta2**step
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name!r}")
        m = state.m.get(name, np.zeros_like(p))
        v = state.v.get(name, np.zeros_like(p))
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        m_hat = m / c1
        v_hat = v / c2
        new_params[name] = (p - lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.dtype, copy=False)
        m_new[name] = m.astype(p.dtype, copy=False)
        v_new[name] = v.astype(p.dtype, copy=False)
    return new_params, AdamState(step, m_new, v_new)


class Adam:
    """In-place Adam over a layer's named parameters."""

    def __init__(self, named_params, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = dict(named_params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.state = AdamState()

    def step(self) -> None:
        values = {n: p.value for n, p in self.params.items()}
        grads = {n: p.grad for n, p in self.params.items()}
        new, self.state = adam_update(values, grads, self.state, self.lr,
                                      self.beta1, self.beta2, self.eps)
        for n, p in self.params.items():
            p.value[...] = new[n]
