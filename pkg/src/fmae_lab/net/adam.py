"""Adam with bias correction, operating in place on a ParameterSet."""
from dataclasses import dataclass, field
from typing import List

import numpy as np

from ..exceptions import ShapeMismatch


@dataclass(eq=False)
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("learning rate must be non-negative")


def adam_step(state, params, grads):
    """One Adam update; mutates and returns ``(params, state)``."""
    tensors = params.tensors
    if len(grads) != len(tensors):
        raise ShapeMismatch(f"{len(grads)} gradients for {len(tensors)} parameters")
    for g, p in zip(grads, tensors):
        if g.shape != p.shape:
            raise ShapeMismatch(f"gradient shape {g.shape} != parameter shape {p.shape}")
    if not state.m:
        state.m = [np.zeros_like(p) for p in tensors]
        state.v = [np.zeros_like(p) for p in tensors]
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(tensors, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state
