"""Adam with bias correction."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import math

import numpy as np

from ..numerics import NumericError, Tensor


@dataclass
class AdamState:
    m: List[np.ndarray]
    v: List[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: Sequence[Tensor]) -> "AdamState":
        return cls([np.zeros_like(p.data) for p in params], [np.zeros_like(p.data) for p in params], 0)


def adam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray], state: AdamState, lr: float,
              beta1: float = 0.5, beta2: float = 0.99, eps: float = 1e-8) -> float:
    """theta <- theta - lr * m_hat / (sqrt(v_hat) + eps), in place.

    Returns the L2 norm of the applied update over all parameters.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state have different lengths")
    for g in grads:
        if g is not None and not np.isfinite(g).all():
            raise NumericError("non-finite gradient passed to Adam")
    state.t += 1
    c1 = 1.0 - beta1 ** state.t
    c2 = 1.0 - beta2 ** state.t
    sq = 0.0
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        update = (lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(p.dtype)
        new = p.data - update
        sq += float(np.sum(np.square(new - p.data, dtype=np.float64)))
        p.data = new
    return math.sqrt(sq)


class Adam:
    """Optimizer over a fixed parameter list; reads ``p.grad``."""

    def __init__(self, params: Sequence[Tensor], lr: float, betas=(0.5, 0.99), eps: float = 1e-8):
        if lr < 0:
            raise ValueError(f"learning rate must be non-negative, got {lr}")
        b1, b2 = betas
        if not 0 <= b1 < b2 < 1:
            raise ValueError(f"Adam betas must satisfy 0 <= b1 < b2 < 1, got {betas}")
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, b1, b2, eps
        self.state = AdamState.zeros_like(self.params)

    def step(self) -> float:
        return adam_step(self.params, [p.grad for p in self.params], self.state, self.lr,
                  self.beta1, self.beta2, self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def state_arrays(self, prefix: str, names: Sequence[str]) -> Dict[str, np.ndarray]:
        out = {}
        for n, m, v in zip(names, self.state.m, self.state.v):
            out[f"{prefix}.m.{n}"] = m
            out[f"{prefix}.v.{n}"] = v
        out[f"{prefix}.t"] = np.array([self.state.t], dtype=np.uint64)
        return out
