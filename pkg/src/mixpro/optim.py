"""AdamW with decoupled weight decay, and the warmup + cosine learning-rate schedule."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor


@dataclass
class OptimizerState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.05
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adamw_step(params: list[np.ndarray], grads: list[np.ndarray | None],
               state: OptimizerState, decay_mask: list[bool] | None = None) -> None:
    """One in-place AdamW update of ``params``.

    Weight decay multiplies the parameter directly (``theta *= 1 - lr*wd``) and
    never enters the moment estimates. ``decay_mask[i] = False`` exempts a
    parameter from decay. A ``None`` gradient is treated as zero.
    """
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    if len(state.m) != len(params):
        raise ValueError("optimizer state does not match the parameter list")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    lr, wd = state.lr, state.weight_decay
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            g = np.zeros_like(p)
        if g.shape != p.shape or state.m[i].shape != p.shape:
            raise ValueError(f"shape mismatch for parameter {i}: {p.shape} vs {g.shape}")
        m, v = state.m[i], state.v[i]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if wd and (decay_mask is None or decay_mask[i]):
            p *= 1.0 - lr * wd
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


class AdamW:
    """Holds the tensors it updates plus their :class:`OptimizerState`."""

    def __init__(self, params: list[Tensor], lr: float = 1e-3, betas=(0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 0.05,
                 decay_mask: list[bool] | None = None):
        self.params = list(params)
        self.state = OptimizerState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps,
                                    weight_decay=weight_decay)
        self.decay_mask = decay_mask

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        adamw_step([p.data for p in self.params], [p.grad for p in self.params],
                   self.state, self.decay_mask)


def lr_at_step(step: int, warmup_steps: int, total_steps: int,
               base_lr: float, min_lr: float) -> float:
    """Linear warmup from 0 to ``base_lr``, then cosine decay to ``min_lr``."""
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    if warmup_steps >= total_steps:
        raise ValueError("warmup_steps must be smaller than total_steps")
    if step < warmup_steps:
        return base_lr * step / warmup_steps
    progress = (step - warmup_steps) / (total_steps - warmup_steps)
    return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + math.cos(math.pi * progress))
