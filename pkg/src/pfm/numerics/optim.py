from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np


@dataclass
class AdamState:
    """Adam moments plus an optional cosine learning-rate schedule.

    With ``total_steps`` set the learning rate decays from ``lr`` to
    ``min_lr`` over that many steps and stays at ``min_lr`` afterwards.
    """

    lr: float
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    step: int = 0
    b1: float = 0.9
    b2: float = 0.999
    eps: float = 1e-8
    total_steps: int | None = None
    min_lr: float = 0.0

    def current_lr(self) -> float:
        if not self.total_steps:
            return self.lr
        frac = min(self.step, self.total_steps) / self.total_steps
        return self.min_lr + 0.5 * (self.lr - self.min_lr) * (1.0 + math.cos(math.pi * frac))


def adam_init(params, lr: float, total_steps: int | None = None, min_lr: float = 0.0) -> AdamState:
    return AdamState(
        lr=lr,
        m=[np.zeros_like(p) for p in params],
        v=[np.zeros_like(p) for p in params],
        total_steps=total_steps,
        min_lr=min_lr,
    )


def adam_step(state: AdamState, params, grads):
    """One bias-corrected Adam update; returns ``(new_params, new_state)``."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("parameter, gradient and moment lists differ in length")
    lr = state.current_lr()
    k = state.step + 1
    c1 = 1.0 - state.b1**k
    c2 = 1.0 - state.b2**k
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ValueError(f"shape mismatch: param {p.shape}, grad {g.shape}, moment {m.shape}")
        m = state.b1 * m + (1.0 - state.b1) * g
        v = state.b2 * v + (1.0 - state.b2) * g * g
        new_p.append(p - lr * (m / c1) / (np.sqrt(v / c2) + state.eps))
        new_m.append(m)
        new_v.append(v)
    return new_p, replace(state, m=new_m, v=new_v, step=k)
