"""Adam with decoupled multiplicative weight decay, over lists of arrays."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class AdamState:
    t: int
    m: list
    v: list

    @classmethod
    def zeros_like(cls, arrays: list) -> "AdamState":
        return cls(t=0,
                   m=[np.zeros_like(a) for a in arrays],
                   v=[np.zeros_like(a) for a in arrays])


def adam_step(arrays: list, grads: list, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
              weight_decay: float = 0.0) -> tuple:
    """One bias-corrected Adam update; returns (new_arrays, new_state).

    Weight decay is decoupled: parameters shrink by lr * wd * theta on top
    of the Adam step, never through the gradient moments.
    """
    if len(arrays) != len(grads) or len(arrays) != len(state.m):
        raise ValueError("parameter/gradient/state lists must align")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("diverged: non-finite gradient")
    t = state.t + 1
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    new_arrays, new_m, new_v = [], [], []
    for a, g, m, v in zip(arrays, grads, state.m, state.v):
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        step = lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
        new_arrays.append(a - lr * weight_decay * a - step)
        new_m.append(m)
        new_v.append(v)
    return new_arrays, AdamState(t=t, m=new_m, v=new_v)
