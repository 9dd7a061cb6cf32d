from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionError


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, grads, state):
    """Bias-corrected Adam update, applied in place to every array in ``params``."""
    for k, p in params.items():
        if k not in grads or np.shape(grads[k]) != p.shape:
            got = None if k not in grads else list(np.shape(grads[k]))
            raise DimensionError(f"adam: parameter {k} has shape {list(p.shape)}, gradient {got}")
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for k, p in params.items():
        g = grads[k]
        if k not in state.m:
            state.m[k] = np.zeros_like(p)
            state.v[k] = np.zeros_like(p)
        m = state.m[k] = state.beta1 * state.m[k] + (1 - state.beta1) * g
        v = state.v[k] = state.beta2 * state.v[k] + (1 - state.beta2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
    return params, state
