"""Parameter updates: plain SGD, Adam with bias correction, and a step decay."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from .params import ParamStore


def _check(params: ParamStore, grads: dict[str, np.ndarray]) -> None:
    for name, grad in grads.items():
        if np.asarray(grad).shape != params.get(name).shape:
            raise ShapeError(
                f"gradient for {name!r} has shape {np.asarray(grad).shape}, "
                f"param is {params.get(name).shape}"
            )


def sgd_step(params: ParamStore, grads: dict[str, np.ndarray], lr: float) -> None:
    _check(params, grads)
    for name, grad in grads.items():
        params.set(name, params.get(name) - lr * np.asarray(grad, dtype=np.float32))


class AdamState:
    def __init__(self, params: ParamStore):
        self.m = {k: np.zeros_like(v) for k, v in params.values.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.values.items()}
        self.t = 0


def adam_step(
    params: ParamStore,
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> None:
    _check(params, grads)
    b1, b2 = betas
    state.t += 1
    correct1 = 1.0 - b1**state.t
    correct2 = 1.0 - b2**state.t
    for name, grad in grads.items():
        g = np.asarray(grad, dtype=np.float32)
        state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        state.v[name] = b2 * state.v[name] + (1.0 - b2) * g * g
        m_hat = state.m[name] / correct1
        v_hat = state.v[name] / correct2
        params.set(name, params.get(name) - lr * m_hat / (np.sqrt(v_hat) + eps))


def step_lr(lr0: float, epoch: int, step_size: int = 5, gamma: float = 0.33) -> float:
    """Learning rate after `epoch` epochs: lr0 * gamma^(epoch // step_size)."""
    return lr0 * gamma ** (epoch // step_size)
