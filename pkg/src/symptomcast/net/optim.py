"""Named parameter collection and the bias-corrected Adam update."""

from __future__ import annotations

import numpy as np

from .layers import Param


class ParamSet:
    """Named parameters with their gradients and Adam moment state."""

    def __init__(self, named: dict[str, Param]):
        self.params = dict(named)
        self.m = {k: np.zeros_like(p.value) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.value) for k, p in self.params.items()}
        self.t = 0

    def zero_grads(self):
        for p in self.params.values():
            p.grad[...] = 0.0

    def scale_grads(self, factor: float):
        for p in self.params.values():
            p.grad *= factor

    def n_parameters(self) -> int:
        return sum(p.value.size for p in self.params.values())

    def values(self) -> dict[str, np.ndarray]:
        return {k: p.value.copy() for k, p in self.params.items()}

    def load_values(self, values: dict[str, np.ndarray]):
        for k, p in self.params.items():
            if k not in values:
                raise KeyError(f"checkpoint is missing parameter {k!r}")
            if values[k].shape != p.value.shape:
                raise ValueError(f"{k}: shape {values[k].shape} != expected {p.value.shape}")
            p.value[...] = values[k]


def adam_step(ps: ParamSet, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update; increments the step count, zeroes grads."""
    ps.t += 1
    c1 = 1.0 - beta1**ps.t
    c2 = 1.0 - beta2**ps.t
    for k, p in ps.params.items():
        g = p.grad
        ps.m[k] = beta1 * ps.m[k] + (1.0 - beta1) * g
        ps.v[k] = beta2 * ps.v[k] + (1.0 - beta2) * g * g
        p.value -= lr * (ps.m[k] / c1) / (np.sqrt(ps.v[k] / c2) + eps)
        p.grad[...] = 0.0
