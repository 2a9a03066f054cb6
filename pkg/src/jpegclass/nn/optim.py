"""Adam optimizer and the training hyperparameter bundle."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from ..errors import ShapeMismatch


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 100
    early_stop_patience: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    def to_dict(self):
        return asdict(self)


def adam_step(param, grad, m, v, t, config: TrainConfig):
    """One bias-corrected Adam update, in place on param/m/v."""
    if not (param.shape == grad.shape == m.shape == v.shape):
        raise ShapeMismatch("adam_step: shape mismatch")
    b1, b2 = config.beta1, config.beta2
    m *= b1
    m += (1 - b1) * grad
    v *= b2
    v += (1 - b2) * grad * grad
    m_hat = m / (1 - b1 ** t)
    v_hat = v / (1 - b2 ** t)
    param -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon)


class Adam:
    """Tracks first/second moments for a fixed (name, param, grad) list."""

    def __init__(self, param_grad_pairs, config: TrainConfig):
        self.pairs = list(param_grad_pairs)      # [(param, grad)]
        self.config = config
        self.m = [np.zeros_like(p) for p, _ in self.pairs]
        self.v = [np.zeros_like(p) for p, _ in self.pairs]
        self.t = 0

    def step(self):
        self.t += 1
        for (p, g), m, v in zip(self.pairs, self.m, self.v):
            adam_step(p, g, m, v, self.t, self.config)
