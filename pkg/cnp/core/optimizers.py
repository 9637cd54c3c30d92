"""
First-order optimizers over graph parameters.
"""

from typing import List, Sequence

import numpy as np

from config.constants import TrainConfig
from ..utils.error_types import ConfigurationError
from .tensor import Parameter


class SGDMomentum:
    """Heavy-ball SGD: v <- mu * v - lr * g; p <- p + v."""

    name = 'sgd'

    def __init__(self, params: Sequence[Parameter], learning_rate: float, momentum: float = 0.9):
        self.params: List[Parameter] = list(params)
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.velocity = [np.zeros_like(p.data) for p in self.params]
        self.steps = 0

    def step(self) -> None:
        self.steps += 1
        for param, velocity in zip(self.params, self.velocity):
            velocity *= self.momentum
            velocity -= self.learning_rate * param.grad
            param.data += velocity

    def zero_grad(self) -> None:
        for param in self.params:
            param.zero_grad()


class Adam:
    """Adam with bias-corrected first and second moments."""

    name = 'adam'

    def __init__(self, params: Sequence[Parameter], learning_rate: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params: List[Parameter] = list(params)
        self.learning_rate = learning_rate
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.steps = 0

    def step(self) -> None:
        self.steps += 1
        correction1 = 1.0 - self.beta1 ** self.steps
        correction2 = 1.0 - self.beta2 ** self.steps
        for param, m, v in zip(self.params, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * param.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * param.grad * param.grad
            update = self.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + self.eps)
            param.data -= update.astype(param.data.dtype)

    def zero_grad(self) -> None:
        for param in self.params:
            param.zero_grad()


def make_optimizer(params: Sequence[Parameter], train_config: TrainConfig):
    if train_config.optimizer == 'sgd':
        return SGDMomentum(params, train_config.learning_rate, train_config.momentum)
    if train_config.optimizer == 'adam':
        return Adam(params, train_config.learning_rate, train_config.adam_beta1,
                    train_config.adam_beta2, train_config.adam_eps)
    raise ConfigurationError(f"unknown optimizer '{train_config.optimizer}', expected 'sgd' or 'adam'")
