"""Adam optimizer (no weight decay) and step-decay learning-rate schedule."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor


class MissingGradientError(RuntimeError):
    pass


class Parameter:
    """A learned tensor with a dotted-path name and per-parameter Adam state."""

    __slots__ = ("tensor", "name", "m", "v", "step")

    def __init__(self, data, name: str = ""):
        self.tensor = Tensor(data, requires_grad=True)
        self.name = name
        self.m = np.zeros_like(self.tensor.data)
        self.v = np.zeros_like(self.tensor.data)
        self.step = 0

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data

    @property
    def grad(self) -> np.ndarray:
        return self.tensor.grad

    def __repr__(self):
        return f"Parameter({self.name or '<unnamed>'}, shape={self.tensor.data.shape})"


class Adam:
    """Standard Adam with bias correction; betas (0.9, 0.999), eps 1e-8, no decay."""

    BETA1 = 0.9
    BETA2 = 0.999
    EPS = 1e-8

    def __init__(self, params: list[Parameter]):
        self.params = list(params)

    def step(self, lr: float):
        b1, b2 = self.BETA1, self.BETA2
        for p in self.params:
            g = p.tensor.grad
            if g is None:
                raise MissingGradientError(f"parameter '{p.name}' has no gradient")
            p.m *= b1
            p.m += (1.0 - b1) * g
            p.v *= b2
            p.v += (1.0 - b2) * g * g
            p.step += 1
            m_hat = p.m / (1.0 - b1**p.step)
            v_hat = p.v / (1.0 - b2**p.step)
            p.tensor.data -= lr * m_hat / (np.sqrt(v_hat) + self.EPS)

    def zero_grad(self):
        for p in self.params:
            p.tensor.zero_grad()


class StepDecaySchedule:
    """lr(epoch) = initial_lr * gamma ** floor(epoch / step_interval)."""

    def __init__(self, initial_lr: float, step_interval: int, gamma: float = 0.95):
        if step_interval <= 0:
            raise ValueError("step_interval must be positive")
        self.initial_lr = initial_lr
        self.step_interval = step_interval
        self.gamma = gamma

    def lr_at(self, epoch: int) -> float:
        return self.initial_lr * self.gamma ** (epoch // self.step_interval)
