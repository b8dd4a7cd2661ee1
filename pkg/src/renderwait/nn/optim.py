"""Adam with a step-halving learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from renderwait.errors import InvalidArgument
from renderwait.nn.layers import Parameter


@dataclass(frozen=True)
class LrSchedule:
    initial: float = 0.01
    halve_every: int = 10

    def rate(self, epoch: int) -> float:
        return self.initial * 0.5 ** (epoch // self.halve_every)


@dataclass
class Adam:
    params: list[Parameter]
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise InvalidArgument("learning rate must be positive")
        if not self.m:
            self.m = [np.zeros_like(p.data) for p in self.params]
            self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        lr = self.learning_rate
        c1 = 1.0 - self.beta1**t
        c2 = 1.0 - self.beta2**t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            if g is None:
                continue
            if g.shape != p.data.shape:
                raise InvalidArgument(f"gradient shape {g.shape} does not match parameter {p.data.shape}")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= (lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.data.dtype, copy=False)


def adam_step(params: list[Parameter], state: Adam | None = None, learning_rate: float | None = None) -> Adam:
    """Apply one Adam update to ``params`` using their ``grad`` buffers."""
    if state is None:
        state = Adam(params, learning_rate or 0.01)
    elif learning_rate is not None:
        state.learning_rate = learning_rate
    state.step()
    return state
