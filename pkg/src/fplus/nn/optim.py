"""SGD with momentum, Adam, and learning-rate schedules."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence, Union

import numpy as np

from ..activations import PARAM_FLOOR
from ..tensor import Tensor


class MissingGradientError(RuntimeError):
    pass


# -- schedules -------------------------------------------------------------------


@dataclass(frozen=True)
class StepDecay:
    gamma: float
    period: int

    def __post_init__(self):
        if not 0 < self.gamma < 1 or self.period < 1:
            raise ValueError(f"StepDecay needs gamma in (0, 1) and period >= 1, got {self}")

    def exponent(self, epoch: int) -> int:
        return epoch // self.period

    @property
    def factor(self) -> float:
        return self.gamma


@dataclass(frozen=True)
class ExponentialDecay:
    base: float

    def __post_init__(self):
        if not 0 < self.base < 1:
            raise ValueError(f"ExponentialDecay needs base in (0, 1), got {self.base}")

    def exponent(self, epoch: int) -> int:
        return epoch

    @property
    def factor(self) -> float:
        return self.base


@dataclass(frozen=True)
class MultiStep:
    gamma: float
    milestones: tuple[int, ...]

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError(f"MultiStep needs gamma in (0, 1), got {self.gamma}")
        object.__setattr__(self, "milestones", tuple(sorted(int(m) for m in self.milestones)))

    def exponent(self, epoch: int) -> int:
        return sum(epoch >= m for m in self.milestones)

    @property
    def factor(self) -> float:
        return self.gamma


@dataclass(frozen=True)
class Constant:
    def exponent(self, epoch: int) -> int:
        return 0

    @property
    def factor(self) -> float:
        return 1.0


Schedule = Union[StepDecay, ExponentialDecay, MultiStep, Constant]


def lr_at(schedule: Schedule, lr0: float, epoch: int) -> float:
    """``lr0 * factor ** k`` for the schedule's decay count ``k`` at ``epoch``.

    The product is formed exactly from the decimal values of ``lr0`` and the
    factor, then rounded once, so e.g. 0.001 decayed once by 0.1 is 0.0001.
    """
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    k = schedule.exponent(int(epoch))
    return float(Fraction(repr(float(lr0))) * Fraction(repr(float(schedule.factor))) ** k)


# -- optimizers ----------------------------------------------------------------------


def _check_grads(params: Sequence[Tensor]) -> None:
    for i, p in enumerate(params):
        if p.grad is None:
            raise MissingGradientError(f"parameter {i} ({p.name or tuple(p.shape)}) has no gradient")


def project_positive(params: Sequence[Tensor], floor: float = PARAM_FLOOR) -> None:
    for p in params:
        if np.any(p.data < floor):
            p.data = np.maximum(p.data, floor)


class SGD:
    """``v <- momentum*v + g``; ``w <- w - lr*v``."""

    def __init__(self, params: Sequence[Tensor], momentum: float = 0.0,
                 positive: Sequence[Tensor] = ()):
        if not 0 <= momentum < 1:
            raise ValueError(f"momentum must lie in [0, 1), got {momentum}")
        self.params = list(params)
        self.positive = list(positive)
        self.momentum = momentum
        self.velocity = [np.zeros(p.shape) for p in self.params]

    def step(self, lr: float) -> None:
        _check_grads(self.params)
        for p, v in zip(self.params, self.velocity):
            v *= self.momentum
            v += p.grad
            p.data = p.data - lr * v
        project_positive(self.positive)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


class Adam:
    """Adam with bias-corrected first and second moments."""

    def __init__(self, params: Sequence[Tensor], beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8, positive: Sequence[Tensor] = ()):
        self.params = list(params)
        self.positive = list(positive)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros(p.shape) for p in self.params]
        self.v = [np.zeros(p.shape) for p in self.params]
        self.t = 0

    def step(self, lr: float) -> None:
        _check_grads(self.params)
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        project_positive(self.positive)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


@dataclass(frozen=True)
class SGDConfig:
    momentum: float = 0.9


@dataclass(frozen=True)
class AdamConfig:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def make_optimizer(config: Union[SGDConfig, AdamConfig], params: Sequence[Tensor],
                   positive: Sequence[Tensor] = ()):
    if isinstance(config, SGDConfig):
        return SGD(params, config.momentum, positive)
    return Adam(params, config.beta1, config.beta2, config.eps, positive)


def optimizer_step(optimizer, lr_now: float) -> None:
    if not (lr_now > 0 and math.isfinite(lr_now)):
        raise ValueError(f"learning rate must be positive, got {lr_now}")
    optimizer.step(lr_now)
