"""Initialization distributions for weights and activation parameters."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

FAN_BASED = ("xavier-uniform", "xavier-normal", "kaiming-uniform", "kaiming-normal")
SLOTS = ("weight", "lambda", "mu")


class InitError(ValueError):
    pass


class ForbiddenDistributionError(InitError):
    """Xavier/Kaiming schemes are zero-centred and would give mu negative values."""


@dataclass(frozen=True)
class InitDistribution:
    """One of ``constant``, ``uniform``, ``normal`` or the four fan-based schemes.

    ``a``/``b`` hold (c, -), (low, high) or (mean, stddev) respectively.
    """

    tag: str
    a: Optional[float] = None
    b: Optional[float] = None

    def __post_init__(self):
        if self.tag == "constant":
            if self.a is None:
                raise InitError("constant needs a value")
        elif self.tag == "uniform":
            if self.a is None or self.b is None or not self.a < self.b:
                raise InitError(f"uniform needs low < high, got ({self.a}, {self.b})")
        elif self.tag == "normal":
            if self.a is None or self.b is None or not self.b > 0:
                raise InitError(f"normal needs stddev > 0, got {self.b}")
        elif self.tag not in FAN_BASED:
            raise InitError(f"unknown distribution {self.tag!r}")

    @classmethod
    def parse(cls, text: str) -> "InitDistribution":
        """Parse ``constant:c``, ``uniform:a,b``, ``normal:mean,std`` or a scheme name."""
        tag, _, rest = text.strip().lower().partition(":")
        try:
            nums = [float(v) for v in rest.split(",")] if rest else []
        except ValueError as exc:
            raise InitError(f"bad numbers in distribution {text!r}") from exc
        arity = {"constant": 1, "uniform": 2, "normal": 2}.get(tag, 0)
        if len(nums) != arity:
            raise InitError(f"{tag!r} takes {arity} number(s), got {text!r}")
        return cls(tag, *nums)

    def __str__(self) -> str:
        if self.tag == "constant":
            return f"constant:{self.a:g}"
        if self.tag in ("uniform", "normal"):
            return f"{self.tag}:{self.a:g},{self.b:g}"
        return self.tag

    @property
    def fan_based(self) -> bool:
        return self.tag in FAN_BASED


def init_array(dist: InitDistribution, shape, fan_in: int, fan_out: int,
               rng: np.random.Generator, slot: str = "weight") -> np.ndarray:
    if slot not in SLOTS:
        raise InitError(f"unknown slot {slot!r}")
    if slot == "mu" and dist.fan_based:
        raise ForbiddenDistributionError(
            f"{dist.tag} is not allowed for mu: Xavier/Kaiming initializations are "
            "zero-centred and bring about negative mu, which PFPLUS forbids"
        )
    if fan_in < 1 or fan_out < 1:
        raise InitError("fans must be >= 1")
    t = dist.tag
    if t == "constant":
        return np.full(shape, float(dist.a))
    if t == "uniform":
        return rng.uniform(dist.a, dist.b, shape)
    if t == "normal":
        return rng.normal(dist.a, dist.b, shape)
    if t == "xavier-uniform":
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-bound, bound, shape)
    if t == "xavier-normal":
        return rng.normal(0.0, math.sqrt(2.0 / (fan_in + fan_out)), shape)
    if t == "kaiming-uniform":
        bound = math.sqrt(6.0 / fan_in)
        return rng.uniform(-bound, bound, shape)
    return rng.normal(0.0, math.sqrt(2.0 / fan_in), shape)


def init_sample(dist: InitDistribution, fan_in: int, fan_out: int,
                rng: np.random.Generator, slot: str = "weight") -> float:
    """Draw one value; fans only matter for the Xavier/Kaiming schemes."""
    return float(init_array(dist, (), fan_in, fan_out, rng, slot))
