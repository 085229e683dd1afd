"""Activation functions: FPLUS, PFPLUS and the usual reference set.

Every function here accepts a Python float or a numpy array and returns the
same kind of value. The branch convention everywhere is that the positive
branch owns ``x == 0`` (``sgn(0) = +1``, ``H(0) = 1``), so one-sided
derivatives at a seam are the right-hand ones.

PFPLUS with amplitude ``lam`` and scale ``mu`` (both > 0)::

    pfplus(x) = lam * x                  x >= 0
              = lam * x / (1 - mu * x)   x <  0

FPLUS is the ``lam = mu = 1`` member of the family.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import special

from .tensor import Tensor

SELU_SCALE = 1.0507009873554805
SELU_ALPHA = 1.6732632423543772
LRELU_DEFAULT_ALPHA = 0.01
PRELU_INIT_ALPHA = 0.25
PARAM_FLOOR = 1e-4


class InvalidParamsError(ValueError):
    """A hyperparameter violates its positivity/range constraint."""


class LearnableNotSupportedError(ValueError):
    """Only PReLU and PFPLUS have learnable parameters."""


def _result(x, value):
    return float(value) if np.ndim(x) == 0 else value


def _arr(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


@dataclass(frozen=True)
class PfplusParams:
    """Amplitude factor ``lam`` and scale factor ``mu``; both strictly positive."""

    lam: float = 1.0
    mu: float = 1.0

    def __post_init__(self):
        for name in ("lam", "mu"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float, np.floating)) and math.isfinite(v) and v > 0):
                raise InvalidParamsError(f"PFPLUS requires {name} > 0, got {v!r}")


def _check_pfplus(lam, mu) -> None:
    if not (np.all(np.asarray(lam) > 0) and np.all(np.asarray(mu) > 0)):
        raise InvalidParamsError(f"PFPLUS requires lambda > 0 and mu > 0, got lambda={lam}, mu={mu}")


# -- sign helpers -----------------------------------------------------------


def sgn(x):
    """+1 for x >= 0 and -1 for x < 0 (so sgn(0) = +1)."""
    return _result(x, np.where(_arr(x) >= 0, 1.0, -1.0))


def heaviside(x):
    """Unit step with H(0) = 1."""
    return _result(x, np.where(_arr(x) >= 0, 1.0, 0.0))


# -- FPLUS family -------------------------------------------------------------


def pfplus(x, lam: float = 1.0, mu: float = 1.0):
    _check_pfplus(lam, mu)
    x = _arr(x)
    xn = np.minimum(x, 0.0)
    # 1 - mu*xn >= 1 on the negative branch, so there is no pole to guard
    return _result(x, np.where(x >= 0, lam * x, lam * xn / (1.0 - mu * xn)))


def pfplus_grad(x, lam: float = 1.0, mu: float = 1.0):
    """Return ``(d/dx, d/dlam, d/dmu)`` of :func:`pfplus`."""
    _check_pfplus(lam, mu)
    x = _arr(x)
    pos = x >= 0
    xn = np.minimum(x, 0.0)
    inv = 1.0 / (1.0 - mu * xn)
    d_dx = np.where(pos, lam, lam * inv * inv)
    d_dlam = np.where(pos, x, xn * inv)
    d_dmu = np.where(pos, 0.0, lam * xn * xn * inv * inv)
    return _result(x, d_dx), _result(x, d_dlam), _result(x, d_dmu)


def pfplus_heaviside_form(x, lam: float = 1.0, mu: float = 1.0):
    """``lam * x * (1 - mu*x) ** (H(x) - 1)``, the single-expression form."""
    _check_pfplus(lam, mu)
    x = _arr(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        base = 1.0 - mu * x
        out = lam * x * np.power(base, np.where(x >= 0, 1.0, 0.0) - 1.0)
    return _result(x, out)


def fplus(x):
    x = _arr(x)
    xn = np.minimum(x, 0.0)
    return _result(x, np.where(x >= 0, x, xn / (1.0 - xn)))


def fplus_sign_form(x):
    """``(sgn(x)*x + 1) ** sgn(x) - 1``, evaluated literally."""
    x = _arr(x)
    s = np.where(x >= 0, 1.0, -1.0)
    return _result(x, np.power(s * x + 1.0, s) - 1.0)


def fplus_grad(x):
    x = _arr(x)
    xn = np.minimum(x, 0.0)
    return _result(x, np.where(x >= 0, 1.0, 1.0 / (1.0 - xn) ** 2))


def saturation_value(lam: float, mu: float) -> float:
    _check_pfplus(lam, mu)
    return -lam / mu


# -- reference activations -----------------------------------------------------


def sigmoid(x):
    return _result(x, special.expit(_arr(x)))


def tanh(x):
    return _result(x, np.tanh(_arr(x)))


def relu(x):
    x = _arr(x)
    return _result(x, np.where(x >= 0, x, 0.0))


def leaky_relu(x, alpha: float = LRELU_DEFAULT_ALPHA):
    x = _arr(x)
    return _result(x, np.where(x >= 0, x, alpha * x))


def elu(x, alpha: float = 1.0):
    x = _arr(x)
    return _result(x, np.where(x >= 0, x, alpha * np.expm1(np.minimum(x, 0.0))))


def selu(x, scale: float = SELU_SCALE, alpha: float = SELU_ALPHA):
    x = _arr(x)
    return _result(x, scale * np.where(x >= 0, x, alpha * np.expm1(np.minimum(x, 0.0))))


def swish(x, beta: float = 1.0):
    x = _arr(x)
    with np.errstate(invalid="ignore"):
        out = x * special.expit(beta * x)
    return _result(x, np.where(np.isinf(x) & (x < 0), -0.0, out))


def gelu(x):
    """Exact GELU, ``x * Phi(x)`` with the Gaussian CDF from ``ndtr``."""
    x = _arr(x)
    with np.errstate(invalid="ignore"):
        out = x * special.ndtr(x)
    return _result(x, np.where(np.isinf(x) & (x < 0), -0.0, out))


def softplus(x):
    x = _arr(x)
    return _result(x, np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x))))


def mish(x):
    x = _arr(x)
    with np.errstate(invalid="ignore"):
        out = x * np.tanh(softplus(x))
    return _result(x, out)


def _sigmoid_grad(x):
    s = special.expit(x)
    return s * (1.0 - s)


def _swish_grad(x, beta):
    s = special.expit(beta * x)
    return s + beta * x * s * (1.0 - s)


def _gelu_grad(x):
    return special.ndtr(x) + x * np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def _mish_grad(x):
    t = np.tanh(softplus(x))
    return t + x * (1.0 - t * t) * special.expit(x)


# -- kind selector ---------------------------------------------------------------

KIND_NAMES = (
    "sigmoid", "tanh", "relu", "lrelu", "prelu", "elu",
    "selu", "swish", "gelu", "mish", "fplus", "pfplus",
)
LEARNABLE_KINDS = ("prelu", "pfplus")


@dataclass(frozen=True)
class ActivationKind:
    """Which activation, plus its fixed hyperparameters.

    ``alpha`` is the negative slope for LReLU/PReLU and the saturation factor
    for ELU/SELU; ``scale`` is SELU's outer factor; ``beta`` belongs to Swish;
    ``params`` holds PFPLUS's (lam, mu). Unused fields stay ``None``.
    Use :meth:`of` to get the conventional defaults.
    """

    name: str
    alpha: Optional[float] = None
    beta: Optional[float] = None
    scale: Optional[float] = None
    params: Optional[PfplusParams] = field(default=None)

    def __post_init__(self):
        if self.name not in KIND_NAMES:
            raise InvalidParamsError(f"unknown activation {self.name!r}; known: {', '.join(KIND_NAMES)}")
        if self.name in ("lrelu", "prelu", "elu", "selu") and not (self.alpha and self.alpha > 0):
            raise InvalidParamsError(f"{self.name} requires alpha > 0, got {self.alpha!r}")
        if self.name == "selu" and not (self.scale and self.scale > 1):
            raise InvalidParamsError(f"selu requires scale > 1, got {self.scale!r}")
        if self.name == "swish" and not (self.beta and self.beta > 0):
            raise InvalidParamsError(f"swish requires beta > 0, got {self.beta!r}")
        if self.name == "pfplus" and not isinstance(self.params, PfplusParams):
            raise InvalidParamsError("pfplus requires PfplusParams")

    @classmethod
    def of(cls, name: str, **hyper) -> "ActivationKind":
        """Build a kind by name, filling in defaults for missing hyperparameters."""
        name = name.lower()
        defaults = {
            "lrelu": {"alpha": LRELU_DEFAULT_ALPHA},
            "prelu": {"alpha": PRELU_INIT_ALPHA},
            "elu": {"alpha": 1.0},
            "selu": {"alpha": SELU_ALPHA, "scale": SELU_SCALE},
            "swish": {"beta": 1.0},
        }.get(name, {})
        if name == "pfplus":
            lam, mu = hyper.pop("lam", None), hyper.pop("mu", None)
            hyper["params"] = PfplusParams(1.0 if lam is None else lam, 1.0 if mu is None else mu)
        return cls(name, **{**defaults, **{k: v for k, v in hyper.items() if v is not None}})

    @property
    def label(self) -> str:
        if self.name == "pfplus":
            return f"pfplus(lam={self.params.lam:g},mu={self.params.mu:g})"
        return self.name


def evaluate(kind: ActivationKind, x):
    n = kind.name
    if n == "sigmoid":
        return sigmoid(x)
    if n == "tanh":
        return tanh(x)
    if n == "relu":
        return relu(x)
    if n in ("lrelu", "prelu"):
        return leaky_relu(x, kind.alpha)
    if n == "elu":
        return elu(x, kind.alpha)
    if n == "selu":
        return selu(x, kind.scale, kind.alpha)
    if n == "swish":
        return swish(x, kind.beta)
    if n == "gelu":
        return gelu(x)
    if n == "mish":
        return mish(x)
    if n == "fplus":
        return fplus(x)
    return pfplus(x, kind.params.lam, kind.params.mu)


def derivative(kind: ActivationKind, x):
    """Analytic d/dx; the right-hand derivative at x = 0 for kinked activations."""
    n = kind.name
    a = _arr(x)
    pos = a >= 0
    if n == "sigmoid":
        out = _sigmoid_grad(a)
    elif n == "tanh":
        out = 1.0 - np.tanh(a) ** 2
    elif n == "relu":
        out = np.where(pos, 1.0, 0.0)
    elif n in ("lrelu", "prelu"):
        out = np.where(pos, 1.0, kind.alpha)
    elif n == "elu":
        out = np.where(pos, 1.0, kind.alpha * np.exp(np.minimum(a, 0.0)))
    elif n == "selu":
        out = kind.scale * np.where(pos, 1.0, kind.alpha * np.exp(np.minimum(a, 0.0)))
    elif n == "swish":
        out = _swish_grad(a, kind.beta)
    elif n == "gelu":
        out = _gelu_grad(a)
    elif n == "mish":
        out = _mish_grad(a)
    elif n == "fplus":
        out = fplus_grad(a)
    else:
        out = pfplus_grad(a, kind.params.lam, kind.params.mu)[0]
    return _result(x, out)


# -- autodiff primitives -------------------------------------------------------------


def activate(x: Tensor, kind: ActivationKind) -> Tensor:
    """Apply a fixed activation elementwise as a graph node."""
    return Tensor._from_op(
        _arr(evaluate(kind, x.data)), (x,), lambda g: (g * derivative(kind, x.data),)
    )


def pfplus_op(x: Tensor, lam: Tensor, mu: Tensor) -> Tensor:
    """PFPLUS with channel-shared scalar parameters.

    The parameter gradients are the sums of the per-element partials.
    """
    lv, mv = float(lam.data), float(mu.data)
    out = pfplus(x.data, lv, mv)

    def backward(g):
        d_dx, d_dlam, d_dmu = pfplus_grad(x.data, lv, mv)
        return g * d_dx, np.sum(g * d_dlam), np.sum(g * d_dmu)

    return Tensor._from_op(_arr(out), (x, lam, mu), backward)


def prelu_op(x: Tensor, alpha: Tensor) -> Tensor:
    a = float(alpha.data)
    xd = x.data
    neg = np.minimum(xd, 0.0)

    def backward(g):
        return g * np.where(xd >= 0, 1.0, a), np.sum(g * neg)

    return Tensor._from_op(np.where(xd >= 0, xd, a * xd), (x, alpha), backward)


class ActivationLayer:
    """Elementwise activation; PReLU/PFPLUS may carry learnable shared scalars.

    A learnable PFPLUS layer owns exactly two parameters (``lam``, ``mu``)
    regardless of the input shape.
    """

    def __init__(self, kind: ActivationKind, learnable: bool = False,
                 lam: Optional[float] = None, mu: Optional[float] = None):
        if learnable and kind.name not in LEARNABLE_KINDS:
            raise LearnableNotSupportedError(f"{kind.name} has no learnable parameters")
        self.kind = kind
        self.learnable = learnable
        self.lam = self.mu = self.alpha = None
        if learnable and kind.name == "pfplus":
            PfplusParams(lam if lam is not None else kind.params.lam,
                         mu if mu is not None else kind.params.mu)
            self.lam = Tensor(lam if lam is not None else kind.params.lam, requires_grad=True, name="lambda")
            self.mu = Tensor(mu if mu is not None else kind.params.mu, requires_grad=True, name="mu")
        elif learnable:
            self.alpha = Tensor(kind.alpha, requires_grad=True, name="alpha")

    def parameters(self) -> list[Tensor]:
        return [p for p in (self.lam, self.mu, self.alpha) if p is not None]

    def positive_parameters(self) -> list[Tensor]:
        """Parameters that must stay >= PARAM_FLOOR after every update."""
        return [p for p in (self.lam, self.mu) if p is not None]

    def current_params(self) -> Optional[tuple[float, float]]:
        if self.lam is not None:
            return float(self.lam.data), float(self.mu.data)
        if self.kind.name == "pfplus":
            return self.kind.params.lam, self.kind.params.mu
        return None

    def __call__(self, x: Tensor) -> Tensor:
        if self.lam is not None:
            return pfplus_op(x, self.lam, self.mu)
        if self.alpha is not None:
            return prelu_op(x, self.alpha)
        return activate(x, self.kind)

    def __repr__(self) -> str:
        return f"ActivationLayer({self.kind.label}, learnable={self.learnable})"


def make_activation_layer(kind: ActivationKind, learnable: bool = False) -> ActivationLayer:
    return ActivationLayer(kind, learnable)
