"""Layers, fused autodiff primitives and the two model builders."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..activations import PARAM_FLOOR, ActivationKind, ActivationLayer
from ..tensor import ShapeError, Tensor, add, as_tensor, flatten, matmul
from .init import InitDistribution, init_array


class BatchTooSmallError(ValueError):
    pass


# -- primitives ----------------------------------------------------------------


def dense_forward(w: Tensor, b: Tensor, x: Tensor) -> Tensor:
    """``x @ w + b`` for x [batch, in], w [in, out], b [out]."""
    x = as_tensor(x)
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0] or b.shape != (w.shape[1],):
        raise ShapeError(f"dense: x {x.shape}, w {w.shape}, b {b.shape} do not conform")
    return add(matmul(x, w), b)


def conv2d_forward(kernels: Tensor, x: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """Valid, stride-1 cross-correlation.

    ``x`` is [in_c, h, w] or batched [n, in_c, h, w]; ``kernels`` is
    [out_c, in_c, kh, kw]. The output keeps the batching of the input.
    """
    x = as_tensor(x)
    single = x.ndim == 3
    xd = x.data[None] if single else x.data
    if xd.ndim != 4 or kernels.ndim != 4:
        raise ShapeError(f"conv2d: input {x.shape} / kernels {kernels.shape} have the wrong rank")
    n, c, h, w = xd.shape
    oc, kc, kh, kw = kernels.shape
    if kc != c:
        raise ShapeError(f"conv2d: kernels expect {kc} input channels, input has {c}")
    if kh > h or kw > w:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} larger than input {h}x{w}")
    if bias is not None and bias.shape != (oc,):
        raise ShapeError(f"conv2d: bias shape {bias.shape} != ({oc},)")
    oh, ow = h - kh + 1, w - kw + 1

    win = sliding_window_view(xd, (kh, kw), axis=(2, 3))  # n, c, oh, ow, kh, kw
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * kh * kw)
    kflat = kernels.data.reshape(oc, -1)
    out = (cols @ kflat.T).reshape(n, oh, ow, oc).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    if single:
        out = out[0]

    def backward(g):
        g4 = g[None] if single else g
        g2 = g4.transpose(0, 2, 3, 1).reshape(-1, oc)
        dk = (g2.T @ cols).reshape(kernels.shape)
        dcols = (g2 @ kflat).reshape(n, oh, ow, c, kh, kw)
        dx = np.zeros_like(xd)
        for i in range(kh):
            for j in range(kw):
                dx[:, :, i:i + oh, j:j + ow] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        grads = [dx[0] if single else dx, dk]
        if bias is not None:
            grads.append(g4.sum(axis=(0, 2, 3)))
        return tuple(grads)

    parents = (x, kernels) if bias is None else (x, kernels, bias)
    return Tensor._from_op(out, parents, backward)


def maxpool2d(x: Tensor, size: int = 2) -> Tensor:
    """Non-overlapping 2x2 max pooling over [c, h, w] or [n, c, h, w].

    Ties send the gradient to the first maximum in row-major window order.
    """
    if size != 2:
        raise ValueError("only 2x2 pooling is supported")
    x = as_tensor(x)
    single = x.ndim == 3
    xd = x.data[None] if single else x.data
    n, c, h, w = xd.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2d needs even height and width, got {h}x{w}")
    windows = xd.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    arg = windows.argmax(axis=-1)[..., None]
    out = np.take_along_axis(windows, arg, axis=-1)[..., 0]

    def backward(g):
        g4 = g[None] if single else g
        routed = np.zeros_like(windows)
        np.put_along_axis(routed, arg, g4[..., None], axis=-1)
        dx = routed.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)
        return (dx[0] if single else dx,)

    return Tensor._from_op(out[0] if single else out, (x,), backward)


def pad2d(x: Tensor, pad: int) -> Tensor:
    """Zero-pad the last two axes by ``pad`` on every side."""
    x = as_tensor(x)
    widths = [(0, 0)] * (x.ndim - 2) + [(pad, pad), (pad, pad)]
    out = np.pad(x.data, widths)

    def backward(g):
        return (g[..., pad:g.shape[-2] - pad, pad:g.shape[-1] - pad],)

    return Tensor._from_op(out, (x,), backward)


@dataclass
class RunningStats:
    mean: np.ndarray
    var: np.ndarray
    momentum: float = 0.1

    @classmethod
    def fresh(cls, features: int) -> "RunningStats":
        return cls(np.zeros(features), np.ones(features))


def batchnorm1d_forward(x: Tensor, gamma: Tensor, beta: Tensor, running: RunningStats,
                        training: bool, eps: float = 1e-5) -> Tensor:
    """Batch normalization over axis 0 of a [batch, features] tensor.

    Training mode normalizes with the (biased) batch statistics and moves the
    running estimates by ``running.momentum`` (the variance estimate uses the
    unbiased batch variance). Evaluation mode uses the running estimates.
    """
    x = as_tensor(x)
    if x.ndim != 2 or gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise ShapeError(f"batchnorm1d: x {x.shape}, gamma {gamma.shape}, beta {beta.shape}")
    xd = x.data
    b = xd.shape[0]
    if training:
        if b < 2:
            raise BatchTooSmallError(f"batch norm needs a batch of at least 2 in training mode, got {b}")
        mu = xd.mean(axis=0)
        var = xd.var(axis=0)
        m = running.momentum
        running.mean = (1 - m) * running.mean + m * mu
        running.var = (1 - m) * running.var + m * var * b / (b - 1)
    else:
        mu, var = running.mean, running.var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (xd - mu) * inv_std
    out = gamma.data * xhat + beta.data

    def backward(g):
        dxhat = g * gamma.data
        if training:
            dx = inv_std / b * (b * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
        else:
            dx = dxhat * inv_std
        return dx, (g * xhat).sum(axis=0), g.sum(axis=0)

    return Tensor._from_op(out, (x, gamma, beta), backward)


# -- layer objects -----------------------------------------------------------------


class Dense:
    def __init__(self, fan_in: int, fan_out: int, rng: np.random.Generator,
                 init: InitDistribution = InitDistribution("xavier-uniform")):
        self.fan_in, self.fan_out = fan_in, fan_out
        self.w = Tensor(init_array(init, (fan_in, fan_out), fan_in, fan_out, rng), requires_grad=True)
        self.b = Tensor(np.zeros(fan_out), requires_grad=True)

    def parameters(self):
        return [self.w, self.b]

    def __call__(self, x: Tensor) -> Tensor:
        return dense_forward(self.w, self.b, x)


class Conv2d:
    def __init__(self, in_c: int, out_c: int, k: int, rng: np.random.Generator,
                 init: InitDistribution = InitDistribution("xavier-uniform")):
        self.fan_in, self.fan_out = in_c * k * k, out_c * k * k
        self.k = Tensor(init_array(init, (out_c, in_c, k, k), self.fan_in, self.fan_out, rng),
                        requires_grad=True)
        self.b = Tensor(np.zeros(out_c), requires_grad=True)

    def parameters(self):
        return [self.k, self.b]

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d_forward(self.k, x, self.b)


class MaxPool2d:
    def parameters(self):
        return []

    def __call__(self, x: Tensor) -> Tensor:
        return maxpool2d(x)


class Pad2d:
    def __init__(self, pad: int):
        self.pad = pad

    def parameters(self):
        return []

    def __call__(self, x: Tensor) -> Tensor:
        return pad2d(x, self.pad)


class Flatten:
    def parameters(self):
        return []

    def __call__(self, x: Tensor) -> Tensor:
        return flatten(x)


class BatchNorm1d:
    def __init__(self, features: int):
        self.gamma = Tensor(np.ones(features), requires_grad=True)
        self.beta = Tensor(np.zeros(features), requires_grad=True)
        self.running = RunningStats.fresh(features)
        self.training = True

    def parameters(self):
        return [self.gamma, self.beta]

    def __call__(self, x: Tensor) -> Tensor:
        return batchnorm1d_forward(x, self.gamma, self.beta, self.running, self.training)


# -- models ----------------------------------------------------------------------

LENET_PAD = 2
RELU_FAMILY = ("relu", "lrelu", "prelu", "elu", "selu")
ARCHITECTURES = ("lenet5", "mlp")


@dataclass
class ModelSpec:
    """What to build: architecture, activation, and how to initialize it.

    ``lambda_init``/``mu_init`` apply to learnable PFPLUS layers; when left
    ``None`` they default to the constants in ``activation.params``.
    ``weight_init`` defaults to Kaiming-uniform for ReLU-family activations
    and Xavier-uniform otherwise.
    """

    arch: str = "lenet5"
    activation: ActivationKind = field(default_factory=lambda: ActivationKind.of("fplus"))
    learnable: bool = False
    lambda_init: Optional[InitDistribution] = None
    mu_init: Optional[InitDistribution] = None
    weight_init: Optional[InitDistribution] = None
    batch_norm: bool = False
    hidden: int = 32

    def __post_init__(self):
        if self.arch not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.arch!r}; choose from {ARCHITECTURES}")

    def resolved_weight_init(self) -> InitDistribution:
        if self.weight_init is not None:
            return self.weight_init
        scheme = "kaiming-uniform" if self.activation.name in RELU_FAMILY else "xavier-uniform"
        return InitDistribution(scheme)


class Model:
    """An ordered stack of layers with named parameters."""

    def __init__(self, arch: str, layers: list, input_shape: tuple[int, ...], classes: int):
        self.arch = arch
        self.layers = layers
        self.input_shape = tuple(input_shape)
        self.classes = classes

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer(x)
        return x

    @property
    def activation_layers(self) -> list[ActivationLayer]:
        return [l for l in self.layers if isinstance(l, ActivationLayer)]

    def parameters(self) -> list[Tensor]:
        return [p for l in self.layers for p in l.parameters()]

    def positive_parameters(self) -> list[Tensor]:
        return [p for l in self.activation_layers for p in l.positive_parameters()]

    def named_parameters(self) -> dict[str, Tensor]:
        named = {}
        for i, layer in enumerate(self.layers):
            attrs = {Dense: ("w", "b"), Conv2d: ("k", "b"), BatchNorm1d: ("gamma", "beta")}.get(type(layer), ())
            for a in attrs:
                named[f"{i}.{type(layer).__name__.lower()}.{a}"] = getattr(layer, a)
            if isinstance(layer, ActivationLayer):
                for a in ("lam", "mu", "alpha"):
                    if getattr(layer, a) is not None:
                        named[f"{i}.activation.{a}"] = getattr(layer, a)
        return named

    def train(self, mode: bool = True) -> None:
        for layer in self.layers:
            if isinstance(layer, BatchNorm1d):
                layer.training = mode

    def eval(self) -> None:
        self.train(False)

    def pfplus_trajectory_point(self) -> list[Optional[tuple[float, float]]]:
        return [l.current_params() for l in self.activation_layers]


def _activation(spec: ModelSpec, prev_fan_in: int, prev_fan_out: int, rng) -> ActivationLayer:
    kind = spec.activation
    if not (spec.learnable and kind.name == "pfplus"):
        return ActivationLayer(kind, spec.learnable)
    lam_dist = spec.lambda_init or InitDistribution("constant", kind.params.lam)
    mu_dist = spec.mu_init or InitDistribution("constant", kind.params.mu)
    lam = float(init_array(lam_dist, (), prev_fan_in, prev_fan_out, rng, slot="lambda"))
    mu = float(init_array(mu_dist, (), prev_fan_in, prev_fan_out, rng, slot="mu"))
    if lam_dist.fan_based:
        # zero-centred schemes: keep the magnitude, drop the sign
        lam = abs(lam)
    return ActivationLayer(kind, True, lam=max(lam, PARAM_FLOOR), mu=max(mu, PARAM_FLOOR))


def build_model(spec: ModelSpec, input_shape: tuple[int, int, int], classes: int,
                rng: np.random.Generator) -> Model:
    """Instantiate ``spec`` for inputs of shape [c, h, w] and ``classes`` outputs.

    ``lenet5``: pad 2 (28x28 -> 32x32), conv(c->6, 5x5) act pool conv(6->16, 5x5) act pool flatten
    dense(->120) [bn] act dense(120->84) [bn] act dense(84->classes).
    ``mlp``: flatten dense(->hidden) [bn] act dense(hidden->classes).
    """
    winit = spec.resolved_weight_init()
    c, h, w = input_shape
    layers: list = []
    if spec.arch == "lenet5":
        h, w = h + 2 * LENET_PAD, w + 2 * LENET_PAD
        if any(d < 16 or d % 4 for d in (h, w)):
            raise ShapeError(f"lenet5 needs spatial input like 28x28 (pool-compatible), "
                             f"got {h - 2 * LENET_PAD}x{w - 2 * LENET_PAD}")
        conv1 = Conv2d(c, 6, 5, rng, winit)
        conv2 = Conv2d(6, 16, 5, rng, winit)
        fh, fw = ((h - 4) // 2 - 4) // 2, ((w - 4) // 2 - 4) // 2
        d1 = Dense(16 * fh * fw, 120, rng, winit)
        d2 = Dense(120, 84, rng, winit)
        d3 = Dense(84, classes, rng, winit)
        layers += [Pad2d(LENET_PAD), conv1, _activation(spec, conv1.fan_in, conv1.fan_out, rng), MaxPool2d(),
                   conv2, _activation(spec, conv2.fan_in, conv2.fan_out, rng), MaxPool2d(),
                   Flatten(), d1]
        if spec.batch_norm:
            layers.append(BatchNorm1d(120))
        layers += [_activation(spec, d1.fan_in, d1.fan_out, rng), d2]
        if spec.batch_norm:
            layers.append(BatchNorm1d(84))
        layers += [_activation(spec, d2.fan_in, d2.fan_out, rng), d3]
    else:
        d1 = Dense(c * h * w, spec.hidden, rng, winit)
        d2 = Dense(spec.hidden, classes, rng, winit)
        layers += [Flatten(), d1]
        if spec.batch_norm:
            layers.append(BatchNorm1d(spec.hidden))
        layers += [_activation(spec, d1.fan_in, d1.fan_out, rng), d2]
    return Model(spec.arch, layers, input_shape, classes)
