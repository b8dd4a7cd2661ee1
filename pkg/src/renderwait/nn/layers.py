"""Layers with explicit forward/backward passes over NCHW numpy arrays.

Every module caches what its backward pass needs during ``forward``; a
``backward`` call consumes the gradient of the loss w.r.t. the module output,
accumulates parameter gradients and returns the gradient w.r.t. the input.
Parameters are float32 unless a model is cast with :meth:`Module.to`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from renderwait.errors import InvalidArgument
from renderwait.nn import kernels

BN_MOMENTUM = 0.1
BN_EPS = 1e-5


@dataclass
class Parameter:
    data: np.ndarray
    grad: np.ndarray | None = None

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def accumulate(self, g: np.ndarray) -> None:
        g = g.astype(self.data.dtype, copy=False).reshape(self.data.shape)
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape


def _kaiming_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


class Module:
    training = True

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    __call__ = forward

    def children(self) -> list[tuple[str, Module]]:
        return []

    def own_parameters(self) -> list[tuple[str, Parameter]]:
        return []

    def own_buffers(self) -> list[tuple[str, np.ndarray]]:
        return []

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Parameter]]:
        out = [(prefix + n, p) for n, p in self.own_parameters()]
        for name, child in self.children():
            out += child.named_parameters(f"{prefix}{name}.")
        return out

    def named_buffers(self, prefix: str = "") -> list[tuple[str, np.ndarray]]:
        out = [(prefix + n, b) for n, b in self.own_buffers()]
        for name, child in self.children():
            out += child.named_buffers(f"{prefix}{name}.")
        return out

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def train(self, mode: bool = True) -> Module:
        self.training = mode
        for _, child in self.children():
            child.train(mode)
        return self

    def eval(self) -> Module:
        return self.train(False)

    def to(self, dtype) -> Module:
        for _, p in self.own_parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        self._cast_buffers(dtype)
        for _, child in self.children():
            child.to(dtype)
        return self

    def _cast_buffers(self, dtype) -> None:
        pass


# --- functional kernels ----------------------------------------------------


def relu6(x: np.ndarray) -> np.ndarray:
    return np.minimum(np.maximum(x, 0), 6).astype(x.dtype, copy=False)


def relu6_backward(x: np.ndarray, grad: np.ndarray) -> np.ndarray:
    return grad * ((x > 0) & (x < 6))


def _out_size(n: int, stride: int) -> int:
    return (n - 1) // stride + 1


def _check_nchw(x: np.ndarray, channels: int) -> None:
    if x.ndim != 4 or x.shape[1] != channels:
        raise InvalidArgument(f"expected input [N,{channels},H,W], got {list(x.shape)}")


def depthwise_conv3x3(x: np.ndarray, weight: np.ndarray, stride: int = 1) -> np.ndarray:
    """Per-channel 3x3 convolution, padding 1. ``weight`` is [C,1,3,3]."""
    n, c, h, w = x.shape
    if weight.shape != (c, 1, 3, 3):
        raise InvalidArgument(f"depthwise weight must be [{c},1,3,3], got {list(weight.shape)}")
    dtype = np.result_type(x, weight)
    x = np.ascontiguousarray(x, dtype=dtype)
    return kernels.dw_forward(x, weight.astype(dtype), stride, _out_size(h, stride), _out_size(w, stride))


def depthwise_conv3x3_backward(
    x: np.ndarray, weight: np.ndarray, stride: int, grad: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    dtype = np.result_type(x, weight, grad)
    dx, dw = kernels.dw_backward(
        np.ascontiguousarray(x, dtype=dtype),
        weight.astype(dtype),
        stride,
        np.ascontiguousarray(grad, dtype=dtype),
    )
    return dx, dw.astype(weight.dtype)


def pointwise_conv1x1(x: np.ndarray, weight: np.ndarray) -> np.ndarray:
    """Per-pixel channel mixing. ``weight`` is [O,C]."""
    n, c, h, w = x.shape
    if weight.ndim != 2 or weight.shape[1] != c:
        raise InvalidArgument(f"pointwise weight must be [O,{c}], got {list(weight.shape)}")
    out = np.matmul(weight, x.reshape(n, c, h * w))
    return out.reshape(n, weight.shape[0], h, w)


def pointwise_conv1x1_backward(
    x: np.ndarray, weight: np.ndarray, grad: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    n, c, h, w = x.shape
    o = weight.shape[0]
    g = grad.reshape(n, o, h * w)
    xs = x.reshape(n, c, h * w)
    dw = g.transpose(1, 0, 2).reshape(o, -1) @ xs.transpose(1, 0, 2).reshape(c, -1).T
    dx = np.matmul(weight.T, g).reshape(n, c, h, w)
    return dx, dw.astype(weight.dtype, copy=False)


def _im2col3x3(x: np.ndarray, stride: int) -> tuple[np.ndarray, int, int]:
    n, c, h, w = x.shape
    ho, wo = _out_size(h, stride), _out_size(w, stride)
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = np.empty((n, c, 9, ho, wo), dtype=x.dtype)
    for ky in range(3):
        for kx in range(3):
            cols[:, :, ky * 3 + kx] = xp[:, :, ky : ky + stride * (ho - 1) + 1 : stride, kx : kx + stride * (wo - 1) + 1 : stride]
    return cols.reshape(n, c * 9, ho * wo), ho, wo


def batch_norm(
    x: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = BN_MOMENTUM,
    eps: float = BN_EPS,
) -> tuple[np.ndarray, tuple]:
    """Per-channel normalization; updates running statistics in place when training.

    Running variance tracks the unbiased batch variance.
    """
    x = np.ascontiguousarray(x)
    if training:
        count = x.shape[0] * x.shape[2] * x.shape[3]
        if count == 0:
            raise InvalidArgument("batch norm in train mode needs a non-empty batch")
        mean, var = kernels.bn_stats(x)
        unbiased = var * (count / (count - 1)) if count > 1 else var
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean.astype(running_mean.dtype)
        running_var *= 1.0 - momentum
        running_var += momentum * unbiased.astype(running_var.dtype)
    else:
        mean, var = running_mean, running_var
    inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    xhat, out = kernels.bn_apply(
        x, mean.astype(x.dtype), inv_std, gamma.astype(x.dtype), beta.astype(x.dtype)
    )
    return out, (xhat, inv_std)


def batch_norm_backward(
    cache: tuple, gamma: np.ndarray, grad: np.ndarray, training: bool
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    xhat, inv_std = cache
    dx, dgamma, dbeta = kernels.bn_backward(
        xhat, inv_std, gamma.astype(xhat.dtype), np.ascontiguousarray(grad, dtype=xhat.dtype), training
    )
    return dx, dgamma.astype(gamma.dtype), dbeta.astype(gamma.dtype)


# --- modules -----------------------------------------------------------------


class ReLU6(Module):
    def forward(self, x):
        self._x = x
        return relu6(x)

    def backward(self, grad):
        return relu6_backward(self._x, grad)


class Conv3x3(Module):
    """Dense 3x3 convolution with padding 1 (used as the network stem)."""

    def __init__(self, in_channels: int, out_channels: int, stride: int = 1, rng=None):
        rng = rng or np.random.default_rng(0)
        self.in_channels, self.out_channels, self.stride = in_channels, out_channels, stride
        self.weight = Parameter(_kaiming_uniform(rng, (out_channels, in_channels, 3, 3), in_channels * 9))

    def own_parameters(self):
        return [("weight", self.weight)]

    def forward(self, x):
        _check_nchw(x, self.in_channels)
        cols, ho, wo = _im2col3x3(x, self.stride)
        self._x_shape, self._cols = x.shape, cols
        w2 = self.weight.data.reshape(self.out_channels, -1)
        return np.matmul(w2, cols).reshape(x.shape[0], self.out_channels, ho, wo)

    def backward(self, grad):
        n, c, h, w = self._x_shape
        s = self.stride
        ho, wo = grad.shape[2:]
        g = grad.reshape(n, self.out_channels, -1)
        w2 = self.weight.data.reshape(self.out_channels, -1)
        cols = self._cols
        dw = g.transpose(1, 0, 2).reshape(self.out_channels, -1) @ cols.transpose(1, 0, 2).reshape(c * 9, -1).T
        self.weight.accumulate(dw.reshape(self.weight.shape))
        dcols = np.matmul(w2.T, g).reshape(n, c, 9, ho, wo)
        dxp = np.zeros((n, c, h + 2, w + 2), dtype=grad.dtype)
        for ky in range(3):
            for kx in range(3):
                dxp[:, :, ky : ky + s * (ho - 1) + 1 : s, kx : kx + s * (wo - 1) + 1 : s] += dcols[:, :, ky * 3 + kx]
        return dxp[:, :, 1 : h + 1, 1 : w + 1]


class DepthwiseConv3x3(Module):
    def __init__(self, channels: int, stride: int = 1, rng=None):
        if stride not in (1, 2):
            raise InvalidArgument("stride must be 1 or 2")
        rng = rng or np.random.default_rng(0)
        self.channels, self.stride = channels, stride
        self.weight = Parameter(_kaiming_uniform(rng, (channels, 1, 3, 3), 9))

    def own_parameters(self):
        return [("weight", self.weight)]

    def forward(self, x):
        _check_nchw(x, self.channels)
        self._x = x
        return depthwise_conv3x3(x, self.weight.data, self.stride)

    def backward(self, grad):
        dx, dw = depthwise_conv3x3_backward(self._x, self.weight.data, self.stride, grad)
        self.weight.accumulate(dw)
        return dx


class PointwiseConv1x1(Module):
    def __init__(self, in_channels: int, out_channels: int, rng=None):
        rng = rng or np.random.default_rng(0)
        self.in_channels, self.out_channels = in_channels, out_channels
        self.weight = Parameter(_kaiming_uniform(rng, (out_channels, in_channels), in_channels))

    def own_parameters(self):
        return [("weight", self.weight)]

    def forward(self, x):
        _check_nchw(x, self.in_channels)
        self._x = x
        return pointwise_conv1x1(x, self.weight.data)

    def backward(self, grad):
        dx, dw = pointwise_conv1x1_backward(self._x, self.weight.data, grad)
        self.weight.accumulate(dw)
        return dx


class BatchNorm2d(Module):
    def __init__(self, channels: int, momentum: float = BN_MOMENTUM, eps: float = BN_EPS):
        self.channels, self.momentum, self.eps = channels, momentum, eps
        self.gamma = Parameter(np.ones(channels, dtype=np.float32))
        self.beta = Parameter(np.zeros(channels, dtype=np.float32))
        self.running_mean = np.zeros(channels, dtype=np.float32)
        self.running_var = np.ones(channels, dtype=np.float32)

    def own_parameters(self):
        return [("gamma", self.gamma), ("beta", self.beta)]

    def own_buffers(self):
        return [("running_mean", self.running_mean), ("running_var", self.running_var)]

    def _cast_buffers(self, dtype):
        self.running_mean = self.running_mean.astype(dtype)
        self.running_var = self.running_var.astype(dtype)

    def forward(self, x):
        _check_nchw(x, self.channels)
        out, self._cache = batch_norm(
            x, self.gamma.data, self.beta.data, self.running_mean, self.running_var,
            self.training, self.momentum, self.eps,
        )
        self._mode = self.training
        return out

    def backward(self, grad):
        dx, dgamma, dbeta = batch_norm_backward(self._cache, self.gamma.data, grad, self._mode)
        self.gamma.accumulate(dgamma)
        self.beta.accumulate(dbeta)
        return dx


class GlobalAvgPool(Module):
    def forward(self, x):
        self._shape = x.shape
        return x.mean(axis=(2, 3))

    def backward(self, grad):
        n, c, h, w = self._shape
        return np.broadcast_to((grad / (h * w))[:, :, None, None], self._shape).copy()


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng=None):
        rng = rng or np.random.default_rng(0)
        bound = 1.0 / math.sqrt(in_features)
        self.in_features, self.out_features = in_features, out_features
        self.weight = Parameter(rng.uniform(-bound, bound, (out_features, in_features)).astype(np.float32))
        self.bias = Parameter(rng.uniform(-bound, bound, out_features).astype(np.float32))

    def own_parameters(self):
        return [("weight", self.weight), ("bias", self.bias)]

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise InvalidArgument(f"expected input [N,{self.in_features}], got {list(x.shape)}")
        self._x = x
        return x @ self.weight.data.T + self.bias.data

    def backward(self, grad):
        self.weight.accumulate((grad.T @ self._x))
        self.bias.accumulate(grad.sum(axis=0))
        return grad @ self.weight.data


class Sequential(Module):
    def __init__(self, *layers: tuple[str, Module]):
        self.layers = list(layers)

    def children(self):
        return self.layers

    def forward(self, x):
        for _, layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad):
        for _, layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad


class InvertedResidual(Module):
    """Expand (1x1) -> depthwise 3x3 -> linear projection (1x1), BN after each conv.

    The skip connection is used when the block keeps both resolution and width.
    """

    def __init__(self, in_channels: int, out_channels: int, stride: int = 1, expand_ratio: int = 6, rng=None):
        rng = rng or np.random.default_rng(0)
        hidden = in_channels * expand_ratio
        self.in_channels, self.out_channels, self.stride = in_channels, out_channels, stride
        self.expand_ratio = expand_ratio
        self.use_skip = stride == 1 and in_channels == out_channels
        self.body = Sequential(
            ("expand", PointwiseConv1x1(in_channels, hidden, rng)),
            ("bn1", BatchNorm2d(hidden)),
            ("act1", ReLU6()),
            ("depthwise", DepthwiseConv3x3(hidden, stride, rng)),
            ("bn2", BatchNorm2d(hidden)),
            ("act2", ReLU6()),
            ("project", PointwiseConv1x1(hidden, out_channels, rng)),
            ("bn3", BatchNorm2d(out_channels)),
        )

    def children(self):
        return [("body", self.body)]

    def forward(self, x):
        out = self.body.forward(x)
        return out + x if self.use_skip else out

    def backward(self, grad):
        dx = self.body.backward(grad)
        return dx + grad if self.use_skip else dx
