"""Differentiable layers.

Every layer implements forward(x, training) and backward(grad), caching
whatever the backward pass needs on the instance, and exposes aligned
``params`` / ``grads`` lists of ndarrays. backward overwrites the
gradient buffers with the gradients of the most recent forward pass
(layers run once per step; there is no cross-call accumulation). Convolutions cover exactly the
shapes the architectures here need: kernels of height 1 or the full
remaining channel height, stride along the frequency axis only, with
same-padding on frequency and valid-padding on height.
"""
from __future__ import annotations

from typing import Optional, Tuple

import numpy as np

from ..errors import DimensionError, DomainError, StateError

ACTIVATIONS = ("relu", "sigmoid", "tanh", "softmax", "linear")


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    """Base layer; parameter-free by default."""

    trainable = True

    def __init__(self):
        self.params: list = []
        self.grads: list = []
        self._cache = None

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def output_shape(self, input_shape: Tuple[int, ...]) -> Tuple[int, ...]:
        return tuple(input_shape)

    def zero_grads(self):
        for g in self.grads:
            g[...] = 0.0

    def _need_cache(self):
        if self._cache is None:
            raise StateError(f"{type(self).__name__}.backward called before forward")
        return self._cache


class Dense(Layer):
    def __init__(self, n_in: int, n_out: int, rng: Optional[np.random.Generator] = None):
        super().__init__()
        self.n_in, self.n_out = n_in, n_out
        rng = rng or np.random.default_rng(0)
        self.w = glorot_uniform(rng, (n_in, n_out), n_in, n_out)
        self.b = np.zeros(n_out)
        self.params = [self.w, self.b]
        self.grads = [np.zeros_like(self.w), np.zeros_like(self.b)]

    def forward(self, x, training=False):
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise DimensionError(f"Dense expected (N, {self.n_in}), got {x.shape}")
        self._cache = x
        return x @ self.w + self.b

    def backward(self, grad):
        x = self._need_cache()
        np.matmul(x.T, grad, out=self.grads[0])
        np.sum(grad, axis=0, out=self.grads[1])
        return grad @ self.w.T

    def output_shape(self, input_shape):
        return (input_shape[0], self.n_out)


class Activation(Layer):
    def __init__(self, name: str):
        super().__init__()
        if name not in ACTIVATIONS:
            raise DomainError(f"unknown activation {name!r}")
        self.name = name

    def forward(self, x, training=False):
        if self.name == "relu":
            out = np.maximum(x, 0.0)
            self._cache = x
        elif self.name == "sigmoid":
            out = 1.0 / (1.0 + np.exp(-x))
            self._cache = out
        elif self.name == "tanh":
            out = np.tanh(x)
            self._cache = out
        elif self.name == "softmax":
            shifted = x - x.max(axis=-1, keepdims=True)
            e = np.exp(shifted)
            out = e / e.sum(axis=-1, keepdims=True)
            self._cache = out
        else:
            out = x
            self._cache = x
        return out

    def backward(self, grad):
        c = self._need_cache()
        if self.name == "relu":
            return grad * (c > 0)
        if self.name == "sigmoid":
            return grad * c * (1.0 - c)
        if self.name == "tanh":
            return grad * (1.0 - c * c)
        if self.name == "softmax":
            dot = (grad * c).sum(axis=-1, keepdims=True)
            return c * (grad - dot)
        return grad


class Dropout(Layer):
    """Inverted dropout: scaling happens at train time, inference is identity."""

    def __init__(self, rate: float):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise DomainError(f"dropout rate must be in [0,1), got {rate}")
        self.rate = rate
        self.rng: Optional[np.random.Generator] = None

    def seed(self, rng: np.random.Generator):
        self.rng = rng

    def forward(self, x, training=False):
        if not training or self.rate == 0.0:
            self._cache = None
            return x
        if self.rng is None:
            raise StateError("dropout used in training mode without a seeded rng")
        mask = (self.rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        self._cache = mask
        return x * mask

    def backward(self, grad):
        mask = self._cache
        return grad if mask is None else grad * mask


class BatchNorm(Layer):
    """Per-feature batch normalisation with running statistics.

    2-D inputs normalise over the batch axis; 4-D inputs over batch and
    both spatial axes (per feature-map channel).
    """

    def __init__(self, n_features: int, momentum: float = 0.99, eps: float = 1e-5):
        super().__init__()
        self.n_features = n_features
        self.momentum = momentum
        self.eps = eps
        self.gamma = np.ones(n_features)
        self.beta = np.zeros(n_features)
        self.params = [self.gamma, self.beta]
        self.grads = [np.zeros_like(self.gamma), np.zeros_like(self.beta)]
        self.running_mean = np.zeros(n_features)
        self.running_var = np.ones(n_features)

    def _axes_and_shape(self, x):
        if x.ndim == 2:
            return (0,), (1, self.n_features)
        if x.ndim == 4:
            return (0, 2, 3), (1, self.n_features, 1, 1)
        raise DimensionError(f"BatchNorm supports 2-D or 4-D inputs, got {x.ndim}-D")

    def forward(self, x, training=False):
        axes, shape = self._axes_and_shape(x)
        if x.shape[1] != self.n_features:
            raise DimensionError(
                f"BatchNorm built for {self.n_features} features, got {x.shape}")
        if training:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            self.running_mean = self.momentum * self.running_mean + (1 - self.momentum) * mean
            self.running_var = self.momentum * self.running_var + (1 - self.momentum) * var
        else:
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        x_hat = (x - mean.reshape(shape)) * inv_std.reshape(shape)
        self._cache = (x_hat, inv_std, axes, shape, training,
                       int(np.prod([x.shape[a] for a in axes])))
        return self.gamma.reshape(shape) * x_hat + self.beta.reshape(shape)

    def backward(self, grad):
        x_hat, inv_std, axes, shape, training, m = self._need_cache()
        self.grads[0][...] = (grad * x_hat).sum(axis=axes)
        self.grads[1][...] = grad.sum(axis=axes)
        gamma = self.gamma.reshape(shape)
        if not training:
            return grad * gamma * inv_std.reshape(shape)
        g = grad * gamma
        mean_g = g.mean(axis=axes).reshape(shape)
        mean_gx = (g * x_hat).mean(axis=axes).reshape(shape)
        return inv_std.reshape(shape) * (g - mean_g - x_hat * mean_gx)


class Conv2D(Layer):
    """2-D convolution with stride along the last (frequency) axis only.

    Frequency axis is same-padded so the output width is ceil(W/stride);
    the height axis is valid, shrinking by kernel_h - 1.
    """

    def __init__(self, c_in: int, c_out: int, kernel: Tuple[int, int],
                 stride_w: int = 1, rng: Optional[np.random.Generator] = None):
        super().__init__()
        kh, kw = kernel
        if kh < 1 or kw < 1 or stride_w < 1:
            raise DomainError("kernel and stride must be positive")
        self.c_in, self.c_out, self.kh, self.kw, self.sw = c_in, c_out, kh, kw, stride_w
        rng = rng or np.random.default_rng(0)
        fan_in = c_in * kh * kw
        fan_out = c_out * kh * kw
        self.w = glorot_uniform(rng, (c_out, c_in, kh, kw), fan_in, fan_out)
        self.b = np.zeros(c_out)
        self.params = [self.w, self.b]
        self.grads = [np.zeros_like(self.w), np.zeros_like(self.b)]

    def _geometry(self, h: int, w: int):
        if self.kh > h:
            raise DimensionError(
                f"kernel height {self.kh} taller than input height {h}")
        h_out = h - self.kh + 1
        w_out = -(-w // self.sw)  # ceil
        pad = max((w_out - 1) * self.sw + self.kw - w, 0)
        return h_out, w_out, pad // 2, pad - pad // 2

    def forward(self, x, training=False):
        if x.ndim != 4 or x.shape[1] != self.c_in:
            raise DimensionError(
                f"Conv2D expected (N, {self.c_in}, H, W), got {x.shape}")
        n, _, h, w = x.shape
        h_out, w_out, pad_l, pad_r = self._geometry(h, w)
        xp = np.pad(x, ((0, 0), (0, 0), (0, 0), (pad_l, pad_r)))
        cols = np.empty((n, self.c_in, self.kh, self.kw, h_out, w_out))
        for i in range(self.kh):
            for j in range(self.kw):
                cols[:, :, i, j] = xp[:, :, i:i + h_out, j:j + self.sw * w_out:self.sw]
        out = np.tensordot(cols, self.w, axes=([1, 2, 3], [1, 2, 3]))
        out = np.transpose(out, (0, 3, 1, 2)) + self.b.reshape(1, -1, 1, 1)
        self._cache = (cols, xp.shape, (pad_l, pad_r), x.shape)
        return out

    def backward(self, grad):
        cols, xp_shape, (pad_l, pad_r), x_shape = self._need_cache()
        n, _, h, w = x_shape
        h_out, w_out = grad.shape[2], grad.shape[3]
        self.grads[0][...] = np.tensordot(grad, cols, axes=([0, 2, 3], [0, 4, 5]))
        self.grads[1][...] = grad.sum(axis=(0, 2, 3))
        dcols = np.tensordot(grad, self.w, axes=(1, 0))  # (n, h_out, w_out, c_in, kh, kw)
        dxp = np.zeros(xp_shape)
        for i in range(self.kh):
            for j in range(self.kw):
                dxp[:, :, i:i + h_out, j:j + self.sw * w_out:self.sw] += \
                    np.transpose(dcols[:, :, :, :, i, j], (0, 3, 1, 2))
        return dxp[:, :, :, pad_l:pad_l + w]

    def output_shape(self, input_shape):
        n, _, h, w = input_shape
        h_out, w_out, _, _ = self._geometry(h, w)
        return (n, self.c_out, h_out, w_out)


class MaxPool2D(Layer):
    """Max pooling with window (1, pool) and matching stride, valid padding."""

    def __init__(self, pool_w: int):
        super().__init__()
        if pool_w < 1:
            raise DomainError("pool width must be positive")
        self.pw = pool_w

    def forward(self, x, training=False):
        if x.ndim != 4:
            raise DimensionError(f"MaxPool2D expected 4-D input, got {x.shape}")
        n, c, h, w = x.shape
        w_out = w // self.pw
        if w_out < 1:
            raise DimensionError(f"pool width {self.pw} larger than input width {w}")
        trimmed = x[:, :, :, :w_out * self.pw].reshape(n, c, h, w_out, self.pw)
        idx = trimmed.argmax(axis=-1)
        out = np.take_along_axis(trimmed, idx[..., None], axis=-1)[..., 0]
        self._cache = (idx, x.shape, w_out)
        return out

    def backward(self, grad):
        idx, x_shape, w_out = self._need_cache()
        n, c, h, w = x_shape
        dx = np.zeros((n, c, h, w_out, self.pw))
        np.put_along_axis(dx, idx[..., None], grad[..., None], axis=-1)
        out = np.zeros(x_shape)
        out[:, :, :, :w_out * self.pw] = dx.reshape(n, c, h, w_out * self.pw)
        return out

    def output_shape(self, input_shape):
        n, c, h, w = input_shape
        return (n, c, h, w // self.pw)


class Flatten(Layer):
    def forward(self, x, training=False):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._need_cache())

    def output_shape(self, input_shape):
        n = input_shape[0]
        return (n, int(np.prod(input_shape[1:])))
