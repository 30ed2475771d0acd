"""Differentiable layers for the fixed generator/discriminator stacks.

Each layer is a plain object holding float64 parameter arrays.  Forward
passes are pure: they return ``(output, cache)`` and never mutate the
layer, so one network instance can serve unlimited concurrent readers.
The matching ``backward_input`` / ``backward_params`` consume the cache
from the same call.  Batch-norm running statistics are likewise never
updated inside ``forward``; training code applies them explicitly via
``updated_running_stats``.

Array convention: batches are leading, conv features are channels-first
(N, C, H, W).  All compute is float64.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, ShapeError

BN_EPS = 1e-5


def _f64(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


class Layer:
    """Base layer: parameter-free, shape-preserving unless overridden."""

    name = "layer"

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def buffers(self) -> dict[str, np.ndarray]:
        return {}

    def forward(self, x: np.ndarray, training: bool):
        raise NotImplementedError

    def backward_input(self, grad_y: np.ndarray, cache):
        raise NotImplementedError

    def backward_params(self, grad_y: np.ndarray, cache) -> dict[str, np.ndarray]:
        return {}


class Dense(Layer):
    """Affine map y = x @ w.T + b with optional bias."""

    def __init__(self, w: np.ndarray, b: np.ndarray | None = None, name: str = "dense"):
        self.w = _f64(w)
        self.b = None if b is None else _f64(b)
        if self.w.ndim != 2:
            raise ShapeError(f"dense weight must be 2-D, got {self.w.shape}")
        if self.b is not None and self.b.shape != (self.w.shape[0],):
            raise ShapeError(f"dense bias shape {self.b.shape} does not match {self.w.shape[0]}")
        self.name = name

    def params(self):
        out = {"w": self.w}
        if self.b is not None:
            out["b"] = self.b
        return out

    def forward(self, x, training):
        if x.ndim != 2 or x.shape[1] != self.w.shape[1]:
            raise ShapeError(f"dense {self.name}: input {x.shape} incompatible with weight {self.w.shape}")
        y = x @ self.w.T
        if self.b is not None:
            y = y + self.b
        return y, x

    def backward_input(self, grad_y, cache):
        return grad_y @ self.w

    def backward_params(self, grad_y, cache):
        x = cache
        grads = {"w": grad_y.T @ x}
        if self.b is not None:
            grads["b"] = grad_y.sum(axis=0)
        return grads


class Reshape(Layer):
    """Row-major reshape of the per-sample payload."""

    def __init__(self, shape: tuple[int, ...], name: str = "reshape"):
        self.shape = tuple(shape)
        self.name = name

    def forward(self, x, training):
        return x.reshape((x.shape[0],) + self.shape), x.shape

    def backward_input(self, grad_y, cache):
        return grad_y.reshape(cache)


class Flatten(Layer):
    def __init__(self, name: str = "flatten"):
        self.name = name

    def forward(self, x, training):
        return x.reshape(x.shape[0], -1), x.shape

    def backward_input(self, grad_y, cache):
        return grad_y.reshape(cache)


class ToHWC(Layer):
    """Boundary transpose from internal (N, C, H, W) to (N, H, W, C)."""

    def __init__(self, name: str = "to_hwc"):
        self.name = name

    def forward(self, x, training):
        return np.ascontiguousarray(x.transpose(0, 2, 3, 1)), None

    def backward_input(self, grad_y, cache):
        return np.ascontiguousarray(grad_y.transpose(0, 3, 1, 2))


class ReLU(Layer):
    def __init__(self, name: str = "relu"):
        self.name = name

    def forward(self, x, training):
        return np.maximum(x, 0.0), x > 0

    def backward_input(self, grad_y, cache):
        return grad_y * cache


class LeakyReLU(Layer):
    def __init__(self, slope: float = 0.2, name: str = "lrelu"):
        self.slope = float(slope)
        self.name = name

    def forward(self, x, training):
        pos = x > 0
        return np.where(pos, x, self.slope * x), pos

    def backward_input(self, grad_y, cache):
        return np.where(cache, grad_y, self.slope * grad_y)


class Tanh(Layer):
    def __init__(self, name: str = "tanh"):
        self.name = name

    def forward(self, x, training):
        y = np.tanh(x)
        return y, y

    def backward_input(self, grad_y, cache):
        return grad_y * (1.0 - cache * cache)


class BatchNorm(Layer):
    """Batch normalization over features (2-D input) or channels (4-D).

    Training mode normalizes with the batch's biased statistics; inference
    mode uses the stored running statistics, making the layer a fixed
    per-feature affine map.  ``forward`` never touches the running
    buffers; the training loop pulls ``updated_running_stats`` from the
    cache and assigns them explicitly.
    """

    def __init__(self, num_features: int, ndim: int, momentum: float = 0.9, name: str = "bn"):
        if ndim not in (2, 4):
            raise ConfigError(f"batch norm supports 2-D or 4-D inputs, got ndim={ndim}")
        self.num_features = int(num_features)
        self.ndim = ndim
        self.momentum = float(momentum)
        self.gamma = np.ones(num_features)
        self.beta = np.zeros(num_features)
        self.running_mean = np.zeros(num_features)
        self.running_var = np.ones(num_features)
        self.name = name
        self._axes = (0,) if ndim == 2 else (0, 2, 3)

    def params(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def buffers(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def _bcast(self, v):
        if self.ndim == 2:
            return v
        return v.reshape(1, -1, 1, 1)

    def forward(self, x, training):
        if x.ndim != self.ndim or x.shape[1] != self.num_features:
            raise ShapeError(f"batch norm {self.name}: input {x.shape} incompatible with {self.num_features} features")
        if training:
            if x.shape[0] < 2:
                raise ConfigError(f"batch norm {self.name}: training mode needs batch size >= 2")
            mean = x.mean(axis=self._axes)
            var = x.var(axis=self._axes)
        else:
            mean = self.running_mean
            var = self.running_var
        invstd = 1.0 / np.sqrt(var + BN_EPS)
        xhat = (x - self._bcast(mean)) * self._bcast(invstd)
        y = self._bcast(self.gamma) * xhat + self._bcast(self.beta)
        cache = (xhat, invstd, mean, var, training, x.shape)
        return y, cache

    def backward_input(self, grad_y, cache):
        xhat, invstd, _, _, training, shape = cache
        g = self._bcast(self.gamma) * grad_y
        if not training:
            return g * self._bcast(invstd)
        m = float(np.prod([shape[a] for a in self._axes]))
        sum_g = g.sum(axis=self._axes)
        sum_gx = (g * xhat).sum(axis=self._axes)
        return (g - self._bcast(sum_g / m) - xhat * self._bcast(sum_gx / m)) * self._bcast(invstd)

    def backward_params(self, grad_y, cache):
        xhat = cache[0]
        return {
            "gamma": (grad_y * xhat).sum(axis=self._axes),
            "beta": grad_y.sum(axis=self._axes),
        }

    def updated_running_stats(self, cache):
        """Momentum-blended running statistics from a training-mode cache."""
        _, _, mean, var, training, _ = cache
        if not training:
            raise ConfigError("running statistics only update from training-mode caches")
        m = self.momentum
        return m * self.running_mean + (1 - m) * mean, m * self.running_var + (1 - m) * var


def transposed_conv_output_size(size: int, kernel: int, stride: int, pad: int) -> int:
    out = stride * (size - 1) + kernel - 2 * pad
    if out <= 0:
        raise ConfigError(f"transposed conv output size {out} <= 0 (input {size}, kernel {kernel}, stride {stride}, pad {pad})")
    return out


def conv_transpose2d_batch(x: np.ndarray, w: np.ndarray, stride: int, pad: int) -> np.ndarray:
    """Transposed 2-D convolution: x (N, Cin, H, W), w (Cin, Cout, k, k)."""
    n, cin, h, wd = x.shape
    if w.ndim != 4 or w.shape[0] != cin:
        raise ShapeError(f"transposed conv weight {w.shape} incompatible with input channels {cin}")
    k = w.shape[2]
    h_out = transposed_conv_output_size(h, k, stride, pad)
    w_out = transposed_conv_output_size(wd, k, stride, pad)
    cout = w.shape[1]
    full = np.zeros((n, cout, stride * (h - 1) + k, stride * (wd - 1) + k))
    for ki in range(k):
        for kj in range(k):
            contrib = np.tensordot(x, w[:, :, ki, kj], axes=([1], [0]))  # (N, H, W, Cout)
            full[:, :, ki : ki + stride * (h - 1) + 1 : stride,
                 kj : kj + stride * (wd - 1) + 1 : stride] += contrib.transpose(0, 3, 1, 2)
    return full[:, :, pad : pad + h_out, pad : pad + w_out]


class ConvTranspose2d(Layer):
    """Strided transposed convolution, weight layout (Cin, Cout, k, k)."""

    def __init__(self, w: np.ndarray, stride: int, pad: int, b: np.ndarray | None = None, name: str = "tconv"):
        self.w = _f64(w)
        if self.w.ndim != 4 or self.w.shape[2] != self.w.shape[3]:
            raise ShapeError(f"transposed conv weight must be (Cin, Cout, k, k), got {self.w.shape}")
        self.b = None if b is None else _f64(b)
        self.stride = int(stride)
        self.pad = int(pad)
        self.name = name

    def params(self):
        out = {"w": self.w}
        if self.b is not None:
            out["b"] = self.b
        return out

    def forward(self, x, training):
        y = conv_transpose2d_batch(x, self.w, self.stride, self.pad)
        if self.b is not None:
            y = y + self.b.reshape(1, -1, 1, 1)
        return y, x

    def _grad_full(self, grad_y, h, wd):
        k = self.w.shape[2]
        s = self.stride
        full = np.zeros((grad_y.shape[0], grad_y.shape[1], s * (h - 1) + k, s * (wd - 1) + k))
        full[:, :, self.pad : self.pad + grad_y.shape[2], self.pad : self.pad + grad_y.shape[3]] = grad_y
        return full

    def backward_input(self, grad_y, cache):
        x = cache
        _, _, h, wd = x.shape
        k, s = self.w.shape[2], self.stride
        full = self._grad_full(grad_y, h, wd)
        grad_x = np.zeros_like(x)
        for ki in range(k):
            for kj in range(k):
                slab = full[:, :, ki : ki + s * (h - 1) + 1 : s, kj : kj + s * (wd - 1) + 1 : s]
                grad_x += np.tensordot(slab, self.w[:, :, ki, kj], axes=([1], [1])).transpose(0, 3, 1, 2)
        return grad_x

    def backward_params(self, grad_y, cache):
        x = cache
        _, _, h, wd = x.shape
        k, s = self.w.shape[2], self.stride
        full = self._grad_full(grad_y, h, wd)
        grad_w = np.zeros_like(self.w)
        for ki in range(k):
            for kj in range(k):
                slab = full[:, :, ki : ki + s * (h - 1) + 1 : s, kj : kj + s * (wd - 1) + 1 : s]
                grad_w[:, :, ki, kj] = np.tensordot(x, slab, axes=([0, 2, 3], [0, 2, 3]))
        grads = {"w": grad_w}
        if self.b is not None:
            grads["b"] = grad_y.sum(axis=(0, 2, 3))
        return grads


class Conv2d(Layer):
    """Strided convolution, weight layout (Cout, Cin, k, k)."""

    def __init__(self, w: np.ndarray, stride: int, pad: int, b: np.ndarray | None = None, name: str = "conv"):
        self.w = _f64(w)
        if self.w.ndim != 4 or self.w.shape[2] != self.w.shape[3]:
            raise ShapeError(f"conv weight must be (Cout, Cin, k, k), got {self.w.shape}")
        self.b = None if b is None else _f64(b)
        self.stride = int(stride)
        self.pad = int(pad)
        self.name = name

    def params(self):
        out = {"w": self.w}
        if self.b is not None:
            out["b"] = self.b
        return out

    def _out_size(self, size):
        out = (size + 2 * self.pad - self.w.shape[2]) // self.stride + 1
        if out <= 0:
            raise ConfigError(f"conv output size {out} <= 0")
        return out

    def forward(self, x, training):
        n, cin, h, wd = x.shape
        if cin != self.w.shape[1]:
            raise ShapeError(f"conv {self.name}: input channels {cin} != weight channels {self.w.shape[1]}")
        k, s, p = self.w.shape[2], self.stride, self.pad
        h_out, w_out = self._out_size(h), self._out_size(wd)
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        y = np.zeros((n, self.w.shape[0], h_out, w_out))
        for ki in range(k):
            for kj in range(k):
                slab = xp[:, :, ki : ki + s * (h_out - 1) + 1 : s, kj : kj + s * (w_out - 1) + 1 : s]
                y += np.tensordot(slab, self.w[:, :, ki, kj], axes=([1], [1])).transpose(0, 3, 1, 2)
        if self.b is not None:
            y = y + self.b.reshape(1, -1, 1, 1)
        return y, (xp, x.shape)

    def backward_input(self, grad_y, cache):
        xp, x_shape = cache
        k, s, p = self.w.shape[2], self.stride, self.pad
        h_out, w_out = grad_y.shape[2], grad_y.shape[3]
        grad_xp = np.zeros_like(xp)
        for ki in range(k):
            for kj in range(k):
                contrib = np.tensordot(grad_y, self.w[:, :, ki, kj], axes=([1], [0])).transpose(0, 3, 1, 2)
                grad_xp[:, :, ki : ki + s * (h_out - 1) + 1 : s, kj : kj + s * (w_out - 1) + 1 : s] += contrib
        if p == 0:
            return grad_xp
        return grad_xp[:, :, p : p + x_shape[2], p : p + x_shape[3]]

    def backward_params(self, grad_y, cache):
        xp, _ = cache
        k, s = self.w.shape[2], self.stride
        h_out, w_out = grad_y.shape[2], grad_y.shape[3]
        grad_w = np.zeros_like(self.w)
        for ki in range(k):
            for kj in range(k):
                slab = xp[:, :, ki : ki + s * (h_out - 1) + 1 : s, kj : kj + s * (w_out - 1) + 1 : s]
                grad_w[:, :, ki, kj] = np.tensordot(grad_y, slab, axes=([0, 2, 3], [0, 2, 3]))
        grads = {"w": grad_w}
        if self.b is not None:
            grads["b"] = grad_y.sum(axis=(0, 2, 3))
        return grads
