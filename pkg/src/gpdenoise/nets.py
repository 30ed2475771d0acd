"""Network definitions, deterministic forward passes, and exact gradients.

Tensors throughout are numpy float64 arrays (shape + row-major data); the
only 32-bit representation lives inside the weight file format.  The
generator maps latent vectors from the [-1, 1]^d hypercube to images in
[-1, 1]; its range is the manifold that recovery projects onto.

The architecture is a fixed transposed-conv stack:

    d -> dense(4*4*128) -> reshape -> BN+ReLU
      -> tconv(128->64, k4 s2 p1) -> BN+ReLU
      -> tconv(64->32,  k4 s2 p1) -> BN+ReLU
      -> tconv(32->C,   k4 s2 p1) -> tanh        => 32 x 32 x C

with a toy profile (d=16, C=1) and a full profile (d=100, C=3).  The
discriminator mirrors it with strided convolutions and leaky-ReLU 0.2,
ending in a dense layer; its sigmoid is applied by the caller so training
can work on logits.

Forward passes are pure functions of (parameters, input); networks are
immutable during inference and safe for concurrent readers.  Gradients
are accumulated by explicit reverse-mode passes through the layer list.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericError, ShapeError
from .layers import (
    BatchNorm,
    Conv2d,
    ConvTranspose2d,
    Dense,
    Flatten,
    Layer,
    LeakyReLU,
    ReLU,
    Reshape,
    Tanh,
    ToHWC,
)
from .rng import derive_rng, normals

GEN_PREFIX = "gen"
DISC_PREFIX = "disc"
_BASE_CHANNELS = 128
_BASE_SIZE = 4
_IMAGE_SIZE = 32


class _Net:
    """Ordered layer stack with named parameters and buffers."""

    prefix = "net"

    def __init__(self, layers: list[Layer]):
        self.layers = layers
        self.training = False

    def named_params(self) -> dict[str, np.ndarray]:
        out = {}
        for layer in self.layers:
            for key, arr in layer.params().items():
                out[f"{self.prefix}/{layer.name}.{key}"] = arr
        return out

    def named_buffers(self) -> dict[str, np.ndarray]:
        out = {}
        for layer in self.layers:
            for key, arr in layer.buffers().items():
                out[f"{self.prefix}/{layer.name}.{key}"] = arr
        return out

    def named_tensors(self) -> dict[str, np.ndarray]:
        return {**self.named_params(), **self.named_buffers()}

    def set_tensor(self, name: str, value: np.ndarray) -> None:
        prefix, _, rest = name.partition("/")
        if prefix != self.prefix:
            raise ShapeError(f"tensor {name} does not belong to a {self.prefix} net")
        layer_name, _, key = rest.partition(".")
        for layer in self.layers:
            if layer.name == layer_name:
                current = getattr(layer, _ATTR_BY_KEY[key])
                if current.shape != value.shape:
                    raise ShapeError(f"tensor {name}: shape {value.shape} != expected {current.shape}")
                setattr(layer, _ATTR_BY_KEY[key], np.asarray(value, dtype=np.float64))
                return
        raise ShapeError(f"tensor {name}: no layer named {layer_name}")

    def forward_batch(self, x: np.ndarray, with_caches: bool = False):
        caches = []
        for layer in self.layers:
            x, cache = layer.forward(x, self.training)
            if with_caches:
                caches.append(cache)
        return (x, caches) if with_caches else x

    def backward_input_batch(self, grad: np.ndarray, caches: list) -> np.ndarray:
        for layer, cache in zip(reversed(self.layers), reversed(caches)):
            grad = layer.backward_input(grad, cache)
        return grad

    def backward_params_batch(self, grad: np.ndarray, caches: list) -> dict[str, np.ndarray]:
        grads: dict[str, np.ndarray] = {}
        for layer, cache in zip(reversed(self.layers), reversed(caches)):
            for key, g in layer.backward_params(grad, cache).items():
                grads[f"{self.prefix}/{layer.name}.{key}"] = g
            grad = layer.backward_input(grad, cache)
        return grads


_ATTR_BY_KEY = {
    "w": "w",
    "b": "b",
    "gamma": "gamma",
    "beta": "beta",
    "running_mean": "running_mean",
    "running_var": "running_var",
}


class GeneratorNet(_Net):
    """Latent-to-image map phi; output shape is fixed at construction."""

    prefix = GEN_PREFIX

    def __init__(self, input_dim: int, layers: list[Layer], output_shape: tuple[int, ...]):
        super().__init__(layers)
        self.input_dim = int(input_dim)
        self.output_shape = tuple(output_shape)


class DiscriminatorNet(_Net):
    """Image-to-logit map; sigmoid is applied by disc_forward."""

    prefix = DISC_PREFIX

    def __init__(self, layers: list[Layer], input_shape: tuple[int, ...]):
        super().__init__(layers)
        self.input_shape = tuple(input_shape)


def build_generator(input_dim: int = 16, channels: int = 1, init_seed: int = 0) -> GeneratorNet:
    """DCGAN-style generator; weights ~ Normal(0, 0.02), BN at identity."""
    rng = derive_rng(init_seed, 0)
    dense_out = _BASE_SIZE * _BASE_SIZE * _BASE_CHANNELS
    layers: list[Layer] = [
        Dense(normals(rng, (dense_out, input_dim), 0.02), name="dense0"),
        Reshape((_BASE_CHANNELS, _BASE_SIZE, _BASE_SIZE), name="reshape0"),
        BatchNorm(_BASE_CHANNELS, ndim=4, name="bn0"),
        ReLU(name="relu0"),
        ConvTranspose2d(normals(rng, (128, 64, 4, 4), 0.02), stride=2, pad=1, name="tconv1"),
        BatchNorm(64, ndim=4, name="bn1"),
        ReLU(name="relu1"),
        ConvTranspose2d(normals(rng, (64, 32, 4, 4), 0.02), stride=2, pad=1, name="tconv2"),
        BatchNorm(32, ndim=4, name="bn2"),
        ReLU(name="relu2"),
        ConvTranspose2d(normals(rng, (32, channels, 4, 4), 0.02), stride=2, pad=1, name="tconv3"),
        Tanh(name="tanh3"),
        ToHWC(name="to_hwc"),
    ]
    return GeneratorNet(input_dim, layers, (_IMAGE_SIZE, _IMAGE_SIZE, channels))


def build_discriminator(channels: int = 1, init_seed: int = 0) -> DiscriminatorNet:
    """Mirror conv stack; the final dense layer starts at zero so the
    untrained discriminator outputs exactly 1/2."""
    rng = derive_rng(init_seed, 1)
    layers: list[Layer] = [
        Conv2d(normals(rng, (32, channels, 4, 4), 0.02), stride=2, pad=1,
               b=np.zeros(32), name="conv1"),
        LeakyReLU(0.2, name="lrelu1"),
        Conv2d(normals(rng, (64, 32, 4, 4), 0.02), stride=2, pad=1,
               b=np.zeros(64), name="conv2"),
        LeakyReLU(0.2, name="lrelu2"),
        Conv2d(normals(rng, (128, 64, 4, 4), 0.02), stride=2, pad=1,
               b=np.zeros(128), name="conv3"),
        LeakyReLU(0.2, name="lrelu3"),
        Flatten(name="flatten"),
        Dense(np.zeros((1, _BASE_SIZE * _BASE_SIZE * _BASE_CHANNELS)), b=np.zeros(1), name="dense_out"),
    ]
    return DiscriminatorNet(layers, (_IMAGE_SIZE, _IMAGE_SIZE, channels))


def build_identity_generator(dim: int) -> GeneratorNet:
    """phi(z) = z; handy closed-form test bed."""
    return GeneratorNet(dim, [Dense(np.eye(dim), name="dense0")], (dim,))


def build_linear_generator(a: np.ndarray, b: np.ndarray | None = None) -> GeneratorNet:
    """phi(z) = A z + b with A of shape (out, dim)."""
    a = np.asarray(a, dtype=np.float64)
    return GeneratorNet(a.shape[1], [Dense(a, b=b, name="dense0")], (a.shape[0],))


def _check_latent(net: GeneratorNet, z: np.ndarray, batch: bool) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    want = 2 if batch else 1
    if z.ndim != want or z.shape[-1] != net.input_dim:
        raise ShapeError(f"latent shape {z.shape} incompatible with input_dim {net.input_dim}")
    return z


def gen_forward_batch(net: GeneratorNet, z: np.ndarray) -> np.ndarray:
    """Forward a batch of latents to a (N, *output_shape) array."""
    z = _check_latent(net, z, batch=True)
    y = net.forward_batch(z)
    if not np.isfinite(y).all():
        raise NumericError("generator forward produced non-finite values")
    return y


def gen_forward(net: GeneratorNet, z: np.ndarray) -> np.ndarray:
    """Deterministic single-sample image phi(z) with shape net.output_shape."""
    z = _check_latent(net, z, batch=False)
    return gen_forward_batch(net, z[None])[0]


def loss_mse(a: np.ndarray, b: np.ndarray) -> float:
    """Mean of squared differences over all elements."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"loss_mse shapes differ: {a.shape} vs {b.shape}")
    d = a - b
    out = float(np.mean(d * d))
    if not np.isfinite(out):
        raise NumericError("loss_mse produced a non-finite value")
    return out


def _mse_rows(y: np.ndarray, targets: np.ndarray) -> np.ndarray:
    d = (y - targets).reshape(y.shape[0], -1)
    return np.mean(d * d, axis=1)


def gen_backward_z_batch(net: GeneratorNet, z: np.ndarray, targets: np.ndarray):
    """Per-row loss and gradient of mean-squared loss wrt each latent.

    Returns (losses (N,), grads (N, d), outputs (N, *output_shape)).
    """
    z = _check_latent(net, z, batch=True)
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != (z.shape[0],) + net.output_shape:
        raise ShapeError(f"target batch shape {targets.shape} != {(z.shape[0],) + net.output_shape}")
    y, caches = net.forward_batch(z, with_caches=True)
    losses = _mse_rows(y, targets)
    n_per = float(np.prod(net.output_shape))
    upstream = (2.0 / n_per) * (y - targets)
    grads = net.backward_input_batch(upstream, caches)
    if not (np.isfinite(losses).all() and np.isfinite(grads).all()):
        raise NumericError("latent gradient produced non-finite values")
    return losses, grads, y


def gen_backward_z(net: GeneratorNet, z: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Gradient of loss_mse(target, gen_forward(net, z)) wrt z."""
    z = _check_latent(net, z, batch=False)
    target = np.asarray(target, dtype=np.float64)
    if target.shape != net.output_shape:
        raise ShapeError(f"target shape {target.shape} != output shape {net.output_shape}")
    _, grads, _ = gen_backward_z_batch(net, z[None], target[None])
    return grads[0]


def gen_backward_params(net: GeneratorNet, z_batch: np.ndarray, upstream_grads: np.ndarray) -> dict[str, np.ndarray]:
    """Reverse-mode parameter gradients for a batch loss.

    `upstream_grads` is dLoss/dOutput, shaped like the forward output.
    Training mode (batch-norm batch statistics) is required.
    """
    z_batch = _check_latent(net, z_batch, batch=True)
    y, caches = net.forward_batch(z_batch, with_caches=True)
    if upstream_grads.shape != y.shape:
        raise ShapeError(f"upstream grads {upstream_grads.shape} != output {y.shape}")
    return net.backward_params_batch(np.asarray(upstream_grads, dtype=np.float64), caches)


def conv2d_transpose(x: np.ndarray, w: np.ndarray, stride: int, pad: int) -> np.ndarray:
    """Single-sample transposed convolution.

    x is (Cin, H, W); w is (Cin, Cout, k, k); output spatial size is
    stride*(H-1) + k - 2*pad per the direct-summation definition.
    """
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if x.ndim != 3:
        raise ShapeError(f"expected (Cin, H, W) input, got {x.shape}")
    from .layers import conv_transpose2d_batch

    return conv_transpose2d_batch(x[None], w, stride, pad)[0]
