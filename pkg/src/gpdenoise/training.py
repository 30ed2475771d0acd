"""Vanilla GAN training on the toy corpus.

The discriminator ascends log D(x) + log(1 - D(G(z))); the generator uses
the non-saturating objective, ascending log D(G(z)).  Both are driven by
Adam.  All loss arithmetic happens on logits via softplus so nothing
underflows even when the discriminator saturates.

Training owns its networks exclusively; batch-norm running statistics are
folded in once per generator forward with momentum 0.9.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, NumericError, ShapeError
from .layers import BatchNorm
from .nets import DiscriminatorNet, GeneratorNet, build_discriminator, build_generator
from .rng import derive_rng
from .weights_io import Image, normalize, save_weights


@dataclass(frozen=True)
class TrainConfig:
    steps: int
    batch_size: int = 64
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    latent_dim: int = 16
    checkpoint_every: int = 0
    checkpoint_path: str | None = None

    def __post_init__(self):
        if self.steps < 0:
            raise ConfigError("steps must be >= 0")
        if self.batch_size < 2:
            raise ConfigError("batch size must be >= 2 (batch norm needs batch statistics)")
        if min(self.lr, self.beta2, self.eps) <= 0 or self.beta1 < 0:
            raise ConfigError("Adam rates must be positive")
        if self.checkpoint_every < 0:
            raise ConfigError("checkpoint cadence must be >= 0")


class Adam:
    """Adam with bias correction, over a name->array parameter mapping."""

    def __init__(self, lr: float, beta1: float = 0.5, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, p in params.items():
            g = grads[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            self.m[name] = b1 * self.m[name] + (1 - b1) * g
            self.v[name] = b2 * self.v[name] + (1 - b2) * (g * g)
            m_hat = self.m[name] / (1 - b1 ** self.t)
            v_hat = self.v[name] / (1 - b2 ** self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class GanOptState:
    adam_g: Adam
    adam_d: Adam

    @classmethod
    def from_config(cls, config: TrainConfig) -> "GanOptState":
        mk = lambda: Adam(config.lr, config.beta1, config.beta2, config.eps)
        return cls(mk(), mk())


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def disc_logits(net: DiscriminatorNet, batch: np.ndarray, with_caches: bool = False):
    if batch.ndim != 4 or batch.shape[1:] != net.input_shape:
        raise ShapeError(f"discriminator input {batch.shape} != (N, {net.input_shape})")
    x = np.ascontiguousarray(np.asarray(batch, dtype=np.float64).transpose(0, 3, 1, 2))
    if with_caches:
        logits, caches = net.forward_batch(x, with_caches=True)
        return logits[:, 0], caches
    return net.forward_batch(x)[:, 0]


def disc_forward(net: DiscriminatorNet, img_tensor: np.ndarray) -> float:
    """Probability the discriminator assigns to one (H, W, C) image tensor."""
    img_tensor = np.asarray(img_tensor, dtype=np.float64)
    if img_tensor.shape != net.input_shape:
        raise ShapeError(f"discriminator input {img_tensor.shape} != {net.input_shape}")
    logit = disc_logits(net, img_tensor[None])[0]
    if not math.isfinite(logit):
        raise NumericError("discriminator logit is non-finite")
    return float(_sigmoid(np.asarray([logit]))[0])


def disc_param_grads(net: DiscriminatorNet, batch: np.ndarray, upstream_logit: np.ndarray) -> dict[str, np.ndarray]:
    """Parameter gradients of a loss whose logit gradient is `upstream_logit`."""
    _, caches = disc_logits(net, batch, with_caches=True)
    return net.backward_params_batch(upstream_logit[:, None], caches)


def _apply_running_stats(net: GeneratorNet, caches: list) -> None:
    for layer, cache in zip(net.layers, caches):
        if isinstance(layer, BatchNorm):
            layer.running_mean, layer.running_var = layer.updated_running_stats(cache)


def gan_train_step(
    gen: GeneratorNet,
    disc: DiscriminatorNet,
    real_batch: np.ndarray,
    opt: GanOptState,
    rng: np.random.Generator,
) -> tuple[float, float]:
    """One discriminator update followed by one generator update.

    `real_batch` is (N, H, W, C) in [-1, 1].  Returns the (pre-update)
    discriminator and generator losses.  Raises NumericError as soon as
    either loss goes non-finite.
    """
    if not (gen.training and disc.training):
        raise ConfigError("gan_train_step requires both nets in training mode")
    n = real_batch.shape[0]
    if n < 2:
        raise ConfigError("batch size must be >= 2")

    # --- discriminator step: ascend log D(x) + log(1 - D(G(z)))
    z = rng.uniform(-1.0, 1.0, size=(n, gen.input_dim))
    fake, g_caches = gen.forward_batch(z, with_caches=True)
    _apply_running_stats(gen, g_caches)

    logit_real, caches_real = disc_logits(disc, real_batch, with_caches=True)
    logit_fake, caches_fake = disc_logits(disc, fake, with_caches=True)
    loss_d = float(np.mean(_softplus(-logit_real)) + np.mean(_softplus(logit_fake)))
    if not math.isfinite(loss_d):
        raise NumericError(f"discriminator loss non-finite ({loss_d})")
    d_grads_real = disc.backward_params_batch(((_sigmoid(logit_real) - 1.0) / n)[:, None], caches_real)
    d_grads_fake = disc.backward_params_batch((_sigmoid(logit_fake) / n)[:, None], caches_fake)
    d_grads = {k: d_grads_real[k] + d_grads_fake[k] for k in d_grads_real}
    opt.adam_d.step(disc.named_params(), d_grads)

    # --- generator step: ascend log D(G(z)) against the updated discriminator
    z2 = rng.uniform(-1.0, 1.0, size=(n, gen.input_dim))
    fake2, g_caches2 = gen.forward_batch(z2, with_caches=True)
    _apply_running_stats(gen, g_caches2)
    logit_fake2, caches_fake2 = disc_logits(disc, fake2, with_caches=True)
    loss_g = float(np.mean(_softplus(-logit_fake2)))
    if not math.isfinite(loss_g):
        raise NumericError(f"generator loss non-finite ({loss_g})")
    upstream_logit = ((_sigmoid(logit_fake2) - 1.0) / n)[:, None]
    grad_fake = disc.backward_input_batch(upstream_logit, caches_fake2)
    grad_fake = np.ascontiguousarray(grad_fake.transpose(0, 2, 3, 1))
    g_grads = gen.backward_params_batch(grad_fake, g_caches2)
    opt.adam_g.step(gen.named_params(), g_grads)

    return loss_d, loss_g


def train(dataset: list[Image], config: TrainConfig):
    """Train a fresh GAN on `dataset`; returns (gen, disc, loss history).

    The returned generator is in inference mode.  Checkpoints (generator
    weights) are written every `checkpoint_every` steps when a
    checkpoint_path is set; the discriminator rides along under a
    `.disc.gpdw` suffix.
    """
    if not dataset:
        raise ConfigError("dataset must be nonempty")
    channels = dataset[0].channels
    gen = build_generator(input_dim=config.latent_dim, channels=channels, init_seed=config.seed)
    disc = build_discriminator(channels=channels, init_seed=config.seed)
    gen.training = True
    disc.training = True
    opt = GanOptState.from_config(config)
    rng = derive_rng(config.seed, 2)

    pool = np.stack([normalize(img) for img in dataset])
    history: list[tuple[float, float]] = []
    for step in range(config.steps):
        idx = rng.integers(0, len(dataset), size=config.batch_size)
        try:
            loss_d, loss_g = gan_train_step(gen, disc, pool[idx], opt, rng)
        except NumericError as exc:
            raise NumericError(f"training aborted at step {step}: {exc}") from exc
        history.append((loss_d, loss_g))
        if config.checkpoint_every and config.checkpoint_path and (step + 1) % config.checkpoint_every == 0:
            stem = Path(config.checkpoint_path)
            save_weights(gen, stem.with_name(f"{stem.stem}.step{step + 1:06d}{stem.suffix}"))
    gen.training = False
    disc.training = False
    return gen, disc, history


def write_history_csv(history: list[tuple[float, float]], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss_d", "loss_g"])
        for step, (loss_d, loss_g) in enumerate(history):
            writer.writerow([step, repr(loss_d), repr(loss_g)])
