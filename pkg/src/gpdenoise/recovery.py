"""Latent-vector recovery: project images onto the generator's manifold.

Given a target image, gradient descent searches for the latent vector
whose generated image is nearest in mean-squared distance.  Three
constraint strategies keep iterates inside the [-1, 1]^d training prior:

    none        unconstrained descent
    projected   clamp each component to [-1, 1] after every step
    stochastic  redraw out-of-range components uniformly at random

Each restart initializes from its own derived random stream and runs to
convergence; the restart with the lowest final loss wins.  Denoising is
simply recovery applied to a corrupted target, then mapping the recovered
latent back through the generator; it needs no knowledge of the noise
level.

`recover_batch` drives many (image, restart) rows through vectorized
forward/backward passes at once.  Every row owns an independent stream
derived from (seed, image, restart), so results do not depend on batching
or execution order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, NumericError, ShapeError
from .nets import GeneratorNet, gen_backward_z_batch, gen_forward, loss_mse
from .rng import derive_rng, uniform_open
from .weights_io import Image, denormalize, normalize

STRATEGIES = ("none", "projected", "stochastic")
_ROWS_PER_CHUNK = 256


@dataclass(frozen=True)
class RecoveryConfig:
    strategy: str = "stochastic"
    step_size: float = 0.5
    max_iters: int = 5000
    tol: float = 1e-8
    stall_window: int = 100
    restarts: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.step_size <= 0:
            raise ConfigError("step_size must be > 0")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")
        if self.restarts < 1:
            raise ConfigError("restarts must be >= 1")
        if self.tol < 0 or self.stall_window < 1:
            raise ConfigError("tol must be >= 0 and stall_window >= 1")


@dataclass(frozen=True)
class RecoveryResult:
    z_hat: np.ndarray
    final_loss: float
    iterations_used: int
    loss_trace: np.ndarray
    restart_index: int


def clip_projected(z: np.ndarray) -> np.ndarray:
    """Clamp every component into [-1, 1]; in-range components pass through."""
    return np.clip(np.asarray(z, dtype=np.float64), -1.0, 1.0)


def clip_stochastic(z: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Redraw components with |z_i| > 1 uniformly from the open cube (-1, 1).

    In-range components are untouched; resampled ones land strictly inside
    the cube.  Deterministic given the generator state.
    """
    z = np.asarray(z, dtype=np.float64).copy()
    out = np.abs(z) > 1.0
    n_out = int(out.sum())
    if n_out:
        z[out] = uniform_open(rng, -1.0, 1.0, n_out)
    return z


def _apply_clip(z_rows: np.ndarray, strategy: str, rngs: list[np.random.Generator], row_ids: np.ndarray) -> np.ndarray:
    if strategy == "none":
        return z_rows
    if strategy == "projected":
        return clip_projected(z_rows)
    for j, r in enumerate(row_ids):
        z_rows[j] = clip_stochastic(z_rows[j], rngs[r])
    return z_rows


def _recover_rows(net: GeneratorNet, targets: np.ndarray, rngs: list[np.random.Generator], config: RecoveryConfig):
    """Run one full descent per row; rows stop independently.

    Returns (z (R, d), traces list of per-row loss arrays).  Trace entry 0
    is the loss at the random initialization; entry i is the loss after i
    updates, so the last entry always describes the returned iterate.
    """
    n_rows = targets.shape[0]
    z = np.stack([rng.uniform(-1.0, 1.0, size=net.input_dim) for rng in rngs])
    grads = np.zeros_like(z)
    try:
        losses, g, _ = gen_backward_z_batch(net, z, targets)
    except NumericError as exc:
        raise NumericError(f"recovery failed at iteration 0: {exc}") from exc
    grads[:] = g
    traces: list[list[float]] = [[float(v)] for v in losses]
    active = np.ones(n_rows, dtype=bool)

    for it in range(1, config.max_iters + 1):
        for r in np.where(active)[0]:
            trace = traces[r]
            cur = trace[-1]
            if cur < config.tol:
                active[r] = False
            elif len(trace) > config.stall_window:
                prev = trace[-1 - config.stall_window]
                if prev - cur < config.tol * prev:
                    active[r] = False
        idx = np.where(active)[0]
        if idx.size == 0:
            break
        stepped = z[idx] - config.step_size * grads[idx]
        z[idx] = _apply_clip(stepped, config.strategy, rngs, idx)
        try:
            losses, g, _ = gen_backward_z_batch(net, z[idx], targets[idx])
        except NumericError as exc:
            raise NumericError(f"recovery failed at iteration {it}: {exc}") from exc
        grads[idx] = g
        for j, r in enumerate(idx):
            traces[r].append(float(losses[j]))
    return z, [np.asarray(t) for t in traces]


def _check_target(net: GeneratorNet, target: np.ndarray) -> np.ndarray:
    target = np.asarray(target, dtype=np.float64)
    if target.shape != net.output_shape:
        raise ShapeError(f"target shape {target.shape} != generator output {net.output_shape}")
    return target


def _best_result(net: GeneratorNet, targets_one: np.ndarray, z_rows: np.ndarray, traces: list[np.ndarray]) -> RecoveryResult:
    # Final losses are recomputed one sample at a time so the reported
    # value is exactly what an independent re-evaluation returns.
    final = np.array([loss_mse(targets_one, gen_forward(net, z_rows[k])) for k in range(z_rows.shape[0])])
    k = int(np.argmin(final))
    return RecoveryResult(
        z_hat=z_rows[k].copy(),
        final_loss=float(final[k]),
        iterations_used=len(traces[k]) - 1,
        loss_trace=traces[k],
        restart_index=k,
    )


def recover(net: GeneratorNet, target: np.ndarray, config: RecoveryConfig) -> RecoveryResult:
    """Recover the latent vector whose image best matches `target`.

    The target may lie outside [-1, 1] (unclamped noise); it is used as-is
    so the objective is exactly the distance to the corrupted image.
    """
    return recover_batch(net, _check_target(net, target)[None], config)[0]


def recover_batch(
    net: GeneratorNet,
    targets: np.ndarray,
    config: RecoveryConfig,
    stream_path: tuple[int, ...] = (),
) -> list[RecoveryResult]:
    """Recover a batch of targets (B, *output_shape); one result per target.

    Row (i, k) draws from the stream derived from
    (config.seed, *stream_path, i, k), so results are independent of chunking
    and restart execution order.
    """
    if net.training:
        raise ConfigError("recovery requires the generator in inference mode")
    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim != len(net.output_shape) + 1 or targets.shape[1:] != net.output_shape:
        raise ShapeError(f"target batch shape {targets.shape} != (B, {net.output_shape})")
    n_images = targets.shape[0]
    results: list[RecoveryResult] = []
    images_per_chunk = max(1, _ROWS_PER_CHUNK // config.restarts)
    for start in range(0, n_images, images_per_chunk):
        stop = min(start + images_per_chunk, n_images)
        rows = np.repeat(targets[start:stop], config.restarts, axis=0)
        rngs = [
            derive_rng(config.seed, *stream_path, i, k)
            for i in range(start, stop)
            for k in range(config.restarts)
        ]
        z_rows, traces = _recover_rows(net, rows, rngs, config)
        for j, i in enumerate(range(start, stop)):
            sel = slice(j * config.restarts, (j + 1) * config.restarts)
            results.append(_best_result(net, targets[i], z_rows[sel], traces[sel]))
    return results


def denoise(net: GeneratorNet, noisy: Image, config: RecoveryConfig) -> tuple[Image, RecoveryResult]:
    """Project a noisy image onto the generator manifold.

    Needs no prior knowledge of the noise level: the recovered latent is
    whatever best explains the corrupted pixels, and the output is the
    generator's clean rendering of it.
    """
    if (noisy.height, noisy.width, noisy.channels) != net.output_shape:
        raise ShapeError(
            f"noisy image {(noisy.height, noisy.width, noisy.channels)} != generator output {net.output_shape}"
        )
    result = recover(net, normalize(noisy), config)
    return denormalize(gen_forward(net, result.z_hat)), result


def write_trace_csv(results: list[RecoveryResult], path, image_ids: list[str] | None = None) -> None:
    """Export winning-restart loss traces as image_id,restart,iter,loss rows."""
    if image_ids is None:
        image_ids = [str(i) for i in range(len(results))]
    if len(image_ids) != len(results):
        raise ShapeError("image_ids length does not match results")
    with open(path, "w", newline="") as fh:
        fh.write("image_id,restart,iter,loss\n")
        for image_id, res in zip(image_ids, results):
            for it, loss in enumerate(res.loss_trace):
                fh.write(f"{image_id},{res.restart_index},{it},{loss!r}\n")
