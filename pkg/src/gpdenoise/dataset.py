"""Procedural toy corpus: anti-aliased discs on black, 32x32 grayscale.

The disc family (center, radius, intensity) is a genuinely low-dimensional
manifold, so a small generator can learn it well enough for recovery
experiments to mean something.  Generation is a pure function of
(spec, seed); each image draws from its own derived substream, so corpora
can be produced in parallel without changing the result.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .rng import derive_rng
from .weights_io import Image, round_half_up

IMAGE_SIZE = 32
_SUPERSAMPLE = 2


@dataclass(frozen=True)
class ToyDatasetSpec:
    count: int
    seed: int = 0
    center_range: tuple[float, float] = (8.0, 24.0)
    radius_range: tuple[float, float] = (4.0, 10.0)
    intensity_range: tuple[float, float] = (0.5, 1.0)

    def __post_init__(self):
        if self.count < 1:
            raise ConfigError("dataset count must be >= 1")


def _render_disc(cx: float, cy: float, radius: float, intensity: float) -> np.ndarray:
    s = _SUPERSAMPLE
    coords = (np.arange(IMAGE_SIZE * s) + 0.5) / s  # subpixel centers in pixel units
    dx = coords[None, :] - cx
    dy = coords[:, None] - cy
    hit = (dx * dx + dy * dy) <= radius * radius
    fine = np.where(hit, intensity, 0.0)
    coarse = fine.reshape(IMAGE_SIZE, s, IMAGE_SIZE, s).mean(axis=(1, 3))
    return round_half_up(coarse * 255.0).astype(np.uint8)


def make_toy_image(spec: ToyDatasetSpec, index: int) -> Image:
    """Disc image `index` of the corpus defined by `spec`."""
    rng = derive_rng(spec.seed, index)
    c_lo, c_hi = spec.center_range
    r_lo, r_hi = spec.radius_range
    a_lo, a_hi = spec.intensity_range
    cx = rng.uniform(c_lo, c_hi)
    cy = rng.uniform(c_lo, c_hi)
    radius = rng.uniform(r_lo, r_hi)
    intensity = rng.uniform(a_lo, a_hi)
    return Image(_render_disc(cx, cy, radius, intensity)[:, :, None])


def make_toy_dataset(spec: ToyDatasetSpec) -> list[Image]:
    """Full corpus, deterministic in (spec, seed)."""
    return [make_toy_image(spec, i) for i in range(spec.count)]
