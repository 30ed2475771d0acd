"""Seeded random streams and the Box-Muller Gaussian sampler.

Every source of randomness in the package flows through here so that runs
are exactly reproducible from a single root seed.  Independent substreams
are derived from integer paths (``derive_rng(seed, a, b, ...)``), which
keeps parallel work (per image, per restart, per sample) decoupled from
execution order.

Normal variates are produced by the basic Box-Muller transform applied to
consecutive pairs of the underlying uniform stream, never by an opaque
library sampler, so the byte-level output is pinned by this module alone.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "derive_rng",
    "box_muller",
    "standard_normals",
    "normals",
    "uniform_open",
]


def derive_rng(seed: int, *path: int) -> np.random.Generator:
    """Return a PCG64 generator for substream `path` of root `seed`.

    Distinct paths yield statistically independent streams; the same
    (seed, path) always yields the same stream.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, path)])))


def box_muller(u1, u2):
    """Basic Box-Muller transform.

    Maps uniforms u1 in (0, 1], u2 in [0, 1) to two independent standard
    normals (cosine branch first, then sine).
    """
    u1 = np.asarray(u1, dtype=np.float64)
    u2 = np.asarray(u2, dtype=np.float64)
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    return r * np.cos(theta), r * np.sin(theta)


def standard_normals(rng: np.random.Generator, n: int) -> np.ndarray:
    """Draw `n` standard normals via Box-Muller on `rng`'s uniform stream.

    Consumes exactly 2*ceil(n/2) uniforms: the stream is read in pairs
    (u_even, u_odd); u_even is reflected to (0, 1] so the log is finite.
    For odd `n` the trailing sine-branch variate is discarded.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n == 0:
        return np.zeros(0)
    pairs = (n + 1) // 2
    u = rng.random(2 * pairs)
    z0, z1 = box_muller(1.0 - u[0::2], u[1::2])
    out = np.empty(2 * pairs)
    out[0::2] = z0
    out[1::2] = z1
    return out[:n]


def normals(rng: np.random.Generator, shape, sigma: float = 1.0) -> np.ndarray:
    """Normal(0, sigma^2) array of the given shape, Box-Muller backed."""
    n = int(np.prod(shape)) if shape else 1
    return (sigma * standard_normals(rng, n)).reshape(shape)


def uniform_open(rng: np.random.Generator, low: float, high: float, n: int) -> np.ndarray:
    """Uniform draws strictly inside (low, high).

    `Generator.uniform` can emit the lower endpoint; endpoint hits are
    redrawn so callers get open-interval values unconditionally.
    """
    out = rng.uniform(low, high, size=n)
    bad = (out <= low) | (out >= high)
    while bad.any():
        out[bad] = rng.uniform(low, high, size=int(bad.sum()))
        bad = (out <= low) | (out >= high)
    return out
