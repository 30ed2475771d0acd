"""Finite-difference oracle for gradient verification."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import NumericError

__all__ = ["finite_diff_grad", "rel_error"]


def finite_diff_grad(f: Callable[[np.ndarray], float], v: np.ndarray, eps: float = 1e-4) -> np.ndarray:
    """Central-difference gradient (f(v+eps*e_i) - f(v-eps*e_i)) / (2 eps)."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    v = np.asarray(v, dtype=np.float64)
    flat = v.ravel()
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        bump = np.zeros_like(flat)
        bump[i] = eps
        hi = f((flat + bump).reshape(v.shape))
        lo = f((flat - bump).reshape(v.shape))
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise NumericError(f"finite differences hit a non-finite value at component {i}")
        grad[i] = (hi - lo) / (2.0 * eps)
    return grad.reshape(v.shape)


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    """Infinity-norm relative deviation between two gradient arrays."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(float(np.max(np.abs(a))), float(np.max(np.abs(b))), 1e-12)
    return float(np.max(np.abs(a - b))) / scale
