"""Numeric substrate: float64 arrays, seeded generators, initializers and
finite-difference gradients.

Tensors are plain ``numpy.ndarray`` objects in C (row-major) order with
dtype float64. Random streams come from :func:`make_rng`, which wraps the
PCG64 bit generator; its output for a given seed is identical across
platforms, and no module touches numpy's global random state.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import DimensionError, ParameterError

DTYPE = np.float64

Rng = np.random.Generator


def make_rng(seed: int) -> Rng:
    return np.random.Generator(np.random.PCG64(int(seed) & 0xFFFFFFFFFFFFFFFF))


def as_tensor(x) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=DTYPE)


def zeros(*shape: int) -> np.ndarray:
    return np.zeros(shape, dtype=DTYPE)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product of a 2-D ``[M, K]`` and a 2-D ``[K, N]`` array."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"matmul: incompatible shapes {list(a.shape)} and {list(b.shape)}"
        )
    return a @ b


def glorot_uniform(shape, fan_in: int, fan_out: int, rng: Rng) -> np.ndarray:
    """Samples uniformly on ``[-L, L]`` with ``L = sqrt(6 / (fan_in + fan_out))``."""
    if fan_in <= 0 or fan_out <= 0:
        raise ParameterError(f"fans must be positive, got fan_in={fan_in}, fan_out={fan_out}")
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=tuple(shape)).astype(DTYPE)


def numeric_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``x``.

    ``x`` is perturbed in place one element at a time and restored, so
    ``f`` may close over the same array.
    """
    if eps <= 0:
        raise ParameterError(f"eps must be positive, got {eps}")
    grad = np.zeros_like(x, dtype=DTYPE)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        f_plus = float(f(x))
        flat[i] = orig - eps
        f_minus = float(f(x))
        flat[i] = orig
        gflat[i] = (f_plus - f_minus) / (2.0 * eps)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-12) -> float:
    """Max-norm relative error ``max|a-b| / max(max|a|, max|b|, floor)``."""
    a = np.asarray(a, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    if a.shape != b.shape:
        raise DimensionError(f"relative_error: shapes {list(a.shape)} and {list(b.shape)} differ")
    if a.size == 0:
        return 0.0
    scale = max(float(np.max(np.abs(a))), float(np.max(np.abs(b))), floor)
    return float(np.max(np.abs(a - b))) / scale
