"""Dense float64 tensor helpers.

Tensors are plain ``numpy.ndarray`` objects of dtype float64 in C (row-major)
order. This module holds the handful of primitives the rest of the package
relies on, plus the seeded random-number plumbing.

Random numbers come from numpy's PCG64 bit generator. Substreams are derived
with ``SeedSequence(seed, spawn_key=...)`` so that the same ``(seed, key)``
pair always produces the same stream, independently of which other streams
were drawn first.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .errors import ArgumentError, DimensionError

DTYPE = np.float64


def as_tensor(x) -> np.ndarray:
    """Return ``x`` as a C-contiguous float64 array."""
    return np.ascontiguousarray(x, dtype=DTYPE)


def check_finite(x: np.ndarray, name: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise ArgumentError(f"{name} contains non-finite values")
    return x


def matmul(a, b) -> np.ndarray:
    """Deterministic reference matrix product.

    Accumulates ``out += a[:, k] * b[k, :]`` for k in increasing order, which
    is the summation order of the textbook triple loop, so results are
    bit-identical to it. Vectorized over the output entries only; BLAS is
    never involved.
    """
    a = as_tensor(a)
    b = as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    out = np.zeros((a.shape[0], b.shape[1]), dtype=DTYPE)
    for k in range(a.shape[1]):
        out += a[:, k : k + 1] * b[k : k + 1, :]
    return out


def softmax_rows(m) -> np.ndarray:
    m = check_finite(as_tensor(m), "softmax input")
    if m.ndim != 2:
        raise DimensionError(f"softmax_rows expects a matrix, got shape {m.shape}")
    z = np.exp(m - m.max(axis=1, keepdims=True))
    return z / z.sum(axis=1, keepdims=True)


def mean_var(t, axes: Iterable[int]) -> tuple[np.ndarray, np.ndarray]:
    """Mean and population variance over ``axes`` (kept as size-1 dims)."""
    t = as_tensor(t)
    axes = tuple(sorted({ax % t.ndim if t.ndim else ax for ax in axes}))
    if not axes:
        raise ArgumentError("mean_var needs at least one axis")
    if any(ax < 0 or ax >= t.ndim for ax in axes):
        raise ArgumentError(f"axes {axes} invalid for shape {t.shape}")
    mean = t.mean(axis=axes, keepdims=True)
    var = np.square(t - mean).mean(axis=axes, keepdims=True)
    return mean, var


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """PCG64 generator for ``seed``; ``stream`` selects an independent substream."""
    if seed < 0:
        raise ArgumentError("seed must be a non-negative integer")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.PCG64(ss))


def gaussian(shape: Sequence[int], rng: np.random.Generator) -> np.ndarray:
    """I.i.d. standard normal samples."""
    return rng.standard_normal(tuple(shape), dtype=DTYPE)
