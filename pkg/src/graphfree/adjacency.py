"""Adjacency-matrix constructors.

Covers the artificial replacements used in the adjacency-swap experiments
(random softmax rows, uniform 1/n, identity and their self-loop versions),
a distance-kernel graph used as synthetic ground truth, and the dense matrix
through which vertex-axis layer normalization can be written as a graph
convolution.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, DimensionError
from .tensor import as_tensor, check_finite, gaussian, softmax_rows


class AdjKind(str, enum.Enum):
    RANDOM = "R"
    UNIFORM = "M"
    IDENTITY = "I"
    IDENTITY_PLUS_RANDOM = "I+R"
    IDENTITY_PLUS_UNIFORM = "I+M"
    DISTANCE_KERNEL = "distance"
    LN_EQUIVALENT = "ln-equivalent"
    CUSTOM = "custom"


_SELF_LOOP_KIND = {
    AdjKind.RANDOM: AdjKind.IDENTITY_PLUS_RANDOM,
    AdjKind.UNIFORM: AdjKind.IDENTITY_PLUS_UNIFORM,
}


@dataclass(frozen=True)
class AdjacencyMatrix:
    values: np.ndarray
    kind: AdjKind = AdjKind.CUSTOM

    def __post_init__(self):
        values = check_finite(as_tensor(self.values), "adjacency")
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise DimensionError(f"adjacency must be square, got {values.shape}")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "kind", AdjKind(self.kind))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def __matmul__(self, other):
        return self.values @ other


def _check_n(n: int) -> int:
    if int(n) < 1:
        raise ArgumentError(f"vertex count must be >= 1, got {n}")
    return int(n)


def gen_random(n: int, rng: np.random.Generator) -> AdjacencyMatrix:
    """Row-wise softmax of an n x n standard-Gaussian draw."""
    n = _check_n(n)
    return AdjacencyMatrix(softmax_rows(gaussian((n, n), rng)), AdjKind.RANDOM)


def gen_uniform(n: int) -> AdjacencyMatrix:
    n = _check_n(n)
    return AdjacencyMatrix(np.full((n, n), 1.0 / n), AdjKind.UNIFORM)


def gen_identity(n: int) -> AdjacencyMatrix:
    n = _check_n(n)
    return AdjacencyMatrix(np.eye(n), AdjKind.IDENTITY)


def add_self_loop(a) -> AdjacencyMatrix:
    if isinstance(a, AdjacencyMatrix):
        values, kind = a.values, _SELF_LOOP_KIND.get(a.kind, AdjKind.CUSTOM)
    else:
        values, kind = as_tensor(a), AdjKind.CUSTOM
    return AdjacencyMatrix(values + np.eye(values.shape[0]), kind)


def row_normalize(values) -> np.ndarray:
    """Scale rows to sum to 1; all-zero rows become a unit self-loop."""
    values = as_tensor(values).copy()
    sums = values.sum(axis=1)
    empty = sums == 0
    values[empty] = 0.0
    values[empty, np.flatnonzero(empty)] = 1.0
    sums[empty] = 1.0
    return values / sums[:, None]


def gen_distance_kernel(coords, bandwidth: float, cutoff: float) -> AdjacencyMatrix:
    """Gaussian kernel on 2-D points, truncated at ``cutoff`` and row-normalized.

    ``a_ij = exp(-d_ij**2 / bandwidth**2)`` for ``d_ij <= cutoff``, else 0.
    """
    coords = as_tensor(coords)
    if coords.ndim != 2 or coords.shape[1] != 2 or coords.shape[0] < 1:
        raise DimensionError(f"coords must be n x 2 with n >= 1, got {coords.shape}")
    if not bandwidth > 0:
        raise ArgumentError(f"bandwidth must be positive, got {bandwidth}")
    if not cutoff > 0:
        raise ArgumentError(f"cutoff must be positive, got {cutoff}")
    diff = coords[:, None, :] - coords[None, :, :]
    dist2 = np.square(diff).sum(axis=-1)
    weights = np.exp(-dist2 / bandwidth**2)
    weights[np.sqrt(dist2) > cutoff] = 0.0
    return AdjacencyMatrix(row_normalize(weights), AdjKind.DISTANCE_KERNEL)


def averaging_matrix(n: int) -> np.ndarray:
    """n x n matrix filled with 1/n (multiplying by it takes the vertex mean)."""
    n = _check_n(n)
    return np.full((n, n), 1.0 / n)


def ln_equivalent_matrix(w, sigma: float) -> AdjacencyMatrix:
    """``Diag(w) / sigma @ (I - R)`` with R the 1/n averaging matrix."""
    w = as_tensor(w).reshape(-1)
    if not sigma > 0:
        raise ArgumentError(f"sigma must be positive, got {sigma}")
    n = w.shape[0]
    centering = np.eye(n) - averaging_matrix(n)
    return AdjacencyMatrix((w / sigma)[:, None] * centering, AdjKind.LN_EQUIVALENT)


def from_kind(kind: str, truth: AdjacencyMatrix | None, n: int,
              rng: np.random.Generator) -> AdjacencyMatrix:
    """Resolve an experiment adjacency label (True, R, M, I, I+R, I+M)."""
    if kind in ("True", "true", "truth"):
        if truth is None:
            raise ArgumentError("dataset has no ground-truth graph")
        return truth
    builders = {
        "R": lambda: gen_random(n, rng),
        "M": lambda: gen_uniform(n),
        "I": lambda: gen_identity(n),
        "I+R": lambda: add_self_loop(gen_random(n, rng)),
        "I+M": lambda: add_self_loop(gen_uniform(n)),
    }
    if kind not in builders:
        raise ArgumentError(f"unknown adjacency kind {kind!r}")
    return builders[kind]()
