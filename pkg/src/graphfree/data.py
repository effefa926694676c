"""Spatiotemporal and node-classification datasets.

Preprocessing follows the usual traffic-forecasting recipe: linear
interpolation of gaps, min-max scaling to [-1, 1] fitted on the training
split, a chronological 6:2:2 split and stride-1 sliding windows that never
cross a split boundary.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .adjacency import AdjacencyMatrix, AdjKind, gen_distance_kernel, row_normalize
from .errors import ArgumentError, DataError, DimensionError, ParseError
from .tensor import as_tensor

log = logging.getLogger(__name__)

STEPS_PER_DAY = 288
SPLITS = ("train", "val", "test")


# ------------------------------------------------------------ preprocessing


@dataclass(frozen=True)
class MinMaxScaler:
    """Affine map of ``[lo, hi]`` onto ``[-1, 1]`` (no clamping)."""

    lo: float
    hi: float

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ArgumentError(f"degenerate min-max range [{self.lo}, {self.hi}]")

    @classmethod
    def fit(cls, train) -> "MinMaxScaler":
        train = as_tensor(train)
        return cls(float(np.min(train)), float(np.max(train)))

    def apply(self, x):
        return 2.0 * (as_tensor(x) - self.lo) / (self.hi - self.lo) - 1.0

    def invert(self, x):
        return (as_tensor(x) + 1.0) * (self.hi - self.lo) / 2.0 + self.lo


def minmax_fit(train) -> MinMaxScaler:
    return MinMaxScaler.fit(train)


def chrono_split(t: int, ratios=(6, 2, 2)) -> tuple[int, int]:
    """``(train_end, val_end)`` boundaries for a chronological split."""
    if t < 5:
        raise ArgumentError(f"need at least 5 time steps to split, got {t}")
    total = sum(ratios)
    train_end = t * ratios[0] // total
    val_end = t * (ratios[0] + ratios[1]) // total
    if not 0 < train_end < val_end < t:
        raise ArgumentError(f"split {ratios} of T={t} leaves an empty segment")
    return train_end, val_end


def interpolate_missing(values) -> np.ndarray:
    """Fill NaNs by linear interpolation along time (axis 0), per series.

    Leading and trailing gaps take the nearest observed value.
    """
    values = as_tensor(values)
    flat = values.reshape(values.shape[0], -1).copy()
    t = np.arange(flat.shape[0])
    for j in range(flat.shape[1]):
        col = flat[:, j]
        seen = np.isfinite(col)
        if not seen.any():
            raise DataError(f"series {j} has no observed values")
        if not seen.all():
            flat[:, j] = np.interp(t, t[seen], col[seen])
    return flat.reshape(values.shape)


# ------------------------------------------------------------------- dataset


@dataclass
class StDataset:
    values: np.ndarray  # (T, N, D), raw units
    split: tuple[int, int]
    scaler: MinMaxScaler
    window_in: int = 12
    window_out: int = 12
    truth_graph: AdjacencyMatrix | None = None
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_values(cls, values, window_in=12, window_out=12, truth_graph=None,
                    ratios=(6, 2, 2), meta=None) -> "StDataset":
        values = as_tensor(values)
        if values.ndim == 2:
            values = values[:, :, None]
        if values.ndim != 3:
            raise DimensionError(f"expected T x N x D values, got {values.shape}")
        split = chrono_split(values.shape[0], ratios)
        scaler = MinMaxScaler.fit(values[: split[0]])
        return cls(values, split, scaler, window_in, window_out, truth_graph, dict(meta or {}))

    @property
    def n(self) -> int:
        return self.values.shape[1]

    def segment(self, name: str) -> tuple[int, int]:
        train_end, val_end = self.split
        bounds = {"train": (0, train_end), "val": (train_end, val_end),
                  "test": (val_end, self.values.shape[0])}
        if name not in bounds:
            raise ArgumentError(f"unknown split {name!r}")
        return bounds[name]

    def normalized(self) -> np.ndarray:
        return self.scaler.apply(self.values)

    def to_dict(self) -> dict:
        return {
            "shape": list(self.values.shape),
            "split": list(self.split),
            "norm_state": {"min": self.scaler.lo, "max": self.scaler.hi},
            "window_in": self.window_in,
            "window_out": self.window_out,
            "meta": self.meta,
        }


def window_count(length: int, window_in: int, window_out: int) -> int:
    return max(0, length - window_in - window_out + 1)


def sliding_windows(segment: np.ndarray, window_in: int, window_out: int):
    """Stride-1 ``(inputs, targets)`` stacks from one contiguous segment."""
    count = window_count(segment.shape[0], window_in, window_out)
    tail = segment.shape[1:]
    if count == 0:
        return np.empty((0, window_in, *tail)), np.empty((0, window_out, *tail))
    idx = np.arange(count)[:, None]
    x = segment[idx + np.arange(window_in)]
    y = segment[idx + window_in + np.arange(window_out)]
    return x, y


def windowize(dataset: StDataset, split: str = "train", window_in: int | None = None,
              window_out: int | None = None, normalized: bool = True):
    """Sliding windows for one split; inputs ``(S, Q, N, D)``, targets ``(S, Q', N, D)``."""
    window_in = window_in or dataset.window_in
    window_out = window_out or dataset.window_out
    start, end = dataset.segment(split)
    source = dataset.normalized() if normalized else dataset.values
    x, y = sliding_windows(source[start:end], window_in, window_out)
    if len(x) == 0:
        log.warning("%s segment of length %d is too short for %d+%d windows",
                    split, end - start, window_in, window_out)
    return x, y


# ---------------------------------------------------------------- generators


def synth_st_generate(graph: AdjacencyMatrix, t: int, rng: np.random.Generator,
                      alpha: float = 0.5, noise: float = 0.1, amplitude: float = 1.0,
                      obs_noise: float = 0.0, phase_spread: float = 2 * np.pi,
                      period: int = STEPS_PER_DAY, seasonal: bool = True,
                      window_in: int = 12, window_out: int = 12,
                      shift: bool = True) -> StDataset:
    """Linear diffusion on ``graph`` driven by a daily sinusoid and noise.

    ``x[t+1] = alpha * A @ x[t] + (1 - alpha) * x[t] + s(t) + eps[t]`` where
    ``s_i(t) = amplitude_i * sin(2 pi t / period + phase_i)`` with per-vertex
    amplitude and a phase drawn from ``[0, phase_spread)``. ``obs_noise`` adds i.i.d. Gaussian measurement
    noise to the recorded values without feeding it back into the state.
    With ``shift`` the series is translated so its
    minimum sits at half the data range above zero, keeping MAPE finite.
    """
    a = graph.values
    if not np.allclose(a.sum(axis=1), 1.0, atol=1e-9):
        raise ArgumentError("synthetic diffusion needs a row-stochastic graph")
    if not 0 <= alpha <= 1:
        raise ArgumentError("alpha must lie in [0, 1]")
    n = graph.n
    amps = amplitude * rng.uniform(0.5, 1.5, size=n)
    phases = rng.uniform(0.0, phase_spread, size=n)
    eps = noise * rng.standard_normal((t, n)) if noise > 0 else np.zeros((t, n))
    x = np.zeros((t, n))
    for step in range(t - 1):
        drive = amps * np.sin(2 * np.pi * step / period + phases) if seasonal else 0.0
        x[step + 1] = alpha * (a @ x[step]) + (1 - alpha) * x[step] + drive + eps[step]
    if obs_noise > 0:
        x = x + obs_noise * rng.standard_normal((t, n))
    if shift:
        span = float(x.max() - x.min())
        x = x - x.min() + max(0.5 * span, 1.0)
    meta = {"generator": "diffusion", "alpha": alpha, "noise": noise, "obs_noise": obs_noise,
            "phase_spread": phase_spread,
            "amplitude": amplitude, "period": period, "seasonal": seasonal}
    return StDataset.from_values(x[:, :, None], window_in, window_out, graph, meta=meta)


def default_graph(n: int, rng: np.random.Generator, bandwidth: float = 0.15,
                  cutoff: float = 0.3) -> tuple[AdjacencyMatrix, np.ndarray]:
    """Distance-kernel graph over ``n`` uniform points in the unit square."""
    coords = rng.uniform(0.0, 1.0, size=(n, 2))
    return gen_distance_kernel(coords, bandwidth, cutoff), coords


@dataclass
class NodeClassDataset:
    features: np.ndarray  # (n, d)
    labels: np.ndarray  # (n,) int
    adjacency: AdjacencyMatrix
    train_mask: np.ndarray  # int indices
    test_mask: np.ndarray
    classes: int

    def __post_init__(self):
        if np.intersect1d(self.train_mask, self.test_mask).size:
            raise ArgumentError("train and test masks overlap")
        if self.labels.max() >= self.classes or self.labels.min() < 0:
            raise ArgumentError("label out of range")


def synth_sbm_generate(n: int, classes: int, p_in: float, p_out: float, feature_dim: int,
                       separation: float, rng: np.random.Generator,
                       train_ratio: float = 0.9) -> NodeClassDataset:
    """Stochastic block model with class-conditional Gaussian features.

    Class means are ``separation / sqrt(2)`` times orthonormal directions, so
    any two means are ``separation`` apart; features have unit variance.
    The adjacency is symmetric, gets self-loops and is row-normalized.
    """
    if not p_in > p_out:
        raise ArgumentError("p_in must exceed p_out")
    if not separation > 0:
        raise ArgumentError("separation must be positive")
    if feature_dim < classes:
        raise ArgumentError("feature_dim must be at least the class count")
    labels = rng.permutation(np.arange(n) % classes)
    same = labels[:, None] == labels[None, :]
    prob = np.where(same, p_in, p_out)
    upper = np.triu(rng.uniform(size=(n, n)) < prob, k=1)
    edges = (upper | upper.T).astype(float)
    adjacency = AdjacencyMatrix(row_normalize(edges + np.eye(n)), AdjKind.CUSTOM)
    basis, _ = np.linalg.qr(rng.standard_normal((feature_dim, classes)))
    means = (separation / math.sqrt(2.0)) * basis.T
    features = means[labels] + rng.standard_normal((n, feature_dim))
    order = rng.permutation(n)
    cut = int(math.floor(train_ratio * n))
    return NodeClassDataset(features, labels, adjacency, np.sort(order[:cut]),
                            np.sort(order[cut:]), classes)


# ---------------------------------------------------------------------- files


def _parse_float(cell: str, line: int) -> float:
    cell = cell.strip()
    if cell == "" or cell.lower() == "nan":
        return math.nan
    try:
        return float(cell)
    except ValueError:
        raise ParseError(f"not a number: {cell!r}", line) from None


def load_csv(path) -> np.ndarray:
    """Read a ``t,v0,v1,...`` CSV into a ``(T, N, 1)`` array; missing cells are NaN."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0].strip() != "t" or len(header) < 2:
            raise ParseError("header must be 't,v0,v1,...'", 1)
        width = len(header)
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise ParseError(f"expected {width} fields, got {len(row)}", line)
            rows.append([_parse_float(c, line) for c in row[1:]])
    if not rows:
        raise ParseError("no data rows", 2)
    return np.array(rows, dtype=float)[:, :, None]


def write_csv(path, values) -> None:
    values = as_tensor(values)
    if values.ndim == 3:
        values = values[:, :, 0]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"v{j}" for j in range(values.shape[1])])
        for i, row in enumerate(values):
            w.writerow([i] + ["" if math.isnan(x) else repr(float(x)) for x in row])


def load_edgelist(path, n: int | None = None, undirected: bool = False) -> AdjacencyMatrix:
    """Read ``src,dst,weight`` lines (0-based ids) into a dense adjacency."""
    edges = []
    for line, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        raw = raw.strip()
        if not raw or raw.startswith("#"):
            continue
        parts = [p.strip() for p in raw.split(",")]
        if len(parts) != 3:
            raise ParseError(f"expected src,dst,weight, got {raw!r}", line)
        try:
            src, dst, weight = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise ParseError(f"bad edge {raw!r}", line) from None
        if src < 0 or dst < 0:
            raise ParseError("vertex ids must be non-negative", line)
        edges.append((src, dst, weight))
    size = n if n is not None else (1 + max((max(s, d) for s, d, _ in edges), default=-1))
    if size < 1:
        raise DataError("edge list defines no vertices")
    a = np.zeros((size, size))
    for src, dst, weight in edges:
        if src >= size or dst >= size:
            raise DataError(f"edge ({src}, {dst}) outside {size} vertices")
        a[src, dst] = weight
        if undirected:
            a[dst, src] = weight
    return AdjacencyMatrix(a, AdjKind.CUSTOM)
