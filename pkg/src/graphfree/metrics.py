"""Forecast error metrics: MAE, RMSE and MAPE."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ArgumentError, DimensionError
from .tensor import as_tensor

MAPE_FLOOR = 1e-8


@dataclass(frozen=True)
class MetricsRecord:
    mae: float
    rmse: float
    mape: float
    masked_count: int = 0

    def to_dict(self):
        return asdict(self)


def _pair(v, v_hat):
    v, v_hat = as_tensor(v), as_tensor(v_hat)
    if v.shape != v_hat.shape:
        raise DimensionError(f"metric operands differ in shape: {v.shape} vs {v_hat.shape}")
    if v.size == 0:
        raise ArgumentError("metrics need at least one entry")
    return v, v_hat


def mae(v, v_hat) -> float:
    v, v_hat = _pair(v, v_hat)
    return float(np.mean(np.abs(v - v_hat)))


def rmse(v, v_hat) -> float:
    v, v_hat = _pair(v, v_hat)
    return float(np.sqrt(np.mean(np.square(v - v_hat))))


def mape_masked(v, v_hat) -> tuple[float, int]:
    """MAPE as a fraction, skipping entries with ``|v| < 1e-8``.

    Returns ``(mape, masked_count)``.
    """
    v, v_hat = _pair(v, v_hat)
    keep = np.abs(v) >= MAPE_FLOOR
    masked = int(v.size - keep.sum())
    if not keep.any():
        raise ArgumentError("MAPE undefined: every target entry is (near) zero")
    return float(np.mean(np.abs((v[keep] - v_hat[keep]) / v[keep]))), masked


def mape(v, v_hat) -> float:
    return mape_masked(v, v_hat)[0]


def evaluate(v, v_hat) -> MetricsRecord:
    value, masked = mape_masked(v, v_hat)
    return MetricsRecord(mae(v, v_hat), rmse(v, v_hat), value, masked)
