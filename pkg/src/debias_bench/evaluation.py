"""Dense-error metrics against the full ground-truth matrix."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import RatingMatrix


@dataclass(frozen=True)
class MetricReport:
    rmse: float
    mae: float
    num_entries: int


def evaluate_dense(pred, truth: RatingMatrix | np.ndarray, clamp: bool = True) -> MetricReport:
    """RMSE and MAE over every cell; predictions are clamped to [0, 1] first."""
    truth = truth.values if isinstance(truth, RatingMatrix) else np.asarray(truth, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValueError(f"prediction shape {pred.shape} does not match truth {truth.shape}")
    if clamp:
        pred = np.clip(pred, 0.0, 1.0)
    err = pred - truth
    return MetricReport(float(np.sqrt(np.mean(err * err))), float(np.mean(np.abs(err))), err.size)


def ips_risk(pred, truth: RatingMatrix | np.ndarray, users, items, propensities=None) -> float:
    """Squared-error risk estimated from observed entries only.

    With ``propensities`` each entry's error is divided by its observation
    probability and the sum is normalized by the full cell count, giving an
    unbiased estimate of the dense mean squared error.  Without them the plain
    mean over observed entries is returned.
    """
    truth = truth.values if isinstance(truth, RatingMatrix) else np.asarray(truth, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    users = np.asarray(users, dtype=np.int64)
    items = np.asarray(items, dtype=np.int64)
    err = (pred[users, items] - truth[users, items]) ** 2
    if propensities is None:
        return float(err.mean()) if len(err) else float("nan")
    return float(np.sum(err / np.asarray(propensities, dtype=np.float64)) / truth.size)
