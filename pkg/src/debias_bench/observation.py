"""Softmax observation model: which ground-truth ratings end up in a training set."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .core import DataError, RatingMatrix

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ObservationModelParams:
    """``beta`` is the bias strength, ``target_fraction`` the expected share of
    observed entries before clamping. ``per_user`` switches the softmax from the
    whole matrix to each user's row (the per-row normalizer is then ``rho * I``)."""

    beta: float = 0.0
    target_fraction: float = 0.1
    per_user: bool = False

    def __post_init__(self):
        if not self.beta >= 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if not 0 < self.target_fraction <= 1:
            raise ValueError(f"target fraction must be in (0, 1], got {self.target_fraction}")


@dataclass(frozen=True)
class ObservationProbabilities:
    probs: np.ndarray
    normalizer: float

    @property
    def shape(self) -> tuple[int, int]:
        return self.probs.shape

    @property
    def effective_fraction(self) -> float:
        return float(self.probs.mean())


def _softmax(x: np.ndarray, axis=None) -> np.ndarray:
    z = np.exp(x - x.max(axis=axis, keepdims=True))
    return z / z.sum(axis=axis, keepdims=True)


def observation_probabilities(R: RatingMatrix | np.ndarray,
                              params: ObservationModelParams) -> ObservationProbabilities:
    values = R.values if isinstance(R, RatingMatrix) else np.asarray(R, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise DataError("rating matrix contains non-finite values")
    n_users, n_items = values.shape
    if params.per_user:
        k = params.target_fraction * n_items
        raw = k * _softmax(params.beta * values, axis=1)
    else:
        k = params.target_fraction * n_users * n_items
        raw = k * _softmax(params.beta * values)
    if params.beta == 0:
        # exp(0) sums are exact but the division is not; pin the uniform case.
        raw = np.full_like(values, params.target_fraction)
    probs = np.minimum(raw, 1.0)
    out = ObservationProbabilities(probs, float(k))
    if probs.mean() < params.target_fraction * (1 - 1e-9):
        log.info("clamping at 1 lowered the expected observed fraction from %.4f to %.4f",
                 params.target_fraction, out.effective_fraction)
    return out


def sample_observations(probs: ObservationProbabilities | np.ndarray,
                        stream: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """One independent Bernoulli draw per entry; returns ``(users, items)`` of the hits
    in row-major order."""
    p = probs.probs if isinstance(probs, ObservationProbabilities) else np.asarray(probs)
    hits = stream.random(p.shape) < p
    return np.nonzero(hits)
