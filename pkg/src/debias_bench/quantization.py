"""Map continuous ratings plus user noise onto evenly spaced levels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ObservedDataset, QuantizationSpec, RatingMatrix

MIDPOINT_TOL = 1e-9


@dataclass(frozen=True)
class NoiseConfig:
    noise_std: float = 0.05

    def __post_init__(self):
        if not self.noise_std >= 0:
            raise ValueError(f"noise_std must be >= 0, got {self.noise_std}")


def quantize(value, spec: QuantizationSpec):
    """Nearest level ``i / (n - 1)``; midpoints go to the upper level.

    Works elementwise on arrays and returns a float for scalar input.
    """
    x = np.clip(np.asarray(value, dtype=np.float64), 0.0, 1.0)
    steps = spec.levels - 1
    # within MIDPOINT_TOL (in level-step units) of a midpoint counts as a tie,
    # so decimal inputs such as 0.3 with 6 levels still round up
    idx = np.minimum(np.floor(x * steps + 0.5 + MIDPOINT_TOL), steps)
    out = idx / steps
    return float(out) if out.ndim == 0 else out


def noisy_values(R: RatingMatrix, users, items, noise: NoiseConfig,
                 stream: np.random.Generator) -> np.ndarray:
    """Clamped ``R[u, i] + N(0, noise_std^2)`` for each observed position.

    Drawing this trace once and quantizing it at several level counts keeps the
    variants of one trial on an identical pre-quantization source.
    """
    users = np.asarray(users, dtype=np.int64)
    items = np.asarray(items, dtype=np.int64)
    base = R.values[users, items]
    eps = stream.normal(0.0, 1.0, size=base.shape) * noise.noise_std
    return np.clip(base + eps, 0.0, 1.0)


def quantize_trace(num_users: int, num_items: int, users, items, trace,
                   spec: QuantizationSpec) -> ObservedDataset:
    return ObservedDataset(num_users, num_items, users, items, quantize(trace, spec), spec)


def build_observed_dataset(R: RatingMatrix, observed, spec: QuantizationSpec,
                           noise: NoiseConfig, stream: np.random.Generator) -> ObservedDataset:
    users, items = (np.asarray(a, dtype=np.int64) for a in observed)
    trace = noisy_values(R, users, items, noise, stream)
    return quantize_trace(R.num_users, R.num_items, users, items, trace, spec)
