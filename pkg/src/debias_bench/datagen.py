"""Dense ground-truth generators: latent-factor simulation and imputed MovieLens 100K."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .core import DataError, ObservedDataset, QuantizationSpec, RatingMatrix
from .recommenders.mf import TrainConfig, predict_matrix, train_ips_mf

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LatentFactorsConfig:
    num_users: int = 1000
    num_items: int = 1000
    latent_dim: int = 8
    factor_std: float = 1.0
    bias_std: float = 0.25
    global_mean: float = 0.5

    def __post_init__(self):
        if self.num_users < 1 or self.num_items < 1:
            raise ValueError("matrix dimensions must be positive")
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be >= 1")
        if self.factor_std < 0 or self.bias_std < 0:
            raise ValueError("standard deviations must be >= 0")


def latent_factor_scores(config: LatentFactorsConfig, stream: np.random.Generator) -> np.ndarray:
    """Unnormalized ``mu + b_u + b_i + p_u . q_i`` with Gaussian factors and biases."""
    U, I, d = config.num_users, config.num_items, config.latent_dim
    coord_std = config.factor_std / np.sqrt(d)
    P = stream.normal(0.0, coord_std, size=(U, d))
    Q = stream.normal(0.0, coord_std, size=(I, d))
    bu = stream.normal(0.0, config.bias_std, size=U)
    bi = stream.normal(0.0, config.bias_std, size=I)
    return config.global_mean + bu[:, None] + bi[None, :] + P @ Q.T


def generate_latent_factors(config: LatentFactorsConfig, stream: np.random.Generator) -> RatingMatrix:
    """Latent-factor scores min-max scaled onto [0, 1]; a constant matrix maps to 0.5."""
    scores = latent_factor_scores(config, stream)
    lo, hi = scores.min(), scores.max()
    if hi - lo <= 1e-12 * max(1.0, abs(hi)):
        return RatingMatrix(np.full(scores.shape, 0.5))
    return RatingMatrix(np.clip((scores - lo) / (hi - lo), 0.0, 1.0))


# -- MovieLens 100K ---------------------------------------------------------

@dataclass(frozen=True)
class SparseRatings:
    """Raw star ratings with 0-based indices, sorted by (user, item)."""

    users: np.ndarray
    items: np.ndarray
    stars: np.ndarray
    num_users: int
    num_items: int

    def __len__(self) -> int:
        return len(self.stars)

    def to_dataset(self) -> ObservedDataset:
        """Stars mapped onto [0, 1] by ``(r - 1) / 4`` as a 5-level dataset."""
        return ObservedDataset(self.num_users, self.num_items, self.users, self.items,
                               (self.stars - 1) / 4.0, QuantizationSpec(5))

    def subset(self, idx) -> "SparseRatings":
        return SparseRatings(self.users[idx], self.items[idx], self.stars[idx],
                             self.num_users, self.num_items)


def load_ml100k(path, pad: bool = True) -> SparseRatings:
    """Parse a ``u.data`` file (``user<TAB>item<TAB>rating<TAB>timestamp``, 1-based ids).

    Ids become 0-based indices.  With ``pad`` the grid gets one
    extra row and column beyond the largest id (944 x 1683 for the canonical
    file, the dimensions commonly quoted for this dataset); the padding user
    and item have no ratings.
    """
    path = Path(path)
    users, items, stars = [], [], []
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                parts = line.split()
            if len(parts) != 4:
                raise DataError(f"{path}:{lineno}: expected 4 tab-separated fields, got {line.rstrip()!r}")
            try:
                u, i, r = int(parts[0]), int(parts[1]), int(parts[2])
                int(parts[3])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: non-integer field in {line.rstrip()!r}") from exc
            if not 1 <= r <= 5:
                raise DataError(f"{path}:{lineno}: rating {r} outside 1..5")
            if u < 1 or i < 1:
                raise DataError(f"{path}:{lineno}: ids must be >= 1")
            users.append(u - 1)
            items.append(i - 1)
            stars.append(r)
    if not stars:
        raise DataError(f"{path}: no ratings")
    users = np.array(users, dtype=np.int64)
    items = np.array(items, dtype=np.int64)
    stars = np.array(stars, dtype=np.int64)
    extra = 1 if pad else 0
    nu, ni = int(users.max()) + 1 + extra, int(items.max()) + 1 + extra
    order = np.lexsort((items, users))
    flat = users[order] * ni + items[order]
    if np.any(flat[1:] == flat[:-1]):
        raise DataError(f"{path}: duplicate (user, item) rating")
    return SparseRatings(users[order], items[order], stars[order], nu, ni)


IMPUTE_CONFIG = TrainConfig(latent_dim=16, learning_rate=0.005, epochs=60, offset_reg=1e-4,
                            factor_reg=3e-5, init_scale=0.1, batch_size=1024)


def impute_dense(ratings: SparseRatings, config: TrainConfig = IMPUTE_CONFIG,
                 stream: np.random.Generator | None = None) -> RatingMatrix:
    """Complete the rating matrix with unweighted MF; predictions clamped to [0, 1]."""
    if len(ratings) == 0:
        raise DataError("no ratings")
    if stream is None:
        stream = np.random.default_rng(0)
    # ObservedDataset stores entries in (user, item) order, so file order never
    # reaches the trainer.
    data = ratings.to_dataset()
    model = train_ips_mf(data, np.ones(len(data)), config, stream)
    return RatingMatrix(predict_matrix(model, clamp=True))
