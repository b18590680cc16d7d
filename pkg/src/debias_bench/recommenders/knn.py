"""User- and item-based nearest-neighbour rating predictors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import sparse

from ..core import ObservedDataset


@dataclass(frozen=True)
class KnnConfig:
    mode: str = "user"
    k: int = 40
    min_co_ratings: int = 2

    def __post_init__(self):
        if self.mode not in ("user", "item"):
            raise ValueError(f"mode must be 'user' or 'item', got {self.mode!r}")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.min_co_ratings < 1:
            raise ValueError("min_co_ratings must be >= 1")


def cosine_similarity(values: np.ndarray, mask: np.ndarray, min_co_ratings: int = 1) -> np.ndarray:
    """Row-vs-row cosine restricted to the columns both rows have rated.

    Pairs with fewer than ``min_co_ratings`` shared columns, or with a zero
    norm over the shared columns, get similarity 0.  The diagonal is 0.
    """
    X = sparse.csr_matrix(np.where(mask, values, 0.0))
    M = sparse.csr_matrix(mask.astype(np.float64))
    X2 = X.multiply(X).tocsr()
    dot = (X @ X.T).toarray()
    co = (M @ M.T).toarray()
    sq = (X2 @ M.T).toarray()  # sq[a, b] = sum of a's squared ratings over items b also rated
    denom = np.sqrt(sq * sq.T)
    with np.errstate(divide="ignore", invalid="ignore"):
        sim = np.where(denom > 0, dot / denom, 0.0)
    sim[co < min_co_ratings] = 0.0
    np.fill_diagonal(sim, 0.0)
    return sim


@njit(cache=True)
def _predict_rows(sim, indptr, indices, data, n_cols, k):
    n_rows = sim.shape[0]
    num = np.zeros((n_rows, n_cols))
    den = np.zeros((n_rows, n_cols))
    counts = np.zeros(n_cols, dtype=np.int64)
    for r in range(n_rows):
        order = np.argsort(-sim[r])
        counts[:] = 0
        filled = 0
        for v in order:
            s = sim[r, v]
            if s <= 0.0 or filled == n_cols:
                break
            for p in range(indptr[v], indptr[v + 1]):
                c = indices[p]
                if counts[c] < k:
                    counts[c] += 1
                    if counts[c] == k:
                        filled += 1
                    num[r, c] += s * data[p]
                    den[r, c] += s
    return num, den


def _predict_by_rows(values: np.ndarray, mask: np.ndarray, config: KnnConfig) -> np.ndarray:
    n_rows, n_cols = values.shape
    sim = cosine_similarity(values, mask, config.min_co_ratings)
    # built from the mask so genuine 0-valued ratings stay stored
    rows, cols = np.nonzero(mask)
    R = sparse.csr_matrix((values[rows, cols], (rows, cols)), shape=(n_rows, n_cols))
    R.sort_indices()
    num, den = _predict_rows(sim, R.indptr.astype(np.int64), R.indices.astype(np.int64),
                             R.data.astype(np.float64), n_cols, config.k)

    n_obs = mask.sum(axis=1)
    global_mean = values[mask].mean()
    with np.errstate(invalid="ignore", divide="ignore"):
        row_mean = np.where(n_obs > 0, np.where(mask, values, 0.0).sum(axis=1) / n_obs, global_mean)
        pred = np.where(den > 0, num / den, row_mean[:, None])
    return pred


def train_predict_knn(dataset: ObservedDataset, config: KnnConfig) -> np.ndarray:
    """Dense prediction from the ``k`` most similar neighbours that rated each entry.

    Prediction is the similarity-weighted mean of those neighbours' ratings.
    When no positively similar neighbour rated the entry, the target row's own
    mean is used (the user's mean in user mode, the item's in item mode), and
    the dataset's global mean when that row has no ratings at all.
    """
    if len(dataset) == 0:
        raise ValueError("cannot predict from an empty dataset")
    values = dataset.dense()
    mask = dataset.mask()
    if config.mode == "item":
        return _predict_by_rows(values.T, mask.T, config).T
    return _predict_by_rows(values, mask, config)
