"""Class-conditional propensity estimates ``P(observed | rating == r)``.

Both estimators apply Bayes' rule per rating class ``r``::

    P(O | Y=r) = P(Y=r | O) * P(O) / P(Y=r)

and differ only in where the class marginal ``P(Y=r)`` comes from: the
training set itself (naive, NPE) or the training entries that an auxiliary
dataset also observes (cross-dataset naive Bayes, NBPE).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import DataError, ObservedDataset
from .observation import ObservationProbabilities

DEFAULT_FLOOR = 1e-3
MARGINAL_MODES = ("normalized", "literal")


@dataclass(frozen=True)
class ClassPropensities:
    """Propensity per rating value; unmapped values fall back to ``fallback``."""

    values: dict[float, float]
    fallback: float
    floor: float = DEFAULT_FLOOR

    def __getitem__(self, r: float) -> float:
        return self.values.get(float(r), self.fallback)

    def lookup(self, ratings) -> np.ndarray:
        ratings = np.asarray(ratings, dtype=np.float64)
        out = np.full(ratings.shape, self.fallback)
        for r, p in self.values.items():
            out[ratings == r] = p
        return np.clip(out, self.floor, 1.0)

    def save(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["class_value", "propensity"])
            for r in sorted(self.values):
                w.writerow([repr(float(r)), repr(float(self.values[r]))])

    @classmethod
    def load(cls, path, floor: float = DEFAULT_FLOOR) -> "ClassPropensities":
        with Path(path).open(newline="") as fh:
            rows = list(csv.DictReader(fh))
        values = {float(row["class_value"]): float(row["propensity"]) for row in rows}
        if not values:
            raise DataError(f"{path}: no class propensities")
        return cls(values, float(np.mean(list(values.values()))), floor)


def _bayes_rule(class_values, in_class_counts, n_obs, n_cells, marginal, floor) -> ClassPropensities:
    """Assemble class propensities; classes with zero marginal get the mean of the rest."""
    est = {}
    prior_obs = n_obs / n_cells
    for r, cnt, m in zip(class_values, in_class_counts, marginal):
        if m > 0:
            est[float(r)] = (cnt / n_obs) * prior_obs / m
    if not est:
        raise DataError("no estimable rating class")
    est = {r: min(max(p, floor), 1.0) for r, p in est.items()}
    fallback = float(np.mean(list(est.values())))
    values = {float(r): est.get(float(r), fallback) for r in class_values}
    return ClassPropensities(values, fallback, floor)


def _class_counts(dataset: ObservedDataset, which=None):
    levels = dataset.quantization.level_set
    vals = dataset.values if which is None else dataset.values[which]
    return levels, np.array([np.count_nonzero(vals == r) for r in levels])


def estimate_npe(dataset: ObservedDataset, floor: float = DEFAULT_FLOOR) -> ClassPropensities:
    """Naive estimator: every probability read off the (biased) training set.

    The class frequencies cancel, so each estimable class gets ``N / (U * I)``.
    """
    n = len(dataset)
    if n == 0:
        raise DataError("cannot estimate propensities from an empty dataset")
    levels, counts = _class_counts(dataset)
    return _bayes_rule(levels, counts, n, dataset.num_users * dataset.num_items,
                       counts / n, floor)


def estimate_nbpe(dataset: ObservedDataset, aux: ObservedDataset, marginal: str = "normalized",
                  floor: float = DEFAULT_FLOOR) -> ClassPropensities:
    """Cross-dataset estimator: the class marginal counts only training entries
    whose position the auxiliary dataset also observes.

    ``marginal="literal"`` divides the masked counts by the training-set size
    ``N``; ``"normalized"`` divides by the masked total so the marginal sums
    to one.
    """
    if marginal not in MARGINAL_MODES:
        raise ValueError(f"marginal must be one of {MARGINAL_MODES}, got {marginal!r}")
    if dataset.shape != aux.shape:
        raise DataError(f"dataset shapes differ: {dataset.shape} vs {aux.shape}")
    n = len(dataset)
    if n == 0:
        raise DataError("cannot estimate propensities from an empty dataset")
    in_aux = np.isin(dataset.flat_index, aux.flat_index)
    n_overlap = int(in_aux.sum())
    if n_overlap == 0:
        raise DataError("mask overlap empty")
    levels, counts = _class_counts(dataset)
    _, masked = _class_counts(dataset, in_aux)
    denom = n_overlap if marginal == "normalized" else n
    return _bayes_rule(levels, counts, n, dataset.num_users * dataset.num_items,
                       masked / denom, floor)


def assign(dataset: ObservedDataset, cp: ClassPropensities) -> np.ndarray:
    """Per-entry propensity in the dataset's entry order."""
    return cp.lookup(dataset.values)


def true_propensities(probs: ObservationProbabilities | np.ndarray, dataset: ObservedDataset) -> np.ndarray:
    """Observation-model probability of each observed entry (test oracle)."""
    p = probs.probs if isinstance(probs, ObservationProbabilities) else np.asarray(probs)
    if p.shape != dataset.shape:
        raise DataError(f"probability matrix {p.shape} does not match dataset {dataset.shape}")
    return p[dataset.users, dataset.items].copy()
