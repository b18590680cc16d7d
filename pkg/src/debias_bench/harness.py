"""Experiment protocols: the bias-susceptibility sweep and the cross-dataset comparison.

Randomness layout (every stream comes from :func:`derive_stream`):

* ground truth: trial 0, stage ``"ground-truth"`` (latent factors) or
  ``"impute"`` (MovieLens); the truth is shared by all trials.
* sweep, trial ``t``: ``"observe"`` draws one uniform per cell and ``"noise"``
  one Gaussian per cell; every beta and every quantization level of the trial
  reuses those draws, so cells differ only in beta and level.
  ``"train/<algo>"`` seeds the factorization.
* comparison, trial ``t``: ``"observe-train"``/``"noise-train"`` for the main
  dataset, ``"observe-aux"``/``"noise-aux"`` for the auxiliary one, and
  ``"train"`` for model initialization (shared by all four models).
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache

import numpy as np

from .core import ObservedDataset, QuantizationSpec, RatingMatrix, derive_stream
from .datagen import IMPUTE_CONFIG, LatentFactorsConfig, generate_latent_factors, impute_dense, load_ml100k
from .evaluation import evaluate_dense
from .observation import ObservationModelParams, observation_probabilities
from .propensity import DEFAULT_FLOOR, assign, estimate_nbpe, estimate_npe
from .quantization import NoiseConfig, quantize_trace
from .recommenders import (KnnConfig, TrainConfig, TrainingDiverged, mix_datasets, predict_matrix,
                           train_ips_mf, train_predict_knn)

log = logging.getLogger(__name__)

DATASETS = ("latent-factors", "ml100k-imputed")
ALGORITHMS = ("user-knn", "item-knn", "svd-mf")
MODELS = ("MF", "NPE-MF", "MD-MF", "NBPE-MF")
CSV_HEADER = ("dataset", "experiment", "model", "beta", "quantization", "trial", "rmse", "mae")


class CellFailed(RuntimeError):
    """A model failed to train inside one experiment cell."""

    def __init__(self, cell: str, cause: Exception):
        super().__init__(f"{cell}: {cause}")
        self.cell = cell
        self.cause = cause


@dataclass(frozen=True)
class DataSource:
    name: str = "latent-factors"
    ml100k_path: str | None = None
    latent: LatentFactorsConfig = LatentFactorsConfig()

    def __post_init__(self):
        if self.name not in DATASETS:
            raise ValueError(f"dataset must be one of {DATASETS}, got {self.name!r}")
        if self.name == "ml100k-imputed" and not self.ml100k_path:
            raise ValueError("the ml100k-imputed dataset needs a path to u.data")


@dataclass(frozen=True)
class SweepConfig:
    source: DataSource = DataSource()
    betas: tuple[float, ...] = (0.0, 0.5, 1.0, 1.5, 2.0, 2.5)
    quantizations: tuple[int, ...] = (2, 3, 5)
    algorithms: tuple[str, ...] = ALGORITHMS
    trials: int = 10
    rho: float = 0.1
    noise: NoiseConfig = NoiseConfig()
    seed: int = 0
    train: TrainConfig = TrainConfig()
    knn_k: int = 40
    knn_min_co_ratings: int = 2

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.betas or not self.quantizations or not self.algorithms:
            raise ValueError("beta, quantization and algorithm grids must be nonempty")
        bad = set(self.algorithms) - set(ALGORITHMS)
        if bad:
            raise ValueError(f"unknown algorithms {sorted(bad)}; choose from {ALGORITHMS}")
        for b in self.betas:
            ObservationModelParams(b, self.rho)
        for n in self.quantizations:
            QuantizationSpec(n)


@dataclass(frozen=True)
class CompareConfig:
    source: DataSource = DataSource()
    train_beta: float = 1.0
    train_levels: int = 5
    aux_beta: float = 0.0
    aux_levels: int = 2
    trials: int = 5
    models: tuple[str, ...] = MODELS
    rho: float = 0.1
    aux_rho: float | None = None  # defaults to rho
    noise: NoiseConfig = NoiseConfig()
    seed: int = 0
    train: TrainConfig = TrainConfig()
    mix_scheme: str = "endpoint"
    marginal: str = "normalized"
    floor: float = DEFAULT_FLOOR

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.models:
            raise ValueError("no models requested")
        bad = set(self.models) - set(MODELS)
        if bad:
            raise ValueError(f"unknown models {sorted(bad)}; choose from {MODELS}")
        ObservationModelParams(self.train_beta, self.rho)
        ObservationModelParams(self.aux_beta, self.aux_rho or self.rho)
        QuantizationSpec(self.train_levels)
        QuantizationSpec(self.aux_levels)


@dataclass(frozen=True)
class ResultRow:
    dataset: str
    experiment: str
    model: str
    beta: float
    quantization: int
    trial: int
    rmse: float
    mae: float

    def as_csv(self) -> list[str]:
        return [self.dataset, self.experiment, self.model, repr(float(self.beta)),
                str(self.quantization), str(self.trial), repr(self.rmse), repr(self.mae)]


# -- ground truth -----------------------------------------------------------

@lru_cache(maxsize=4)
def _cached_truth(source: DataSource, seed: int) -> RatingMatrix:
    if source.name == "latent-factors":
        return generate_latent_factors(source.latent, derive_stream(seed, 0, "ground-truth"))
    ratings = load_ml100k(source.ml100k_path)
    return impute_dense(ratings, IMPUTE_CONFIG, derive_stream(seed, 0, "impute"))


def ground_truth(source: DataSource, seed: int) -> RatingMatrix:
    """Ground truth for ``source``; fixed for a given seed and reused across trials."""
    return _cached_truth(source, seed)


def _observed(probs: np.ndarray, uniforms: np.ndarray):
    return np.nonzero(uniforms < probs)


def _dense_noise(shape, noise: NoiseConfig, stream) -> np.ndarray:
    return stream.normal(0.0, 1.0, size=shape) * noise.noise_std


def _build(R: RatingMatrix, probs, uniforms, noise_field, levels) -> ObservedDataset:
    users, items = _observed(probs, uniforms)
    trace = np.clip(R.values[users, items] + noise_field[users, items], 0.0, 1.0)
    return quantize_trace(R.num_users, R.num_items, users, items, trace, QuantizationSpec(levels))


# -- sweep ------------------------------------------------------------------

def _sweep_trial(config: SweepConfig, R: RatingMatrix, trial: int) -> list[ResultRow]:
    uniforms = derive_stream(config.seed, trial, "observe").random(R.shape)
    noise_field = _dense_noise(R.shape, config.noise, derive_stream(config.seed, trial, "noise"))
    rows = []
    for beta in config.betas:
        probs = observation_probabilities(R, ObservationModelParams(beta, config.rho)).probs
        for n in config.quantizations:
            D = _build(R, probs, uniforms, noise_field, n)
            for algo in config.algorithms:
                cell = f"algorithm={algo} beta={beta} quantization={n} trial={trial}"
                try:
                    if algo == "svd-mf":
                        model = train_ips_mf(D, np.ones(len(D)), config.train,
                                             derive_stream(config.seed, trial, f"train/{algo}"))
                        pred = predict_matrix(model)
                    else:
                        knn = KnnConfig(mode=algo.split("-")[0], k=config.knn_k,
                                        min_co_ratings=config.knn_min_co_ratings)
                        pred = train_predict_knn(D, knn)
                except (TrainingDiverged, ValueError, FloatingPointError) as exc:
                    raise CellFailed(cell, exc) from exc
                rep = evaluate_dense(pred, R)
                rows.append(ResultRow(config.source.name, "sweep", algo, float(beta), n, trial,
                                      rep.rmse, rep.mae))
                log.info("%s rmse=%.5f mae=%.5f", cell, rep.rmse, rep.mae)
    return rows


def _run_trials(fn, config, R, jobs: int | None) -> list[ResultRow]:
    trials = range(config.trials)
    jobs = jobs or os.cpu_count() or 1
    if jobs <= 1 or config.trials == 1:
        per_trial = [fn(config, R, t) for t in trials]
    else:
        with ProcessPoolExecutor(max_workers=min(jobs, config.trials)) as pool:
            futures = [pool.submit(fn, config, R, t) for t in trials]
            per_trial = [f.result() for f in futures]
    # deterministic ordered reduce
    return [row for rows in per_trial for row in rows]


def summarize(rows: list[ResultRow]) -> list[dict]:
    """Per (dataset, experiment, model, beta, quantization) group: count, mean,
    quartiles of RMSE and MAE over trials, in first-appearance order."""
    groups: dict[tuple, list[ResultRow]] = {}
    for row in rows:
        groups.setdefault((row.dataset, row.experiment, row.model, row.beta, row.quantization),
                          []).append(row)
    out = []
    for (ds, exp, model, beta, n), members in groups.items():
        entry = {"dataset": ds, "experiment": exp, "model": model, "beta": beta,
                 "quantization": n, "trials": len(members)}
        for metric in ("rmse", "mae"):
            vals = np.array([getattr(r, metric) for r in members])
            q25, q50, q75 = np.percentile(vals, [25, 50, 75])
            entry[metric] = {"mean": float(vals.mean()), "q25": float(q25),
                             "median": float(q50), "q75": float(q75)}
        out.append(entry)
    return out


def run_sweep(config: SweepConfig, jobs: int | None = 1) -> tuple[list[ResultRow], list[dict]]:
    R = ground_truth(config.source, config.seed)
    rows = _run_trials(_sweep_trial, config, R, jobs)
    return rows, summarize(rows)


# -- comparison -------------------------------------------------------------

def comparison_datasets(config: CompareConfig, R: RatingMatrix, trial: int):
    """Main (biased, finer) and auxiliary (coarse) datasets for one trial."""
    main_probs = observation_probabilities(R, ObservationModelParams(config.train_beta, config.rho)).probs
    aux_probs = observation_probabilities(
        R, ObservationModelParams(config.aux_beta, config.aux_rho or config.rho)).probs
    D = _build(R, main_probs,
               derive_stream(config.seed, trial, "observe-train").random(R.shape),
               _dense_noise(R.shape, config.noise, derive_stream(config.seed, trial, "noise-train")),
               config.train_levels)
    D_aux = _build(R, aux_probs,
                   derive_stream(config.seed, trial, "observe-aux").random(R.shape),
                   _dense_noise(R.shape, config.noise, derive_stream(config.seed, trial, "noise-aux")),
                   config.aux_levels)
    return D, D_aux


def _compare_trial(config: CompareConfig, R: RatingMatrix, trial: int) -> list[ResultRow]:
    D, D_aux = comparison_datasets(config, R, trial)
    rows = []
    for model_name in config.models:
        cell = f"model={model_name} beta={config.train_beta} trial={trial}"
        try:
            if model_name == "MF":
                data, P = D, np.ones(len(D))
            elif model_name == "NPE-MF":
                data, P = D, assign(D, estimate_npe(D, config.floor))
            elif model_name == "MD-MF":
                data = mix_datasets(D, D_aux, config.mix_scheme)
                P = np.ones(len(data))
            else:
                cp = estimate_nbpe(D, D_aux, config.marginal, config.floor)
                data, P = D, assign(D, cp)
            model = train_ips_mf(data, P, config.train, derive_stream(config.seed, trial, "train"))
        except (TrainingDiverged, ValueError, FloatingPointError) as exc:
            raise CellFailed(cell, exc) from exc
        rep = evaluate_dense(predict_matrix(model), R)
        rows.append(ResultRow(config.source.name, "compare", model_name, float(config.train_beta),
                              config.train_levels, trial, rep.rmse, rep.mae))
        log.info("%s rmse=%.5f mae=%.5f", cell, rep.rmse, rep.mae)
    return rows


def run_comparison(config: CompareConfig, jobs: int | None = 1) -> tuple[list[ResultRow], list[dict]]:
    R = ground_truth(config.source, config.seed)
    rows = _run_trials(_compare_trial, config, R, jobs)
    return rows, summarize(rows)


def format_table(summary: list[dict]) -> str:
    """Plain-text table of mean RMSE/MAE per model, one column pair per dataset."""
    datasets = list(dict.fromkeys(s["dataset"] for s in summary))
    models = list(dict.fromkeys(s["model"] for s in summary))
    by_key = {(s["dataset"], s["model"]): s for s in summary}
    width = max(len(m) for m in models) + 2
    head = " " * width + "".join(f"{d + ' RMSE':>22}{d + ' MAE':>22}" for d in datasets)
    lines = [head]
    for m in models:
        cells = []
        for d in datasets:
            s = by_key.get((d, m))
            cells.append(f"{s['rmse']['mean']:>22.4f}{s['mae']['mean']:>22.4f}" if s else " " * 44)
        lines.append(f"{m:<{width}}" + "".join(cells))
    return "\n".join(lines)
