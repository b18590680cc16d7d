from .knn import KnnConfig, cosine_similarity, train_predict_knn
from .mf import (FactorModel, TrainConfig, TrainingDiverged, gradient, objective,
                 predict_matrix, train_ips_mf)
from .mixing import SCHEMES as MIX_SCHEMES, mix_datasets

__all__ = [
    "FactorModel", "KnnConfig", "MIX_SCHEMES", "TrainConfig", "TrainingDiverged",
    "cosine_similarity", "gradient", "mix_datasets", "objective", "predict_matrix",
    "train_ips_mf", "train_predict_knn",
]
