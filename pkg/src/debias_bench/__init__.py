"""Selection-bias simulation and cross-dataset propensity debiasing for rating prediction."""

__version__ = "0.1.0"
