"""Independent oracles shared by the harness and acceptance tests."""

import numpy as np

from debias_bench.core import ObservedDataset, QuantizationSpec, RatingMatrix
from debias_bench.evaluation import ips_risk
from debias_bench.observation import (ObservationModelParams, observation_probabilities,
                                      sample_observations)
from debias_bench.propensity import estimate_nbpe


def ips_monte_carlo(seed=0, size=20, beta=2.0, rho=0.25, resamples=2000, constant_pred=0.25):
    """Full-matrix risk, and mean IPS / naive risks over resampled observation sets."""
    rng = np.random.default_rng(seed)
    R = RatingMatrix(rng.random((size, size)))
    pred = np.full(R.shape, constant_pred)
    probs = observation_probabilities(R, ObservationModelParams(beta, rho)).probs
    assert probs.max() < 1.0, "clamped probabilities would bias the oracle"
    full = float(np.mean((pred - R.values) ** 2))
    ips, naive = [], []
    for _ in range(resamples):
        u, i = sample_observations(probs, rng)
        ips.append(ips_risk(pred, R, u, i, probs[u, i]))
        if len(u):
            naive.append(ips_risk(pred, R, u, i))
    return full, float(np.mean(ips)), float(np.mean(naive))


def nbpe_consistency(seed=0, shape=(100, 100), beta=1.0, rho=0.3, levels=5):
    """True class propensities and NBPE estimates on a class-homogeneous grid.

    R is constant within each rating class, D is drawn at ``beta`` with no
    noise, and the unbiased auxiliary dataset observes every cell.
    """
    rng = np.random.default_rng(seed)
    spec = QuantizationSpec(levels)
    R = RatingMatrix(spec.level_set[rng.integers(0, levels, shape)])
    probs = observation_probabilities(R, ObservationModelParams(beta, rho)).probs
    u, i = sample_observations(probs, rng)
    D = ObservedDataset(*shape, u, i, R.values[u, i], spec)
    uu, ii = np.divmod(np.arange(R.values.size), shape[1])
    aux = ObservedDataset(*shape, uu, ii, R.values.ravel(), spec)
    cp = estimate_nbpe(D, aux)
    truth = {float(r): float(probs[R.values == r][0]) for r in spec.level_set}
    est = {r: cp[r] for r in truth}
    max_rel = max(abs(est[r] - truth[r]) / truth[r] for r in truth)
    return truth, est, max_rel


def sweep_medians(summary):
    """{(algorithm, quantization): {beta: median rmse}}."""
    out: dict = {}
    for s in summary:
        out.setdefault((s["model"], s["quantization"]), {})[s["beta"]] = s["rmse"]["median"]
    return out
