import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from debias_bench.core import DataError, RatingMatrix, derive_stream
from debias_bench.datagen import LatentFactorsConfig, generate_latent_factors
from debias_bench.observation import (ObservationModelParams, ObservationProbabilities,
                                      observation_probabilities, sample_observations)


@pytest.fixture(scope="module")
def truth():
    return generate_latent_factors(LatentFactorsConfig(), derive_stream(3, 0, "ground-truth"))


def test_beta_zero_is_uniform(truth):
    p = observation_probabilities(truth, ObservationModelParams(beta=0.0, target_fraction=0.1))
    assert np.all(p.probs == 0.1)


def test_two_cell_hand_value():
    e = math.e
    expected = [1 / (1 + e), e / (1 + e)]  # softmax of [0, 1]; k = 0.5 * 2 = 1
    p = observation_probabilities(RatingMatrix(np.array([[0.0, 1.0]])), ObservationModelParams(1.0, 0.5))
    assert p.normalizer == 1.0
    np.testing.assert_allclose(p.probs[0], expected, rtol=1e-12)
    np.testing.assert_allclose(p.probs[0], [0.26894, 0.73106], atol=5e-6)


@pytest.mark.parametrize("beta", [0.5, 1.0, 2.5])
def test_unclamped_mass_equals_target(truth, beta):
    p = observation_probabilities(truth, ObservationModelParams(beta, 0.1))
    assert p.probs.max() < 1  # no clamping at this scale
    assert p.probs.sum() == pytest.approx(0.1 * truth.values.size, rel=1e-10)


def test_clamping_lowers_effective_fraction():
    R = RatingMatrix(np.array([[0.0, 0.0, 0.0, 1.0]]))
    p = observation_probabilities(R, ObservationModelParams(beta=10.0, target_fraction=0.5))
    assert p.probs.max() == 1.0
    assert p.effective_fraction < 0.5


def test_large_beta_is_finite():
    R = RatingMatrix(np.linspace(0, 1, 50).reshape(5, 10))
    p = observation_probabilities(R, ObservationModelParams(beta=5000.0))
    assert np.all(np.isfinite(p.probs))


def test_rejects_non_finite():
    with pytest.raises(DataError):
        observation_probabilities(np.array([[0.1, np.inf]]), ObservationModelParams(1.0))


@pytest.mark.parametrize("kw", [dict(beta=-1.0), dict(target_fraction=0.0), dict(target_fraction=1.5)])
def test_param_validation(kw):
    with pytest.raises(ValueError):
        ObservationModelParams(**kw)


def test_per_user_rows_hit_target():
    R = RatingMatrix(np.random.default_rng(0).random((4, 50)))
    p = observation_probabilities(R, ObservationModelParams(1.0, 0.2, per_user=True))
    np.testing.assert_allclose(p.probs.sum(axis=1), 0.2 * 50, rtol=1e-12)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (4, 5), elements=st.floats(0, 1)), st.floats(0.01, 5))
def test_monotone_in_rating(values, beta):
    p = observation_probabilities(values, ObservationModelParams(beta, 0.3)).probs.ravel()
    order = np.argsort(values.ravel(), kind="stable")
    assert np.all(np.diff(p[order]) >= -1e-15)


def test_ratio_grows_with_beta():
    R = RatingMatrix(np.array([[0.2, 0.8, 0.5, 0.5]]))
    ratios = []
    for beta in [0.5, 1.0, 1.5, 2.0]:
        p = observation_probabilities(R, ObservationModelParams(beta, 0.1)).probs[0]
        ratios.append(p[1] / p[0])
    assert np.all(np.diff(ratios) > 0)


class TestSampling:
    def test_all_zero(self):
        users, items = sample_observations(ObservationProbabilities(np.zeros((5, 6)), 1.0),
                                           np.random.default_rng(0))
        assert len(users) == 0 and len(items) == 0

    def test_all_one(self):
        users, items = sample_observations(np.ones((5, 6)), np.random.default_rng(0))
        assert len(users) == 30
        assert set(zip(users.tolist(), items.tolist())) == {(u, i) for u in range(5) for i in range(6)}

    def test_deterministic_given_stream(self):
        p = np.full((20, 20), 0.3)
        a = sample_observations(p, derive_stream(1, 0, "observe"))
        b = sample_observations(p, derive_stream(1, 0, "observe"))
        assert all(np.array_equal(x, y) for x, y in zip(a, b))

    def test_fraction_within_binomial_bound(self, truth):
        probs = observation_probabilities(truth, ObservationModelParams(1.0, 0.1))
        mean = probs.probs.sum()
        sd = math.sqrt(np.sum(probs.probs * (1 - probs.probs)))
        for seed in range(20):
            users, _ = sample_observations(probs, derive_stream(seed, 0, "observe"))
            assert abs(len(users) - mean) <= 3 * sd, seed
