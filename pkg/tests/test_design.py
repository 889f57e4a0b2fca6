import math

import numpy as np
import pytest

from bqpe.design import ExperimentDesigner
from bqpe.models import FourierPosterior, PhasePosterior, VonMisesPosterior
from bqpe.posterior import CircularStatistics, PosteriorUpdater


@pytest.fixture
def informed_posterior() -> PhasePosterior:
    post = PhasePosterior.uniform()
    for m, k, beta in [(0, 1, 0.4), (1, 2, 2.0), (0, 4, 5.1), (0, 7, 0.9)]:
        post = PosteriorUpdater.adaptive_update(post, m, k, beta, 0.0)
    return post


def brute_force_utility(post: PhasePosterior, k: int, beta: float, q: float) -> float:
    """-1 + sum_m p(m) |M1 after m|, computed through explicit updates."""
    total = -1.0
    for m in (0, 1):
        p = ExperimentDesigner.predictive_prob(post, m, k, beta, q)
        updated = PosteriorUpdater.fourier_update(post.representation, m, k, beta, q)
        total += p * abs(CircularStatistics.first_moment(updated))
    return total


class TestPredictiveProb:
    """Test marginal outcome probabilities."""

    def test_sums_to_one(self, informed_posterior):
        """Test p(0) + p(1) = 1."""
        p0 = ExperimentDesigner.predictive_prob(informed_posterior, 0, 3, 1.0, 0.1)
        p1 = ExperimentDesigner.predictive_prob(informed_posterior, 1, 3, 1.0, 0.1)
        assert p0 + p1 == pytest.approx(1.0)

    def test_uniform_prior(self):
        """Test that a flat prior predicts a fair coin."""
        assert ExperimentDesigner.predictive_prob(PhasePosterior.uniform(), 0, 5, 0.3, 0.0) == pytest.approx(0.5)


class TestUtility:
    """Test the closed-form utility."""

    @pytest.mark.parametrize("k, beta, q", [(1, 0.0, 0.0), (3, 1.7, 0.0), (8, 4.4, 0.2)])
    def test_matches_explicit_updates(self, informed_posterior, k, beta, q):
        """Test U_C against explicit posterior updates."""
        expected = brute_force_utility(informed_posterior, k, beta, q)
        assert ExperimentDesigner.utility_at(informed_posterior, k, q, beta) == pytest.approx(expected, abs=1e-12)

    def test_uniform_prior_k1(self):
        """Test U = -1 + (1-q)/2 for the uniform prior at k = 1."""
        for q in (0.0, 0.3):
            assert ExperimentDesigner.utility_at(PhasePosterior.uniform(), 1, q, 0.8) == pytest.approx(
                -1 + (1 - q) / 2
            )

    def test_vectorized(self, informed_posterior):
        """Test that an array of betas returns an array."""
        values = ExperimentDesigner.utility_at(informed_posterior, 2, 0.0, np.linspace(0, 1, 5))
        assert values.shape == (5,)

    def test_invalid_depth(self, informed_posterior):
        """Test that k < 1 is rejected."""
        with pytest.raises(ValueError, match="Depth k must be >= 1"):
            ExperimentDesigner.moment_numerator_coeffs(informed_posterior, 0, 0.0)


class TestOptimalBeta:
    """Test the exact beta maximizer."""

    def test_uniform_prior_ties_to_zero(self):
        """Test that a flat utility returns beta = 0."""
        beta, value = ExperimentDesigner.optimal_beta(PhasePosterior.uniform(), 1, 0.0)
        assert beta == 0.0
        assert value == pytest.approx(-0.5)

    @pytest.mark.parametrize("k", [1, 2, 5, 11])
    def test_beats_dense_grid(self, informed_posterior, k):
        """Test the maximizer against a dense beta grid."""
        grid = np.linspace(0, 2 * math.pi, 20001)
        grid_max = ExperimentDesigner.utility_at(informed_posterior, k, 0.05, grid).max()
        beta, value = ExperimentDesigner.optimal_beta(informed_posterior, k, 0.05)
        assert 0.0 <= beta < 2 * math.pi
        assert value >= grid_max - 1e-9
        assert ExperimentDesigner.utility_at(informed_posterior, k, 0.05, beta) == pytest.approx(value, abs=1e-11)

    def test_von_mises_posterior(self):
        """Test the maximizer for a von Mises posterior."""
        post = VonMisesPosterior(mu=2.0, kappa=400.0)
        grid = np.linspace(0, 2 * math.pi, 20001)
        grid_max = ExperimentDesigner.utility_at(post, 15, 0.0, grid).max()
        _, value = ExperimentDesigner.optimal_beta(post, 15, 0.0)
        assert value >= grid_max - 1e-9

    @pytest.mark.slow
    def test_random_posteriors(self):
        """Test the maximizer against a 10^4-point grid for 100 random posteriors."""
        rng = np.random.default_rng(17)
        grid = np.arange(10_000) * (2 * math.pi / 10_000)
        for _ in range(100):
            post = PhasePosterior.uniform()
            for _ in range(rng.integers(1, 7)):
                post = PosteriorUpdater.adaptive_update(
                    post, int(rng.integers(2)), int(rng.integers(1, 8)), rng.uniform(0, 2 * math.pi), 0.0
                )
            k, q = int(rng.integers(1, 21)), rng.uniform(0, 0.2)
            _, value = ExperimentDesigner.optimal_beta(post, k, q)
            assert value >= ExperimentDesigner.utility_at(post, k, q, grid).max() - 1e-9


class TestDepthSelection:
    """Test k selection."""

    def test_fourier_scans_every_depth(self, informed_posterior):
        """Test that Fourier posteriors scan k = 1..k_max."""
        assert ExperimentDesigner.k_candidates(informed_posterior, 120) == range(1, 121)

    def test_von_mises_window(self):
        """Test the window around Var_H^{-1/2} for von Mises posteriors."""
        m1 = 1 / math.sqrt(1 + 0.0004)
        post = PhasePosterior(CircularStatistics.invert_first_moment(complex(m1)))
        assert ExperimentDesigner.k_candidates(post, 120) == range(45, 56)

    def test_optimal_params_respects_cap(self, informed_posterior):
        """Test that the selected depth never exceeds k_max."""
        params = ExperimentDesigner.optimal_params(informed_posterior, lambda k: 0.0, k_max=4)
        assert 1 <= params.k <= 4

    def test_optimal_params_uniform_prior(self):
        """Test that the first round of a flat prior measures k = 1."""
        params = ExperimentDesigner.optimal_params(PhasePosterior.uniform(), lambda k: 0.0, k_max=120)
        assert params.k == 1
        assert params.beta == 0.0

    def test_noise_penalizes_depth(self, informed_posterior):
        """Test that fully depolarized depths are never chosen."""
        params = ExperimentDesigner.optimal_params(informed_posterior, lambda k: 0.0 if k <= 2 else 1.0, k_max=50)
        assert params.k <= 2

    @pytest.mark.slow
    def test_beats_joint_grid(self, informed_posterior):
        """Test the chosen (k, beta) against a full grid up to k_max = 30."""

        def noise_fn(k):
            return 0.01 * k / 30

        grid = np.arange(10_000) * (2 * math.pi / 10_000)
        grid_max = max(
            ExperimentDesigner.utility_at(informed_posterior, k, noise_fn(k), grid).max() for k in range(1, 31)
        )
        params = ExperimentDesigner.optimal_params(informed_posterior, noise_fn, k_max=30)
        chosen = ExperimentDesigner.utility_at(informed_posterior, params.k, noise_fn(params.k), params.beta)
        assert chosen >= grid_max - 1e-9


class TestHeuristic:
    """Test the heuristic depth rule."""

    def test_variance_gives_depth(self):
        """Test Var_H = 0.01 gives k = ceil(12.5) = 13."""
        m1 = 1 / math.sqrt(1.01)
        post = PhasePosterior(CircularStatistics.invert_first_moment(complex(m1)))
        params = ExperimentDesigner.heuristic_params(post, 120, np.random.default_rng(0))
        assert params.k == 13
        assert 0.0 <= params.beta < 2 * math.pi

    def test_uniform_prior(self):
        """Test that a flat prior starts at k = 1."""
        params = ExperimentDesigner.heuristic_params(PhasePosterior.uniform(), 120, np.random.default_rng(0))
        assert params.k == 1

    def test_capped(self):
        """Test that very narrow posteriors are capped at k_max."""
        post = PhasePosterior(VonMisesPosterior(mu=0.0, kappa=1e9))
        params = ExperimentDesigner.heuristic_params(post, 120, np.random.default_rng(0))
        assert params.k == 120

    def test_fourier_posterior(self):
        """Test that the rule reads Var_H from a Fourier posterior too."""
        post = FourierPosterior(np.array([0.5 / math.pi]), np.array([0.0]))
        params = ExperimentDesigner.heuristic_params(post, 120, np.random.default_rng(1))
        assert params.k == math.ceil(1.25 / math.sqrt(3))
