import math
from unittest.mock import patch

import numpy as np
import pytest

from bqpe.calibration import (
    CalibrationFitter,
    calibration_betas,
    d_model,
    fit_q_omega,
    q_model,
    split_times,
    wrap_omega,
)
from bqpe.consts import DEFAULT_P2, DEFAULT_T
from bqpe.hamiltonian import HamiltonianModel, load_dataset
from bqpe.iceberg import IcebergCode
from bqpe.models import CalibrationPoint, FitConvergenceError, NoiseModel, TrotterConfig
from bqpe.simulator import CircuitBuilder, ShotSampler

PHI0 = 0.7


def expected_f(k, beta, q, omega, phi0=PHI0):
    return 0.5 * (1 + (1 - q) * math.cos(k * (phi0 - omega) + beta))


def exact_points(k, q, omega, n_shots=1_000_000):
    """Points whose counts sit on the model curve up to rounding."""
    return [
        CalibrationPoint(k, beta, round(n_shots * expected_f(k, beta, q, omega)), n_shots)
        for beta in calibration_betas(k, PHI0)
    ]


class TestModels:
    """Test analytic damping and discard models."""

    def test_q_model_unencoded(self):
        """Test q(120) with the unencoded count of 604 gates."""
        assert q_model(120, DEFAULT_P2) == pytest.approx(1 - (1 - DEFAULT_P2) ** 604)

    def test_q_model_custom_counts(self):
        """Test q with the encoded gate count."""
        assert q_model(120, DEFAULT_P2, IcebergCode.two_qubit_count) == pytest.approx(
            1 - (1 - DEFAULT_P2) ** 920
        )

    def test_d_model(self):
        """Test the discard model at k = 120, f = 8."""
        assert d_model(120, DEFAULT_P2, 8) == pytest.approx(0.7708, abs=1e-4)

    def test_d_model_increases_with_k(self):
        """Test that deeper circuits discard more."""
        rates = [d_model(k, DEFAULT_P2, 8) for k in (20, 40, 60, 80, 100)]
        assert rates == sorted(rates)


class TestSchedule:
    """Test split times, sample points and phase wrapping."""

    def test_split_default(self):
        """Test the default pair (-t/2, 5t/2)."""
        assert split_times(1.0) == pytest.approx((-0.5, 2.5))

    def test_split_custom(self):
        """Test an explicit valid pair."""
        assert split_times(DEFAULT_T, (-0.05 * math.pi, 0.25 * math.pi)) == pytest.approx(
            (-0.05 * math.pi, 0.25 * math.pi)
        )

    @pytest.mark.parametrize(
        "pair, match",
        [((-1.0, 2.0), "sum to"), ((0.5, 1.5), "opposite signs")],
    )
    def test_split_invalid(self, pair, match):
        """Test that invalid pairs are rejected."""
        with pytest.raises(ValueError, match=match):
            split_times(1.0, pair)

    def test_betas(self):
        """Test the four offsets around -k phi0."""
        assert calibration_betas(1, 0.0) == pytest.approx((math.pi, 1.5 * math.pi, 0.0, 0.5 * math.pi))

    def test_betas_in_range(self):
        """Test that the points are reduced to [0, 2pi)."""
        assert all(0.0 <= b < 2 * math.pi for b in calibration_betas(40, 2.9))

    def test_betas_invalid_depth(self):
        """Test that k < 1 is rejected."""
        with pytest.raises(ValueError, match="k must be >= 1"):
            calibration_betas(0, 0.1)

    def test_wrap_omega(self):
        """Test reduction into (-pi/k, pi/k]."""
        assert wrap_omega(0.3, 20) == pytest.approx(0.3 - 2 * math.pi / 20)
        assert wrap_omega(-math.pi / 20, 20) == pytest.approx(math.pi / 20)
        assert wrap_omega(0.01, 20) == pytest.approx(0.01)


class TestCalibrationFitter:
    """Test the binomial maximum-likelihood fit."""

    @pytest.mark.parametrize("k, q, omega", [(20, 0.05, 0.0), (60, 0.3, 0.004), (100, 0.6, -0.002)])
    def test_recovers_exact_counts(self, k, q, omega):
        """Test that counts on the model curve return its parameters."""
        result = fit_q_omega(exact_points(k, q, omega), PHI0, k)
        assert result.q == pytest.approx(q, abs=1e-4)
        assert result.omega == pytest.approx(omega, abs=1e-5)
        assert result.k == k
        assert not result.clamped

    def test_recovers_sampled_counts(self):
        """Test recovery from binomial counts within four standard errors."""
        k, q, omega, n = 40, 0.25, 0.003, 4000
        rng = np.random.default_rng(21)
        points = [
            CalibrationPoint(k, beta, int(rng.binomial(n, expected_f(k, beta, q, omega))), n)
            for beta in calibration_betas(k, PHI0)
        ]
        result = fit_q_omega(points, PHI0, k)
        assert abs(result.q - q) < 4 * result.stderr_q
        assert abs(result.omega - omega) < 4 * result.stderr_omega
        assert result.stderr_q > 0 and result.stderr_omega > 0

    def test_noiseless_boundary(self):
        """Test that q = 0 data stays finite at the boundary."""
        result = fit_q_omega(exact_points(20, 0.0, 0.0, n_shots=500), PHI0, 20)
        assert result.q == pytest.approx(0.0, abs=1e-3)

    def test_noiseless_counts_at_extreme_betas(self):
        """Test a q = 0 fit where two betas saw only one outcome each."""
        points = [
            CalibrationPoint(20, beta, n0, 20000)
            for beta, n0 in zip(calibration_betas(20, PHI0), (0, 10088, 20000, 10121))
        ]
        result = fit_q_omega(points, PHI0, 20)
        assert result.q == pytest.approx(0.0, abs=1e-3)
        assert abs(result.omega) < 1e-3
        assert math.isfinite(result.stderr_q) and math.isfinite(result.stderr_omega)

    @pytest.mark.parametrize("k", [20, 40, 60, 80, 100])
    @pytest.mark.parametrize("omega", [0.0, 1e-3, -2e-3])
    def test_noiseless_sampled_counts(self, k, omega):
        """Test that binomial counts at q = 0 always give a finite fit."""
        rng = np.random.default_rng(k)
        points = [
            CalibrationPoint(k, beta, int(rng.binomial(20000, expected_f(k, beta, 0.0, omega))), 20000)
            for beta in calibration_betas(k, PHI0)
        ]
        result = fit_q_omega(points, PHI0, k)
        assert 0.0 <= result.q < 0.01
        assert abs(wrap_omega(result.omega - omega, k)) < 2e-3
        assert math.isfinite(result.stderr_omega)

    def test_non_finite_curvature(self):
        """Test that a non-finite Hessian at the optimum fails the fit."""
        fitter = CalibrationFitter(exact_points(20, 0.1, 0.0), PHI0, 20)
        broken = (np.zeros(2), np.full((2, 2), np.nan))
        with patch.object(CalibrationFitter, "_derivatives", return_value=broken):
            with pytest.raises(FitConvergenceError, match="non-finite curvature"):
                fitter.fit()

    def test_ignores_other_depths(self):
        """Test that only points at the requested k enter the fit."""
        points = exact_points(20, 0.1, 0.0) + [CalibrationPoint(40, 0.0, 0, 100)]
        assert CalibrationFitter(points, PHI0, 20).beta.size == 4

    def test_too_few_betas(self):
        """Test that fewer than three distinct betas are rejected."""
        points = exact_points(20, 0.1, 0.0)[:2]
        with pytest.raises(ValueError, match="at least 3 distinct beta"):
            CalibrationFitter(points, PHI0, 20)

    def test_repeated_betas_count_once(self):
        """Test that duplicate betas do not satisfy the minimum."""
        point = exact_points(20, 0.1, 0.0)[0]
        with pytest.raises(ValueError, match="at least 3 distinct beta"):
            CalibrationFitter([point, point, point], PHI0, 20)

    def test_degenerate_data(self):
        """Test that all-zero outcomes cannot be fitted."""
        points = [CalibrationPoint(20, beta, 0, 100) for beta in calibration_betas(20, PHI0)]
        with pytest.raises(FitConvergenceError, match="Degenerate"):
            fit_q_omega(points, PHI0, 20)

    def test_log_likelihood_invalid_region(self):
        """Test that q outside [0, 1] can give probabilities outside [0, 1]."""
        fitter = CalibrationFitter(exact_points(20, 0.1, 0.0), PHI0, 20)
        assert fitter.log_likelihood(-0.5, 0.0) == -math.inf
        assert math.isfinite(fitter.log_likelihood(0.1, 0.0))

    @pytest.mark.slow
    def test_global_damping_simulation(self):
        """Test the fit against circuits sampled under global depolarizing noise."""
        h, _ = load_dataset()
        phi0, vec = HamiltonianModel.trotter_eigenphase(h, TrotterConfig(DEFAULT_T, 1))
        k, n, p2 = 60, 3000, 4e-3
        rng = np.random.default_rng(9)
        noise = NoiseModel(p2=p2, mode="global_analytic")
        points = []
        for beta in calibration_betas(k, phi0):
            circ = CircuitBuilder.build_qpe_circuit(
                h, k, beta, DEFAULT_T, init_kind="exact_eigenstate", system_state=vec
            )
            points.append(CalibrationPoint(k, beta, ShotSampler.sample_zero_count(circ, noise, n, rng), n))
        result = fit_q_omega(points, phi0, k)
        expected_q = q_model(k, p2, lambda kk: CircuitBuilder.two_qubit_count(kk, 1, "exact_eigenstate"))
        assert abs(result.q - expected_q) < 4 * result.stderr_q
        assert abs(result.omega) < 4 * result.stderr_omega
