import logging
import math
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from bqpe.consts import HEURISTIC_K_FACTOR, VON_MISES_K_WINDOW
from bqpe.models import ExperimentParams, PhasePosterior, UtilityCoefficients, check_bit, check_q
from bqpe.posterior import AnyPosterior, CircularStatistics

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
GUARD_GRID = 64
DEGENERATE_SCALE = 1e-15
TIE_TOLERANCE = 1e-12


class ExperimentDesigner:
    """Chooses (k, beta) by maximizing the negative expected posterior circular variance."""

    @staticmethod
    def predictive_prob(post: AnyPosterior, m: int, k: int, beta: float, q: float) -> float:
        """Marginal probability of outcome m before measuring."""
        check_bit(m)
        check_q(q)
        mk = CircularStatistics.moments_at(post, [k])[0]
        gamma = beta - m * math.pi
        return 0.5 + 0.5 * (1.0 - q) * (mk * complex(math.cos(gamma), math.sin(gamma))).real

    @staticmethod
    def moment_numerator_coeffs(post: AnyPosterior, k: int, q: float) -> UtilityCoefficients:
        if k < 1:
            raise ValueError(f"Depth k must be >= 1, got {k}")
        check_q(q)
        r = 1.0 - q
        m1, m_up, m_down = CircularStatistics.moments_at(post, [1, 1 + k, 1 - k])
        A, B = m_up.real, m_up.imag
        C, D = m_down.real, m_down.imag
        return UtilityCoefficients.from_bar(
            a_bar=0.5 * m1.real,
            b_bar=0.25 * r * (A + C),
            c_bar=0.25 * r * (D - B),
            d_bar=0.5 * m1.imag,
            e_bar=0.25 * r * (B + D),
            f_bar=0.25 * r * (A - C),
        )

    @staticmethod
    def _utility(coeffs: UtilityCoefficients, beta):
        f_plus, f_minus = coeffs.f_pm(beta)
        return -1.0 + np.sqrt(np.maximum(f_plus, 0.0)) + np.sqrt(np.maximum(f_minus, 0.0))

    @staticmethod
    def utility_at(post: AnyPosterior, k: int, q: float, beta):
        """U_C(beta | k) = -1 + sqrt(f+(beta)) + sqrt(f-(beta)); vectorized over beta."""
        value = ExperimentDesigner._utility(ExperimentDesigner.moment_numerator_coeffs(post, k, q), beta)
        return float(value) if np.ndim(value) == 0 else value

    @staticmethod
    def _stationary_betas(coeffs: UtilityCoefficients) -> np.ndarray:
        """Real roots of 2 P P' Q' = Q (P'^2 + Q'^2) on the unit circle z = e^{i beta}.

        Each factor is a Laurent polynomial in z stored from its lowest power upwards.
        """
        a, b, c, d, e = coeffs.a, coeffs.b, coeffs.c, coeffs.d, coeffs.e
        P = np.array([d / 2 + 0.5j * e, 0, a, 0, d / 2 - 0.5j * e])
        dP = np.array([e - 1j * d, 0, 0, 0, e + 1j * d])
        Q = np.array([b / 2 + 0.5j * c, 0, b / 2 - 0.5j * c])
        dQ = np.array([c / 2 - 0.5j * b, 0, c / 2 + 0.5j * b])
        lhs = 2.0 * np.convolve(np.convolve(P, dP), dQ)
        rhs = np.convolve(Q, np.convolve(dP, dP) + np.pad(np.convolve(dQ, dQ), 2))
        poly = (lhs - rhs)[::-1]
        scale = np.max(np.abs(poly))
        if scale == 0.0:
            return np.zeros(0)
        poly = np.trim_zeros(np.where(np.abs(poly) > 1e-14 * scale, poly, 0.0), "f")
        roots = np.roots(poly)
        on_circle = roots[np.abs(np.abs(roots) - 1.0) < 1e-6]
        return np.mod(np.angle(on_circle), TWO_PI)

    @staticmethod
    def optimal_beta(post: AnyPosterior, k: int, q: float) -> Tuple[float, float]:
        """Exact maximizer of U_C over beta for fixed k; ties go to the smallest beta."""
        coeffs = ExperimentDesigner.moment_numerator_coeffs(post, k, q)
        if max(abs(coeffs.b), abs(coeffs.c), abs(coeffs.d), abs(coeffs.e)) < DEGENERATE_SCALE:
            return 0.0, float(ExperimentDesigner._utility(coeffs, 0.0))

        candidates = np.concatenate(
            [ExperimentDesigner._stationary_betas(coeffs), np.arange(GUARD_GRID) * (TWO_PI / GUARD_GRID)]
        )
        values = ExperimentDesigner._utility(coeffs, candidates)
        best = int(np.argmax(values))

        half_width = TWO_PI / GUARD_GRID
        polished = minimize_scalar(
            lambda x: -ExperimentDesigner._utility(coeffs, x),
            bounds=(candidates[best] - half_width, candidates[best] + half_width),
            method="bounded",
            options={"xatol": 1e-12},
        )
        if -polished.fun > values[best]:
            candidates = np.append(candidates, np.mod(polished.x, TWO_PI))
            values = np.append(values, -polished.fun)

        top = values.max()
        tied = candidates[values >= top - TIE_TOLERANCE]
        return float(np.min(tied)), float(top)

    @staticmethod
    def k_candidates(post: PhasePosterior, k_max: int, window: int = VON_MISES_K_WINDOW) -> range:
        """Depths to scan: every k for Fourier, a window around Var_H^{-1/2} for von Mises."""
        if post.is_fourier:
            return range(1, k_max + 1)
        var_h = CircularStatistics.holevo_variance(post)
        center = 1 if math.isinf(var_h) or var_h <= 0 else int(round(var_h**-0.5))
        center = min(max(center, 1), k_max)
        return range(max(1, center - window), min(k_max, center + window) + 1)

    @staticmethod
    def optimal_params(
        post: PhasePosterior,
        noise_fn: Callable[[int], float],
        k_max: int,
        window: int = VON_MISES_K_WINDOW,
    ) -> ExperimentParams:
        best: Optional[Tuple[int, float, float]] = None
        for k in ExperimentDesigner.k_candidates(post, k_max, window):
            beta, utility = ExperimentDesigner.optimal_beta(post, k, noise_fn(k))
            if best is None or utility > best[2] + TIE_TOLERANCE:
                best = (k, beta, utility)
        k, beta, utility = best
        logger.debug(f"Selected k={k}, beta={beta:.6f} with utility {utility:.6e}")
        return ExperimentParams(k, beta, k_max)

    @staticmethod
    def heuristic_params(post: AnyPosterior, k_max: int, rng: np.random.Generator) -> ExperimentParams:
        """k = ceil(1.25 / sqrt(Var_H)) capped at k_max, beta uniform."""
        var_h = CircularStatistics.holevo_variance(post)
        if math.isinf(var_h):
            k = 1
        elif var_h <= 0:
            k = k_max
        else:
            # rounding guards ceil against representation error (e.g. Var_H = 1.5625e-4)
            k = math.ceil(round(HEURISTIC_K_FACTOR / math.sqrt(var_h), 9))
        k = min(max(k, 1), k_max)
        return ExperimentParams(k, float(rng.uniform(0.0, TWO_PI)), k_max)
