import logging
import math
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from bqpe.consts import FIT_GRID, FIT_OMEGA_RANGE
from bqpe.iceberg import IcebergCode
from bqpe.models import CalibrationPoint, FitConvergenceError, FitResult
from bqpe.simulator import CircuitBuilder

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
PROB_FLOOR = 1e-300
MAX_NEWTON_STEPS = 100
MAX_HALVINGS = 60
PROB_SLACK = 1e-12


def q_model(k: int, p2: float, counts_fn: Optional[Callable[[int], int]] = None) -> float:
    """Global depolarizing damping 1 - (1 - p2)^N(k); N defaults to the unencoded count."""
    counts_fn = counts_fn or CircuitBuilder.two_qubit_count
    return 1.0 - (1.0 - p2) ** counts_fn(k)


def d_model(k: int, p2: float, f: int, delta_init: int = 0) -> float:
    """Expected discard rate of the encoded circuit."""
    return IcebergCode.discard_rate_model(k, f, p2, delta_init)


def split_times(t: float, pair: Optional[Tuple[float, float]] = None) -> Tuple[float, float]:
    """Alternating evolution times with t1 + t2 = 2t and t1 t2 < 0; default (-t/2, 5t/2)."""
    t1, t2 = pair if pair is not None else (-0.5 * t, 2.5 * t)
    if abs(t1 + t2 - 2.0 * t) > 1e-12 * max(1.0, abs(t)):
        raise ValueError(f"Split times must sum to 2t = {2 * t}, got {t1} + {t2}")
    if t1 * t2 >= 0:
        raise ValueError(f"Split times must have opposite signs, got ({t1}, {t2})")
    return float(t1), float(t2)


def calibration_betas(k: int, phi0: float) -> Tuple[float, float, float, float]:
    """The four sample points -k phi0 + {-pi, -pi/2, 0, pi/2} reduced mod 2pi."""
    if k < 1:
        raise ValueError(f"Depth k must be >= 1, got {k}")
    base = -k * phi0
    return tuple(float((base + offset) % TWO_PI) for offset in (-math.pi, -math.pi / 2, 0.0, math.pi / 2))


def wrap_omega(omega: float, k: int) -> float:
    """Reduce a phase shift into (-pi/k, pi/k]."""
    period = TWO_PI / k
    wrapped = (omega + period / 2) % period - period / 2
    return period / 2 if wrapped <= -period / 2 else wrapped


class CalibrationFitter:
    """Binomial maximum-likelihood fit of f(k, beta; q, omega) = (1 + (1-q) cos(k(phi0 - omega) + beta))/2."""

    def __init__(self, points: Sequence[CalibrationPoint], phi0: float, k: int):
        selected = [p for p in points if p.k == k]
        if len({round(p.beta % TWO_PI, 12) for p in selected}) < 3:
            raise ValueError(f"Need at least 3 distinct beta values at k={k}, got {len(selected)} points")
        self.k = k
        self.phi0 = phi0
        self.beta = np.array([p.beta for p in selected])
        self.n0 = np.array([p.n0 for p in selected], dtype=float)
        self.n = np.array([p.n_shots for p in selected], dtype=float)
        if np.all(self.n0 == 0) or np.all(self.n0 == self.n):
            raise FitConvergenceError(f"Degenerate calibration data at k={k}: every beta gave one outcome")

    def _phase(self, omega):
        return self.k * (self.phi0 - omega) + self.beta

    def log_likelihood(self, q: float, omega: float) -> float:
        f = 0.5 * (1.0 + (1.0 - q) * np.cos(self._phase(omega)))
        if np.any(f < -PROB_SLACK) or np.any(f > 1.0 + PROB_SLACK):
            return -math.inf
        f = np.clip(f, 0.0, 1.0)
        with np.errstate(divide="ignore"):
            terms = np.where(self.n0 > 0, self.n0 * np.log(np.maximum(f, PROB_FLOOR)), 0.0) + np.where(
                self.n > self.n0, (self.n - self.n0) * np.log(np.maximum(1.0 - f, PROB_FLOOR)), 0.0
            )
        return float(terms.sum())

    def _grid_seed(self) -> Tuple[float, float]:
        qs = np.linspace(0.0, 1.0, FIT_GRID)
        omegas = np.linspace(*FIT_OMEGA_RANGE, FIT_GRID)
        u = self.k * (self.phi0 - omegas[None, :, None]) + self.beta[None, None, :]
        f = 0.5 * (1.0 + (1.0 - qs[:, None, None]) * np.cos(u))
        f = np.clip(f, PROB_FLOOR, 1.0 - 1e-16)
        ll = (self.n0 * np.log(f) + (self.n - self.n0) * np.log1p(-f)).sum(axis=-1)
        i, j = np.unravel_index(np.argmax(ll), ll.shape)
        return float(qs[i]), float(omegas[j])

    def _derivatives(self, q: float, omega: float) -> Tuple[np.ndarray, np.ndarray]:
        """Gradient and Hessian of the log-likelihood in (q, omega)."""
        u = self._phase(omega)
        r = 1.0 - q
        f = np.clip(0.5 * (1.0 + r * np.cos(u)), PROB_FLOOR, 1.0 - 1e-16)
        f_q = -0.5 * np.cos(u)
        f_w = 0.5 * r * self.k * np.sin(u)
        f_qw = -0.5 * self.k * np.sin(u)
        f_ww = -0.5 * r * self.k**2 * np.cos(u)
        has_zero, has_one = self.n0 > 0, self.n > self.n0
        # outcomes never observed contribute nothing, even where f underflows
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            n1 = self.n - self.n0
            first = np.where(has_zero, self.n0 / f, 0.0) - np.where(has_one, n1 / (1.0 - f), 0.0)
            second = -np.where(has_zero, self.n0 / f**2, 0.0) - np.where(has_one, n1 / (1.0 - f) ** 2, 0.0)
        grad = np.array([np.sum(first * f_q), np.sum(first * f_w)])
        hess = np.array(
            [
                [np.sum(second * f_q * f_q), np.sum(second * f_q * f_w + first * f_qw)],
                [np.sum(second * f_q * f_w + first * f_qw), np.sum(second * f_w * f_w + first * f_ww)],
            ]
        )
        return grad, hess

    def fit(self) -> FitResult:
        params = np.array(self._grid_seed())
        current = self.log_likelihood(*params)
        iterations = 0
        for iterations in range(1, MAX_NEWTON_STEPS + 1):
            grad, hess = self._derivatives(*params)
            try:
                step = -np.linalg.solve(hess, grad)
            except np.linalg.LinAlgError:
                step = grad / max(np.abs(np.diag(hess)).max(), 1.0)
            if grad @ step < 0:
                # not an ascent direction; fall back to scaled gradient ascent
                step = grad / max(np.abs(np.diag(hess)).max(), 1.0)
            scale = 1.0
            for _ in range(MAX_HALVINGS):
                trial = params + scale * step
                value = self.log_likelihood(*trial)
                if np.isfinite(value) and value >= current:
                    break
                scale *= 0.5
            else:
                # no improvement along the step: optimum within float resolution
                break
            moved = np.abs(trial - params)
            params, current = trial, value
            if moved[0] < 1e-12 and moved[1] < 1e-12 / self.k:
                break
        if not np.isfinite(current):
            raise FitConvergenceError(f"Calibration fit at k={self.k} left the valid parameter region")

        _, hess = self._derivatives(*params)
        if not np.all(np.isfinite(hess)):
            raise FitConvergenceError(f"Calibration fit at k={self.k} has a non-finite curvature at the optimum")
        try:
            covariance = np.linalg.pinv(-hess)
        except np.linalg.LinAlgError as exc:
            raise FitConvergenceError(f"Calibration fit at k={self.k}: {exc}") from exc
        stderr_q, stderr_w = np.sqrt(np.maximum(np.diag(covariance), 0.0))
        q, omega = float(params[0]), float(params[1])
        clamped = not (0.0 <= q <= 1.0)
        if clamped:
            logger.warning(f"Fitted q={q:.4g} at k={self.k} lies outside [0, 1]; clamping")
            q = min(max(q, 0.0), 1.0)
        result = FitResult(
            k=self.k,
            q=q,
            omega=wrap_omega(omega, self.k),
            stderr_q=float(stderr_q),
            stderr_omega=float(stderr_w),
            clamped=clamped,
            iterations=iterations,
        )
        logger.info(
            f"Fit k={self.k}: q={result.q:.4f}+-{result.stderr_q:.4f}, "
            f"omega={result.omega:.3e}+-{result.stderr_omega:.1e} rad in {iterations} steps"
        )
        return result


def fit_q_omega(points: Sequence[CalibrationPoint], phi0: float, k: int) -> FitResult:
    return CalibrationFitter(points, phi0, k).fit()
