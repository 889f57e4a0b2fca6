import logging
import math
from typing import Iterable, Tuple, Union

import numpy as np
from scipy.optimize import brentq
from scipy.special import ive

from bqpe.consts import GRID_POINTS, HOLEVO_UNBOUNDED, KAPPA_RTOL
from bqpe.models import (
    CircularMoment,
    FourierPosterior,
    Likelihood,
    PhasePosterior,
    Representation,
    VonMisesPosterior,
    check_bit,
)

logger = logging.getLogger(__name__)

AnyPosterior = Union[PhasePosterior, FourierPosterior, VonMisesPosterior]


def _unwrap(post: AnyPosterior) -> Representation:
    return post.representation if isinstance(post, PhasePosterior) else post


def phase_grid(n: int = GRID_POINTS) -> np.ndarray:
    """Uniform grid of n points on [0, 2pi)."""
    return np.arange(n) * (2.0 * math.pi / n)


class CircularStatistics:
    """Circular moments, Bessel-ratio inversion and concentration metrics."""

    @staticmethod
    def bessel_ratio(j: int, kappa: float) -> float:
        """I_|j|(kappa) / I_0(kappa), stable for any kappa through exponential scaling."""
        if kappa == 0.0:
            return 1.0 if j == 0 else 0.0
        return float(ive(abs(j), kappa) / ive(0, kappa))

    @staticmethod
    def moments_at(post: AnyPosterior, orders) -> np.ndarray:
        """Moments M_n for integer orders n (negative orders allowed)."""
        rep = _unwrap(post)
        orders = np.asarray(orders, dtype=int)
        absolute = np.abs(orders)
        if isinstance(rep, FourierPosterior):
            full = rep.moments()
            values = np.where(absolute <= rep.J, full[np.minimum(absolute, rep.J)], 0.0)
        else:
            if rep.kappa == 0.0:
                values = (absolute == 0).astype(complex)
            else:
                values = ive(absolute, rep.kappa) / ive(0, rep.kappa) * np.exp(1j * absolute * rep.mu)
        return np.where(orders < 0, np.conj(values), values)

    @staticmethod
    def fourier_moment(post: FourierPosterior, j: int) -> CircularMoment:
        if j < 0:
            raise ValueError(f"Moment order must be non-negative, got {j}")
        if j == 0:
            return CircularMoment(0, 1.0 + 0.0j)
        if j > post.J:
            return CircularMoment(j, 0.0j)
        return CircularMoment(j, complex(math.pi * post.cos_coeffs[j - 1], math.pi * post.sin_coeffs[j - 1]))

    @staticmethod
    def vonmises_moment(post: VonMisesPosterior, j: int) -> CircularMoment:
        ratio = CircularStatistics.bessel_ratio(j, post.kappa)
        return CircularMoment(j, ratio * complex(math.cos(j * post.mu), math.sin(j * post.mu)))

    @staticmethod
    def first_moment(post: AnyPosterior) -> complex:
        rep = _unwrap(post)
        if isinstance(rep, FourierPosterior):
            return CircularStatistics.fourier_moment(rep, 1).value
        return CircularStatistics.vonmises_moment(rep, 1).value

    @staticmethod
    def invert_first_moment(m1: Union[CircularMoment, complex]) -> VonMisesPosterior:
        """Von Mises distribution whose first moment equals ``m1``."""
        value = m1.value if isinstance(m1, CircularMoment) else complex(m1)
        radius = abs(value)
        if radius >= 1.0:
            raise ValueError(f"|M1| = {radius} has no finite concentration")
        if radius == 0.0:
            return VonMisesPosterior(0.0, 0.0)

        def objective(kappa: float) -> float:
            return CircularStatistics.bessel_ratio(1, kappa) - radius

        upper = 1.0
        while objective(upper) < 0:
            upper *= 2.0
        kappa = brentq(objective, 0.0, upper, xtol=1e-300, rtol=KAPPA_RTOL, maxiter=500)
        return VonMisesPosterior(math.atan2(value.imag, value.real), kappa)

    @staticmethod
    def circular_variance(post: AnyPosterior) -> float:
        return 1.0 - abs(CircularStatistics.first_moment(post))

    @staticmethod
    def holevo_variance(post: AnyPosterior) -> float:
        radius = abs(CircularStatistics.first_moment(post))
        if radius == 0.0:
            return HOLEVO_UNBOUNDED
        return radius**-2 - 1.0

    @staticmethod
    def circular_mean(post: AnyPosterior) -> float:
        m1 = CircularStatistics.first_moment(post)
        return math.atan2(m1.imag, m1.real) % (2.0 * math.pi)

    @staticmethod
    def expected_cosine_distance(post: AnyPosterior, phi_star: float) -> float:
        """E[1 - cos(phi - phi_star)] under the posterior."""
        m1 = CircularStatistics.first_moment(post)
        return 1.0 - (m1 * complex(math.cos(phi_star), -math.sin(phi_star))).real

    @staticmethod
    def mixed_likelihood_eval(
        weights: Iterable[Tuple[float, float]], k: int, beta: float, m: int
    ) -> float:
        """Outcome probability when the system register is a mixture of eigenphases.

        ``weights`` holds (|c_i|^2, phi_i) pairs.
        """
        check_bit(m)
        pairs = list(weights)
        total = sum(w for w, _ in pairs)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"Eigenstate weights must sum to 1, got {total}")
        return sum(w * Likelihood(k, beta).prob(m, phi) for w, phi in pairs)


class PosteriorUpdater:
    """Bayesian updates of circular posteriors under the QPE likelihood."""

    @staticmethod
    def _updated_moments(post: Representation, orders: np.ndarray, m: int, lik: Likelihood):
        """Normalized posterior moments at ``orders`` after observing m."""
        r = 1.0 - lik.q
        gamma = lik.beta - m * math.pi
        shift = complex(math.cos(gamma), math.sin(gamma))
        k = lik.k
        norm = 0.5 + 0.5 * r * (shift * CircularStatistics.moments_at(post, [k])[0]).real
        if norm <= 0.0:
            raise ValueError(f"Outcome m={m} has zero probability under the prior (k={k}, beta={lik.beta})")
        values = (
            0.5 * CircularStatistics.moments_at(post, orders)
            + 0.25 * r * shift * CircularStatistics.moments_at(post, orders + k)
            + 0.25 * r * np.conj(shift) * CircularStatistics.moments_at(post, orders - k)
        )
        return values / norm

    @staticmethod
    def fourier_update(post: FourierPosterior, m: int, k: int, beta: float, q: float) -> FourierPosterior:
        """Exact product posterior; the highest harmonic grows by k."""
        check_bit(m)
        lik = Likelihood(k, beta, q)
        orders = np.arange(1, post.J + k + 1)
        return FourierPosterior.from_moments(PosteriorUpdater._updated_moments(post, orders, m, lik))

    @staticmethod
    def vonmises_update(post: VonMisesPosterior, m: int, k: int, beta: float, q: float) -> VonMisesPosterior:
        """Moment-matched update: exact posterior first moment, then inversion."""
        check_bit(m)
        lik = Likelihood(k, beta, q)
        if lik.q == 1.0:
            return post
        m1 = PosteriorUpdater._updated_moments(post, np.array([1]), m, lik)[0]
        radius = abs(m1)
        if radius >= 1.0:
            # sharpest representable concentration
            m1 = m1 / radius * np.nextafter(1.0, 0.0)
        return CircularStatistics.invert_first_moment(m1)

    @staticmethod
    def to_vonmises(post: FourierPosterior) -> VonMisesPosterior:
        return CircularStatistics.invert_first_moment(CircularStatistics.fourier_moment(post, 1))

    @staticmethod
    def adaptive_update(post: PhasePosterior, m: int, k: int, beta: float, q: float) -> PhasePosterior:
        """Update, converting to von Mises first if the Fourier series would outgrow j_max."""
        rep = post.representation
        if isinstance(rep, FourierPosterior):
            if post.j_max is None or rep.J + k <= post.j_max:
                return PhasePosterior(PosteriorUpdater.fourier_update(rep, m, k, beta, q), post.j_max)
            rep = PosteriorUpdater.to_vonmises(rep)
            logger.info(
                f"Converted Fourier posterior (J={post.representation.J}) to von Mises "
                f"(mu={rep.mu:.6f}, kappa={rep.kappa:.3f}) before a k={k} update"
            )
        return PhasePosterior(PosteriorUpdater.vonmises_update(rep, m, k, beta, q), post.j_max)
