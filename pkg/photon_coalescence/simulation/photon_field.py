"""
Temporal photon wavepackets and the two-photon coincidence density at a
50/50 beam splitter.

Densities are normalized so that the K=0, tau=0 value is 1; only ratios
between densities are physical.
"""

import logging
import math
from typing import Union

import numpy as np
from scipy import integrate

from ..config import settings
from ..errors import DomainError, NumericalError
from ..models.base import PhotonWavepacket

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]


def _check_overlap(K: float) -> None:
    if not 0.0 <= K <= 1.0:
        raise DomainError(f"spatial overlap K must lie in [0, 1], got {K}")


def wavepacket_amplitude(wp: PhotonWavepacket, t: ArrayLike) -> Union[complex, np.ndarray]:
    """H(t-t0) exp(-Gamma (t-t0)/2) exp(i omega (t-t0))."""
    t_arr = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t_arr)):
        raise DomainError("wavepacket time must be finite")
    s = t_arr - wp.emission_time
    causal = s >= 0
    s_pos = np.where(causal, s, 0.0)
    amp = np.where(causal, np.exp(-0.5 * wp.decay_rate * s_pos + 1j * wp.carrier_offset * s_pos), 0.0)
    if amp.ndim == 0:
        return complex(amp)
    return amp


def coincidence_density_closed(
    tau: ArrayLike,
    K: float,
    delta_omega: float,
    decay_rate: float = settings.DECAY_RATE,
) -> ArrayLike:
    """exp(-Gamma|tau|) (1 - K^2 cos(delta_omega tau))."""
    _check_overlap(K)
    if not decay_rate > 0:
        raise DomainError(f"decay rate must be positive, got {decay_rate}")
    tau = np.asarray(tau, dtype=float)
    value = np.exp(-decay_rate * np.abs(tau)) * (1.0 - K ** 2 * np.cos(delta_omega * tau))
    value = np.maximum(value, 0.0)
    return float(value) if value.ndim == 0 else value


def coincidence_density_integral(
    wp1: PhotonWavepacket,
    wp2: PhotonWavepacket,
    K: float,
    tau: float,
    abs_tol: float = settings.QUADRATURE_ABS_TOL,
) -> float:
    """Numerically integrate the two-path coincidence density.

    Integrates |E1(t+tau)E2(t)|^2 + |E2(t+tau)E1(t)|^2
    - 2 K^2 Re[E1(t+tau)E2(t) (E2(t+tau)E1(t))*] over t, which is the
    path-interference integral with the spatial factors collapsed into K.
    The result is multiplied by Gamma so that it shares the normalization of
    :func:`coincidence_density_closed`.
    """
    _check_overlap(K)
    if not math.isfinite(tau):
        raise DomainError("delay must be finite")
    if wp1.decay_rate != wp2.decay_rate:
        gamma = 0.5 * (wp1.decay_rate + wp2.decay_rate)
    else:
        gamma = wp1.decay_rate

    span = settings.QUADRATURE_SPAN_LIFETIMES / min(wp1.decay_rate, wp2.decay_rate)

    def direct(a: PhotonWavepacket, b: PhotonWavepacket):
        def integrand(t):
            return abs(wavepacket_amplitude(a, t + tau)) ** 2 * abs(wavepacket_amplitude(b, t)) ** 2
        start = max(a.emission_time - tau, b.emission_time)
        return integrand, start

    def cross_real(t):
        first = wavepacket_amplitude(wp1, t + tau) * wavepacket_amplitude(wp2, t)
        second = wavepacket_amplitude(wp2, t + tau) * wavepacket_amplitude(wp1, t)
        return (first * np.conj(second)).real

    pieces = []
    for f, start in (direct(wp1, wp2), direct(wp2, wp1)):
        pieces.append((f, start))
    cross_start = max(wp1.emission_time - tau, wp2.emission_time, wp2.emission_time - tau, wp1.emission_time)
    pieces.append((cross_real, cross_start))

    total = 0.0
    error = 0.0
    for index, (f, start) in enumerate(pieces):
        # Integrate in units of the lifetime so the integrand is O(1).
        value, err = integrate.quad(
            lambda s: f(start + s / gamma),
            0.0,
            span * gamma,
            epsabs=abs_tol,
            epsrel=1e-10,
            limit=200,
        )
        weight = -2.0 * K ** 2 if index == 2 else 1.0
        total += weight * value
        error += abs(weight) * err
    if error > abs_tol * 10:
        raise NumericalError(
            "coincidence quadrature did not converge",
            {"tau": tau, "K": K, "estimated_error": error, "tolerance": abs_tol},
        )
    logger.debug(f"quadrature tau={tau:.3e} K={K:.3f}: value={total:.6e} err={error:.1e}")
    return max(total, 0.0)
