"""
Temperature-broadened coincidence signal at zero delay.

The emitted frequency of each atom is shifted by its lightshift. Lightshift
deficits below the trap depth follow D^2 exp(-2D / k_B T), a gamma law of
shape 3 and scale k_B T / 2, so the frequency difference of two independent
atoms has characteristic function (1 + (eta k_B T tau / 2 hbar)^2)^-3.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Sequence, Union

import numpy as np
import pandas as pd
from scipy import integrate, optimize

from ..config import settings
from ..errors import DomainError
from ..models.config import BroadeningParams
from .photon_field import coincidence_density_closed

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

GAMMA_SHAPE = 3


def _check_overlap(K: float) -> None:
    if not 0.0 <= K <= 1.0:
        raise DomainError(f"spatial overlap K must lie in [0, 1], got {K}")


def peak_ratio(K: float) -> float:
    """Normalised zero-delay ratio R = (1 - K^2) / 2."""
    _check_overlap(K)
    return 0.5 * (1.0 - K ** 2)


def averaged_interference_factor(tau: ArrayLike, params: BroadeningParams) -> ArrayLike:
    """C(tau) = E[cos(delta_omega tau)] over the thermal frequency difference."""
    x = params.frequency_scale * np.asarray(tau, dtype=float)
    C = (1.0 + x ** 2) ** (-GAMMA_SHAPE)
    return float(C) if C.ndim == 0 else C


def broadened_signal(tau: ArrayLike, K: float, params: BroadeningParams) -> ArrayLike:
    """exp(-Gamma|tau|) (1 - K^2 C(tau)), normalised like the unbroadened density."""
    _check_overlap(K)
    tau = np.asarray(tau, dtype=float)
    value = np.exp(-params.decay_rate * np.abs(tau)) * (1.0 - K ** 2 * averaged_interference_factor(tau, params))
    value = np.maximum(value, 0.0)
    return float(value) if value.ndim == 0 else value


@dataclass(frozen=True)
class DeltaOmegaDistribution:
    """Photon frequency difference of two atoms with independent thermal lightshifts."""
    params: BroadeningParams

    @property
    def deficit_scale(self) -> float:
        return settings.K_B * self.params.temperature / 2.0

    def sample_deficits(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Lightshift deficits U0 - U drawn from the gamma law."""
        if self.params.temperature == 0:
            return np.zeros(n)
        return rng.gamma(GAMMA_SHAPE, self.deficit_scale, size=n)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        d1 = self.sample_deficits(n, rng)
        d2 = self.sample_deficits(n, rng)
        return self.params.differential_shift_factor * (d1 - d2) / settings.HBAR

    def characteristic(self, tau: ArrayLike) -> ArrayLike:
        return averaged_interference_factor(tau, self.params)

    def std(self) -> float:
        """Standard deviation of delta_omega (rad/s)."""
        return math.sqrt(2 * GAMMA_SHAPE) * self.params.frequency_scale


def monte_carlo_interference_factor(tau: ArrayLike, params: BroadeningParams, n_samples: int,
                                    rng: np.random.Generator) -> np.ndarray:
    """Sample average of cos(delta_omega tau), the oracle for the closed form."""
    omegas = DeltaOmegaDistribution(params).sample(n_samples, rng)
    taus = np.atleast_1d(np.asarray(tau, dtype=float))
    return np.array([np.mean(np.cos(omegas * t)) for t in taus])


def monte_carlo_signal(tau: ArrayLike, K: float, params: BroadeningParams, n_samples: int,
                       rng: np.random.Generator) -> np.ndarray:
    """Unbroadened density averaged over sampled frequency differences."""
    omegas = DeltaOmegaDistribution(params).sample(n_samples, rng)
    taus = np.atleast_1d(np.asarray(tau, dtype=float))
    return np.array([np.mean(coincidence_density_closed(t, K, omegas, params.decay_rate)) for t in taus])


def residual_area(K: float, params: BroadeningParams, window: float = settings.EXCITED_STATE_LIFETIME) -> float:
    """Integrated broadened signal over |tau| <= window, in units of the lifetime."""
    _check_overlap(K)
    value, _ = integrate.quad(lambda t: broadened_signal(t, K, params), 0.0, window, epsabs=1e-14, limit=200)
    return 2.0 * value * params.decay_rate


def dip_profile(tau: ArrayLike, temperatures: Sequence[float], params: BroadeningParams = None) -> Dict[float, np.ndarray]:
    """Perfect-overlap (K=1) signal for each temperature, showing the zero-delay dip."""
    params = params or BroadeningParams()
    return {
        float(T): np.atleast_1d(broadened_signal(tau, 1.0, params.model_copy(update={"temperature": T})))
        for T in temperatures
    }


def dip_width(params: BroadeningParams) -> float:
    """Half width of the K=1 dip where the signal first reaches half its maximum."""
    if params.temperature == 0 or params.differential_shift_factor == 0:
        return math.inf

    def signal(t: float) -> float:
        return broadened_signal(t, 1.0, params)

    # Bracket the maximum on a grid before refining it.
    scale = 1.0 / params.frequency_scale
    grid = np.linspace(0.0, min(50.0 * scale, 20.0 / params.decay_rate), 4001)
    values = broadened_signal(grid, 1.0, params)
    top = int(np.argmax(values))
    res = optimize.minimize_scalar(lambda t: -signal(t), bounds=(grid[max(top - 1, 0)], grid[min(top + 1, len(grid) - 1)]),
                                   method="bounded", options={"xatol": 1e-15})
    t_max, s_max = res.x, -res.fun
    return optimize.brentq(lambda t: signal(t) - 0.5 * s_max, 0.0, t_max, xtol=1e-15)


def signal_curve(tau: ArrayLike, K: float, params: BroadeningParams) -> pd.DataFrame:
    """Plot-ready curve with columns tau_ns and value."""
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    return pd.DataFrame({"tau_ns": tau * 1e9, "value": broadened_signal(tau, K, params)})
