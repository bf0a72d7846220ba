"""
Synthetic measurement data for fits, scans and histogram analysis.
"""

import math
from typing import Dict, Optional, Sequence

import numpy as np

from ..analysis.histogram import poisson_sigma
from ..analysis.inference import zero_peak_model
from ..config import settings
from ..models.results import CoincidenceHistogram, ZeroPeakData
from ..simulation.components import make_bin_edges
from ..simulation.spatial_mode import scan_ratio


class DataGenerator:
    """Generates measurement-like data with Poisson counting noise."""

    def __init__(self, seed: Optional[int] = None, rng: Optional[np.random.Generator] = None):
        self.rng = rng if rng is not None else np.random.default_rng(seed)

    def generate_zero_peak(
        self,
        K: float,
        temperature: float,
        n_events: float = 6600,
        window: float = settings.ZERO_PEAK_SPAN,
        bin_width: float = settings.BIN_WIDTH * settings.REBIN_FACTOR,
        decay_rate: float = settings.DECAY_RATE,
        eta: float = settings.DIFFERENTIAL_SHIFT_FACTOR,
        amplitude: float = settings.FIT_AMPLITUDE,
        noiseless: bool = False,
    ) -> ZeroPeakData:
        """Normalized zero-delay peak at the statistics of ``n_events`` separator-equivalent pairs.

        The reference height is that of an exponential peak holding
        ``n_events`` counts, as produced by area-mode normalization.
        """
        n_half = int(math.floor(window / bin_width + 1e-9))
        tau = np.arange(-n_half, n_half + 1) * bin_width
        expected = amplitude * zero_peak_model(tau, K, temperature, decay_rate, eta, bin_width)
        reference = n_events * decay_rate * bin_width / 2.0
        if noiseless:
            sigma = np.sqrt(np.maximum(expected * reference, 1.0)) / reference
            return ZeroPeakData(tau=tau, value=expected, sigma=sigma, bin_width=bin_width)
        counts = self.rng.poisson(expected * reference).astype(float)
        return ZeroPeakData(tau=tau, value=counts / reference, sigma=poisson_sigma(counts) / reference,
                            bin_width=bin_width)

    def generate_scan(
        self,
        displacements: Sequence[float],
        k_max: float,
        waist: float = settings.MODE_WAIST,
        center: float = 0.0,
        events_per_point: float = 2000,
    ) -> np.ndarray:
        """(d, R, sigma) rows of a displacement scan with counting noise on R."""
        d = np.asarray(displacements, dtype=float)
        R = scan_ratio(d, k_max, waist, center)
        counts = self.rng.poisson(np.atleast_1d(R) * events_per_point).astype(float)
        return np.column_stack([d, counts / events_per_point, poisson_sigma(counts) / events_per_point])

    def generate_histogram(
        self,
        areas: Dict[int, float],
        configuration: str = "separator",
        background_per_bin: float = 0.0,
        bin_width: float = settings.BIN_WIDTH,
        half_range: float = settings.HISTOGRAM_HALF_RANGE,
        rebin_factor: int = settings.REBIN_FACTOR,
        pulse_period: float = settings.PULSE_PERIOD,
        decay_rate: float = settings.DECAY_RATE,
        total_pulse_cycles: int = 1,
        noiseless: bool = False,
    ) -> CoincidenceHistogram:
        """Exponential peaks of given areas on the pulse grid over a flat background."""
        edges = make_bin_edges(bin_width, half_range, rebin_factor)
        expected = np.full(len(edges) - 1, background_per_bin, dtype=float)
        for order, area in areas.items():
            # Integral of (Gamma/2) exp(-Gamma|t - c|) over each bin.
            x = edges - order * pulse_period
            cdf = np.where(x < 0, 0.5 * np.exp(decay_rate * np.minimum(x, 0)), 1.0 - 0.5 * np.exp(-decay_rate * np.maximum(x, 0)))
            expected += area * np.diff(cdf)
        counts = np.rint(expected) if noiseless else self.rng.poisson(expected)
        return CoincidenceHistogram(
            bin_edges=edges,
            counts=counts.astype(np.int64),
            configuration=configuration,
            total_pulse_cycles=total_pulse_cycles,
            metadata={"synthetic": True},
        )
