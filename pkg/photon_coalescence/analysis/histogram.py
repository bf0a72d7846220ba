"""
Peak measurement, normalization and zero-peak extraction for start-stop
coincidence histograms.

Peaks sit on the pulse-period grid. The flat background and the exponential
tails of every peak are fitted together, by linear least squares, on the
bins outside the peak windows.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..config import settings
from ..errors import DomainError, NoPeaksFoundError
from ..models.results import CoincidenceHistogram, NormalizedSignal, PeakMeasurement, ZeroPeakData

logger = logging.getLogger(__name__)


@dataclass
class BackgroundModel:
    level: float
    level_sigma: float
    tail_heights: Dict[int, float]  # per peak order, value of the exponential at its centre
    period: float
    decay_rate: float

    def tails(self, tau: np.ndarray, exclude: Tuple[int, ...] = ()) -> np.ndarray:
        total = np.zeros_like(tau, dtype=float)
        for order, height in self.tail_heights.items():
            if order not in exclude:
                total += height * np.exp(-self.decay_rate * np.abs(tau - order * self.period))
        return total


def _half_range(centers: np.ndarray, bin_width: float) -> float:
    return float(min(-centers[0], centers[-1]) + 0.5 * bin_width)


def peak_orders(half_range: float, period: float, window: float) -> List[int]:
    """Peak orders whose full window fits inside the histogram."""
    m_max = int(np.floor((half_range - window) / period + 1e-9))
    return list(range(-m_max, m_max + 1))


def fit_background(
    centers: np.ndarray,
    values: np.ndarray,
    sigma: np.ndarray,
    period: float,
    window: float,
    decay_rate: float,
    bin_width: float,
    zero_window: Optional[float] = None,
) -> BackgroundModel:
    """Flat level plus one exponential tail per peak, fitted outside the windows.

    ``zero_window`` widens the excluded region around zero delay.
    """
    half_range = _half_range(centers, bin_width)
    m_max = int(np.ceil(half_range / period))
    orders = list(range(-m_max, m_max + 1))
    distance = np.min(np.abs(centers[:, None] - np.array(orders)[None, :] * period), axis=1)
    outside = distance > window
    if zero_window is not None:
        outside &= np.abs(centers) > zero_window
    if outside.sum() < len(orders) + 2:
        logger.debug("too few inter-peak bins for a background fit; assuming none")
        return BackgroundModel(0.0, 0.0, {}, period, decay_rate)
    X = np.column_stack(
        [np.ones(outside.sum())]
        + [np.exp(-decay_rate * np.abs(centers[outside] - m * period)) for m in orders]
    )
    pinv = np.linalg.pinv(X)
    beta = pinv @ values[outside]
    cov = (pinv * sigma[outside] ** 2) @ pinv.T
    return BackgroundModel(
        level=float(beta[0]),
        level_sigma=float(np.sqrt(max(cov[0, 0], 0.0))),
        tail_heights={m: float(b) for m, b in zip(orders, beta[1:])},
        period=period,
        decay_rate=decay_rate,
    )


def poisson_sigma(counts: np.ndarray) -> np.ndarray:
    """sqrt(counts) with a floor of one count for empty bins."""
    return np.sqrt(np.maximum(counts, 1.0))


def measure_peaks(
    hist: CoincidenceHistogram,
    pulse_period: float = settings.PULSE_PERIOD,
    window: float = settings.PEAK_WINDOW,
    decay_rate: float = settings.DECAY_RATE,
) -> List[PeakMeasurement]:
    """Every peak on the grid, significant or not."""
    centers = hist.centers
    counts = hist.counts.astype(float)
    sigma = poisson_sigma(counts)
    background = fit_background(centers, counts, sigma, pulse_period, window, decay_rate, hist.bin_width)
    b, b_sigma = background.level, background.level_sigma
    peaks = []
    for order in peak_orders(_half_range(centers, hist.bin_width), pulse_period, window):
        nominal = order * pulse_period
        inside = np.abs(centers - nominal) <= window
        in_counts = counts[inside]
        n_bins = int(inside.sum())
        # neighbouring peaks leak their exponential tails into this window
        under = b + background.tails(centers[inside], exclude=(order,))
        area = float(in_counts.sum() - under.sum())
        area_sigma = float(np.sqrt(in_counts.sum() + (n_bins * b_sigma) ** 2))
        total = in_counts.sum()
        centroid = float(np.sum(centers[inside] * in_counts) / total) if total > 0 else nominal
        height = float(np.max(in_counts - under)) if n_bins else 0.0
        peaks.append(PeakMeasurement(order, nominal, centroid, height, area, area_sigma))
    return peaks


def peak_heights(
    hist: CoincidenceHistogram,
    pulse_period: float = settings.PULSE_PERIOD,
    window: float = settings.PEAK_WINDOW,
    rebin_factor: int = 1,
    decay_rate: float = settings.DECAY_RATE,
) -> List[PeakMeasurement]:
    """Peaks on the pulse-period grid: height is the highest bin after rebinning, area the windowed sum."""
    if hist.total == 0:
        raise NoPeaksFoundError(f"{hist.configuration} histogram is empty")
    peaks = measure_peaks(hist.rebin(rebin_factor), pulse_period, window, decay_rate)
    if not any(p.area > 3.0 * p.area_sigma and p.area > 0 for p in peaks):
        raise NoPeaksFoundError(f"no significant peaks on the {pulse_period * 1e9:g} ns grid")
    return peaks


def window_fraction(centers: np.ndarray, bin_width: float, nominal: float, window: float, decay_rate: float) -> float:
    """Share of an exponential peak at ``nominal`` that falls in its window bins."""
    inside = centers[np.abs(centers - nominal) <= window] - nominal
    if len(inside) == 0:
        return 0.0
    lo, hi = inside[0] - 0.5 * bin_width, inside[-1] + 0.5 * bin_width
    return float(1.0 - 0.5 * np.exp(decay_rate * min(lo, 0.0)) - 0.5 * np.exp(-decay_rate * max(hi, 0.0)))


def _same_binning(a: CoincidenceHistogram, b: CoincidenceHistogram) -> bool:
    return len(a.bin_edges) == len(b.bin_edges) and np.allclose(a.bin_edges, b.bin_edges, rtol=0, atol=1e-15)


def normalize(
    mixer: CoincidenceHistogram,
    separator: CoincidenceHistogram,
    mode: str = "area",
    pulse_period: float = settings.PULSE_PERIOD,
    window: float = settings.PEAK_WINDOW,
    rebin_factor: int = settings.REBIN_FACTOR,
    decay_rate: float = settings.DECAY_RATE,
) -> NormalizedSignal:
    """Mixer histogram in units of the mean non-zero-delay separator peak.

    In ``area`` mode the reference is the height of an exponential peak that
    holds the mean separator peak area, corrected for the share outside the
    window, so separator peaks read exp(-Gamma|tau|); in ``height`` mode it
    is the mean of the highest bins.
    """
    if mode not in ("area", "height"):
        raise DomainError(f"unknown normalization mode {mode!r}")
    if not _same_binning(mixer, separator):
        raise DomainError("mixer and separator histograms must share their binning")
    mix = mixer.rebin(rebin_factor)
    sep = separator.rebin(rebin_factor)
    reference = [p for p in peak_heights(sep, pulse_period, window, 1, decay_rate) if p.order != 0]
    if not any(p.area > 3.0 * p.area_sigma for p in reference):
        raise NoPeaksFoundError("separator histogram has no significant non-zero-delay peaks in range")

    scale = 1.0
    if mix.total_pulse_cycles > 0 and sep.total_pulse_cycles > 0:
        scale = sep.total_pulse_cycles / mix.total_pulse_cycles
    bw = mix.bin_width

    def fraction_of(p: PeakMeasurement, centers: np.ndarray) -> float:
        return window_fraction(centers, bw, p.nominal_center, window, decay_rate)

    fractions = np.array([fraction_of(p, sep.centers) for p in reference])
    mean_area = float(np.mean([p.area / f for p, f in zip(reference, fractions)]))
    mean_area_sigma = float(np.sqrt(np.sum([(p.area_sigma / f) ** 2 for p, f in zip(reference, fractions)]))) / len(reference)
    if mode == "area":
        ref = mean_area * decay_rate * bw / 2.0
        ref_sigma = mean_area_sigma * decay_rate * bw / 2.0
    else:
        heights = np.array([p.height for p in reference])
        ref = float(heights.mean())
        ref_sigma = float(np.sqrt(np.sum(np.maximum(heights, 1.0)))) / len(reference)
    if not ref > 0:
        raise NoPeaksFoundError("separator reference peak is not positive")

    counts = mix.counts.astype(float)
    values = counts * scale / ref
    sigma = poisson_sigma(counts) * scale / ref

    zero = next((p for p in measure_peaks(mix, pulse_period, window, decay_rate) if p.order == 0), None)
    ratio, ratio_sigma = float("nan"), float("nan")
    if zero is not None:
        if mode == "area":
            f0 = fraction_of(zero, mix.centers)
            num, num_sigma = zero.area * scale / f0, zero.area_sigma * scale / f0
            den, den_sigma = mean_area, mean_area_sigma
        else:
            num, num_sigma = zero.height * scale, np.sqrt(max(zero.height, 1.0)) * scale
            den, den_sigma = ref, ref_sigma
        ratio = max(num, 0.0) / den
        ratio_sigma = float(np.hypot(num_sigma / den, ratio * den_sigma / den))
    logger.info(f"normalized ({mode}): reference {ref:.2f} +/- {ref_sigma:.2f}, zero-delay ratio {ratio:.4f} +/- {ratio_sigma:.4f}")
    return NormalizedSignal(
        centers=mix.centers,
        values=values,
        sigma=sigma,
        reference_height=ref,
        reference_sigma=ref_sigma,
        bin_width=bw,
        mode=mode,
        zero_delay_ratio=ratio,
        zero_delay_sigma=ratio_sigma,
        pulse_period=pulse_period,
    )


def extract_zero_peak(
    signal: NormalizedSignal,
    window: float = settings.PEAK_WINDOW,
    decay_rate: float = settings.DECAY_RATE,
    pulse_period: Optional[float] = None,
    span: float = settings.ZERO_PEAK_SPAN,
) -> ZeroPeakData:
    """Background- and neighbour-subtracted samples of the zero-delay peak.

    ``window`` is kept out of the background fit around every peak; samples
    are returned for |tau| <= ``span``.
    """
    period = pulse_period or signal.pulse_period or settings.PULSE_PERIOD
    for name, width in (("window", window), ("span", span)):
        if not width > 0:
            raise DomainError(f"{name} must be positive, got {width}")
        if width > 0.5 * period:
            raise DomainError(f"{name} {width * 1e9:g} ns reaches the neighbouring peaks at +/-{period * 1e9:g} ns")
    bw = signal.bin_width or float(signal.centers[1] - signal.centers[0])
    background = fit_background(signal.centers, signal.values, signal.sigma, period, window, decay_rate, bw,
                                zero_window=max(window, span))
    inside = np.abs(signal.centers) <= span
    tau = signal.centers[inside]
    neighbours = background.tails(tau, exclude=(0,))
    value = signal.values[inside] - background.level - neighbours
    sigma = np.sqrt(signal.sigma[inside] ** 2 + background.level_sigma ** 2)
    logger.debug(f"zero peak: {inside.sum()} bins, background {background.level:.4f} +/- {background.level_sigma:.4f}")
    return ZeroPeakData(
        tau=tau,
        value=value,
        sigma=sigma,
        background=background.level,
        background_sigma=background.level_sigma,
        bin_width=bw,
    )
