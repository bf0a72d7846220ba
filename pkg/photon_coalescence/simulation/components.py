"""
Detection-side components of the coincidence experiment.
"""

import logging
import math
from dataclasses import dataclass
from typing import Literal, Tuple

import numpy as np

from ..errors import DomainError
from ..models.config import DetectionConfig

logger = logging.getLogger(__name__)

START, STOP = 0, 1


@dataclass
class PhotonEvents:
    """Detected photons of one block, before routing.

    ``pair_slot`` is the index of the shared pulse slot for photons whose
    partner from the other atom was detected in the same pulse, else -1.
    """
    times: np.ndarray  # detection time before jitter, s
    emission_delay: np.ndarray  # emission time after the pulse, s
    atom: np.ndarray  # 0 or 1
    pair_slot: np.ndarray
    delta_omega: np.ndarray  # per-pair frequency difference, indexed like pair_slot


def make_bin_edges(bin_width: float, half_range: float, rebin_factor: int = 1) -> np.ndarray:
    """Uniform edges with a bin centred on zero delay.

    The number of bins on each side is chosen so that rebinning by the (odd)
    ``rebin_factor`` still leaves the zero-delay bin centred.
    """
    if bin_width <= 0 or half_range <= 0:
        raise DomainError("bin width and range must be positive")
    if rebin_factor < 1 or rebin_factor % 2 == 0:
        raise DomainError(f"rebin factor must be odd and positive, got {rebin_factor}")
    n_half = math.ceil(half_range / bin_width - 1e-9)
    remainder = (rebin_factor - 1) // 2
    n_half += (remainder - n_half) % rebin_factor
    return (np.arange(-n_half, n_half + 2) - 0.5) * bin_width


class SeparatorRouter:
    """Beam-separator configuration: each detector sees one atom."""

    configuration = "separator"

    def route(self, events: PhotonEvents, rng: np.random.Generator) -> np.ndarray:
        return events.atom.copy()


class MixerRouter:
    """50/50 beam-splitter configuration.

    Unpaired photons leave either port with equal probability. A pair from
    the same pulse splits between the detectors with probability
    (1 - K^2 cos(delta_omega dt)) / 2, dt being the emission-time difference;
    otherwise both photons leave through the same port.
    """

    configuration = "mixer"

    def __init__(self, overlap: float):
        if not 0.0 <= overlap <= 1.0:
            raise DomainError(f"spatial overlap K must lie in [0, 1], got {overlap}")
        self.overlap = overlap

    def split_probability(self, delta_omega: np.ndarray, dt: np.ndarray) -> np.ndarray:
        return 0.5 * (1.0 - self.overlap ** 2 * np.cos(delta_omega * dt))

    def route(self, events: PhotonEvents, rng: np.random.Generator) -> np.ndarray:
        n = len(events.times)
        ports = (rng.random(n) < 0.5).astype(np.int64)
        paired = np.flatnonzero(events.pair_slot >= 0)
        if len(paired) == 0:
            return ports
        # Pairs are stored as consecutive (atom 0, atom 1) entries.
        first, second = paired[0::2], paired[1::2]
        slots = events.pair_slot[first]
        dt = events.emission_delay[first] - events.emission_delay[second]
        p_split = self.split_probability(events.delta_omega[slots], dt)
        split = rng.random(len(first)) < p_split
        port_first = ports[first]
        ports[second] = np.where(split, 1 - port_first, port_first)
        return ports


def make_router(configuration: Literal["mixer", "separator"], overlap: float):
    if configuration == "mixer":
        return MixerRouter(overlap)
    if configuration == "separator":
        return SeparatorRouter()
    raise DomainError(f"unknown configuration {configuration!r}")


class DarkCountSource:
    """Homogeneous Poisson background on each detector while the card records."""

    def __init__(self, rate: float):
        if rate < 0:
            raise DomainError(f"background rate must be >= 0, got {rate}")
        self.rate = rate

    def sample(self, window_starts: np.ndarray, window_length: float,
               rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
        """Background (times, detector) inside each recording window."""
        expected = self.rate * window_length
        counts = rng.poisson(expected, size=(2, len(window_starts)))
        channels = [np.repeat(np.full(len(window_starts), ch), counts[ch]) for ch in (START, STOP)]
        starts = [np.repeat(window_starts, counts[ch]) for ch in (START, STOP)]
        times = np.concatenate(starts) + rng.random(int(counts.sum())) * window_length
        return times, np.concatenate(channels).astype(np.int64)


class StartStopCounter:
    """Start-stop card with a delay line on the stop channel.

    Detector 0 starts, detector 1 stops; delays are recorded inside the
    symmetric window set by the delay line. In ``"all"`` mode every stop in
    the window is recorded against each start (multi-stop time tagging);
    ``"first"`` keeps only the first stop after each start.
    """

    def __init__(self, bin_edges: np.ndarray, jitter_sigma: float = 0.0, mode: Literal["all", "first"] = "all"):
        self.bin_edges = np.asarray(bin_edges, dtype=float)
        self.half_range = float(max(-self.bin_edges[0], self.bin_edges[-1]))
        self.jitter_sigma = jitter_sigma
        self.mode = mode

    @classmethod
    def from_config(cls, det: DetectionConfig) -> "StartStopCounter":
        edges = make_bin_edges(det.bin_width, det.histogram_half_range, det.rebin_factor)
        return cls(edges, det.jitter_sigma, det.counting_mode)

    def delays(self, times: np.ndarray, channels: np.ndarray) -> np.ndarray:
        starts = np.sort(times[channels == START])
        stops = np.sort(times[channels == STOP])
        if len(starts) == 0 or len(stops) == 0:
            return np.empty(0)
        lo = np.searchsorted(stops, starts - self.half_range, side="left")
        if self.mode == "first":
            keep = lo < len(stops)
            d = stops[lo[keep]] - starts[keep]
            return d[d <= self.half_range]
        hi = np.searchsorted(stops, starts + self.half_range, side="right")
        n_per_start = hi - lo
        total = int(n_per_start.sum())
        if total == 0:
            return np.empty(0)
        start_index = np.repeat(np.arange(len(starts)), n_per_start)
        offsets = np.arange(total) - np.repeat(np.cumsum(n_per_start) - n_per_start, n_per_start)
        return stops[lo[start_index] + offsets] - starts[start_index]

    def record(self, times: np.ndarray, channels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Histogram counts of the jittered detections."""
        if self.jitter_sigma > 0:
            times = times + rng.normal(0.0, self.jitter_sigma, size=len(times))
        counts, _ = np.histogram(self.delays(times, channels), bins=self.bin_edges)
        return counts.astype(np.int64)
