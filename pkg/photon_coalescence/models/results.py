"""
Result containers: coincidence histograms, normalized signals and fits.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field, field_validator

from ..errors import DomainError


@dataclass
class CoincidenceHistogram:
    """Start-stop delay histogram accumulated in one detection configuration."""
    bin_edges: np.ndarray  # s
    counts: np.ndarray
    configuration: str
    total_pulse_cycles: int = 0
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.bin_edges = np.asarray(self.bin_edges, dtype=float)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if len(self.bin_edges) != len(self.counts) + 1:
            raise DomainError("histogram needs exactly one more edge than bins")
        widths = np.diff(self.bin_edges)
        if np.any(widths <= 0):
            raise DomainError("histogram edges must be strictly increasing")
        if not np.allclose(widths, widths[0], rtol=1e-9, atol=0):
            raise DomainError("histogram bins must be uniform")
        if np.any(self.counts < 0):
            raise DomainError("histogram counts must be non-negative")

    @property
    def bin_width(self) -> float:
        return float(self.bin_edges[1] - self.bin_edges[0])

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def merge(self, other: "CoincidenceHistogram") -> "CoincidenceHistogram":
        """Sum two histograms accumulated with identical binning."""
        if self.configuration != other.configuration:
            raise DomainError("cannot merge histograms of different configurations")
        if len(self.bin_edges) != len(other.bin_edges) or not np.allclose(self.bin_edges, other.bin_edges):
            raise DomainError("cannot merge histograms with different binning")
        return CoincidenceHistogram(
            bin_edges=self.bin_edges.copy(),
            counts=self.counts + other.counts,
            configuration=self.configuration,
            total_pulse_cycles=self.total_pulse_cycles + other.total_pulse_cycles,
            metadata=dict(self.metadata),
        )

    __add__ = merge

    def rebin(self, factor: int) -> "CoincidenceHistogram":
        """Combine groups of ``factor`` adjacent bins."""
        if factor < 1 or len(self.counts) % factor:
            raise DomainError(f"cannot rebin {len(self.counts)} bins by {factor}")
        if factor == 1:
            return self
        return CoincidenceHistogram(
            bin_edges=self.bin_edges[::factor],
            counts=self.counts.reshape(-1, factor).sum(axis=1),
            configuration=self.configuration,
            total_pulse_cycles=self.total_pulse_cycles,
            metadata=dict(self.metadata, rebin_factor=factor),
        )


@dataclass
class PeakMeasurement:
    """One coincidence peak on the pulse-period grid."""
    order: int  # multiple of the pulse period
    nominal_center: float  # s
    centroid: float  # s
    height: float  # counts in the highest (rebinned) bin, background subtracted
    area: float  # windowed counts, background subtracted
    area_sigma: float


@dataclass
class NormalizedSignal:
    """Mixer histogram divided by the separator reference peak height."""
    centers: np.ndarray  # s
    values: np.ndarray
    sigma: np.ndarray
    reference_height: float
    reference_sigma: float = 0.0
    bin_width: float = 0.0
    mode: str = "area"
    zero_delay_ratio: float = float("nan")
    zero_delay_sigma: float = float("nan")
    pulse_period: float = 0.0

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.sigma = np.asarray(self.sigma, dtype=float)
        if self.reference_height <= 0:
            raise DomainError("reference peak height must be positive")
        if np.any(self.values < 0):
            raise DomainError("normalized values must be non-negative")


@dataclass
class ZeroPeakData:
    """Background-subtracted samples of the zero-delay peak."""
    tau: np.ndarray  # s
    value: np.ndarray
    sigma: np.ndarray
    background: float = 0.0
    background_sigma: float = 0.0
    bin_width: Optional[float] = None


class FitResult(BaseModel):
    """Outcome of a weighted least-squares fit."""
    model: str
    params: Dict[str, float]
    sigmas: Dict[str, float]
    chi2: float
    dof: int = Field(gt=0)
    converged: bool = True
    at_bound: List[str] = Field(default_factory=list)
    upper_bounds: Dict[str, float] = Field(default_factory=dict)
    residuals: List[float] = Field(default_factory=list)

    @field_validator("sigmas")
    @classmethod
    def _non_negative(cls, value: Dict[str, float]) -> Dict[str, float]:
        for name, sigma in value.items():
            if not sigma >= 0:
                raise ValueError(f"uncertainty of {name} must be >= 0, got {sigma}")
        return value

    @property
    def reduced_chi2(self) -> float:
        return self.chi2 / self.dof

    def summary(self) -> Dict[str, Any]:
        """Compact JSON form: params, sigmas, chi2, dof, converged."""
        out = {
            "params": self.params,
            "sigmas": self.sigmas,
            "chi2": self.chi2,
            "dof": self.dof,
            "converged": self.converged,
        }
        if self.at_bound:
            out["at_bound"] = self.at_bound
        if self.upper_bounds:
            out["upper_bounds"] = self.upper_bounds
        return out
