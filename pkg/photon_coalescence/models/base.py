"""
Base value types for the photon coalescence simulation.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Literal, Optional, Tuple

import numpy as np

from ..config import settings
from ..errors import DomainError

Vector3 = Tuple[float, float, float]

ALIGNMENT_KINDS = ("waist_mismatch", "transverse_offset", "focal_shift", "axis_tilt")


@dataclass(frozen=True)
class PhotonWavepacket:
    """Temporal emission amplitude of one spontaneously emitted photon."""
    decay_rate: float = settings.DECAY_RATE  # 1/s
    carrier_offset: float = 0.0  # rad/s relative to the unshifted line
    emission_time: float = 0.0  # s

    def __post_init__(self):
        if not math.isfinite(self.decay_rate) or self.decay_rate <= 0:
            raise DomainError(f"decay rate must be positive and finite, got {self.decay_rate}")
        if not math.isfinite(self.carrier_offset) or not math.isfinite(self.emission_time):
            raise DomainError("carrier offset and emission time must be finite")

    @property
    def lifetime(self) -> float:
        return 1.0 / self.decay_rate


@dataclass(frozen=True)
class GaussianMode:
    """Fundamental Gaussian spatial mode of one collected fluorescence beam."""
    waist: float = settings.MODE_WAIST  # 1/e^2 intensity radius, m
    focus: Vector3 = (0.0, 0.0, 0.0)  # m
    direction: Vector3 = (0.0, 0.0, 1.0)  # unit vector
    wavelength: float = settings.EMISSION_WAVELENGTH  # m

    def __post_init__(self):
        if not math.isfinite(self.waist) or self.waist <= 0:
            raise DomainError(f"waist must be positive, got {self.waist}")
        if not math.isfinite(self.wavelength) or self.wavelength <= 0:
            raise DomainError(f"wavelength must be positive, got {self.wavelength}")
        if len(self.focus) != 3 or not all(math.isfinite(c) for c in self.focus):
            raise DomainError(f"focus must be a finite 3-vector, got {self.focus}")
        if len(self.direction) != 3:
            raise DomainError(f"direction must be a 3-vector, got {self.direction}")
        norm = math.sqrt(sum(c * c for c in self.direction))
        if abs(norm - 1.0) > 1e-12:
            raise DomainError(f"direction must be a unit vector, |d| = {norm}")
        if self.direction[2] <= 0:
            raise DomainError("modes must propagate along +z")

    @classmethod
    def pointing(cls, direction: Vector3, **kwargs) -> "GaussianMode":
        """Build a mode from an arbitrary (unnormalised) propagation direction."""
        d = np.asarray(direction, dtype=float)
        d = d / np.linalg.norm(d)
        return cls(direction=tuple(float(c) for c in d), **kwargs)

    @property
    def rayleigh_range(self) -> float:
        return math.pi * self.waist ** 2 / self.wavelength

    @property
    def wavenumber(self) -> float:
        return 2.0 * math.pi / self.wavelength

    @property
    def divergence(self) -> float:
        """Far-field half-angle divergence."""
        return self.wavelength / (math.pi * self.waist)

    def tilt(self) -> Tuple[float, float]:
        """Small-angle tilts (x, y) of the propagation axis from +z."""
        dx, dy, dz = self.direction
        return dx / dz, dy / dz

    def shifted(self, dx: float = 0.0, dy: float = 0.0, dz: float = 0.0) -> "GaussianMode":
        x, y, z = self.focus
        return replace(self, focus=(x + dx, y + dy, z + dz))


@dataclass(frozen=True)
class AlignmentError:
    """One alignment imperfection between the two collected modes.

    Magnitudes are fractional: waist_mismatch relative to the waist,
    transverse_offset relative to the waist, focal_shift relative to the
    Rayleigh range and axis_tilt relative to the far-field divergence.
    """
    kind: Literal["waist_mismatch", "transverse_offset", "focal_shift", "axis_tilt"]
    magnitude: float

    def __post_init__(self):
        if self.kind not in ALIGNMENT_KINDS:
            raise DomainError(f"unknown alignment error kind {self.kind!r}")
        if not math.isfinite(self.magnitude) or self.magnitude < 0:
            raise DomainError(f"alignment magnitude must be >= 0, got {self.magnitude}")

    def apply(self, mode: GaussianMode) -> GaussianMode:
        """Return ``mode`` perturbed by this error."""
        if self.kind == "waist_mismatch":
            return replace(mode, waist=mode.waist * (1.0 + self.magnitude))
        if self.kind == "transverse_offset":
            return mode.shifted(dx=self.magnitude * mode.waist)
        if self.kind == "focal_shift":
            return mode.shifted(dz=self.magnitude * mode.rayleigh_range)
        angle = self.magnitude * mode.divergence
        dx, dy, dz = mode.direction
        tilted = np.array([dx + math.tan(angle) * dz, dy, dz])
        tilted /= np.linalg.norm(tilted)
        return replace(mode, direction=tuple(float(c) for c in tilted))


@dataclass
class AtomState:
    """Phase-space coordinates of one trapped atom."""
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))  # m
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))  # m/s
    escaped: bool = False

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(3)
        self.velocity = np.asarray(self.velocity, dtype=float).reshape(3)


@dataclass
class AtomEnsemble:
    """Vectorised batch of atoms, arrays of shape (n, 3)."""
    positions: np.ndarray
    velocities: np.ndarray
    escaped: Optional[np.ndarray] = None

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, dtype=float))
        self.velocities = np.atleast_2d(np.asarray(self.velocities, dtype=float))
        if self.escaped is None:
            self.escaped = np.zeros(len(self.positions), dtype=bool)

    def __len__(self) -> int:
        return len(self.positions)

    @classmethod
    def from_states(cls, *states: AtomState) -> "AtomEnsemble":
        return cls(
            positions=np.array([s.position for s in states]),
            velocities=np.array([s.velocity for s in states]),
            escaped=np.array([s.escaped for s in states]),
        )

    def state(self, index: int) -> AtomState:
        return AtomState(
            position=self.positions[index].copy(),
            velocity=self.velocities[index].copy(),
            escaped=bool(self.escaped[index]),
        )


@dataclass(frozen=True)
class LightshiftRecord:
    """Lightshift experienced by an atom when it emitted at a given pulse."""
    pulse_index: int
    lightshift: float  # J

    @property
    def microkelvin(self) -> float:
        return self.lightshift / settings.K_B * 1e6
