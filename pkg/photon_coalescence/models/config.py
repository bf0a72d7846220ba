"""
Configuration models for the photon coalescence simulation.
"""

import math
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..config import settings


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class TrapConfig(_Model):
    """Optical dipole trap holding one atom."""
    depth: float = Field(settings.TRAP_DEPTH, gt=0)  # J
    beam_waist: float = Field(settings.TRAP_WAIST, gt=0)  # m
    beam_wavelength: float = Field(settings.TRAP_WAVELENGTH, gt=0)  # m
    atom_mass: float = Field(settings.RB87_MASS, gt=0)  # kg
    axial_frequency: Optional[float] = Field(None, gt=0)  # Hz, along the pulsed beam
    radial_frequencies: Optional[Tuple[float, float]] = None  # Hz, (transverse, along trap beam)
    potential: Literal["gaussian", "harmonic"] = "gaussian"
    frequency_tolerance: float = Field(settings.FREQUENCY_TOLERANCE, gt=0)

    @property
    def rayleigh_range(self) -> float:
        return math.pi * self.beam_waist ** 2 / self.beam_wavelength

    def curvature_frequencies(self) -> Tuple[float, float, float]:
        """Harmonic frequencies (Hz) of the Gaussian potential at its bottom."""
        radial = math.sqrt(4 * self.depth / (self.atom_mass * self.beam_waist ** 2)) / (2 * math.pi)
        longitudinal = math.sqrt(2 * self.depth / (self.atom_mass * self.rayleigh_range ** 2)) / (2 * math.pi)
        return radial, radial, longitudinal

    @property
    def frequencies(self) -> Tuple[float, float, float]:
        """Trap frequencies (Hz) along x (pulsed beam), y and z (trap beam)."""
        fx, fy, fz = self.curvature_frequencies()
        if self.axial_frequency is not None:
            fx = self.axial_frequency
        if self.radial_frequencies is not None:
            fy, fz = self.radial_frequencies
        return fx, fy, fz

    @property
    def angular_frequencies(self) -> Tuple[float, float, float]:
        return tuple(2 * math.pi * f for f in self.frequencies)

    @model_validator(mode="after")
    def _check_curvature(self) -> "TrapConfig":
        if self.radial_frequencies is not None and any(f <= 0 for f in self.radial_frequencies):
            raise ValueError("radial frequencies must be positive")
        if self.potential == "gaussian":
            for name, configured, derived in zip(("x", "y", "z"), self.frequencies, self.curvature_frequencies()):
                if abs(configured - derived) > self.frequency_tolerance * derived:
                    raise ValueError(
                        f"trap frequency along {name} ({configured:.4g} Hz) inconsistent with "
                        f"Gaussian curvature ({derived:.4g} Hz)"
                    )
        return self


class EmitterConstants(_Model):
    """Single-photon emitter properties (Rb-87 D2 cycling transition)."""
    mass: float = Field(settings.RB87_MASS, gt=0)  # kg
    wavelength: float = Field(settings.EMISSION_WAVELENGTH, gt=0)  # m
    excitation_probability: float = Field(settings.EXCITATION_PROBABILITY, gt=0, le=1)
    lifetime: float = Field(settings.EXCITED_STATE_LIFETIME, gt=0)  # s
    recoil_model: Literal["two_kick", "single_kick", "none"] = settings.DEFAULT_RECOIL_MODEL

    @property
    def recoil_velocity(self) -> float:
        return settings.PLANCK / (self.wavelength * self.mass)

    @property
    def recoil_energy(self) -> float:
        return 0.5 * self.mass * self.recoil_velocity ** 2

    @property
    def decay_rate(self) -> float:
        return 1.0 / self.lifetime


class BroadeningParams(_Model):
    """Parameters of the thermal lightshift broadening model."""
    temperature: float = Field(settings.MEASURED_TEMPERATURE, ge=0)  # K
    differential_shift_factor: float = Field(settings.DIFFERENTIAL_SHIFT_FACTOR, ge=0)
    decay_rate: float = Field(settings.DECAY_RATE, gt=0)  # 1/s

    @property
    def frequency_scale(self) -> float:
        """Scale (rad/s) of the gamma-distributed frequency shifts, eta*k_B*T/(2*hbar)."""
        return self.differential_shift_factor * settings.K_B * self.temperature / (2 * settings.HBAR)


class SequenceConfig(_Model):
    """Burst / cooling / reload timing of one atom-pair load."""
    pulse_period: float = Field(settings.PULSE_PERIOD, gt=0)
    pulses_per_burst: int = Field(settings.PULSES_PER_BURST, gt=0)
    burst_duration: float = Field(settings.BURST_DURATION, gt=0)
    cooling_duration: float = Field(settings.COOLING_DURATION, gt=0)
    bursts_per_load: int = Field(settings.BURSTS_PER_LOAD, gt=0)
    reload_delay_mean: float = Field(settings.RELOAD_DELAY_MEAN, gt=0)

    @model_validator(mode="after")
    def _check_burst(self) -> "SequenceConfig":
        if abs(self.pulses_per_burst * self.pulse_period - self.burst_duration) > self.pulse_period * (1 + 1e-9):
            raise ValueError(
                f"{self.pulses_per_burst} pulses every {self.pulse_period:g} s do not fill a "
                f"{self.burst_duration:g} s burst"
            )
        return self

    @property
    def burst_spacing(self) -> float:
        return self.burst_duration + self.cooling_duration

    @property
    def pulses_per_load(self) -> int:
        return self.pulses_per_burst * self.bursts_per_load


class DetectionConfig(_Model):
    """Detectors, counting card and histogram presentation."""
    efficiency_per_detector: float = Field(settings.EFFICIENCY_PER_DETECTOR, ge=0, le=1)
    bin_width: float = Field(settings.BIN_WIDTH, gt=0)
    rebin_factor: int = Field(settings.REBIN_FACTOR, ge=1)
    background_rate: float = Field(settings.DARK_COUNT_RATE, ge=0)  # counts/s per detector
    jitter_sigma: float = Field(settings.JITTER_SIGMA, ge=0)
    configuration: Literal["mixer", "separator"] = "mixer"
    counting_mode: Literal["all", "first"] = "all"  # stops kept per start
    histogram_half_range: float = Field(settings.HISTOGRAM_HALF_RANGE, gt=0)
    peak_window: float = Field(settings.PEAK_WINDOW, gt=0)
    normalization_mode: Literal["area", "height"] = "area"
    atom_loss: bool = True
    retention: float = Field(settings.RETENTION_AFTER_SEQUENCE, gt=0, le=1)

    @model_validator(mode="after")
    def _check_rebin(self) -> "DetectionConfig":
        if self.rebin_factor % 2 == 0:
            raise ValueError("rebin factor must be odd so the zero-delay bin stays centred")
        return self


class ModeConfig(_Model):
    """Collected fluorescence modes in the cut-mirror plane."""
    waist: float = Field(settings.MODE_WAIST, gt=0)
    wavelength: float = Field(settings.EMISSION_WAVELENGTH, gt=0)
    waist_mismatch: float = Field(0.0, ge=0)
    transverse_offset: float = 0.0  # m
    focal_shift: float = 0.0  # m
    axis_tilt: float = Field(0.0, ge=0, le=settings.MAX_PARAXIAL_TILT)  # rad


class PhysicsConfig(_Model):
    """What is interfering: spatial overlap and emitter frequency spread."""
    overlap: float = Field(settings.MEASURED_MAX_OVERLAP, ge=0, le=1)
    temperature: float = Field(0.0, ge=0)  # K, analytic broadening
    mode: Literal["analytic", "trap_mc"] = "analytic"
    differential_shift_factor: float = Field(settings.DIFFERENTIAL_SHIFT_FACTOR, ge=0)
    initial_temperature: float = Field(settings.INITIAL_TEMPERATURE, ge=0)  # K, trap_mc start
    trap: TrapConfig = Field(default_factory=TrapConfig)
    emitter: EmitterConstants = Field(default_factory=EmitterConstants)
    modes: ModeConfig = Field(default_factory=ModeConfig)

    @model_validator(mode="after")
    def _check_mass(self) -> "PhysicsConfig":
        if not math.isclose(self.trap.atom_mass, self.emitter.mass, rel_tol=1e-9):
            raise ValueError("trap.atom_mass and emitter.mass must agree")
        return self

    def broadening(self) -> BroadeningParams:
        return BroadeningParams(
            temperature=self.temperature,
            differential_shift_factor=self.differential_shift_factor,
            decay_rate=self.emitter.decay_rate,
        )


class SimulationScale(_Model):
    n_loads: int = Field(20000, ge=1)
    loads_per_block: int = Field(settings.LOADS_PER_BLOCK, ge=1)
    atoms_per_block: int = Field(settings.ATOMS_PER_BLOCK, ge=1)
    trap_ensemble_size: int = Field(2000, ge=1)


class OutputConfig(_Model):
    directory: str = "results"
    mixer_histogram: str = "mixer_histogram.csv"
    separator_histogram: str = "separator_histogram.csv"
    normalized_signal: str = "normalized_signal.csv"
    manifest: str = "manifest.json"


class RunConfig(_Model):
    """Complete description of one simulation run."""
    physics: PhysicsConfig = Field(default_factory=PhysicsConfig)
    sequence: SequenceConfig = Field(default_factory=SequenceConfig)
    detection: DetectionConfig = Field(default_factory=DetectionConfig)
    scale: SimulationScale = Field(default_factory=SimulationScale)
    seed: Optional[int] = Field(None, ge=0, lt=2 ** 64)
    parallelism: int = Field(settings.DEFAULT_PARALLELISM, ge=1)
    output: OutputConfig = Field(default_factory=OutputConfig)
    displacements: List[float] = Field(default_factory=list)  # m, displacement scan
