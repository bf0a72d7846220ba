"""
Configuration settings for the photon coalescence simulation.

All values are SI. Environment overrides are read from the process
environment (optionally populated from a ``.env`` file).
"""

import os
from typing import Dict

from dotenv import load_dotenv
from scipy import constants

load_dotenv()

# Physical constants
HBAR = constants.hbar
K_B = constants.k
PLANCK = constants.h
ATOMIC_MASS = constants.atomic_mass

# Emitter (Rb-87 D2 line)
RB87_MASS = 86.909180527 * ATOMIC_MASS
EMISSION_WAVELENGTH = 780.241e-9
EXCITED_STATE_LIFETIME = 26e-9
DECAY_RATE = 1.0 / EXCITED_STATE_LIFETIME
EXCITATION_PROBABILITY = 0.97

# Dipole trap
TRAP_DEPTH_KELVIN = 1.5e-3
TRAP_DEPTH = K_B * TRAP_DEPTH_KELVIN
TRAP_WAIST = 1.0e-6
TRAP_WAVELENGTH = 850e-9
FREQUENCY_TOLERANCE = 0.05
INITIAL_TEMPERATURE = 120e-6

# Recoil models: kicks applied per excitation/emission cycle
RECOIL_MODELS: Dict[str, Dict] = {
    "two_kick": {"absorption_kick": True, "emission_kick": True},
    "single_kick": {"absorption_kick": False, "emission_kick": True},
    "none": {"absorption_kick": False, "emission_kick": False},
}
DEFAULT_RECOIL_MODEL = "two_kick"

# Integrator: steps per oscillation period of the fastest trap axis
STEPS_PER_TRAP_PERIOD = 50

# Collected fluorescence modes, cut-mirror plane
MODE_WAIST = 90e-6
MAX_PARAXIAL_TILT = 0.1

# Experimental sequence
PULSE_PERIOD = 200e-9
PULSES_PER_BURST = 575
BURST_DURATION = 115e-6
COOLING_DURATION = 885e-6
BURSTS_PER_LOAD = 15
RELOAD_DELAY_MEAN = 300e-3
RETENTION_AFTER_SEQUENCE = 0.65

# Detection
EFFICIENCY_PER_DETECTOR = 0.006
BIN_WIDTH = 1.2e-9
REBIN_FACTOR = 3
DARK_COUNT_RATE = 500.0
JITTER_SIGMA = 0.5e-9
HISTOGRAM_HALF_RANGE = 700e-9
PEAK_WINDOW = 60e-9
ZERO_PEAK_SPAN = 100e-9  # samples handed to the (K, T) fit, inside 4 lifetimes
CONFIGURATIONS = ("mixer", "separator")

# Broadening model
DIFFERENTIAL_SHIFT_FACTOR = 1.0
MEASURED_TEMPERATURE = 180e-6
MEASURED_OVERLAP = 0.7
MEASURED_MAX_OVERLAP = 0.78

# Numerics
QUADRATURE_SPAN_LIFETIMES = 20.0
QUADRATURE_ABS_TOL = 1e-9
OVERLAP_GRID_POINTS = 512
OVERLAP_GRID_SPAN = 5.0
FIT_MIN_POINTS = 8
FIT_MULTI_STARTS = 5
FIT_MAX_EVALUATIONS = 4000
FIT_AMPLITUDE = 0.5
FIT_AMPLITUDE_REL_SIGMA = 0.01
FIT_TEMPERATURE_MAX = 2e-3
FIT_WEIGHTING = "poisson"
FIT_REWEIGHT_ITERATIONS = 6

# Block sizes for deterministic parallel work
ATOMS_PER_BLOCK = 1000
LOADS_PER_BLOCK = 256

# Environment
LOG_LEVEL = os.getenv("PHOTON_COALESCENCE_LOG_LEVEL", "INFO")
DEFAULT_PARALLELISM = int(os.getenv("PHOTON_COALESCENCE_PARALLELISM", str(os.cpu_count() or 1)))
DEFAULT_SEED = int(os.getenv("PHOTON_COALESCENCE_SEED", "42"))
