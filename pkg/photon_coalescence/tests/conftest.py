"""
Shared fixtures and test configuration.
"""

import numpy as np
import pytest
from hypothesis import HealthCheck, settings as hypothesis_settings

from ..models.config import BroadeningParams, DetectionConfig, EmitterConstants, SequenceConfig, TrapConfig

hypothesis_settings.register_profile(
    "photon",
    max_examples=60,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
hypothesis_settings.load_profile("photon")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-statistics Monte-Carlo checks")


@pytest.fixture
def rng():
    """Fixed-seed generator."""
    return np.random.default_rng(20240601)


@pytest.fixture
def measured_broadening():
    """T = 180 uK, eta = 1, 26 ns lifetime."""
    return BroadeningParams(temperature=180e-6)


@pytest.fixture
def harmonic_trap():
    return TrapConfig(potential="harmonic")


@pytest.fixture
def gaussian_trap():
    return TrapConfig()


@pytest.fixture
def emitter():
    return EmitterConstants()


@pytest.fixture
def sequence():
    return SequenceConfig()


@pytest.fixture
def detection():
    """Quiet detectors at raised efficiency so small runs collect enough pairs."""
    return DetectionConfig(efficiency_per_detector=0.04, background_rate=0.0, jitter_sigma=0.0)
