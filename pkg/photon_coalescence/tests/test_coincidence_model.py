"""
Test cases for the temperature-broadened coincidence signal.
"""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ..config import settings
from ..errors import DomainError
from ..models.config import BroadeningParams
from ..simulation.coincidence_model import (
    DeltaOmegaDistribution,
    averaged_interference_factor,
    broadened_signal,
    dip_profile,
    dip_width,
    monte_carlo_interference_factor,
    monte_carlo_signal,
    peak_ratio,
    residual_area,
    signal_curve,
)

GAMMA = settings.DECAY_RATE


@pytest.mark.parametrize("K, expected", [(0.0, 0.5), (0.5, 0.375), (0.78, 0.1958), (1.0, 0.0)])
def test_peak_ratio(K, expected):
    assert peak_ratio(K) == pytest.approx(expected, abs=1e-12)


def test_peak_ratio_rejects_bad_overlap():
    with pytest.raises(DomainError):
        peak_ratio(1.5)


def test_interference_factor_at_characteristic_delay(measured_broadening):
    tau = 2 * settings.HBAR / (settings.K_B * 180e-6)
    assert averaged_interference_factor(tau, measured_broadening) == pytest.approx(0.125, rel=1e-12)
    assert averaged_interference_factor(0.0, measured_broadening) == 1.0


def test_interference_factor_matches_monte_carlo(measured_broadening, rng):
    tau = np.linspace(-150e-9, 150e-9, 100)
    sampled = monte_carlo_interference_factor(tau, measured_broadening, 1_000_000, rng)
    assert np.max(np.abs(sampled - averaged_interference_factor(tau, measured_broadening))) <= 0.01


def test_signal_matches_monte_carlo(measured_broadening, rng):
    tau = np.linspace(-100e-9, 100e-9, 100)
    sampled = monte_carlo_signal(tau, 0.7, measured_broadening, 1_000_000, rng)
    assert np.max(np.abs(sampled - broadened_signal(tau, 0.7, measured_broadening))) <= 0.01


def test_zero_temperature_has_flat_contrast():
    cold = BroadeningParams(temperature=0.0)
    tau = np.linspace(-80e-9, 80e-9, 41)
    np.testing.assert_allclose(broadened_signal(tau, 0.7, cold), np.exp(-GAMMA * np.abs(tau)) * 0.51, rtol=1e-12)


def test_broadening_widens_the_dip(measured_broadening):
    tau = np.linspace(1e-9, 100e-9, 100)
    cold = BroadeningParams(temperature=0.0)
    hot = broadened_signal(tau, 0.7, measured_broadening)
    assert np.all(hot > broadened_signal(tau, 0.7, cold))
    assert broadened_signal(0.0, 0.7, measured_broadening) == pytest.approx(0.51)


@given(
    tau=st.floats(min_value=-300e-9, max_value=300e-9),
    K=st.floats(min_value=0.0, max_value=1.0),
    T=st.floats(min_value=0.0, max_value=1e-3),
)
def test_signal_between_coherent_and_incoherent_limits(tau, K, T):
    params = BroadeningParams(temperature=T)
    envelope = math.exp(-GAMMA * abs(tau))
    value = broadened_signal(tau, K, params)
    assert (1 - K ** 2) * envelope - 1e-15 <= value <= envelope + 1e-15
    assert value == pytest.approx(broadened_signal(-tau, K, params))


@given(T=st.floats(min_value=1e-6, max_value=1e-3), tau=st.floats(min_value=0.0, max_value=200e-9))
def test_only_product_of_eta_and_temperature_matters(T, tau):
    doubled_eta = BroadeningParams(temperature=T, differential_shift_factor=2.0)
    doubled_T = BroadeningParams(temperature=2 * T, differential_shift_factor=1.0)
    assert averaged_interference_factor(tau, doubled_eta) == pytest.approx(
        averaged_interference_factor(tau, doubled_T), rel=1e-12)


def test_residual_area_grows_with_temperature():
    temperatures = np.linspace(0.0, 500e-6, 11)
    areas = [residual_area(0.7, BroadeningParams(temperature=T)) for T in temperatures]
    assert np.all(np.diff(areas) >= -1e-12)
    assert areas[0] == pytest.approx(0.51 * 2 * (1 - math.exp(-1)), rel=1e-9)


def test_delta_omega_distribution_moments(measured_broadening, rng):
    dist = DeltaOmegaDistribution(measured_broadening)
    samples = dist.sample(400_000, rng)
    assert np.mean(samples) == pytest.approx(0.0, abs=0.01 * dist.std())
    assert np.std(samples) == pytest.approx(dist.std(), rel=0.01)
    deficits = dist.sample_deficits(400_000, rng)
    assert np.mean(deficits) == pytest.approx(1.5 * settings.K_B * 180e-6, rel=0.01)


def test_cold_distribution_is_degenerate(rng):
    dist = DeltaOmegaDistribution(BroadeningParams(temperature=0.0))
    np.testing.assert_array_equal(dist.sample(10, rng), 0.0)
    assert dist.std() == 0.0
    assert dist.characteristic(50e-9) == 1.0


def test_dip_width():
    assert dip_width(BroadeningParams(temperature=0.0)) == math.inf
    width = dip_width(BroadeningParams(temperature=180e-6))
    assert 0 < width < 100e-9
    assert dip_width(BroadeningParams(temperature=360e-6)) < width
    params = BroadeningParams(temperature=180e-6)
    grid = np.linspace(0, 200e-9, 20001)
    peak = broadened_signal(grid, 1.0, params).max()
    assert broadened_signal(width, 1.0, params) == pytest.approx(0.5 * peak, rel=1e-6)


def test_dip_profile_and_curve(measured_broadening):
    tau = np.linspace(-50e-9, 50e-9, 11)
    profiles = dip_profile(tau, [0.0, 180e-6], measured_broadening)
    assert set(profiles) == {0.0, 180e-6}
    np.testing.assert_allclose(profiles[0.0], 0.0, atol=1e-15)
    assert profiles[180e-6][5] == 0.0
    curve = signal_curve(tau, 0.7, measured_broadening)
    assert list(curve.columns) == ["tau_ns", "value"]
    assert curve["tau_ns"].iloc[0] == pytest.approx(-50.0)
