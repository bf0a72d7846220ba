"""
Test cases for the event-level experiment simulation.
"""

import logging

import numpy as np
import pytest
from joblib import parallel_backend

from ..analysis.histogram import measure_peaks, normalize, window_fraction
from ..config import settings
from ..errors import ConfigError, DomainError
from ..models.config import DetectionConfig, PhysicsConfig, RunConfig, SequenceConfig, SimulationScale
from ..simulation.coincidence_model import peak_ratio
from ..simulation.engine import ExperimentEngine, TrapTable, _present_bursts, run_experiment

N_LOADS = 1000


@pytest.fixture
def no_loss(detection):
    return detection.model_copy(update={"atom_loss": False})


def simulate(sequence, detection, physics, seed, n_loads=N_LOADS, **kwargs):
    mixer = run_experiment(sequence, detection.model_copy(update={"configuration": "mixer"}), physics, n_loads, seed, **kwargs)
    separator = run_experiment(sequence, detection.model_copy(update={"configuration": "separator"}), physics, n_loads, seed, **kwargs)
    return mixer, separator


@pytest.fixture(scope="module")
def distinguishable_run():
    """K = 0, T = 0 mixer and separator histograms with about 1.3e4 pair events each."""
    det = DetectionConfig(efficiency_per_detector=0.04, background_rate=0.0, jitter_sigma=0.0, atom_loss=False)
    return simulate(SequenceConfig(), det, PhysicsConfig(overlap=0.0), 101)


def test_distinguishable_photons_give_one_half(distinguishable_run):
    mixer, separator = distinguishable_run
    assert mixer.metadata["pair_events"] >= 10_000
    signal = normalize(mixer, separator)
    assert signal.zero_delay_ratio == pytest.approx(0.5, abs=0.02)


def test_maximum_overlap_ratio(sequence, no_loss):
    mixer, separator = simulate(sequence, no_loss, PhysicsConfig(overlap=0.78), 202)
    signal = normalize(mixer, separator)
    assert signal.zero_delay_ratio == pytest.approx(peak_ratio(0.78), abs=0.02)


def test_separator_zero_peak_matches_neighbours(distinguishable_run):
    """Each atom emits at most one photon per pulse, so the zero-delay peak is ordinary."""
    _, separator = distinguishable_run
    peaks = measure_peaks(separator.rebin(3))
    zero = next(p for p in peaks if p.order == 0)
    others = [p for p in peaks if p.order != 0]
    mean = np.mean([p.area for p in others])
    assert abs(zero.area - mean) < 3 * zero.area_sigma


def test_mixer_side_peaks_match_separator(distinguishable_run):
    mixer, separator = distinguishable_run
    mix = {p.order: p for p in measure_peaks(mixer.rebin(3))}
    sep = {p.order: p for p in measure_peaks(separator.rebin(3))}
    mix_side = sum(p.area for o, p in mix.items() if o != 0)
    sep_side = sum(p.area for o, p in sep.items() if o != 0)
    assert mix_side == pytest.approx(sep_side, rel=0.03)


def test_side_peaks_read_one(distinguishable_run):
    """Self-normalized separator: every side peak holds one full reference area."""
    _, separator = distinguishable_run
    signal = normalize(separator, separator)
    for p in measure_peaks(separator.rebin(3)):
        if p.order == 0:
            continue
        inside = np.abs(signal.centers - p.nominal_center) <= 60e-9
        normalized_area = signal.values[inside].sum() * settings.DECAY_RATE * signal.bin_width / 2.0
        expected = window_fraction(signal.centers, signal.bin_width, p.nominal_center, 60e-9, settings.DECAY_RATE)
        assert normalized_area == pytest.approx(expected, abs=0.05)


def test_peaks_on_pulse_grid(distinguishable_run):
    mixer, _ = distinguishable_run
    hist = mixer.rebin(3)
    for p in measure_peaks(hist):
        if p.area > 3 * p.area_sigma:
            assert abs(p.centroid - p.nominal_center) <= hist.bin_width


def test_fixed_seed_is_reproducible(sequence, detection):
    det = detection.model_copy(update={"background_rate": 500.0, "jitter_sigma": 0.5e-9})
    physics = PhysicsConfig(overlap=0.7, temperature=180e-6)
    a = run_experiment(sequence, det, physics, 300, 7, loads_per_block=64)
    b = run_experiment(sequence, det, physics, 300, 7, loads_per_block=64)
    with parallel_backend("threading"):
        c = run_experiment(sequence, det, physics, 300, 7, n_jobs=3, loads_per_block=64)
    np.testing.assert_array_equal(a.counts, b.counts)
    np.testing.assert_array_equal(a.counts, c.counts)
    assert a.total_pulse_cycles == c.total_pulse_cycles


@pytest.mark.parametrize("K, seed", [(0.5, 211), (1.0, 212)])
def test_ratio_follows_overlap(sequence, no_loss, K, seed):
    signal = normalize(*simulate(sequence, no_loss, PhysicsConfig(overlap=K), seed))
    assert signal.zero_delay_ratio == pytest.approx(peak_ratio(K), abs=0.02)


def test_duration_invariance(sequence, no_loss):
    physics = PhysicsConfig(overlap=0.5)
    short = normalize(*simulate(sequence, no_loss, physics, 305, n_loads=800))
    long = normalize(*simulate(sequence, no_loss, physics, 306, n_loads=1600))
    assert long.zero_delay_ratio == pytest.approx(short.zero_delay_ratio, abs=0.03)


def test_background_invariance(sequence, no_loss):
    physics = PhysicsConfig(overlap=0.5)
    quiet = normalize(*simulate(sequence, no_loss, physics, 307))
    noisy_det = no_loss.model_copy(update={"background_rate": 2e3})
    noisy = normalize(*simulate(sequence, noisy_det, physics, 308))
    assert noisy.zero_delay_ratio == pytest.approx(quiet.zero_delay_ratio, abs=0.03)


def test_efficiency_invariance(sequence, no_loss):
    physics = PhysicsConfig(overlap=0.5)
    low = normalize(*simulate(sequence, no_loss, physics, 303, n_loads=1200))
    high_det = no_loss.model_copy(update={"efficiency_per_detector": 0.08})
    high = normalize(*simulate(sequence, high_det, physics, 304, n_loads=300))
    assert high.zero_delay_ratio == pytest.approx(low.zero_delay_ratio, abs=0.03)


def test_atom_loss_shortens_sequences(sequence, detection):
    physics = PhysicsConfig(overlap=0.0)
    kept = run_experiment(sequence, detection.model_copy(update={"atom_loss": False}), physics, 200, 5)
    lossy = run_experiment(sequence, detection, physics, 200, 5)
    assert kept.total_pulse_cycles == 200 * sequence.pulses_per_load
    assert lossy.total_pulse_cycles < kept.total_pulse_cycles
    assert lossy.metadata["pair_events"] < kept.metadata["pair_events"]
    assert lossy.metadata["duration_s"] > 200 * 0.3 * 0.5


def test_background_fills_the_gaps(sequence, detection):
    det = detection.model_copy(update={"efficiency_per_detector": 0.0, "background_rate": 2e4})
    hist = run_experiment(sequence, det, PhysicsConfig(), 50, 9)
    assert hist.total > 0
    peaks = measure_peaks(hist.rebin(3))
    assert all(abs(p.area) < 5 * p.area_sigma + 3 for p in peaks)


def test_zero_efficiency_warns(sequence, detection, caplog):
    det = detection.model_copy(update={"efficiency_per_detector": 0.0})
    with caplog.at_level(logging.WARNING):
        hist = run_experiment(sequence, det, PhysicsConfig(), 10, 1)
    assert hist.total == 0
    assert "efficiency is zero" in caplog.text
    assert "empty" in caplog.text


def test_needs_loads(sequence, detection):
    with pytest.raises(DomainError):
        run_experiment(sequence, detection, PhysicsConfig(), 0, 1)


def test_trap_mc_mode_broadens_the_dip(sequence, no_loss):
    physics = PhysicsConfig(overlap=0.7, mode="trap_mc")
    mixer, separator = simulate(sequence, no_loss, physics, 404, n_loads=800, trap_ensemble_size=300)
    ratio = normalize(mixer, separator).zero_delay_ratio
    assert peak_ratio(0.7) - 0.03 < ratio < 0.5
    assert mixer.metadata["mode"] == "trap_mc"


def test_engine_requires_seed():
    with pytest.raises(ConfigError):
        ExperimentEngine(RunConfig())


def test_engine_runs_both_configurations():
    config = RunConfig(seed=12, scale=SimulationScale(n_loads=300, loads_per_block=100), parallelism=1)
    config.detection.efficiency_per_detector = 0.04
    config.physics.overlap = 0.0
    engine = ExperimentEngine(config)
    signal = engine.normalized()
    assert set(engine.histograms) == {"mixer", "separator"}
    assert engine.histograms["mixer"].configuration == "mixer"
    assert signal.zero_delay_ratio == pytest.approx(0.5, abs=0.08)


def _flat_table(sequence, escaped):
    lightshifts = np.full((4, sequence.pulses_per_burst), 1e-28)
    return TrapTable(lightshifts=lightshifts, escaped=np.full(4, escaped))


def test_heating_losses_end_the_load(sequence, no_loss):
    physics = PhysicsConfig(overlap=0.5, mode="trap_mc")
    hot = run_experiment(sequence, no_loss, physics, 50, 3, trap_table=_flat_table(sequence, True))
    assert hot.total_pulse_cycles == 50 * sequence.pulses_per_burst
    cold = run_experiment(sequence, no_loss, physics, 50, 3, trap_table=_flat_table(sequence, False))
    assert cold.total_pulse_cycles == 50 * sequence.pulses_per_load


def test_in_burst_losses_are_not_counted_twice(sequence, detection, rng):
    """When the trap table already loses the whole budget, no extra loss is drawn."""
    per_burst = detection.retention ** (1.0 / sequence.bursts_per_load)
    present = _present_bursts(500, sequence, detection, rng, in_burst_retention=per_burst)
    assert np.all(present == sequence.bursts_per_load)
    assert np.all(_present_bursts(500, sequence, detection, rng) <= sequence.bursts_per_load)
    assert TrapTable(np.zeros((4, 1)), np.array([True, False, False, False])).retention == 0.75
