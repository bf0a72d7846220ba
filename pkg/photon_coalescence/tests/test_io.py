"""
Test cases for data files and configuration loading.
"""

import json

import numpy as np
import pytest

from ..config import settings
from ..config.loader import apply_overrides, config_hash, load_config, parse_quantity
from ..data.generator import DataGenerator
from ..data.io import (
    atomic_write_text,
    csv_kind,
    read_histogram_csv,
    read_peak_csv,
    read_signal_csv,
    write_histogram_csv,
    write_peak_csv,
    write_scan_csv,
    write_signal_csv,
)
from ..errors import ConfigError, DataFormatError
from ..models.results import NormalizedSignal


@pytest.fixture
def histogram():
    return DataGenerator(seed=3).generate_histogram({0: 400.0, 1: 800.0}, configuration="mixer",
                                                    total_pulse_cycles=8625)


class TestDataFiles:
    def test_histogram_file(self, tmp_path, histogram):
        path = write_histogram_csv(histogram, tmp_path / "mixer.csv", {"seed": 3})
        loaded = read_histogram_csv(path)
        np.testing.assert_array_equal(loaded.counts, histogram.counts)
        np.testing.assert_allclose(loaded.bin_edges, histogram.bin_edges, rtol=1e-9)
        assert loaded.configuration == "mixer"
        assert loaded.total_pulse_cycles == 8625
        assert loaded.metadata["seed"] == "3"
        assert csv_kind(path) == "histogram"

    def test_signal_file(self, tmp_path):
        centers = np.array([-3.6e-9, 0.0, 3.6e-9])
        signal = NormalizedSignal(centers=centers, values=np.array([0.4, 0.2, 0.4]), sigma=np.full(3, 0.02),
                                  reference_height=12.5, bin_width=3.6e-9, zero_delay_ratio=0.2,
                                  zero_delay_sigma=0.01, pulse_period=200e-9)
        path = write_signal_csv(signal, tmp_path / "signal.csv")
        loaded = read_signal_csv(path)
        np.testing.assert_allclose(loaded.centers, centers, atol=1e-18)
        assert loaded.reference_height == pytest.approx(12.5)
        assert loaded.bin_width == pytest.approx(3.6e-9)
        assert loaded.zero_delay_ratio == pytest.approx(0.2)
        assert loaded.pulse_period == pytest.approx(200e-9)
        assert csv_kind(path) == "normalized_signal"

    def test_peak_file(self, tmp_path):
        peak = DataGenerator(seed=1).generate_zero_peak(0.7, 180e-6)
        path = write_peak_csv(peak, tmp_path / "peak.csv")
        loaded = read_peak_csv(path)
        np.testing.assert_allclose(loaded.value, peak.value, rtol=1e-9)
        assert loaded.bin_width == pytest.approx(peak.bin_width)
        assert csv_kind(path) == "zero_peak"

    def test_kind_from_columns(self, tmp_path):
        path = tmp_path / "bare.csv"
        path.write_text("bin_start_ns,bin_end_ns,counts\n0,1,3\n")
        assert csv_kind(path) == "histogram"
        path.write_text("tau_ns,value,sigma\n0,0.1,0.01\n")
        assert csv_kind(path) == "zero_peak"

    def test_bad_row_reports_its_line(self, tmp_path):
        path = tmp_path / "broken.csv"
        path.write_text("# kind=zero_peak\ntau_ns,value,sigma\n0,0.1,0.01\n3.6,abc,0.01\n")
        with pytest.raises(DataFormatError) as info:
            read_peak_csv(path)
        assert info.value.row == 4
        assert "row 4" in str(info.value)

    def test_missing_column(self, tmp_path):
        path = tmp_path / "short.csv"
        path.write_text("tau_ns,value\n0,0.1\n")
        with pytest.raises(DataFormatError):
            read_peak_csv(path)

    def test_fractional_counts_rejected(self, tmp_path):
        path = tmp_path / "hist.csv"
        path.write_text("bin_start_ns,bin_end_ns,counts\n-0.6,0.6,3\n0.6,1.8,2.5\n")
        with pytest.raises(DataFormatError) as info:
            read_histogram_csv(path)
        assert info.value.row == 3

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("# kind=histogram\n")
        with pytest.raises(DataFormatError):
            read_histogram_csv(path)

    def test_atomic_write_leaves_no_temporaries(self, tmp_path):
        target = tmp_path / "nested" / "out.json"
        atomic_write_text(target, "{}\n")
        atomic_write_text(target, '{"a": 1}\n')
        assert json.loads(target.read_text()) == {"a": 1}
        assert [p.name for p in target.parent.iterdir()] == ["out.json"]

    def test_scan_file_in_micrometres(self, tmp_path):
        path = write_scan_csv([(10e-6, 0.3, 0.01), (-10e-6, 0.31, 0.01)], tmp_path / "scan.csv")
        lines = path.read_text().splitlines()
        assert lines[0] == "# kind=displacement_scan"
        assert lines[1] == "d_um,R,sigma"
        assert lines[2].startswith("10,")


class TestQuantities:
    @pytest.mark.parametrize(
        "text, expected",
        [
            ("115 µs", 115e-6),
            ("115us", 115e-6),
            ("180 uK", 180e-6),
            ("90 µm", 90e-6),
            ("2 MHz", 2e6),
            ("1.2ns", 1.2e-9),
            ("16%", 0.16),
            ("1e-3", 1e-3),
        ],
    )
    def test_parse(self, text, expected):
        assert parse_quantity(text) == pytest.approx(expected)

    @pytest.mark.parametrize("text", ["fast", "12 parsecs", ""])
    def test_parse_rejects(self, text):
        with pytest.raises(ValueError):
            parse_quantity(text)


class TestLoader:
    def test_defaults(self):
        config = load_config()
        assert config.seed is None
        assert config.physics.overlap == pytest.approx(settings.MEASURED_MAX_OVERLAP)

    def test_file_with_units(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({
            "seed": 11,
            "physics": {"temperature": "180 uK", "trap": {"depth": "1.5 mK"}},
            "sequence": {"burst_duration": "115 µs"},
        }))
        config = load_config(path)
        assert config.seed == 11
        assert config.physics.temperature == pytest.approx(180e-6)
        assert config.physics.trap.depth == pytest.approx(1.5e-3 * settings.K_B)
        assert config.sequence.burst_duration == pytest.approx(115e-6)

    def test_overrides(self, tmp_path):
        config = load_config(overrides=["physics.overlap=0.5", "seed=9", "physics.mode=trap_mc",
                                        "physics.temperature=90uK"])
        assert config.physics.overlap == 0.5
        assert config.seed == 9
        assert config.physics.mode == "trap_mc"
        assert config.physics.temperature == pytest.approx(90e-6)

    def test_output_names_stay_text(self, tmp_path):
        config = load_config(overrides=['output.directory="2024"', "output.manifest=5um"])
        assert config.output.directory == "2024"
        assert config.output.manifest == "5um"
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"output": {"directory": "1e3"}, "physics": {"overlap": "0.5"}}))
        config = load_config(path)
        assert config.output.directory == "1e3"
        assert config.physics.overlap == 0.5

    def test_malformed_override(self):
        with pytest.raises(ConfigError):
            apply_overrides({}, ["physics.overlap"])
        with pytest.raises(ConfigError):
            apply_overrides({"seed": 3}, ["seed.value=1"])

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.json")

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{\"seed\": 1,}")
        with pytest.raises(ConfigError) as info:
            load_config(path)
        assert info.value.problems

    def test_validation_problems_are_listed(self, tmp_path):
        path = tmp_path / "invalid.json"
        path.write_text(json.dumps({"physics": {"overlap": 1.4}, "detection": {"rebin_factor": 2}}))
        with pytest.raises(ConfigError) as info:
            load_config(path)
        assert len(info.value.problems) == 2
        assert any("physics.overlap" in p for p in info.value.problems)

    def test_unknown_field_rejected(self):
        with pytest.raises(ConfigError):
            load_config(overrides=["physics.colour=blue"])

    def test_inconsistent_trap_frequency(self):
        with pytest.raises(ConfigError):
            load_config(overrides=["physics.trap.axial_frequency=200000"])

    def test_hash_is_stable(self):
        a = load_config(overrides=["seed=5"])
        b = load_config(overrides=["seed=5"])
        c = load_config(overrides=["seed=6"])
        assert config_hash(a) == config_hash(b)
        assert config_hash(a) != config_hash(c)
        assert len(config_hash(a)) == 64
