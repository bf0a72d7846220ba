"""
Test cases for the command-line interface.
"""

import json
import math

import pytest

from ..data.generator import DataGenerator
from ..data.io import read_histogram_csv, read_signal_csv, write_histogram_csv, write_peak_csv
from ..main import EXIT_CONFIG, EXIT_IO, EXIT_OK, main


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out
    return code, (json.loads(out) if code == EXIT_OK and out.strip() else None)


class TestOverlap:
    def test_waist_mismatch(self, capsys):
        code, payload = run(capsys, "overlap", "--waist-mismatch", "0.16")
        assert code == EXIT_OK
        assert payload["K"] == pytest.approx(0.97, abs=0.02)
        assert payload["R"] == pytest.approx(0.5 * (1 - payload["K"] ** 2))
        assert payload["convention"].startswith("K = ")
        assert [f["kind"] for f in payload["budget"]["factors"]] == ["waist_mismatch"]

    def test_offset_with_units(self, capsys, tmp_path):
        target = tmp_path / "overlap.json"
        code, payload = run(capsys, "overlap", "--offset", "90um", "--waist", "90 µm", "--output", target)
        assert code == EXIT_OK
        assert payload["K"] == pytest.approx(math.exp(-0.5), rel=1e-4)
        assert json.loads(target.read_text())["K"] == payload["K"]

    def test_budget_lists_each_error(self, capsys):
        code, payload = run(capsys, "overlap", "--offset", "9um", "--tilt", "1mrad", "--waist-mismatch", "0.05")
        assert code == EXIT_OK
        kinds = [f["kind"] for f in payload["budget"]["factors"]]
        assert kinds == ["transverse_offset", "axis_tilt", "waist_mismatch"]
        assert payload["budget"]["K_exact"] == pytest.approx(payload["K"], rel=1e-9)

    def test_bad_unit_is_a_usage_error(self):
        with pytest.raises(SystemExit) as info:
            main(["overlap", "--offset", "9 furlongs"])
        assert info.value.code == 2


class TestFit:
    def test_zero_peak_file(self, capsys, tmp_path):
        peak = DataGenerator(seed=4).generate_zero_peak(0.7, 180e-6, noiseless=True)
        path = write_peak_csv(peak, tmp_path / "peak.csv")
        code, payload = run(capsys, "fit", path, "--output", tmp_path / "fit.json")
        assert code == EXIT_OK
        assert payload["params"]["K"] == pytest.approx(0.7, abs=1e-5)
        assert payload["params"]["T"] == pytest.approx(180e-6, rel=1e-4)
        assert (tmp_path / "fit.json").exists()

    def test_histogram_pair(self, capsys, tmp_path):
        generator = DataGenerator(seed=5)
        orders = range(-3, 4)
        mixer_areas = {m: 20000.0 for m in orders}
        mixer_areas[0] = 20000.0 * 0.255
        mixer = write_histogram_csv(generator.generate_histogram(mixer_areas, configuration="mixer"), tmp_path / "m.csv")
        separator = write_histogram_csv(generator.generate_histogram({m: 20000.0 for m in orders}), tmp_path / "s.csv")
        code, payload = run(capsys, "fit", mixer, "--separator", separator)
        assert code == EXIT_OK
        assert 0.0 <= payload["params"]["K"] <= 1.0

    def test_histogram_without_separator(self, capsys, tmp_path):
        hist = DataGenerator(seed=6).generate_histogram({0: 100.0}, configuration="mixer")
        path = write_histogram_csv(hist, tmp_path / "m.csv")
        code, _ = run(capsys, "fit", path)
        assert code == EXIT_CONFIG

    def test_truncated_peak(self, capsys, tmp_path):
        peak = DataGenerator(seed=4).generate_zero_peak(0.7, 180e-6, window=10e-9)
        path = write_peak_csv(peak, tmp_path / "short.csv")
        code, _ = run(capsys, "fit", path)
        assert code == EXIT_CONFIG

    def test_missing_input(self, capsys, tmp_path):
        code, _ = run(capsys, "fit", tmp_path / "absent.csv")
        assert code == EXIT_IO

    def test_malformed_input(self, capsys, tmp_path):
        path = tmp_path / "peak.csv"
        path.write_text("tau_ns,value,sigma\n0,x,0.1\n")
        code, _ = run(capsys, "fit", path)
        assert code == EXIT_CONFIG


class TestSimulate:
    def test_requires_seed(self, capsys, tmp_path):
        code, _ = run(capsys, "simulate", "--loads", 10, "--out", tmp_path)
        assert code == EXIT_CONFIG
        assert not (tmp_path / "manifest.json").exists()

    def test_writes_histograms_signal_and_manifest(self, capsys, tmp_path):
        code, summary = run(
            capsys, "simulate", "--seed", 21, "--loads", 1000, "--k", 0.0, "--temperature", 0, "--parallelism", 1,
            "--out", tmp_path, "--set", "detection.efficiency_per_detector=0.04", "--set", "detection.atom_loss=false",
        )
        assert code == EXIT_OK
        mixer = read_histogram_csv(tmp_path / "mixer_histogram.csv")
        separator = read_histogram_csv(tmp_path / "separator_histogram.csv")
        assert mixer.configuration == "mixer" and separator.configuration == "separator"
        assert mixer.total == summary["mixer_coincidences"]
        signal = read_signal_csv(tmp_path / "normalized_signal.csv")
        assert signal.zero_delay_ratio == pytest.approx(0.5, abs=0.02)
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["seed"] == 21
        assert manifest["config_hash"] == summary["hash"]
        assert manifest["config"]["physics"]["overlap"] == 0.0
        assert set(manifest["outputs"]) == {"mixer", "separator", "normalized_signal"}

    def test_simulated_histograms_fit_back(self, capsys, tmp_path):
        """Simulate at K = 0.7, T = 180 uK, then recover both from the histograms."""
        code, _ = run(
            capsys, "simulate", "--seed", 33, "--loads", 1000, "--k", 0.7, "--temperature", "180uK",
            "--parallelism", 1, "--out", tmp_path,
            "--set", "detection.efficiency_per_detector=0.08", "--set", "detection.atom_loss=false",
            "--set", "detection.jitter_sigma=0", "--set", "detection.background_rate=0",
        )
        assert code == EXIT_OK
        code, payload = run(capsys, "fit", tmp_path / "mixer_histogram.csv",
                            "--separator", tmp_path / "separator_histogram.csv")
        assert code == EXIT_OK
        assert abs(payload["params"]["K"] - 0.7) <= 0.05
        assert abs(payload["params"]["T"] - 180e-6) <= 50e-6

    def test_single_configuration(self, capsys, tmp_path):
        code, summary = run(capsys, "simulate", "--seed", 3, "--loads", 20, "--parallelism", 1,
                            "--out", tmp_path, "--configuration", "separator")
        assert code == EXIT_OK
        assert (tmp_path / "separator_histogram.csv").exists()
        assert not (tmp_path / "normalized_signal.csv").exists()
        assert "zero_delay_ratio" not in summary

    def test_unknown_configuration_is_a_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as info:
            main(["simulate", "--seed", "1", "--out", str(tmp_path), "--configuration", "both"])
        assert info.value.code == 2

    def test_invalid_config_file(self, capsys, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"seed": 1, "physics": {"overlap": 2}}))
        code, _ = run(capsys, "simulate", "--config", path, "--out", tmp_path)
        assert code == EXIT_CONFIG


class TestScan:
    def test_analytic_scan(self, capsys, tmp_path):
        code, payload = run(
            capsys, "scan", "--out", tmp_path, "--kmax", 0.78,
            "--displacements", "0um", "30um", "60um", "90um", "120um",
        )
        assert code == EXIT_OK
        assert len(payload["points"]) == 5
        assert payload["points"][0]["R"] == pytest.approx(0.5 * (1 - 0.78 ** 2))
        assert payload["fit"]["params"]["K_max"] == pytest.approx(0.78, abs=1e-6)
        assert (tmp_path / "displacement_scan.csv").exists()
        assert (tmp_path / "displacement_scan_fit.json").exists()

    def test_simulated_scan_recovers_kmax(self, capsys, tmp_path):
        path = tmp_path / "scan.json"
        path.write_text(json.dumps({
            "seed": 17,
            "displacements": [f"{d}um" for d in range(-135, 136, 45)],
            "detection": {"atom_loss": False, "efficiency_per_detector": 0.04, "background_rate": 0.0},
        }))
        code, payload = run(capsys, "scan", "--config", path, "--mode", "simulated", "--kmax", 0.78,
                            "--loads", 500, "--parallelism", 1, "--out", tmp_path)
        assert code == EXIT_OK
        assert len(payload["points"]) == 7
        assert all(p["sigma"] > 0 for p in payload["points"])
        assert payload["fit"]["params"]["K_max"] == pytest.approx(0.78, abs=0.05)

    def test_short_scan_skips_fit(self, capsys, tmp_path):
        code, payload = run(capsys, "scan", "--out", tmp_path, "--displacements", "0um", "90um")
        assert code == EXIT_OK
        assert "fit" not in payload

    def test_single_point_rejected(self, capsys, tmp_path):
        code, _ = run(capsys, "scan", "--out", tmp_path, "--displacements", "0um")
        assert code == EXIT_CONFIG

    def test_simulated_scan_needs_seed(self, capsys, tmp_path):
        code, _ = run(capsys, "scan", "--mode", "simulated", "--out", tmp_path, "--displacements", "0um", "90um")
        assert code == EXIT_CONFIG


def test_trap_command(capsys, tmp_path):
    trajectory = tmp_path / "atom.csv"
    code, payload = run(capsys, "trap", "--atoms", 200, "--seed", 1, "--parallelism", 1,
                        "--initial-temperature", "120uK", "--debug-trajectory", trajectory)
    assert code == EXIT_OK
    assert payload["initial_temperature"] == pytest.approx(120e-6)
    assert 0.0 < payload["retention"] <= 1.0
    assert payload["heating"] > 0
    assert trajectory.read_text().splitlines()[1].startswith("pulse_index,")


def test_missing_command():
    with pytest.raises(SystemExit):
        main([])
