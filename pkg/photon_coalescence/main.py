"""
Command-line entry point: simulate, overlap, fit, scan and trap sub-commands.
"""

import argparse
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .analysis.histogram import extract_zero_peak, normalize
from .analysis.inference import fit_displacement_scan, fit_zero_peak
from .config import settings
from .config.loader import config_dict, config_hash, load_config, parse_quantity
from .data import io
from .errors import CoalescenceError, ConfigError, DataFormatError, DomainError, NumericalError, PreconditionError
from .models.base import AlignmentError, GaussianMode
from .models.config import RunConfig
from .simulation.engine import ExperimentEngine, run_experiment
from .simulation.spatial_mode import alignment_budget, build_modes, displacement_scan, offset_overlap, overlap
from .simulation.trap_dynamics import block_seed, lightshift_distribution, sample_thermal_state, simulate_pulse_train

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4

OVERLAP_CONVENTION = "K = |<u1|u2>| / sqrt(<u1|u1><u2|u2>) (field amplitude); R = (1 - K^2) / 2"


def _quantity(text: str) -> float:
    try:
        return parse_quantity(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _physics_overrides(args) -> List[str]:
    overrides = list(args.set or [])
    if getattr(args, "k", None) is not None:
        overrides.append(f"physics.overlap={args.k}")
    if getattr(args, "temperature", None) is not None:
        overrides.append(f"physics.temperature={args.temperature}")
    if getattr(args, "seed", None) is not None:
        overrides.append(f"seed={args.seed}")
    if getattr(args, "parallelism", None) is not None:
        overrides.append(f"parallelism={args.parallelism}")
    if getattr(args, "loads", None) is not None:
        overrides.append(f"scale.n_loads={args.loads}")
    if getattr(args, "out", None) is not None:
        overrides.append(f"output.directory={json.dumps(str(args.out))}")
    return overrides


def _emit(payload, path: Optional[Path] = None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True, default=io.json_default)
    print(text)
    if path is not None:
        io.atomic_write_text(path, text + "\n")


def _manifest(config: RunConfig, command: str, outputs: dict, summary: dict) -> dict:
    return {
        "command": command,
        "seed": config.seed,
        "config_hash": config_hash(config),
        "config": config_dict(config),
        "outputs": outputs,
        "summary": summary,
        "created": datetime.now(timezone.utc).isoformat(),
    }


def cmd_simulate(args) -> int:
    config = load_config(args.config, _physics_overrides(args))
    out_dir = Path(config.output.directory)
    engine = ExperimentEngine(config)
    configurations = [args.configuration] if args.configuration else list(settings.CONFIGURATIONS)
    outputs, summary = {}, {"hash": config_hash(config)}
    for configuration in configurations:
        hist = engine.run(configuration)
        name = getattr(config.output, f"{configuration}_histogram")
        io.write_histogram_csv(hist, out_dir / name, {"seed": config.seed, "config": config_hash(config)})
        outputs[configuration] = name
        summary[f"{configuration}_coincidences"] = hist.total
        summary[f"{configuration}_pair_events"] = hist.metadata["pair_events"]
    if len(configurations) == 2:
        signal = engine.normalized()
        io.write_signal_csv(signal, out_dir / config.output.normalized_signal, {"seed": config.seed})
        outputs["normalized_signal"] = config.output.normalized_signal
        summary["zero_delay_ratio"] = signal.zero_delay_ratio
        summary["zero_delay_sigma"] = signal.zero_delay_sigma
    io.write_json(out_dir / config.output.manifest, _manifest(config, "simulate", outputs, summary))
    logger.info(f"simulation written to {out_dir}")
    _emit(summary)
    return EXIT_OK


def cmd_overlap(args) -> int:
    if args.config:
        modes_cfg = load_config(args.config, args.set or []).physics.modes
        waist, wavelength = modes_cfg.waist, modes_cfg.wavelength
        mismatch, offset = modes_cfg.waist_mismatch, modes_cfg.transverse_offset
        focal, tilt = modes_cfg.focal_shift, modes_cfg.axis_tilt
    else:
        waist, wavelength = settings.MODE_WAIST, settings.EMISSION_WAVELENGTH
        mismatch = offset = focal = tilt = 0.0
    waist = args.waist if args.waist is not None else waist
    wavelength = args.wavelength if args.wavelength is not None else wavelength
    mismatch = args.waist_mismatch if args.waist_mismatch is not None else mismatch
    offset = args.offset if args.offset is not None else offset
    focal = args.focal_shift if args.focal_shift is not None else focal
    tilt = args.tilt if args.tilt is not None else tilt

    m1, m2 = build_modes(waist, wavelength, mismatch, offset, focal, tilt)
    K = overlap(m1, m2)
    base = GaussianMode(waist=waist, wavelength=wavelength)
    # Offsets and tilt first so that each fraction refers to the unperturbed mode.
    errors = [
        AlignmentError("transverse_offset", abs(offset) / base.waist),
        AlignmentError("focal_shift", abs(focal) / base.rayleigh_range),
        AlignmentError("axis_tilt", abs(tilt) / base.divergence),
        AlignmentError("waist_mismatch", mismatch),
    ]
    budget = alignment_budget([e for e in errors if e.magnitude > 0], base)
    _emit({"K": K, "R": 0.5 * (1 - K ** 2), "convention": OVERLAP_CONVENTION, "budget": budget}, args.output)
    return EXIT_OK


def cmd_fit(args) -> int:
    path = Path(args.input)
    kind = args.kind if args.kind != "auto" else io.csv_kind(path)
    decay_rate = 1.0 / args.lifetime
    bin_width = None
    if kind == "histogram":
        if not args.separator:
            raise PreconditionError("fitting a histogram needs --separator with the reference histogram")
        signal = normalize(io.read_histogram_csv(path), io.read_histogram_csv(args.separator),
                           mode=args.mode, window=args.window, decay_rate=decay_rate)
        data = extract_zero_peak(signal, window=args.window, decay_rate=decay_rate, span=args.span)
    elif kind == "normalized_signal":
        data = extract_zero_peak(io.read_signal_csv(path), window=args.window, decay_rate=decay_rate,
                                 span=args.span)
    elif kind == "zero_peak":
        data = io.read_peak_csv(path)
    else:
        raise DataFormatError(f"{path}: unsupported file kind {kind!r}")
    if args.bin_width is not None:
        bin_width = args.bin_width
    result = fit_zero_peak(
        data,
        decay_rate=decay_rate,
        eta=args.eta,
        amplitude_rel_sigma=None if args.free_amplitude else args.amplitude_rel_sigma,
        bin_width=bin_width,
        weighting=args.weighting,
    )
    _emit(result.summary(), args.output)
    return EXIT_OK


def _scan_point_seed(seed: int, index: int) -> int:
    return int(block_seed(seed, 4, index).generate_state(1, dtype=np.uint64)[0])


def cmd_scan(args) -> int:
    config = load_config(args.config, _physics_overrides(args))
    displacements = args.displacements if args.displacements else config.displacements
    if len(displacements) < 2:
        raise PreconditionError("a displacement scan needs at least two displacements")
    waist = args.waist if args.waist is not None else config.physics.modes.waist
    k_max = args.kmax if args.kmax is not None else config.physics.overlap
    base = GaussianMode(waist=waist, wavelength=config.physics.modes.wavelength)

    rows = []
    if args.mode == "analytic":
        for d, R in displacement_scan((base, base), displacements, k_max=k_max):
            rows.append((d, R, 0.0))
    else:
        if config.seed is None:
            raise ConfigError("simulated scans need a master seed", ["seed: pass --seed or set it in the config"])
        for i, d in enumerate(displacements):
            point = config.physics.model_copy(update={"overlap": k_max * offset_overlap(d, waist)})
            seed = _scan_point_seed(config.seed, i)
            histograms = {}
            for configuration in settings.CONFIGURATIONS:
                det = config.detection.model_copy(update={"configuration": configuration})
                histograms[configuration] = run_experiment(
                    config.sequence, det, point, config.scale.n_loads, seed,
                    n_jobs=config.parallelism, loads_per_block=config.scale.loads_per_block,
                )
            signal = normalize(histograms["mixer"], histograms["separator"], mode=config.detection.normalization_mode,
                               pulse_period=config.sequence.pulse_period, window=config.detection.peak_window,
                               rebin_factor=config.detection.rebin_factor, decay_rate=config.physics.emitter.decay_rate)
            rows.append((float(d), signal.zero_delay_ratio, signal.zero_delay_sigma))
            logger.info(f"d={d * 1e6:.1f} um: R={signal.zero_delay_ratio:.4f} +/- {signal.zero_delay_sigma:.4f}")

    out_dir = Path(config.output.directory)
    io.write_scan_csv(rows, out_dir / "displacement_scan.csv", {"mode": args.mode, "k_max": k_max})
    payload = {"points": [{"d": d, "R": R, "sigma": s} for d, R, s in rows]}
    if len(rows) >= 4:
        points = np.array(rows)
        if args.mode == "analytic":
            points[:, 2] = 1.0
        payload["fit"] = fit_displacement_scan(points, waist).summary()
    else:
        logger.warning("fewer than four displacements: K_max fit skipped")
    io.write_json(out_dir / "displacement_scan_fit.json", payload)
    _emit(payload)
    return EXIT_OK


def cmd_trap(args) -> int:
    config = load_config(args.config, _physics_overrides(args))
    physics, seq = config.physics, config.sequence
    seed = config.seed if config.seed is not None else settings.DEFAULT_SEED
    T0 = args.initial_temperature if args.initial_temperature is not None else physics.initial_temperature
    dist = lightshift_distribution(physics.trap, physics.emitter, seq, T0, args.atoms, seed, n_jobs=config.parallelism)
    payload = {
        "initial_temperature": T0,
        "temperature_eff": dist.temperature_eff,
        "temperature_eff_final_window": dist.temperature_eff_final,
        "heating": dist.heating,
        "kinetic_heating": dist.kinetic_heating,
        "retention": dist.retention,
        "chi2": dist.chi2,
        "dof": dist.dof,
        "emissions": int(len(dist.deficits)),
    }
    if args.debug_trajectory:
        rng = np.random.default_rng(seed)
        train = simulate_pulse_train(sample_thermal_state(physics.trap, T0, rng), physics.trap, physics.emitter, seq, rng)
        pulses = np.array([r.pulse_index for r in train.records], dtype=int)
        shifts = np.array([r.lightshift for r in train.records])
        io.write_trajectory_csv(pulses, shifts, train.trajectory[pulses, 1:4], args.debug_trajectory,
                                {"escaped": train.escaped})
    _emit(payload, args.output)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="photon-coalescence", description=__doc__)
    parser.add_argument("--verbose", "-v", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def run_options(p):
        p.add_argument("--config", type=Path)
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="dotted-path override")
        p.add_argument("--seed", type=int)
        p.add_argument("--parallelism", type=int)
        p.add_argument("--out", type=Path)
        p.add_argument("--loads", type=int)
        p.add_argument("--k", type=float)
        p.add_argument("--temperature", type=_quantity)

    p = sub.add_parser("simulate", help="simulate both configurations and normalize")
    run_options(p)
    p.add_argument("--configuration", choices=settings.CONFIGURATIONS)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("overlap", help="spatial-mode overlap and alignment budget")
    p.add_argument("--config", type=Path)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--waist", type=_quantity)
    p.add_argument("--wavelength", type=_quantity)
    p.add_argument("--waist-mismatch", type=float)
    p.add_argument("--offset", type=_quantity)
    p.add_argument("--focal-shift", type=_quantity)
    p.add_argument("--tilt", type=_quantity)
    p.add_argument("--output", type=Path)
    p.set_defaults(func=cmd_overlap)

    p = sub.add_parser("fit", help="fit (K, T) to a zero-delay peak")
    p.add_argument("input", type=Path)
    p.add_argument("--kind", choices=["auto", "histogram", "normalized_signal", "zero_peak"], default="auto")
    p.add_argument("--separator", type=Path, help="separator histogram when INPUT is a mixer histogram")
    p.add_argument("--mode", choices=["area", "height"], default="area")
    p.add_argument("--window", type=_quantity, default=settings.PEAK_WINDOW)
    p.add_argument("--span", type=_quantity, default=settings.ZERO_PEAK_SPAN, help="zero-peak samples kept for the fit")
    p.add_argument("--lifetime", type=_quantity, default=settings.EXCITED_STATE_LIFETIME)
    p.add_argument("--eta", type=float, default=settings.DIFFERENTIAL_SHIFT_FACTOR)
    p.add_argument("--bin-width", type=_quantity)
    p.add_argument("--amplitude-rel-sigma", type=float, default=settings.FIT_AMPLITUDE_REL_SIGMA)
    p.add_argument("--free-amplitude", action="store_true")
    p.add_argument("--weighting", choices=["poisson", "data"], default=settings.FIT_WEIGHTING)
    p.add_argument("--output", type=Path)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("scan", help="zero-delay ratio versus transverse displacement")
    run_options(p)
    p.add_argument("--displacements", type=_quantity, nargs="+")
    p.add_argument("--kmax", type=float)
    p.add_argument("--waist", type=_quantity)
    p.add_argument("--mode", choices=["analytic", "simulated"], default="analytic")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("trap", help="lightshift distribution and heating of a thermal ensemble")
    run_options(p)
    p.add_argument("--atoms", type=int, default=10000)
    p.add_argument("--initial-temperature", type=_quantity)
    p.add_argument("--debug-trajectory", type=Path, help="dump one atom's emissions as CSV")
    p.add_argument("--output", type=Path)
    p.set_defaults(func=cmd_trap)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (ConfigError, DomainError, DataFormatError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_CONFIG
    except NumericalError as e:
        logger.error(f"numerical failure: {e}")
        return EXIT_NUMERICAL
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return EXIT_IO
    except CoalescenceError as e:
        logger.error(f"error: {e}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
