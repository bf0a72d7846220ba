"""
Event-level simulation of the two-atom coincidence experiment.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed

from ..analysis.histogram import normalize
from ..config import settings
from ..errors import ConfigError, DomainError
from ..models.config import DetectionConfig, PhysicsConfig, RunConfig, SequenceConfig
from ..models.results import CoincidenceHistogram, NormalizedSignal
from .coincidence_model import DeltaOmegaDistribution
from .components import DarkCountSource, PhotonEvents, StartStopCounter, make_router
from .trap_dynamics import RngLike, block_seed, master_entropy, simulate_burst_ensemble

logger = logging.getLogger(__name__)

STREAM_TAGS = {"trap": 1, "mixer": 2, "separator": 3}
LOAD_GAP = 1.0  # s of idle timeline between loads


@dataclass
class BlockResult:
    counts: np.ndarray
    pulse_cycles: int
    pair_events: int
    detections: int
    duration: float


@dataclass
class TrapTable:
    """Per-pulse lightshifts of a thermal ensemble over one burst."""
    lightshifts: np.ndarray  # (n_atoms, n_pulses), NaN where no emission
    escaped: np.ndarray  # (n_atoms,), heated out of the trap during the burst

    @property
    def retention(self) -> float:
        return float(1.0 - np.mean(self.escaped))


def _present_bursts(n_loads: int, seq: SequenceConfig, det: DetectionConfig, rng: np.random.Generator,
                    in_burst_retention: float = 1.0) -> np.ndarray:
    """Number of bursts each atom of each load stays trapped for, shape (n_loads, 2).

    ``det.retention`` is the survival over the whole sequence. Losses the
    trap table already produces are taken out of the per-burst draw.
    """
    if not det.atom_loss:
        return np.full((n_loads, 2), seq.bursts_per_load)
    survival = min(det.retention ** (1.0 / seq.bursts_per_load) / max(in_burst_retention, 1e-12), 1.0)
    if survival >= 1.0:
        return np.full((n_loads, 2), seq.bursts_per_load)
    return np.minimum(rng.geometric(1.0 - survival, size=(n_loads, 2)), seq.bursts_per_load)


def _simulate_block(
    seq: SequenceConfig,
    det: DetectionConfig,
    physics: PhysicsConfig,
    configuration: str,
    n_loads: int,
    seed_seq: np.random.SeedSequence,
    trap_table: Optional[TrapTable] = None,
) -> BlockResult:
    rng = np.random.default_rng(seed_seq)
    B, N = seq.bursts_per_load, seq.pulses_per_burst
    shape = (n_loads, B, N)
    present = _present_bursts(n_loads, seq, det, rng, 1.0 if trap_table is None else trap_table.retention)
    burst_index = np.arange(B)[None, :, None]

    # Detected pulse slots per atom, flattened to (load * B + burst) * N + pulse.
    slots, shifts = [], []
    p_detect = physics.emitter.excitation_probability * det.efficiency_per_detector
    for atom in (0, 1):
        if trap_table is None:
            trapped = burst_index < present[:, atom][:, None, None]
            detected = trapped & (rng.random(shape) < p_detect)
            ids = np.flatnonzero(detected)
            shifts.append(None)
        else:
            table = trap_table.lightshifts
            rows = rng.integers(0, len(table), size=(n_loads, B))
            # a heating loss ends the load for that atom
            lost = trap_table.escaped[rows]
            first_loss = np.where(lost.any(axis=1), lost.argmax(axis=1) + 1, B)
            present[:, atom] = np.minimum(present[:, atom], first_loss)
            trapped = burst_index < present[:, atom][:, None, None]
            emitted = ~np.isnan(table[rows])
            detected = trapped & emitted & (rng.random(shape) < det.efficiency_per_detector)
            ids = np.flatnonzero(detected)
            burst_ids, pulse = np.divmod(ids, N)
            shifts.append(table[rows.ravel()[burst_ids], pulse])
        slots.append(ids)
    active = present.max(axis=1)

    paired_ids = np.intersect1d(slots[0], slots[1], assume_unique=True)
    n_pairs = len(paired_ids)
    pair_pos = [np.searchsorted(slots[a], paired_ids) for a in (0, 1)]
    single_mask = [np.ones(len(slots[a]), dtype=bool) for a in (0, 1)]
    for a in (0, 1):
        single_mask[a][pair_pos[a]] = False

    # Pairs first as consecutive (atom 0, atom 1) entries, then singles.
    order_ids = np.concatenate([
        np.column_stack([paired_ids, paired_ids]).ravel(),
        slots[0][single_mask[0]],
        slots[1][single_mask[1]],
    ])
    atom = np.concatenate([
        np.tile([0, 1], n_pairs),
        np.zeros(int(single_mask[0].sum()), dtype=np.int64),
        np.ones(int(single_mask[1].sum()), dtype=np.int64),
    ]).astype(np.int64)
    pair_slot = np.concatenate([np.repeat(np.arange(n_pairs), 2), np.full(len(order_ids) - 2 * n_pairs, -1)])

    if trap_table is None:
        params = physics.broadening()
        delta_omega = DeltaOmegaDistribution(params).sample(n_pairs, rng)
    else:
        u0 = shifts[0][pair_pos[0]]
        u1 = shifts[1][pair_pos[1]]
        delta_omega = physics.differential_shift_factor * (u0 - u1) / settings.HBAR

    load, rest = np.divmod(order_ids, B * N)
    burst, pulse = np.divmod(rest, N)
    load_span = B * seq.burst_spacing + LOAD_GAP
    emission_delay = rng.exponential(physics.emitter.lifetime, size=len(order_ids))
    times = load * load_span + burst * seq.burst_spacing + pulse * seq.pulse_period + emission_delay

    events = PhotonEvents(times=times, emission_delay=emission_delay, atom=atom,
                          pair_slot=pair_slot, delta_omega=delta_omega)
    detectors = make_router(configuration, physics.overlap).route(events, rng)

    # The card records only while a burst runs.
    load_of_burst = np.repeat(np.arange(n_loads), active)
    burst_of_load = np.concatenate([np.arange(a) for a in active]) if n_loads else np.empty(0, dtype=int)
    window_starts = load_of_burst * load_span + burst_of_load * seq.burst_spacing
    dark_times, dark_channels = DarkCountSource(det.background_rate).sample(window_starts, seq.burst_duration, rng)

    counter = StartStopCounter.from_config(det)
    counts = counter.record(np.concatenate([times, dark_times]), np.concatenate([detectors, dark_channels]), rng)

    reload = rng.exponential(seq.reload_delay_mean, size=n_loads)
    return BlockResult(
        counts=counts,
        pulse_cycles=int(active.sum()) * N,
        pair_events=n_pairs,
        detections=len(order_ids),
        duration=float(active.sum() * seq.burst_spacing + reload.sum()),
    )


def _block_sizes(n_loads: int, loads_per_block: int):
    full, rest = divmod(n_loads, loads_per_block)
    return [loads_per_block] * full + ([rest] if rest else [])


def build_trap_table(physics: PhysicsConfig, seq: SequenceConfig, n_atoms: int, master: int, n_jobs: int = 1) -> TrapTable:
    """Lightshift table of a thermal ensemble over one burst; a fresh row is drawn per burst."""
    seed = int(block_seed(master, STREAM_TAGS["trap"], 0).generate_state(1, dtype=np.uint64)[0])
    ensemble = simulate_burst_ensemble(physics.trap, physics.emitter, seq, physics.initial_temperature,
                                       n_atoms, seed, n_jobs=n_jobs)
    logger.info(f"trap ensemble ready: retention {ensemble.retention:.3f}")
    return TrapTable(lightshifts=ensemble.lightshifts, escaped=ensemble.escape_pulse >= 0)


def run_experiment(
    seq: SequenceConfig,
    det: DetectionConfig,
    physics: PhysicsConfig,
    n_loads: int,
    rng: RngLike,
    n_jobs: int = 1,
    loads_per_block: int = settings.LOADS_PER_BLOCK,
    trap_table: Optional[TrapTable] = None,
    trap_ensemble_size: int = 2000,
) -> CoincidenceHistogram:
    """Simulate ``n_loads`` atom-pair loads and histogram the start-stop delays."""
    if n_loads < 1:
        raise DomainError("need at least one load")
    configuration = det.configuration
    master = master_entropy(rng)
    if det.efficiency_per_detector == 0:
        logger.warning("detection efficiency is zero: the histogram holds background only")
    if physics.mode == "trap_mc" and trap_table is None:
        trap_table = build_trap_table(physics, seq, trap_ensemble_size, master, n_jobs=n_jobs)

    sizes = _block_sizes(n_loads, loads_per_block)
    logger.info(f"{configuration}: {n_loads} loads in {len(sizes)} blocks, K={physics.overlap:.3f}, mode={physics.mode}")
    tag = STREAM_TAGS[configuration]
    results = Parallel(n_jobs=n_jobs)(
        delayed(_simulate_block)(seq, det, physics, configuration, size, block_seed(master, tag, i), trap_table)
        for i, size in enumerate(sizes)
    )

    edges = StartStopCounter.from_config(det).bin_edges
    counts = np.sum([r.counts for r in results], axis=0)
    histogram = CoincidenceHistogram(
        bin_edges=edges,
        counts=counts,
        configuration=configuration,
        total_pulse_cycles=sum(r.pulse_cycles for r in results),
        metadata={
            "seed": master,
            "n_loads": n_loads,
            "pair_events": sum(r.pair_events for r in results),
            "detections": sum(r.detections for r in results),
            "duration_s": sum(r.duration for r in results),
            "overlap": physics.overlap,
            "temperature": physics.temperature,
            "mode": physics.mode,
        },
    )
    if histogram.total == 0:
        logger.warning(f"{configuration} histogram is empty")
    logger.debug(f"{configuration}: {histogram.total} coincidences, {histogram.metadata['pair_events']} pair events")
    return histogram


class ExperimentEngine:
    """Runs both detection configurations of one :class:`RunConfig` and normalizes."""

    def __init__(self, config: RunConfig):
        if config.seed is None:
            raise ConfigError("a master seed is required to simulate", ["seed: missing"])
        self.config = config
        self.histograms: Dict[str, CoincidenceHistogram] = {}
        self._trap_table: Optional[TrapTable] = None

    def _trap_table_for_run(self) -> Optional[TrapTable]:
        physics = self.config.physics
        if physics.mode != "trap_mc":
            return None
        if self._trap_table is None:
            self._trap_table = build_trap_table(physics, self.config.sequence, self.config.scale.trap_ensemble_size,
                                                self.config.seed, n_jobs=self.config.parallelism)
        return self._trap_table

    def run(self, configuration: str) -> CoincidenceHistogram:
        cfg = self.config
        det = cfg.detection.model_copy(update={"configuration": configuration})
        histogram = run_experiment(
            cfg.sequence, det, cfg.physics, cfg.scale.n_loads, cfg.seed,
            n_jobs=cfg.parallelism,
            loads_per_block=cfg.scale.loads_per_block,
            trap_table=self._trap_table_for_run(),
        )
        self.histograms[configuration] = histogram
        return histogram

    def run_both(self) -> Tuple[CoincidenceHistogram, CoincidenceHistogram]:
        return self.run("mixer"), self.run("separator")

    def normalized(self) -> NormalizedSignal:
        if not {"mixer", "separator"} <= set(self.histograms):
            self.run_both()
        det = self.config.detection
        return normalize(
            self.histograms["mixer"],
            self.histograms["separator"],
            mode=det.normalization_mode,
            pulse_period=self.config.sequence.pulse_period,
            window=det.peak_window,
            rebin_factor=det.rebin_factor,
            decay_rate=self.config.physics.emitter.decay_rate,
        )
