"""
Monte-Carlo motion of single atoms in the dipole trap under pulsed
excitation with recoil heating.

Coordinates: the trap beam propagates along z with its focus at the origin;
the pulsed excitation beam lies along x.
The excitation pulses reach the atom from either side along x with equal
probability, so absorption kicks carry no mean force and each one adds a
recoil energy on average, as the isotropic emission kick does.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from joblib import Parallel, delayed
from scipy import stats

from ..config import settings
from ..errors import DomainError
from ..models.base import AtomEnsemble, AtomState, LightshiftRecord
from ..models.config import EmitterConstants, SequenceConfig, TrapConfig

logger = logging.getLogger(__name__)

RngLike = Union[np.random.Generator, int, None]


def as_generator(rng: RngLike) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def block_seed(master: int, tag: int, index: int) -> np.random.SeedSequence:
    """Counter-based child seed: depends only on (master, tag, index)."""
    return np.random.SeedSequence(entropy=master, spawn_key=(tag, index))


def master_entropy(rng: RngLike) -> int:
    """Integer entropy for block seeding, drawn once from ``rng``."""
    if isinstance(rng, (int, np.integer)):
        return int(rng)
    return int(as_generator(rng).integers(0, 2 ** 63))


# Potential, force and energies

def _gaussian_profile(positions: np.ndarray, trap: TrapConfig) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    x, y, z = positions[..., 0], positions[..., 1], positions[..., 2]
    s = 1.0 + (z / trap.rayleigh_range) ** 2
    rho2 = x ** 2 + y ** 2
    g = np.exp(-2.0 * rho2 / (trap.beam_waist ** 2 * s)) / s
    return g, s, rho2


def lightshift(position, trap: TrapConfig):
    """Trap lightshift U at ``position``: U0 at the focus, zero far away."""
    pos = np.asarray(position, dtype=float)
    if not np.all(np.isfinite(pos)):
        raise DomainError("position must be finite")
    if trap.potential == "harmonic":
        omega = np.asarray(trap.angular_frequencies)
        U = trap.depth - 0.5 * trap.atom_mass * np.sum((omega * pos) ** 2, axis=-1)
        U = np.clip(U, 0.0, trap.depth)
    else:
        g, _, _ = _gaussian_profile(pos, trap)
        U = trap.depth * g
    return float(U) if np.ndim(U) == 0 else U


def potential_energy(positions: np.ndarray, trap: TrapConfig) -> np.ndarray:
    """Potential energy above the trap bottom, U0 - U."""
    return trap.depth - lightshift(positions, trap)


def acceleration(positions: np.ndarray, trap: TrapConfig) -> np.ndarray:
    """Acceleration from the trap potential."""
    if trap.potential == "harmonic":
        omega = np.asarray(trap.angular_frequencies)
        return -(omega ** 2) * positions
    g, s, rho2 = _gaussian_profile(positions, trap)
    w2 = trap.beam_waist ** 2
    zr2 = trap.rayleigh_range ** 2
    scale = trap.depth / trap.atom_mass * g
    acc = np.empty_like(positions)
    acc[..., 0] = -4.0 * positions[..., 0] / (w2 * s) * scale
    acc[..., 1] = -4.0 * positions[..., 1] / (w2 * s) * scale
    acc[..., 2] = (-1.0 / s + 2.0 * rho2 / (w2 * s ** 2)) * (2.0 * positions[..., 2] / zr2) * scale
    return acc


def kinetic_energy(velocities: np.ndarray, mass: float) -> np.ndarray:
    return 0.5 * mass * np.sum(velocities ** 2, axis=-1)


def total_energy(ensemble: AtomEnsemble, trap: TrapConfig) -> np.ndarray:
    return kinetic_energy(ensemble.velocities, trap.atom_mass) + potential_energy(ensemble.positions, trap)


def kinetic_temperature(ensemble: AtomEnsemble, mass: float) -> float:
    alive = ~ensemble.escaped
    if not alive.any():
        return float("nan")
    return float(np.mean(kinetic_energy(ensemble.velocities[alive], mass)) * 2.0 / (3.0 * settings.K_B))


def energy_temperature(ensemble: AtomEnsemble, trap: TrapConfig) -> float:
    alive = ~ensemble.escaped
    if not alive.any():
        return float("nan")
    return float(np.mean(total_energy(ensemble, trap)[alive]) / (3.0 * settings.K_B))


# Thermal states

def sample_thermal_ensemble(trap: TrapConfig, T: float, n: int, rng: RngLike) -> AtomEnsemble:
    """Boltzmann sample in the harmonic approximation of the trap."""
    if not T >= 0:
        raise DomainError(f"temperature must be >= 0, got {T}")
    rng = as_generator(rng)
    omega = np.asarray(trap.angular_frequencies)
    sigma_x = np.sqrt(settings.K_B * T / (trap.atom_mass * omega ** 2))
    sigma_v = math.sqrt(settings.K_B * T / trap.atom_mass)
    positions = rng.standard_normal((n, 3)) * sigma_x
    velocities = rng.standard_normal((n, 3)) * sigma_v
    return AtomEnsemble(positions=positions, velocities=velocities)


def sample_thermal_state(trap: TrapConfig, T: float, rng: RngLike) -> AtomState:
    return sample_thermal_ensemble(trap, T, 1, rng).state(0)


def cooling_reset(state: AtomState, trap: TrapConfig, T0: float, rng: RngLike) -> AtomState:
    """Molasses period modelled as full rethermalisation at T0."""
    if not T0 >= 0:
        raise DomainError(f"reset temperature must be >= 0, got {T0}")
    return sample_thermal_state(trap, T0, rng)


# Integrator

class SplitIntegrator:
    """Kick-drift-kick splitting with an exact harmonic drift.

    The drift rotates each axis through the harmonic flow at the trap
    frequencies; the kicks carry the anharmonic remainder of the force. The
    scheme is symplectic, time-reversible and second order, and exact for a
    harmonic potential.
    """

    def __init__(self, trap: TrapConfig, dt: float):
        self.trap = trap
        self.dt = dt
        self.omega = np.asarray(trap.angular_frequencies)
        phase = self.omega * dt
        self._cos = np.cos(phase)
        self._sin = np.sin(phase)
        self._harmonic = trap.potential == "harmonic"

    @classmethod
    def for_period(cls, trap: TrapConfig, period: float) -> Tuple["SplitIntegrator", int]:
        """Integrator whose step divides ``period`` and stays below the step limit."""
        dt_max = 1.0 / (settings.STEPS_PER_TRAP_PERIOD * max(trap.frequencies))
        n_steps = max(1, math.ceil(period / dt_max - 1e-12))
        return cls(trap, period / n_steps), n_steps

    def _residual(self, positions: np.ndarray) -> np.ndarray:
        return acceleration(positions, self.trap) + self.omega ** 2 * positions

    def step(self, positions: np.ndarray, velocities: np.ndarray) -> None:
        """Advance (positions, velocities) in place by one step."""
        if not self._harmonic:
            velocities += 0.5 * self.dt * self._residual(positions)
        x0 = positions.copy()
        positions[:] = x0 * self._cos + velocities * self._sin / self.omega
        velocities[:] = -x0 * self.omega * self._sin + velocities * self._cos
        if not self._harmonic:
            velocities += 0.5 * self.dt * self._residual(positions)

    def propagate(self, positions: np.ndarray, velocities: np.ndarray, n_steps: int,
                  active: Optional[np.ndarray] = None) -> None:
        if active is None or active.all():
            for _ in range(n_steps):
                self.step(positions, velocities)
            return
        x, v = positions[active], velocities[active]
        for _ in range(n_steps):
            self.step(x, v)
        positions[active], velocities[active] = x, v


def isotropic_directions(n: int, rng: np.random.Generator) -> np.ndarray:
    d = rng.standard_normal((n, 3))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


# Pulse trains

@dataclass
class PulseTrainBatch:
    """Vectorised outcome of one burst for a batch of atoms."""
    lightshifts: np.ndarray  # (n_atoms, n_pulses), NaN where no emission
    final: AtomEnsemble
    escape_pulse: np.ndarray  # -1 if never escaped
    kinetic_temperature: np.ndarray  # (n_pulses + 1,)
    energy_temperature: np.ndarray  # (n_pulses + 1,)
    trajectory: Optional[np.ndarray] = None  # (n_pulses + 1, n_atoms, 6)


def run_pulse_batch(
    ensemble: AtomEnsemble,
    trap: TrapConfig,
    constants: EmitterConstants,
    seq: SequenceConfig,
    rng: np.random.Generator,
    record_trajectory: bool = False,
) -> PulseTrainBatch:
    """Integrate one burst of ``seq.pulses_per_burst`` pulses for all atoms."""
    kicks = settings.RECOIL_MODELS[constants.recoil_model]
    v_rec = constants.recoil_velocity
    integrator, n_steps = SplitIntegrator.for_period(trap, seq.pulse_period)
    n_atoms, n_pulses = len(ensemble), seq.pulses_per_burst

    x = ensemble.positions.copy()
    v = ensemble.velocities.copy()
    escaped = ensemble.escaped.copy()
    escape_pulse = np.full(n_atoms, -1, dtype=np.int64)
    shifts = np.full((n_atoms, n_pulses), np.nan)
    t_kin = np.empty(n_pulses + 1)
    t_energy = np.empty(n_pulses + 1)
    trajectory = np.empty((n_pulses + 1, n_atoms, 6)) if record_trajectory else None

    def snapshot(index: int) -> None:
        state = AtomEnsemble(x, v, escaped)
        t_kin[index] = kinetic_temperature(state, trap.atom_mass)
        t_energy[index] = energy_temperature(state, trap)
        if trajectory is not None:
            trajectory[index, :, :3] = x
            trajectory[index, :, 3:] = v

    for n in range(n_pulses):
        snapshot(n)
        # Fixed-size draws keep the random stream independent of atom losses.
        excited = (rng.random(n_atoms) < constants.excitation_probability) & ~escaped
        directions = isotropic_directions(n_atoms, rng)
        senses = rng.choice((-1.0, 1.0), size=n_atoms)
        if kicks["absorption_kick"]:
            v[excited, 0] += v_rec * senses[excited]
        shifts[excited, n] = lightshift(x[excited], trap)
        if kicks["emission_kick"]:
            v[excited] += v_rec * directions[excited]
        lost = ~escaped & (kinetic_energy(v, trap.atom_mass) > lightshift(x, trap))
        if lost.any():
            escaped |= lost
            escape_pulse[lost] = n
        integrator.propagate(x, v, n_steps, active=~escaped)
    snapshot(n_pulses)

    return PulseTrainBatch(
        lightshifts=shifts,
        final=AtomEnsemble(x, v, escaped),
        escape_pulse=escape_pulse,
        kinetic_temperature=t_kin,
        energy_temperature=t_energy,
        trajectory=trajectory,
    )


@dataclass
class PulseTrainResult:
    """Single-atom pulse train: trajectory, emissions and final state."""
    trajectory: np.ndarray  # (n_pulses + 1, 7): t, x, y, z, vx, vy, vz
    records: List[LightshiftRecord]
    final: AtomState
    escaped: bool
    escape_pulse: Optional[int] = None


def simulate_pulse_train(
    initial: AtomState,
    trap: TrapConfig,
    constants: EmitterConstants,
    seq: SequenceConfig,
    rng: RngLike,
) -> PulseTrainResult:
    """Follow one atom through a burst, recording the lightshift at each emission."""
    rng = as_generator(rng)
    batch = run_pulse_batch(AtomEnsemble.from_states(initial), trap, constants, seq, rng, record_trajectory=True)
    times = np.arange(seq.pulses_per_burst + 1) * seq.pulse_period
    trajectory = np.column_stack([times, batch.trajectory[:, 0, :]])
    row = batch.lightshifts[0]
    records = [LightshiftRecord(pulse_index=int(i), lightshift=float(row[i])) for i in np.flatnonzero(~np.isnan(row))]
    escape = int(batch.escape_pulse[0])
    if escape >= 0:
        logger.debug(f"atom escaped at pulse {escape}")
    return PulseTrainResult(
        trajectory=trajectory,
        records=records,
        final=batch.final.state(0),
        escaped=escape >= 0,
        escape_pulse=escape if escape >= 0 else None,
    )


# Ensembles and the lightshift distribution

_TRAP_STREAM = 1


def _burst_block(trap, constants, seq, T, n_atoms, seed_seq) -> PulseTrainBatch:
    rng = np.random.default_rng(seed_seq)
    ensemble = sample_thermal_ensemble(trap, T, n_atoms, rng)
    return run_pulse_batch(ensemble, trap, constants, seq, rng)


def _block_sizes(n_atoms: int, atoms_per_block: int) -> List[int]:
    full, rest = divmod(n_atoms, atoms_per_block)
    return [atoms_per_block] * full + ([rest] if rest else [])


@dataclass
class BurstEnsemble:
    """Per-atom, per-pulse lightshifts of a thermal ensemble over one burst."""
    lightshifts: np.ndarray  # (n_atoms, n_pulses), NaN where no emission
    escape_pulse: np.ndarray
    kinetic_temperature: np.ndarray
    energy_temperature: np.ndarray
    depth: float

    @property
    def retention(self) -> float:
        return float(np.mean(self.escape_pulse < 0))

    def deficits(self, pulses: Optional[slice] = None) -> np.ndarray:
        table = self.lightshifts if pulses is None else self.lightshifts[:, pulses]
        values = table[~np.isnan(table)]
        return self.depth - values


def simulate_burst_ensemble(
    trap: TrapConfig,
    constants: EmitterConstants,
    seq: SequenceConfig,
    T: float,
    n_atoms: int,
    rng: RngLike,
    n_jobs: int = 1,
    atoms_per_block: int = settings.ATOMS_PER_BLOCK,
) -> BurstEnsemble:
    """Simulate ``n_atoms`` independent atoms through one burst from temperature T."""
    if n_atoms < 1:
        raise DomainError("need at least one atom")
    if not T >= 0:
        raise DomainError(f"temperature must be >= 0, got {T}")
    master = master_entropy(rng)
    sizes = _block_sizes(n_atoms, atoms_per_block)
    logger.info(f"simulating {n_atoms} atoms over {seq.pulses_per_burst} pulses in {len(sizes)} blocks")
    batches = Parallel(n_jobs=n_jobs)(
        delayed(_burst_block)(trap, constants, seq, T, size, block_seed(master, _TRAP_STREAM, i))
        for i, size in enumerate(sizes)
    )
    # Atoms still trapped at each snapshot weight the per-block temperatures.
    snapshots = np.arange(seq.pulses_per_burst + 1)
    alive = np.array([
        np.sum((b.escape_pulse[:, None] < 0) | (b.escape_pulse[:, None] >= snapshots[None, :]), axis=0)
        for b in batches
    ], dtype=float)

    def pooled_temperature(attr: str) -> np.ndarray:
        rows = np.array([getattr(b, attr) for b in batches])
        rows = np.where(alive > 0, rows, 0.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.sum(rows * alive, axis=0) / np.sum(alive, axis=0)

    return BurstEnsemble(
        lightshifts=np.vstack([b.lightshifts for b in batches]),
        escape_pulse=np.concatenate([b.escape_pulse for b in batches]),
        kinetic_temperature=pooled_temperature("kinetic_temperature"),
        energy_temperature=pooled_temperature("energy_temperature"),
        depth=trap.depth,
    )


@dataclass
class LightshiftDistribution:
    """Pooled per-emission lightshifts and their fit to U^2 exp(-2U/k_B T)."""
    deficits: np.ndarray  # U0 - U per emission, J
    depth: float
    temperature_eff: float  # K, pooled over the burst
    temperature_eff_final: float  # K, last ``final_window`` pulses
    chi2: float
    dof: int
    histogram: Dict[str, np.ndarray] = field(default_factory=dict)
    heating: float = 0.0  # energy-temperature rise over the burst, K
    kinetic_heating: float = 0.0
    retention: float = 1.0

    @property
    def lightshifts(self) -> np.ndarray:
        return self.depth - self.deficits


def fit_gamma_temperature(deficits: np.ndarray) -> float:
    """Maximum-likelihood T for deficits distributed as D^2 exp(-2D / k_B T)."""
    if len(deficits) == 0:
        return float("nan")
    return float(2.0 * np.mean(deficits) / (3.0 * settings.K_B))


def gamma_goodness_of_fit(deficits: np.ndarray, T: float, n_bins: int = 60) -> Tuple[float, int, Dict[str, np.ndarray]]:
    """Pearson chi-square of the pooled histogram against the fitted form."""
    if T <= 0 or len(deficits) < 2:
        return float("nan"), 0, {}
    scale = settings.K_B * T / 2.0
    top = np.quantile(deficits, 0.999)
    edges = np.linspace(0.0, top, n_bins + 1)
    counts, _ = np.histogram(deficits, bins=edges)
    cdf = stats.gamma.cdf(edges, a=3, scale=scale)
    expected = len(deficits) * np.diff(cdf)
    keep = expected >= 5
    chi2 = float(np.sum((counts[keep] - expected[keep]) ** 2 / expected[keep]))
    dof = int(max(keep.sum() - 1, 1))
    return chi2, dof, {"edges": edges, "counts": counts, "expected": expected}


def lightshift_distribution(
    trap: TrapConfig,
    constants: EmitterConstants,
    seq: SequenceConfig,
    T: float,
    n_atoms: int,
    rng: RngLike,
    n_jobs: int = 1,
    final_window: int = 100,
) -> LightshiftDistribution:
    """Pooled lightshift distribution of a thermal ensemble over one burst."""
    ensemble = simulate_burst_ensemble(trap, constants, seq, T, n_atoms, rng, n_jobs=n_jobs)
    deficits = ensemble.deficits()
    T_eff = fit_gamma_temperature(deficits)
    window = slice(max(seq.pulses_per_burst - final_window, 0), None)
    T_final = fit_gamma_temperature(ensemble.deficits(window))
    chi2, dof, histogram = gamma_goodness_of_fit(deficits, T_eff)
    result = LightshiftDistribution(
        deficits=deficits,
        depth=trap.depth,
        temperature_eff=T_eff,
        temperature_eff_final=T_final,
        chi2=chi2,
        dof=dof,
        histogram=histogram,
        heating=float(ensemble.energy_temperature[-1] - ensemble.energy_temperature[0]),
        kinetic_heating=float(ensemble.kinetic_temperature[-1] - ensemble.kinetic_temperature[0]),
        retention=ensemble.retention,
    )
    logger.info(
        f"lightshift distribution: T_eff={T_eff * 1e6:.1f} uK, final-window {T_final * 1e6:.1f} uK, "
        f"heating {result.heating * 1e6:.1f} uK, retention {result.retention:.3f}"
    )
    return result
