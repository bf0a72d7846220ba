"""
Gaussian spatial modes of the two collected beams and their field overlap K.

Both modes are evaluated in the transverse plane through the focus of the
first mode. Each field is written as exp(-A|r - r_c|^2 + i k theta.r) with
the complex beam parameter A = i k / (2 q), q = dz + i z_R, which carries
the wavefront curvature of a displaced focus. The Gouy phase and the 1/q
prefactor are common phases or amplitudes and drop out of |K|.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy import integrate

from ..config import settings
from ..errors import DomainError
from ..models.base import AlignmentError, GaussianMode

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class _PlaneField:
    """Per-axis parameters of a mode in the common evaluation plane."""
    A: complex  # exp(-A (x - c)^2)
    center: Tuple[float, float]
    phase_slope: Tuple[float, float]  # k * tilt


def _check_paraxial(mode: GaussianMode) -> None:
    angle = math.acos(min(1.0, mode.direction[2]))
    if angle > settings.MAX_PARAXIAL_TILT:
        raise DomainError(f"mode axis tilted by {angle:.3f} rad exceeds paraxial limit {settings.MAX_PARAXIAL_TILT}")


def _plane_field(mode: GaussianMode, z_plane: float) -> _PlaneField:
    tx, ty = mode.tilt()
    dz = z_plane - mode.focus[2]
    q = dz + 1j * mode.rayleigh_range
    A = 1j * mode.wavenumber / (2.0 * q)
    center = (mode.focus[0] + tx * dz, mode.focus[1] + ty * dz)
    k = mode.wavenumber
    return _PlaneField(A=A, center=center, phase_slope=(k * tx, k * ty))


def _axis_overlap(A1: complex, c1: float, b1: float, A2: complex, c2: float, b2: float) -> float:
    """|∫ f1* f2 dx| / sqrt(∫|f1|^2 ∫|f2|^2) for one transverse axis."""
    A1c = np.conj(A1)
    alpha = A1c + A2
    beta = 2.0 * (A1c * c1 + A2 * c2) + 1j * (b2 - b1)
    const = -A1c * c1 ** 2 - A2 * c2 ** 2
    log_overlap = 0.5 * np.log(np.pi / alpha) + beta ** 2 / (4.0 * alpha) + const
    log_norm = 0.25 * (np.log(np.pi / (2.0 * A1.real)) + np.log(np.pi / (2.0 * A2.real)))
    return float(np.exp((log_overlap - log_norm).real))


def overlap(m1: GaussianMode, m2: GaussianMode) -> float:
    """Normalized field-amplitude overlap K of two paraxial Gaussian modes."""
    _check_paraxial(m1)
    _check_paraxial(m2)
    if not math.isclose(m1.wavelength, m2.wavelength, rel_tol=1e-12):
        raise DomainError("modes must share a wavelength to interfere")
    # Plane at the mean focus keeps the expression symmetric in (m1, m2).
    z_plane = 0.5 * (m1.focus[2] + m2.focus[2])
    f1 = _plane_field(m1, z_plane)
    f2 = _plane_field(m2, z_plane)
    K = 1.0
    for axis in (0, 1):
        K *= _axis_overlap(f1.A, f1.center[axis], f1.phase_slope[axis],
                           f2.A, f2.center[axis], f2.phase_slope[axis])
    return min(max(K, 0.0), 1.0)


def mode_field(mode: GaussianMode, x: np.ndarray, y: np.ndarray, z_plane: float) -> np.ndarray:
    """Complex transverse field of ``mode`` sampled on (x, y) in the plane z_plane."""
    f = _plane_field(mode, z_plane)
    r2 = (x - f.center[0]) ** 2 + (y - f.center[1]) ** 2
    return np.exp(-f.A * r2 + 1j * (f.phase_slope[0] * x + f.phase_slope[1] * y))


def overlap_numerical(
    m1: GaussianMode,
    m2: GaussianMode,
    n_points: int = settings.OVERLAP_GRID_POINTS,
    span: float = settings.OVERLAP_GRID_SPAN,
) -> float:
    """Overlap K by 2-D quadrature on a square grid (oracle for :func:`overlap`)."""
    if n_points < 256:
        raise DomainError("oracle quadrature needs at least 256 points per axis")
    z_plane = 0.5 * (m1.focus[2] + m2.focus[2])
    c1 = _plane_field(m1, z_plane).center
    c2 = _plane_field(m2, z_plane).center
    half = span * max(m1.waist, m2.waist)
    cx, cy = 0.5 * (c1[0] + c2[0]), 0.5 * (c1[1] + c2[1])
    xs = np.linspace(cx - half, cx + half, n_points)
    ys = np.linspace(cy - half, cy + half, n_points)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    f1 = mode_field(m1, X, Y, z_plane)
    f2 = mode_field(m2, X, Y, z_plane)

    def integrate2d(values: np.ndarray) -> complex:
        return integrate.simpson(integrate.simpson(values, x=ys, axis=1), x=xs)

    num = abs(integrate2d(np.conj(f1) * f2))
    den = math.sqrt(integrate2d(np.abs(f1) ** 2).real * integrate2d(np.abs(f2) ** 2).real)
    return num / den


def offset_overlap(offset: float, waist: float) -> float:
    """Equal-waist transverse offset: K = exp(-d^2 / (2 w^2))."""
    return math.exp(-offset ** 2 / (2.0 * waist ** 2))


def waist_mismatch_overlap(w1: float, w2: float) -> float:
    """Co-focal waist mismatch: K = 2 w1 w2 / (w1^2 + w2^2)."""
    return 2.0 * w1 * w2 / (w1 ** 2 + w2 ** 2)


def scan_ratio(offset, k_max: float, waist: float, center: float = 0.0):
    """R(d) = (1 - K_max^2 exp(-(d - c)^2 / w^2)) / 2."""
    d = np.asarray(offset, dtype=float)
    R = 0.5 * (1.0 - k_max ** 2 * np.exp(-((d - center) ** 2) / waist ** 2))
    return float(R) if R.ndim == 0 else R


def displacement_scan(
    base_modes: Tuple[GaussianMode, GaussianMode],
    offsets: Sequence[float],
    k_max: float = None,
) -> List[Tuple[float, float]]:
    """Predicted normalized zero-delay ratio R for each transverse displacement.

    ``k_max`` defaults to the overlap of the two base modes; the displacement
    moves the second mode along x in the common plane.
    """
    m1, m2 = base_modes
    if k_max is None:
        k_max = overlap(m1, m2)
    if not 0.0 <= k_max <= 1.0:
        raise DomainError(f"K_max must lie in [0, 1], got {k_max}")
    offsets = np.asarray(offsets, dtype=float)
    if not np.all(np.isfinite(offsets)):
        raise DomainError("displacements must be finite")
    waist = m1.waist
    return [(float(d), scan_ratio(d, k_max, waist)) for d in offsets]


def alignment_budget(errors: Sequence[AlignmentError], base: GaussianMode = None) -> Dict:
    """Per-error overlap factors, their product, and the exact combined overlap."""
    base = base or GaussianMode()
    factors = []
    for err in errors:
        k = overlap(base, err.apply(base))
        factors.append({"kind": err.kind, "magnitude": err.magnitude, "K": k})
    product = float(np.prod([f["K"] for f in factors])) if factors else 1.0
    perturbed = base
    for err in errors:
        perturbed = err.apply(perturbed)
    exact = overlap(base, perturbed)
    logger.debug(f"alignment budget: product={product:.6f} exact={exact:.6f}")
    return {
        "factors": factors,
        "K_product": product,
        "K_exact": exact,
        "discrepancy": product - exact,
    }


def build_modes(waist: float, wavelength: float, waist_mismatch: float = 0.0,
                transverse_offset: float = 0.0, focal_shift: float = 0.0,
                axis_tilt: float = 0.0) -> Tuple[GaussianMode, GaussianMode]:
    """Reference mode and a second mode carrying the requested misalignments."""
    m1 = GaussianMode(waist=waist, wavelength=wavelength)
    m2 = replace(m1, waist=waist * (1.0 + waist_mismatch)).shifted(dx=transverse_offset, dz=focal_shift)
    if axis_tilt:
        m2 = replace(m2, direction=GaussianMode.pointing((math.tan(axis_tilt), 0.0, 1.0)).direction)
    return m1, m2
