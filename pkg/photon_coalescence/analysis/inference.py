"""
Parameter extraction: (K, T) from the zero-delay peak and (K_max, center)
from the displacement scan.
"""

import logging
import math
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy import optimize

from ..config import settings
from ..errors import NumericalError, PreconditionError
from ..models.config import BroadeningParams
from ..models.results import FitResult, ZeroPeakData
from ..simulation.coincidence_model import broadened_signal
from ..simulation.spatial_mode import scan_ratio

logger = logging.getLogger(__name__)

MICRO = 1e-6
GAUSS_NODES, GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(8)

PeakInput = Union[ZeroPeakData, Tuple[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def zero_peak_model(
    tau: np.ndarray,
    K: float,
    temperature: float,
    decay_rate: float = settings.DECAY_RATE,
    eta: float = settings.DIFFERENTIAL_SHIFT_FACTOR,
    bin_width: Optional[float] = None,
) -> np.ndarray:
    """Broadened signal, averaged over each bin when ``bin_width`` is given."""
    params = BroadeningParams.model_construct(
        temperature=temperature, differential_shift_factor=eta, decay_rate=decay_rate
    )
    tau = np.asarray(tau, dtype=float)
    if not bin_width:
        return broadened_signal(tau, K, params)
    nodes = tau[:, None] + 0.5 * bin_width * GAUSS_NODES[None, :]
    return broadened_signal(nodes, K, params) @ GAUSS_WEIGHTS / 2.0


def _as_arrays(peak_data: PeakInput) -> Tuple[np.ndarray, np.ndarray, np.ndarray, Optional[float]]:
    if isinstance(peak_data, ZeroPeakData):
        return (np.asarray(peak_data.tau, float), np.asarray(peak_data.value, float),
                np.asarray(peak_data.sigma, float), peak_data.bin_width)
    if isinstance(peak_data, np.ndarray) and peak_data.ndim == 2:
        peak_data = (peak_data[:, 0], peak_data[:, 1], peak_data[:, 2])
    tau, value, sigma = (np.asarray(a, dtype=float) for a in peak_data)
    return tau, value, sigma, None


def _start_grid(n_starts: int) -> np.ndarray:
    n_k = max(math.ceil(n_starts / 2), 1)
    return np.array([(k, t) for k in np.linspace(0.2, 0.9, n_k) for t in (40.0, 300.0)])


class _ZeroPeakProblem:
    """Residuals of the (K, T[uK]) problem with the amplitude profiled out."""

    def __init__(self, tau, value, sigma, decay_rate, eta, bin_width, amplitude, amplitude_rel_sigma):
        self.tau, self.value = tau, value
        self.set_sigma(sigma)
        self.decay_rate, self.eta, self.bin_width = decay_rate, eta, bin_width
        self.amplitude = amplitude
        self.prior_sigma = None if amplitude_rel_sigma is None else amplitude_rel_sigma * amplitude

    def set_sigma(self, sigma: np.ndarray) -> None:
        self.sigma = sigma
        self.weights = 1.0 / sigma ** 2

    def shape(self, x) -> np.ndarray:
        return zero_peak_model(self.tau, x[0], x[1] * MICRO, self.decay_rate, self.eta, self.bin_width)

    def profiled_amplitude(self, m: np.ndarray) -> float:
        num = np.sum(self.weights * self.value * m)
        den = np.sum(self.weights * m ** 2)
        if self.prior_sigma is not None:
            num += self.amplitude / self.prior_sigma ** 2
            den += 1.0 / self.prior_sigma ** 2
        return float(num / den) if den > 0 else 0.0

    def data_residuals(self, x) -> Tuple[np.ndarray, float]:
        m = self.shape(x)
        a = self.profiled_amplitude(m)
        return (self.value - a * m) / self.sigma, a

    def residuals(self, x) -> np.ndarray:
        r, a = self.data_residuals(x)
        if self.prior_sigma is None:
            return r
        return np.append(r, (a - self.amplitude) / self.prior_sigma)

    def cost(self, x) -> float:
        return float(np.sum(self.residuals(x) ** 2))


def _solve(problem: _ZeroPeakProblem, x0, lower, upper, max_nfev: int):
    return optimize.least_squares(
        problem.residuals, x0, bounds=(lower, upper), method="trf", jac="3-point",
        x_scale=np.array([0.1, 50.0]), xtol=1e-12, ftol=1e-12, gtol=1e-12, max_nfev=max_nfev,
    )


def _counts_per_unit(value: np.ndarray, sigma: np.ndarray) -> Optional[float]:
    """Counts per unit of normalized value implied by sqrt(N) errors."""
    scale = float(np.sum(value) / np.sum(sigma ** 2))
    return scale if np.isfinite(scale) and scale > 0 else None


def _model_sigma(problem: _ZeroPeakProblem, x, value: np.ndarray, sigma: np.ndarray, scale: float) -> np.ndarray:
    """Errors with the observed-count variance of each point swapped for the model's."""
    m = problem.shape(x)
    variance = sigma ** 2 + (problem.profiled_amplitude(m) * m - value) / scale
    return np.sqrt(np.maximum(variance, 1.0 / scale ** 2))


def _poisson_reweight(problem: _ZeroPeakProblem, best, sigma: np.ndarray, lower, upper, max_nfev: int):
    """Iterate weights until the fit is a fixed point; that point is the Poisson maximum likelihood."""
    scale = _counts_per_unit(problem.value, sigma)
    if scale is None:
        logger.warning("peak values do not look like counts; keeping the supplied errors")
        return best
    for iteration in range(settings.FIT_REWEIGHT_ITERATIONS):
        previous = problem.sigma
        problem.set_sigma(_model_sigma(problem, best.x, problem.value, sigma, scale))
        res = _solve(problem, best.x, lower, upper, max_nfev)
        if res.status <= 0:
            problem.set_sigma(previous)
            logger.warning(f"reweighted fit stopped at iteration {iteration}: {res.message}")
            return _solve(problem, best.x, lower, upper, max_nfev)
        step = np.abs(res.x - best.x)
        best = res
        if step[0] < 1e-7 and step[1] < 1e-4:
            break
    return best


def _temperature_upper_bound(problem: _ZeroPeakProblem, best_x: np.ndarray, best_cost: float,
                             t_max: float, max_nfev: int) -> float:
    """T where the K-profiled chi-square rises by one above its minimum."""
    def profile(t_micro: float) -> float:
        res = optimize.minimize_scalar(lambda k: problem.cost((k, t_micro)), bounds=(0.0, 1.0),
                                       method="bounded", options={"xatol": 1e-10, "maxiter": max_nfev})
        return res.fun - best_cost - 1.0

    if profile(t_max) < 0:
        return t_max * MICRO
    return optimize.brentq(profile, best_x[1], t_max, xtol=1e-6) * MICRO


def fit_zero_peak(
    peak_data: PeakInput,
    decay_rate: float = settings.DECAY_RATE,
    eta: float = settings.DIFFERENTIAL_SHIFT_FACTOR,
    amplitude: float = settings.FIT_AMPLITUDE,
    amplitude_rel_sigma: Optional[float] = settings.FIT_AMPLITUDE_REL_SIGMA,
    bin_width: Optional[float] = None,
    weighting: str = settings.FIT_WEIGHTING,
    n_starts: int = settings.FIT_MULTI_STARTS,
    max_nfev: int = settings.FIT_MAX_EVALUATIONS,
) -> FitResult:
    """Weighted least-squares fit of the broadened zero-delay peak for (K, T).

    The amplitude is tied to the normalization: it is profiled analytically
    under a Gaussian constraint around ``amplitude`` of relative width
    ``amplitude_rel_sigma`` (None leaves it free).

    With ``weighting="poisson"`` the errors are recomputed from the model
    until the fit settles, which removes the low-count bias of sqrt(N)
    weights; ``"data"`` keeps the supplied errors.
    """
    tau, value, sigma, data_bin_width = _as_arrays(peak_data)
    bin_width = bin_width if bin_width is not None else data_bin_width
    if len(tau) < settings.FIT_MIN_POINTS:
        raise PreconditionError(f"need at least {settings.FIT_MIN_POINTS} points, got {len(tau)}")
    if not (len(tau) == len(value) == len(sigma)):
        raise PreconditionError("tau, value and sigma must have equal length")
    if not (np.all(np.isfinite(tau)) and np.all(np.isfinite(value)) and np.all(np.isfinite(sigma))):
        raise PreconditionError("peak data must be finite")
    if np.any(sigma <= 0):
        raise PreconditionError("uncertainties must be positive")
    if not decay_rate > 0:
        raise PreconditionError("decay rate must be positive")
    if weighting not in ("poisson", "data"):
        raise PreconditionError(f"unknown weighting {weighting!r}")
    if np.max(np.abs(tau)) > 4.0 / decay_rate:
        raise PreconditionError(f"points must lie within |tau| <= 4/Gamma = {4e9 / decay_rate:.1f} ns")

    problem = _ZeroPeakProblem(tau, value, sigma, decay_rate, eta, bin_width, amplitude, amplitude_rel_sigma)
    t_max = settings.FIT_TEMPERATURE_MAX / MICRO
    lower, upper = np.array([0.0, 0.0]), np.array([1.0, t_max])

    trace, best = [], None
    for x0 in _start_grid(n_starts):
        res = _solve(problem, x0, lower, upper, max_nfev)
        trace.append({"start": x0.tolist(), "x": res.x.tolist(), "cost": float(res.cost), "status": int(res.status)})
        logger.debug(f"start K={x0[0]:.2f} T={x0[1]:.0f} uK -> K={res.x[0]:.4f} T={res.x[1]:.2f} uK cost={res.cost:.4g}")
        if res.status > 0 and (best is None or res.cost < best.cost):
            best = res
    if best is None:
        raise NumericalError("zero-peak fit did not converge from any start", {"trace": trace})
    if weighting == "poisson":
        best = _poisson_reweight(problem, best, sigma, lower, upper, max_nfev)

    K, t_micro = float(best.x[0]), float(best.x[1])
    r, a = problem.data_residuals(best.x)
    JtJ = best.jac.T @ best.jac
    cov = np.linalg.pinv(JtJ)
    sigma_k = float(np.sqrt(max(cov[0, 0], 0.0)))
    sigma_t = float(np.sqrt(max(cov[1, 1], 0.0))) * MICRO

    at_bound = []
    if K < 1e-6 or K > 1.0 - 1e-6:
        at_bound.append("K")
    upper_bounds = {}
    if t_micro < 1e-3:
        at_bound.append("T")
    if t_micro < 1e-3 or t_micro * MICRO < sigma_t:
        # consistent with zero: quote a one-sided bound instead of a symmetric error
        upper_bounds["T"] = _temperature_upper_bound(problem, best.x, 2.0 * best.cost, t_max, max_nfev)
        sigma_t = upper_bounds["T"] - t_micro * MICRO
    if at_bound:
        logger.warning(f"zero-peak fit at parameter bound: {', '.join(at_bound)}")

    dof = len(tau) - (2 if amplitude_rel_sigma is not None else 3)
    result = FitResult(
        model="zero_peak",
        params={"K": K, "T": t_micro * MICRO, "amplitude": a},
        sigmas={"K": sigma_k, "T": sigma_t},
        chi2=float(np.sum(r ** 2)),
        dof=dof,
        converged=True,
        at_bound=at_bound,
        upper_bounds=upper_bounds,
        residuals=r.tolist(),
    )
    logger.info(f"zero-peak fit: K={K:.4f}+/-{sigma_k:.4f}, T={t_micro:.1f}+/-{sigma_t / MICRO:.1f} uK, "
                f"chi2/dof={result.chi2:.1f}/{dof}")
    return result


def fit_displacement_scan(points: Union[np.ndarray, Sequence[Tuple[float, float, float]]], waist: float) -> FitResult:
    """Fit R(d) = (1 - K_max^2 exp(-(d - center)^2 / w^2)) / 2 with w fixed."""
    data = np.asarray(points, dtype=float)
    if data.ndim != 2 or data.shape[1] != 3:
        raise PreconditionError("scan points must be (d, R, sigma) triples")
    if len(data) < 4:
        raise PreconditionError(f"need at least 4 scan points, got {len(data)}")
    if not waist > 0:
        raise PreconditionError(f"beam waist must be positive, got {waist}")
    d, R, sigma = data.T
    if not np.all(np.isfinite(data)):
        raise PreconditionError("scan points must be finite")
    if np.any(sigma <= 0):
        raise PreconditionError("uncertainties must be positive")
    if np.ptp(d) == 0:
        raise PreconditionError("degenerate scan: all displacements are equal")

    k0 = float(np.clip(np.sqrt(max(1.0 - 2.0 * R.min(), 0.0)), 0.05, 0.99))
    c0 = float(d[np.argmin(R)])

    def model(x, k_max, center):
        return scan_ratio(x, k_max, waist, center)

    try:
        popt, pcov = optimize.curve_fit(
            model, d, R, p0=(k0, c0), sigma=sigma, absolute_sigma=True,
            bounds=([0.0, -np.inf], [1.0, np.inf]), method="trf",
            xtol=1e-14, ftol=1e-14, gtol=1e-14, max_nfev=settings.FIT_MAX_EVALUATIONS,
        )
    except (RuntimeError, optimize.OptimizeWarning) as exc:
        raise NumericalError("displacement-scan fit did not converge", {"error": str(exc)}) from exc

    residuals = (R - model(d, *popt)) / sigma
    perr = np.sqrt(np.clip(np.diag(pcov), 0.0, None))
    at_bound = ["K_max"] if popt[0] > 1.0 - 1e-9 or popt[0] < 1e-9 else []
    result = FitResult(
        model="displacement_scan",
        params={"K_max": float(popt[0]), "center": float(popt[1])},
        sigmas={"K_max": float(perr[0]), "center": float(perr[1])},
        chi2=float(np.sum(residuals ** 2)),
        dof=len(d) - 2,
        at_bound=at_bound,
        residuals=residuals.tolist(),
    )
    logger.info(f"scan fit: K_max={popt[0]:.4f}+/-{perr[0]:.4f}, center={popt[1] * 1e6:.2f} um")
    return result
