"""
CSV and JSON readers and atomic writers for histograms, signals and results.
"""

import io
import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from ..config import settings
from ..errors import DataFormatError
from ..models.results import CoincidenceHistogram, NormalizedSignal, ZeroPeakData

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

HISTOGRAM_COLUMNS = ["bin_start_ns", "bin_end_ns", "counts"]
SIGNAL_COLUMNS = ["tau_ns", "value", "sigma"]
SCAN_COLUMNS = ["d_um", "R", "sigma"]


def atomic_write_text(path: PathLike, text: str) -> Path:
    """Write ``text`` through a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    logger.debug(f"wrote {path}")
    return path


def _metadata_lines(metadata: Optional[Dict[str, Any]]) -> str:
    if not metadata:
        return ""
    return "".join(f"# {key}={value}\n" for key, value in metadata.items())


def write_csv(frame: pd.DataFrame, path: PathLike, metadata: Optional[Dict[str, Any]] = None) -> Path:
    body = frame.to_csv(index=False, float_format="%.10g", lineterminator="\n")
    return atomic_write_text(path, _metadata_lines(metadata) + body)


def write_json(path: PathLike, payload: Any) -> Path:
    return atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True, default=json_default) + "\n")


def json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"{type(obj).__name__} is not JSON serializable")


def _split_metadata(path: PathLike) -> Tuple[Dict[str, str], str, int]:
    """Metadata dict, CSV body and the number of metadata lines."""
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines(keepends=True)
    metadata, n_meta = {}, 0
    for line in lines:
        if not line.startswith("#"):
            break
        n_meta += 1
        key, _, value = line[1:].strip().partition("=")
        metadata[key.strip()] = value.strip()
    return metadata, "".join(lines[n_meta:]), n_meta


def read_csv(path: PathLike, columns: List[str]) -> Tuple[pd.DataFrame, Dict[str, str], int]:
    """Numeric CSV with required ``columns``, its metadata and the file line of its first data row.

    Bad rows raise :class:`DataFormatError` carrying their file line number.
    """
    metadata, body, n_meta = _split_metadata(path)
    if not body.strip():
        raise DataFormatError(f"{path}: no data", row=n_meta + 1)
    try:
        frame = pd.read_csv(io.StringIO(body))
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataFormatError(f"{path}: {exc}", row=None) from exc
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise DataFormatError(f"{path}: missing columns {missing}", row=n_meta + 1)
    numeric = frame[columns].apply(pd.to_numeric, errors="coerce")
    bad = numeric.isna().any(axis=1) | ~np.isfinite(numeric.to_numpy(dtype=float)).all(axis=1)
    if bad.any():
        first = int(np.flatnonzero(bad.to_numpy())[0])
        raise DataFormatError(f"{path}: non-numeric or missing value", row=n_meta + 2 + first)
    return numeric, metadata, n_meta + 2


def write_histogram_csv(hist: CoincidenceHistogram, path: PathLike, metadata: Optional[Dict[str, Any]] = None) -> Path:
    frame = pd.DataFrame({
        "bin_start_ns": hist.bin_edges[:-1] * 1e9,
        "bin_end_ns": hist.bin_edges[1:] * 1e9,
        "counts": hist.counts,
    })
    meta = {"kind": "histogram", "configuration": hist.configuration, "total_pulse_cycles": hist.total_pulse_cycles}
    meta.update(metadata or {})
    return write_csv(frame, path, meta)


def read_histogram_csv(path: PathLike) -> CoincidenceHistogram:
    frame, metadata, first_row = read_csv(path, HISTOGRAM_COLUMNS)
    counts = frame["counts"].to_numpy()
    bad = np.flatnonzero((counts < 0) | (counts != np.round(counts)))
    if len(bad):
        raise DataFormatError(f"{path}: counts must be non-negative integers", row=first_row + int(bad[0]))
    edges = np.append(frame["bin_start_ns"].to_numpy(), frame["bin_end_ns"].to_numpy()[-1]) * 1e-9
    return CoincidenceHistogram(
        bin_edges=edges,
        counts=counts.astype(np.int64),
        configuration=metadata.get("configuration", "mixer"),
        total_pulse_cycles=int(float(metadata.get("total_pulse_cycles", 0))),
        metadata=metadata,
    )


def write_signal_csv(signal: NormalizedSignal, path: PathLike, metadata: Optional[Dict[str, Any]] = None) -> Path:
    frame = pd.DataFrame({"tau_ns": signal.centers * 1e9, "value": signal.values, "sigma": signal.sigma})
    meta = {
        "kind": "normalized_signal",
        "mode": signal.mode,
        "reference_height": signal.reference_height,
        "bin_width_ns": signal.bin_width * 1e9,
        "pulse_period_ns": signal.pulse_period * 1e9,
        "zero_delay_ratio": signal.zero_delay_ratio,
        "zero_delay_sigma": signal.zero_delay_sigma,
    }
    meta.update(metadata or {})
    return write_csv(frame, path, meta)


def read_signal_csv(path: PathLike) -> NormalizedSignal:
    frame, metadata, _ = read_csv(path, SIGNAL_COLUMNS)
    centers = frame["tau_ns"].to_numpy() * 1e-9
    bin_width = float(metadata.get("bin_width_ns", np.nan)) * 1e-9
    if not np.isfinite(bin_width):
        bin_width = float(centers[1] - centers[0]) if len(centers) > 1 else 0.0
    return NormalizedSignal(
        centers=centers,
        values=frame["value"].to_numpy(),
        sigma=frame["sigma"].to_numpy(),
        reference_height=float(metadata.get("reference_height", 1.0)),
        bin_width=bin_width,
        mode=metadata.get("mode", "area"),
        zero_delay_ratio=float(metadata.get("zero_delay_ratio", "nan")),
        zero_delay_sigma=float(metadata.get("zero_delay_sigma", "nan")),
        pulse_period=float(metadata.get("pulse_period_ns", 0.0)) * 1e-9,
    )


def write_peak_csv(data: ZeroPeakData, path: PathLike, metadata: Optional[Dict[str, Any]] = None) -> Path:
    frame = pd.DataFrame({"tau_ns": data.tau * 1e9, "value": data.value, "sigma": data.sigma})
    meta = {"kind": "zero_peak", "background": data.background}
    if data.bin_width:
        meta["bin_width_ns"] = data.bin_width * 1e9
    meta.update(metadata or {})
    return write_csv(frame, path, meta)


def read_peak_csv(path: PathLike) -> ZeroPeakData:
    frame, metadata, _ = read_csv(path, SIGNAL_COLUMNS)
    bin_width = metadata.get("bin_width_ns")
    return ZeroPeakData(
        tau=frame["tau_ns"].to_numpy() * 1e-9,
        value=frame["value"].to_numpy(),
        sigma=frame["sigma"].to_numpy(),
        background=float(metadata.get("background", 0.0)),
        bin_width=float(bin_width) * 1e-9 if bin_width else None,
    )


def csv_kind(path: PathLike) -> str:
    """'histogram', 'normalized_signal' or 'zero_peak', from metadata or columns."""
    metadata, body, _ = _split_metadata(path)
    if "kind" in metadata:
        return metadata["kind"]
    header = body.splitlines()[0] if body.strip() else ""
    return "histogram" if "bin_start_ns" in header else "zero_peak"


def write_scan_csv(rows: Iterable[Tuple[float, float, float]], path: PathLike,
                   metadata: Optional[Dict[str, Any]] = None) -> Path:
    data = np.asarray(list(rows), dtype=float).reshape(-1, 3)
    frame = pd.DataFrame({"d_um": data[:, 0] * 1e6, "R": data[:, 1], "sigma": data[:, 2]})
    return write_csv(frame, path, dict({"kind": "displacement_scan"}, **(metadata or {})))


def write_trajectory_csv(pulse_index: np.ndarray, lightshift: np.ndarray, positions: np.ndarray,
                         path: PathLike, metadata: Optional[Dict[str, Any]] = None) -> Path:
    """Debug dump: pulse_index, U_over_kB_in_uK, x, y, z (positions in um)."""
    frame = pd.DataFrame({
        "pulse_index": np.asarray(pulse_index, dtype=int),
        "U_over_kB_in_uK": np.asarray(lightshift) / settings.K_B * 1e6,
        "x_um": positions[:, 0] * 1e6,
        "y_um": positions[:, 1] * 1e6,
        "z_um": positions[:, 2] * 1e6,
    })
    return write_csv(frame, path, metadata)
