"""
JSON run configuration: unit-suffixed quantities, dotted-path overrides and
a stable configuration hash.
"""

import hashlib
import json
import logging
import re
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Union

from pydantic import ValidationError

from ..errors import ConfigError
from ..models.config import RunConfig
from .settings import K_B

logger = logging.getLogger(__name__)

UNIT_FACTORS: Dict[str, float] = {
    # time
    "s": 1.0, "ms": 1e-3, "us": 1e-6, "µs": 1e-6, "μs": 1e-6, "ns": 1e-9, "ps": 1e-12,
    # length
    "m": 1.0, "mm": 1e-3, "um": 1e-6, "µm": 1e-6, "μm": 1e-6, "nm": 1e-9,
    # temperature
    "K": 1.0, "mK": 1e-3, "uK": 1e-6, "µK": 1e-6, "μK": 1e-6, "nK": 1e-9,
    # frequency
    "Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "GHz": 1e9,
    # angle
    "rad": 1.0, "mrad": 1e-3, "urad": 1e-6, "µrad": 1e-6,
    # count rates
    "/s": 1.0, "cps": 1.0,
    "%": 1e-2,
}

# Quantities given as temperatures but stored as energies.
ENERGY_FIELDS = {"physics.trap.depth"}

# Free-text sections, never read as quantities.
TEXT_SECTIONS = ("output",)

_QUANTITY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([^\s\d][^\s]*)?\s*$")


def parse_quantity(text: str) -> float:
    """'115 µs' -> 1.15e-4; a bare number is taken as SI."""
    match = _QUANTITY.match(text)
    if not match:
        raise ValueError(f"not a quantity: {text!r}")
    number, unit = match.groups()
    if unit is None:
        return float(number)
    if unit not in UNIT_FACTORS:
        raise ValueError(f"unknown unit {unit!r} in {text!r}")
    return float(number) * UNIT_FACTORS[unit]


def _has_unit(text: str) -> bool:
    """Bare numbers are left to the model, which coerces them by field type."""
    match = _QUANTITY.match(text)
    return bool(match) and match.group(2) is not None


def _convert(node: Any, path: str = "") -> Any:
    if isinstance(node, dict):
        return {key: _convert(value, f"{path}.{key}" if path else key) for key, value in node.items()}
    if isinstance(node, list):
        return [_convert(value, f"{path}[{i}]") for i, value in enumerate(node)]
    if isinstance(node, str) and not path.startswith(TEXT_SECTIONS) and _has_unit(node):
        try:
            value = parse_quantity(node)
        except ValueError as exc:
            raise ConfigError(f"invalid quantity at {path}", [f"{path}: {exc}"]) from exc
        if path in ENERGY_FIELDS and node.strip().endswith("K"):
            value *= K_B
        return value
    return node


def _parse_override_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(data: Dict[str, Any], overrides: Iterable[str]) -> Dict[str, Any]:
    """Apply ``a.b.c=value`` overrides to a nested dict (in place)."""
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"override {item!r} is not KEY=VALUE", [item])
        parts = key.strip().split(".")
        node = data
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(f"cannot override inside non-object {part!r}", [key])
            node = child
        node[parts[-1]] = _parse_override_value(raw.strip())
    return data


def _format_validation_error(exc: ValidationError) -> list:
    return [f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in exc.errors()]


def load_config(path: Optional[Union[str, Path]] = None, overrides: Iterable[str] = ()) -> RunConfig:
    """Read a JSON run configuration, apply overrides and validate it."""
    data: Dict[str, Any] = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}", [str(path)]) from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON", [f"line {exc.lineno}, column {exc.colno}: {exc.msg}"]) from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object", ["<root>"])
    apply_overrides(data, overrides)
    data = _convert(data)
    try:
        config = RunConfig.model_validate(data)
    except ValidationError as exc:
        problems = _format_validation_error(exc)
        raise ConfigError(f"invalid configuration ({len(problems)} problem(s))", problems) from exc
    logger.debug(f"configuration loaded from {path or 'defaults'}")
    return config


def config_dict(config: RunConfig) -> Dict[str, Any]:
    return config.model_dump(mode="json")


def config_hash(config: RunConfig) -> str:
    """sha256 of the canonical JSON form."""
    canonical = json.dumps(config_dict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
