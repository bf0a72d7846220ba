"""
Exception hierarchy for the photon coalescence toolkit.
"""

from typing import Any, Dict, List, Optional


class CoalescenceError(Exception):
    """Base class for every error raised by the package."""


class DomainError(CoalescenceError, ValueError):
    """An argument lies outside the physical domain of an operation."""


class PreconditionError(DomainError):
    """Input data does not satisfy an analysis or fit contract."""


class NoPeaksFoundError(DomainError):
    """A histogram holds no identifiable coincidence peaks."""


class NumericalError(CoalescenceError, ArithmeticError):
    """Quadrature or optimisation failed to reach its tolerance."""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}

    def __str__(self) -> str:
        base = super().__str__()
        if not self.diagnostics:
            return base
        details = ", ".join(f"{k}={v}" for k, v in self.diagnostics.items())
        return f"{base} ({details})"


class ConfigError(CoalescenceError):
    """Configuration document is unreadable or fails validation."""

    def __init__(self, message: str, problems: Optional[List[str]] = None):
        super().__init__(message)
        self.problems = problems or []

    def __str__(self) -> str:
        base = super().__str__()
        if not self.problems:
            return base
        return base + "\n" + "\n".join(f"  - {p}" for p in self.problems)


class DataFormatError(CoalescenceError):
    """An input data file cannot be parsed."""

    def __init__(self, message: str, row: Optional[int] = None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row
