from __future__ import annotations
from typing import Any, List, Optional


class MptError(Exception):
    """Base class for every error raised by the simulator and analysis code."""


class InvalidArgument(MptError, ValueError):
    pass


class NumericalDegeneracy(MptError, ArithmeticError):
    pass


class CapabilityError(MptError):
    """The requested backend cannot handle the problem size."""


class ResourceExhausted(MptError):
    """A trajectory ran past its bond-dimension or wall-time budget.

    ``record`` holds the partial trajectory with ``complete=False``.
    """

    def __init__(self, message: str, record: Optional[Any] = None):
        super().__init__(message)
        self.record = record


class MergeConflict(MptError):
    pass


class ConfigError(MptError):
    """Malformed configuration; ``diagnostics`` lists one line per problem."""

    def __init__(self, message: str, diagnostics: Optional[List[str]] = None):
        super().__init__(message)
        self.diagnostics = list(diagnostics or [])

    def __str__(self) -> str:
        base = super().__str__()
        if not self.diagnostics:
            return base
        return base + "\n" + "\n".join(f"  {d}" for d in self.diagnostics)
