#!/usr/bin/env python3
"""
Exception hierarchy for the greensolve lab.

Every error raised on purpose by the lab derives from GreenSolveError so the
command line runner can turn it into a non-zero exit status. Errors that are
also bad arguments derive from ValueError as well.

Usage:
    from errors import ParameterError
    raise ParameterError("radial_count must be >= 4, got 2")
"""

from typing import Any, List, Optional


class GreenSolveError(Exception):
    """Base class of all lab errors."""


class ParameterError(GreenSolveError, ValueError):
    """Invalid numeric parameter (counts, exponents, thresholds, norms)."""


class DomainError(GreenSolveError, ValueError):
    """A point or atom lies outside the unit ball or too close to a node."""


class SingularityError(GreenSolveError, ValueError):
    """Kernel evaluated on the diagonal x = y."""


class UnsupportedRegimeError(GreenSolveError):
    """The kernel is not singular on the diagonal (n - 2s <= 0)."""


class SolverError(GreenSolveError):
    """A linear system could not be solved."""


class ConvergenceError(SolverError):
    """An iteration or a cutoff ladder hit its cap before converging."""

    def __init__(self, message: str, trace: Optional[List[Any]] = None):
        super().__init__(message)
        self.trace = list(trace or [])


class InvariantError(GreenSolveError):
    """An ordering or monotonicity property failed beyond tolerance."""

    def __init__(self, message: str, evidence: Any = None):
        super().__init__(message)
        self.evidence = evidence


class ConfigError(GreenSolveError, ValueError):
    """Experiment configuration could not be parsed or validated."""

    def __init__(self, message: str, field: str = None, line: int = None):
        location = []
        if field:
            location.append(f"field '{field}'")
        if line is not None:
            location.append(f"line {line}")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message)
        self.field = field
        self.line = line


class CacheMismatchError(GreenSolveError):
    """A kernel cache file does not match the requested assembly."""
