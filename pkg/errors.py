#!/usr/bin/env python3
"""
Error kinds raised by the toolkit. The CLI maps them to exit codes.
"""

from typing import Optional


class NfffError(Exception):
    """Base class for all toolkit errors."""


class InvalidArgumentError(NfffError, ValueError):
    """An argument violates an operation precondition."""


class DegenerateGeometryError(NfffError, ValueError):
    """A source point falls inside the exclusion ball of an antenna element."""


class NumericalFailureError(NfffError, ArithmeticError):
    """A solve, factorization or iterative fit did not produce a usable result."""


class NoSolutionError(NfffError):
    """A search interval does not contain a solution."""


class RunLevelFailureError(NumericalFailureError):
    """Too many sweep cells failed for the run to be trusted."""

    def __init__(self, message: str, result=None):
        super().__init__(message)
        self.result = result


class OutputError(NfffError, OSError):
    """Writing a result file or its sidecar failed."""


class ConfigError(NfffError, ValueError):
    """Scenario configuration or command-line argument error."""

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message)
        self.key = key
