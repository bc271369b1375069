"""Exception hierarchy. Each family maps onto one CLI exit code."""

from __future__ import annotations


class CfdFinError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(CfdFinError):
    exit_code = 1


class DataError(CfdFinError):
    exit_code = 2


class SolverError(CfdFinError):
    exit_code = 3


class UndefinedMetricError(ValueError):
    """Raised when a ratio metric has a non-positive denominator."""
