# config/__init__.py - Package initialization
"""
Configuration package for the g-spectral solver
"""

from .constants import (
    SCHEMA_VERSION,
    CSV_FLOAT_FORMAT,
    BUILTIN_DERIVATORS,
    CLI_SUBCOMMANDS,
    GAUSS_LEGENDRE_ORDER
)

from .settings import SolverSettings, RunConfig

__all__ = [
    'SCHEMA_VERSION',
    'CSV_FLOAT_FORMAT',
    'BUILTIN_DERIVATORS',
    'CLI_SUBCOMMANDS',
    'GAUSS_LEGENDRE_ORDER',
    'SolverSettings',
    'RunConfig'
]
