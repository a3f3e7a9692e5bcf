# config/settings.py - User-configurable settings and defaults
"""
Default numerical settings that users might want to modify
Environment variables (optionally from a .env file) override the tolerance,
the worker count and the log level
"""
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

from config.constants import ENV_LOG_LEVEL, ENV_TOLERANCE, ENV_WORKERS
from core.errors import ConfigError


class SolverSettings:
    """Numerical settings that can be customized"""

    # Stieltjes quadrature
    DEFAULT_TOL = 1e-10
    MAX_BISECTION_DEPTH = 60

    # Time grids
    POINTS_PER_STRETCH = 200

    # Eigen-solve
    DENSE_EIGEN_THRESHOLD = 2000
    DEFAULT_N_MODES = 150

    # Per-mode parallelism (1 = sequential)
    WORKERS = 1

    LOG_LEVEL = "WARNING"

    @classmethod
    def get_default_config(cls) -> Dict[str, Any]:
        """Get default configuration dictionary, env overrides applied"""
        return {
            'tol': cls.default_tol(),
            'max_depth': cls.MAX_BISECTION_DEPTH,
            'points_per_stretch': cls.POINTS_PER_STRETCH,
            'dense_threshold': cls.DENSE_EIGEN_THRESHOLD,
            'n_modes': cls.DEFAULT_N_MODES,
            'workers': cls.workers(),
            'log_level': cls.log_level(),
        }

    @classmethod
    def default_tol(cls) -> float:
        """Quadrature tolerance, GSPECTRAL_TOL wins over the class default"""
        raw = os.getenv(ENV_TOLERANCE)
        if raw is None or not raw.strip():
            return cls.DEFAULT_TOL
        try:
            tol = float(raw)
        except ValueError as exc:
            raise ConfigError(f"{ENV_TOLERANCE}={raw!r} is not a number") from exc
        if not tol > 0:
            raise ConfigError(f"{ENV_TOLERANCE} must be positive, got {tol!r}")
        return tol

    @classmethod
    def workers(cls) -> int:
        """Worker threads for per-mode solves"""
        raw = os.getenv(ENV_WORKERS)
        if raw is None or not raw.strip():
            return cls.WORKERS
        try:
            workers = int(raw)
        except ValueError as exc:
            raise ConfigError(f"{ENV_WORKERS}={raw!r} is not an integer") from exc
        if workers < 1:
            raise ConfigError(f"{ENV_WORKERS} must be >= 1, got {workers}")
        return workers

    @classmethod
    def log_level(cls) -> str:
        """Root log level name"""
        return (os.getenv(ENV_LOG_LEVEL) or cls.LOG_LEVEL).upper()


@dataclass(frozen=True)
class RunConfig:
    """Everything one CLI invocation needs; validated on construction"""
    subcommand: str
    derivator: str = "identity"
    params: Dict[str, Any] = field(default_factory=dict)
    outputs: Dict[str, Optional[Path]] = field(default_factory=dict)
    tol: float = SolverSettings.DEFAULT_TOL
    seed: int = 0

    def __post_init__(self):
        if not self.tol > 0:
            raise ConfigError(f"tolerance must be positive, got {self.tol!r}")
        for name, path in self.outputs.items():
            if path is None:
                continue
            parent = Path(path).resolve().parent
            if not parent.is_dir():
                raise ConfigError(f"output '{name}': directory {parent} does not exist")
            if not os.access(parent, os.W_OK):
                raise ConfigError(f"output '{name}': directory {parent} is not writable")

    def to_dict(self) -> Dict[str, Any]:
        """Provenance block stored in JSON reports"""
        return {
            'subcommand': self.subcommand,
            'derivator': self.derivator,
            'params': dict(self.params),
            'tol': self.tol,
            'seed': self.seed,
        }
