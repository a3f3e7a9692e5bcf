# helpers/utils.py - Small parsing helpers and named data profiles for the CLI
import logging
import math
from typing import Callable, Dict, List, Optional

import numpy as np

from config.constants import FORCING_PROFILES, INTEGRAND_NAMES, U0_PROFILES
from core.errors import ConfigError

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(level: str = "WARNING") -> None:
    """Root logger on stderr; stdout stays reserved for CSV/JSON output"""
    numeric = getattr(logging, str(level).upper(), None)
    if not isinstance(numeric, int):
        raise ConfigError(f"unknown log level {level!r}")
    logging.basicConfig(level=numeric, format=LOG_FORMAT, force=True)


def format_float(value: float) -> str:
    return "%.17g" % value


def parse_float_list(text: Optional[str]) -> List[float]:
    """'5,10, 12.5' -> [5.0, 10.0, 12.5]; empty -> []"""
    if text is None or not str(text).strip():
        return []
    try:
        return [float(item) for item in str(text).split(",") if item.strip()]
    except ValueError as exc:
        raise ConfigError(f"expected a comma-separated list of numbers, got {text!r}") from exc


# Named integrands for `integrate`
INTEGRANDS: Dict[str, Callable[[float], float]] = {
    "one": lambda t: 1.0,
    "t": lambda t: t,
    "t2": lambda t: t * t,
    "cos": math.cos,
    "sin": math.sin,
    "exp": math.exp,
}


def named_integrand(name: str) -> Callable[[float], float]:
    if name not in INTEGRANDS:
        raise ConfigError(f"unknown integrand '{name}', expected one of {INTEGRAND_NAMES}")
    return INTEGRANDS[name]


def modal_u0(name: str, n_modes: int, seed: int = 0, nodal_projector=None,
             nodes: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Modal coefficients of a named initial datum. Nodal profiles
    (paraboloid, constant) need a mesh: `nodes` and a projector u -> V^T M u.
    """
    if name not in U0_PROFILES:
        raise ConfigError(f"unknown u0 profile '{name}', expected one of {U0_PROFILES}")
    if name == "first_mode":
        coeffs = np.zeros(n_modes)
        coeffs[0] = 1.0
        return coeffs
    if name == "decaying":
        return 1.0 / np.arange(1, n_modes + 1)
    if name == "random":
        return np.random.default_rng(seed).standard_normal(n_modes)
    if nodal_projector is None or nodes is None:
        raise ConfigError(f"u0 profile '{name}' is nodal and needs --mesh")
    if name == "paraboloid":
        nodal = np.sum(nodes ** 2, axis=1)
    else:
        nodal = np.ones(nodes.shape[0])
    return np.asarray(nodal_projector(nodal), dtype=float)[:n_modes]


def modal_forcing(name: str, n_modes: int, horizon: float) -> List[Optional[Callable[[float], float]]]:
    """Per-mode forcing functions; only the first mode is forced by the nonzero profiles"""
    if name not in FORCING_PROFILES:
        raise ConfigError(f"unknown forcing profile '{name}', expected one of {FORCING_PROFILES}")
    forcing: List[Optional[Callable[[float], float]]] = [None] * n_modes
    if name == "constant":
        forcing[0] = lambda t: 1.0
    elif name == "pulse":
        half = 0.5 * horizon
        forcing[0] = lambda t: 1.0 if t < half else 0.0
    return forcing
