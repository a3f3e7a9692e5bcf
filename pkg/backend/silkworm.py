# backend/silkworm.py - Silkworm population model: 0-d mean model and 2-d spectral model
"""
Life cycle of period 5: larvae/adults live on (5k, 5k+4], die at 5k+4 and the
next generation is born at 5(k+1) from the memory of the previous cycle.

Mode k of the 2-d model with generalized eigenvalue lambda_h decays on every
live window with rate r = lambda_h + c - 1 in the g variable:

    xi(t) = xi(0) exp(-r g(t))                                  t in [0, 4]
    xi(t) = lambda_birth I_{k-1} exp(-r (g(t) - g(5k+)))        t in (5k, 5k+4]
    xi(t) = 0                                                   otherwise

with I_{k-1} the ds-integral of xi over [5(k-1), 5k-1]. The constant mode has
lambda_h = 1 and reproduces the 0-d model of the spatial mean.
"""
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy.integrate import solve_ivp

from config.constants import SILKWORM_ADULT_AGE, SILKWORM_MEMORY_WINDOW, SILKWORM_PERIOD
from config.settings import SolverSettings
from core.derivator import Derivator, SegmentKind, default_grid, silkworm_derivator
from core.errors import ConfigError, ModelError, QuadratureError
from core.g_ode import jump_update
from core.stieltjes_integral import integrate_classical
from backend.fem import (
    EigenBasis, Mesh, assemble_mass, assemble_stiffness, evaluate, project, solve_generalized_eig,
)
from helpers.file_handler import FileHandler

logger = logging.getLogger(__name__)

History = Callable[[float], float]

# Positivity of reconstructed snapshots is checked up to this fraction of the max
POSITIVITY_TOL = 1e-3


@dataclass(frozen=True)
class SilkwormParams:
    """Model parameters; every value must be positive"""
    c: float = 1.0
    lambda_birth: float = 2.0
    x0_total: float = 1.0
    eta: float = 1e-3
    T: float = 15.0
    n_modes: int = SolverSettings.DEFAULT_N_MODES

    def __post_init__(self):
        for name in ("c", "lambda_birth", "x0_total", "eta", "T"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ConfigError(f"silkworm parameter '{name}' must be positive, got {value!r}")
        if not (isinstance(self.n_modes, int) and self.n_modes >= 1):
            raise ConfigError(f"silkworm parameter 'n_modes' must be a positive integer, got {self.n_modes!r}")

    @classmethod
    def from_dict(cls, data: Dict) -> "SilkwormParams":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown silkworm parameter(s): {', '.join(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> "SilkwormParams":
        data = FileHandler.load_json(path)
        if not isinstance(data, dict):
            raise ConfigError("silkworm parameter file must contain a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass(eq=False)
class ModelOutput:
    """Time series of the model; modal data only for the 2-d model"""
    grid: np.ndarray
    mean_series: np.ndarray
    mean_0d: Optional[np.ndarray] = None
    modal_series: Optional[np.ndarray] = None
    snapshots: Dict[float, np.ndarray] = field(default_factory=dict)
    eigenvalues: Optional[np.ndarray] = None
    amplitudes: Optional[np.ndarray] = None
    memory_integrals: Optional[np.ndarray] = None

    @property
    def mean_deviation(self) -> float:
        """sup |mean_2d - mean_0d| / max |mean_0d|"""
        if self.mean_0d is None:
            return 0.0
        scale = float(np.max(np.abs(self.mean_0d))) or 1.0
        return float(np.max(np.abs(self.mean_series - self.mean_0d))) / scale

    def to_frame(self) -> pd.DataFrame:
        if self.mean_0d is None:
            return pd.DataFrame({"t": self.grid, "mean_0d": self.mean_series})
        return pd.DataFrame({"t": self.grid, "mean_0d": self.mean_0d, "mean_2d": self.mean_series})


def _cycle_position(t: float):
    """(cycle index k, live) with t in (5k, 5k+5]; t in [0, 4] is cycle 0"""
    if t <= SILKWORM_ADULT_AGE:
        return 0, True
    k = math.ceil(t / SILKWORM_PERIOD) - 1
    return k, t - k * SILKWORM_PERIOD <= SILKWORM_ADULT_AGE


def _check_derivator(d: Derivator) -> None:
    if d.period != SILKWORM_PERIOD:
        raise ModelError(f"silkworm model needs a derivator of period {SILKWORM_PERIOD}, got {d.period!r}")
    death = d.delta(SILKWORM_ADULT_AGE)
    if death != 1.0:
        raise ModelError(
            f"death impulse x(1 - dg) must annihilate the population: dg({SILKWORM_ADULT_AGE}) is {death}, not 1"
        )


def forcing(t: float, x: float, history: Optional[History] = None,
            params: Optional[SilkwormParams] = None, *, memory: Optional[float] = None,
            derivator: Optional[Derivator] = None, tol: Optional[float] = None) -> float:
    """
    -c x on live windows, -x at deaths t = 5k+4, and lambda_birth times the
    ds-integral of the history over [t-5, t-1] at births t = 5(k+1).
    `memory` may carry that integral precomputed instead of a history.
    """
    params = params or SilkwormParams()
    if t < 0:
        raise ModelError(f"forcing is defined for t >= 0, got {t!r}")
    local = t - SILKWORM_PERIOD * math.floor(t / SILKWORM_PERIOD)
    if t > 0 and local == 0.0:
        if memory is None:
            if history is None:
                raise ModelError(f"birth at t={t} needs the history of the previous cycle")
            back, gap = SILKWORM_MEMORY_WINDOW
            memory = float(integrate_classical(history, t - back, t - gap, tol, derivator))
        return params.lambda_birth * memory
    if local == SILKWORM_ADULT_AGE:
        return -x
    return -params.c * x


def closed_form_mode(lambda_h: float, params: SilkwormParams, t: float,
                     prev_cycle_integral: Optional[float] = None, *, initial: Optional[float] = None,
                     derivator: Optional[Derivator] = None) -> float:
    """Value of a mode at t from the per-cycle closed form"""
    d = derivator or silkworm_derivator()
    rate = lambda_h + params.c - 1.0
    initial = params.x0_total if initial is None else initial
    k, live = _cycle_position(t)
    if not live:
        return 0.0
    if k == 0:
        return initial * math.exp(-rate * d.eval(t))
    if prev_cycle_integral is None:
        raise ModelError(f"t={t} lies in cycle {k}; the previous cycle integral is required")
    start = d.right_limit(k * SILKWORM_PERIOD)
    return params.lambda_birth * prev_cycle_integral * math.exp(-rate * (d.eval(t) - start))


def _n_cycles(horizon: float) -> int:
    return max(1, math.ceil(horizon / SILKWORM_PERIOD))


def cycle_amplitudes(rates: np.ndarray, initial: np.ndarray, params: SilkwormParams,
                     d: Derivator, tol: Optional[float] = None):
    """
    Per-cycle amplitudes A[k] = xi(5k+) (A[0] = xi(0)) and memory integrals
    I[k] = ds-integral of xi over [5k, 5k+4], shape (n_cycles, n_modes)
    """
    rates = np.atleast_1d(np.asarray(rates, dtype=float))
    n_cycles = _n_cycles(params.T)
    amplitudes = np.zeros((n_cycles, rates.size))
    memory = np.zeros((n_cycles, rates.size))
    amplitudes[0] = initial
    for k in range(n_cycles):
        a = k * SILKWORM_PERIOD
        b = a + SILKWORM_ADULT_AGE
        start = d.right_limit(a)

        def profile(s, start=start):
            return np.exp(-rates * (d.eval(s) - start))

        # Step 1: memory of cycle k
        memory[k] = amplitudes[k] * np.atleast_1d(integrate_classical(profile, a, b, tol, d))
        # Step 2: births at 5(k+1)
        if k + 1 < n_cycles:
            amplitudes[k + 1] = params.lambda_birth * memory[k]
        logger.debug("cycle %d: amplitude[0]=%.6g memory[0]=%.6g", k, amplitudes[k][0], memory[k][0])
    return amplitudes, memory


def modal_series(rates: np.ndarray, amplitudes: np.ndarray, d: Derivator, times: Sequence[float]) -> np.ndarray:
    """Closed-form left values of every mode, shape (n_modes, len(times))"""
    rates = np.atleast_1d(np.asarray(rates, dtype=float))
    out = np.zeros((rates.size, len(times)))
    for j, t in enumerate(times):
        k, live = _cycle_position(float(t))
        if not live:
            continue
        start = d.eval(0.0) if k == 0 else d.right_limit(k * SILKWORM_PERIOD)
        out[:, j] = amplitudes[k] * np.exp(-rates * (d.eval(float(t)) - start))
    return out


def solve_0d(params: SilkwormParams, derivator: Optional[Derivator] = None, grid=None,
             tol: Optional[float] = None) -> ModelOutput:
    """Mean model: the constant mode with lambda_h = 1 started from x0_total"""
    d = derivator or silkworm_derivator()
    _check_derivator(d)
    grid = default_grid(d, 0.0, params.T) if grid is None else np.asarray(grid, dtype=float)
    rates = np.array([params.c])
    amplitudes, memory = cycle_amplitudes(rates, np.array([params.x0_total]), params, d, tol)
    mean = modal_series(rates, amplitudes, d, grid)[0]
    logger.info("0-d model: %d cycles, births %s", amplitudes.shape[0], amplitudes[1:, 0].tolist())
    return ModelOutput(grid=grid, mean_series=mean, amplitudes=amplitudes, memory_integrals=memory)


def initial_profile(mesh: Mesh, x0_total: float, M=None) -> np.ndarray:
    """Nodal u0 = x0_total (x^2 + y^2) / integral of (x^2 + y^2), so that 1^T M u0 = x0_total"""
    M = assemble_mass(mesh) if M is None else M
    q = np.sum(mesh.nodes ** 2, axis=1)
    total = float(np.ones(mesh.n_nodes) @ (M @ q))
    if total <= 0:
        raise ModelError("initial profile x^2 + y^2 integrates to zero on this mesh")
    return x0_total * q / total


def solve_2d(params: SilkwormParams, mesh: Mesh, derivator: Optional[Derivator] = None,
             snapshots: Sequence[float] = (), grid=None, basis: Optional[EigenBasis] = None,
             u0: Optional[np.ndarray] = None, tol: Optional[float] = None) -> ModelOutput:
    """Spectral model on a mesh: per-mode closed forms, spatial mean and nodal snapshots"""
    d = derivator or silkworm_derivator()
    _check_derivator(d)
    grid = default_grid(d, 0.0, params.T) if grid is None else np.asarray(grid, dtype=float)

    # Step 1: eigenbasis of eta K + M
    M = assemble_mass(mesh)
    if basis is None:
        R = assemble_stiffness(mesh, params.eta, 1.0)
        basis = solve_generalized_eig(R, M, params.n_modes)
    eigenvalues = basis.eigenvalues
    if eigenvalues[0] < 1.0 - 1e-8:
        raise ModelError(f"lowest eigenvalue {eigenvalues[0]!r} is below 1; expected R = eta K + M")
    rates = eigenvalues + params.c - 1.0
    if np.any(rates <= 0):
        bad = int(np.flatnonzero(rates <= 0)[0])
        raise ModelError(f"mode {bad + 1}: decay rate lambda_h + c - 1 = {rates[bad]!r} is not positive")

    # Step 2: project the initial datum
    u0 = initial_profile(mesh, params.x0_total, M) if u0 is None else np.asarray(u0, dtype=float)
    coeffs = project(u0, basis, M)

    # Step 3: cycle recursion per mode and closed-form series
    amplitudes, memory = cycle_amplitudes(rates, coeffs, params, d, tol)
    series = modal_series(rates, amplitudes, d, grid)
    weights = np.ones(mesh.n_nodes) @ (M @ basis.vectors)
    mean_2d = weights @ series

    # Step 4: snapshots
    frames = {}
    for t in snapshots:
        t = float(t)
        if not 0.0 <= t <= params.T:
            raise ModelError(f"snapshot time {t} outside [0, {params.T}]")
        field_t = evaluate(basis, modal_series(rates, amplitudes, d, [t])[:, 0])
        peak = float(np.max(np.abs(field_t)))
        if peak and float(np.min(field_t)) < -POSITIVITY_TOL * peak:
            logger.warning("snapshot t=%g undershoots: min %.3g vs max %.3g", t, float(np.min(field_t)), peak)
        frames[t] = field_t

    mean_0d = solve_0d(params, d, grid, tol).mean_series
    output = ModelOutput(
        grid=grid,
        mean_series=mean_2d,
        mean_0d=mean_0d,
        modal_series=series,
        snapshots=frames,
        eigenvalues=eigenvalues,
        amplitudes=amplitudes,
        memory_integrals=memory,
    )
    logger.info("2-d model: %d modes, mean deviation from 0-d %.3g", basis.n_modes, output.mean_deviation)
    return output


@dataclass
class StepwiseTrace:
    """Reference trajectory of one mode: grid, left values and per-cycle data"""
    grid: np.ndarray
    values: np.ndarray
    amplitudes: List[float]
    memory_integrals: List[float]


def solve_mode_stepwise(lambda_h: float, params: SilkwormParams, initial: float,
                        derivator: Optional[Derivator] = None, points_per_stretch: int = 40,
                        rtol: float = 1e-12, atol: float = 1e-14) -> StepwiseTrace:
    """
    Independent integration of one mode: Runge-Kutta in each segment's
    parametrisation for the pair (xi, running ds-integral of xi), the death
    impulse x + (-x) dg and the birth impulse 0 + lambda_birth I dg.
    """
    d = derivator or silkworm_derivator()
    _check_derivator(d)
    rate = lambda_h + params.c - 1.0
    n_cycles = _n_cycles(params.T)
    times: List[np.ndarray] = []
    values: List[np.ndarray] = []
    amplitudes, memories = [initial], []
    x = initial
    for k in range(n_cycles):
        a = k * SILKWORM_PERIOD
        b = min(a + SILKWORM_ADULT_AGE, params.T)
        if k > 0:
            birth = forcing(a, 0.0, params=params, memory=memories[-1])
            x = jump_update(0.0, rate, birth, d.delta(a))
            amplitudes.append(x)
        if b <= a:
            break
        window = default_grid(d, a, b, points_per_stretch)
        window_values = np.empty(window.size)
        window_values[0] = x if k == 0 else 0.0
        running = 0.0
        for piece in d.pieces(a, b):
            inside = (window > piece.lo) & (window <= piece.hi)
            if piece.segment.kind is SegmentKind.CONSTANT:
                window_values[inside] = x
                running += x * (piece.hi - piece.lo)
                continue
            shape, shift = piece.shape, piece.shift
            p0 = float(shape.to_param(piece.lo - shift))
            p1 = float(shape.to_param(piece.hi - shift))

            def rhs(p, y, shape=shape):
                return [-rate * float(shape.weight(p)) * y[0], float(shape.jacobian(p)) * y[0]]

            result = solve_ivp(rhs, (p0, p1), [x, running], method="DOP853",
                               rtol=rtol, atol=atol, dense_output=True)
            if not result.success:
                raise QuadratureError(f"stepwise silkworm integration failed: {result.message}")
            targets = np.asarray(shape.to_param(window[inside] - shift), dtype=float)
            window_values[inside] = result.sol(targets)[0]
            x, running = float(result.y[0, -1]), float(result.y[1, -1])
        memories.append(running)
        # death at 5k+4
        if b == a + SILKWORM_ADULT_AGE:
            x = jump_update(x, 0.0, forcing(b, x, params=params), d.delta(b))
        times.append(window)
        values.append(window_values)
    grid = np.concatenate(times)
    return StepwiseTrace(grid=grid, values=np.concatenate(values), amplitudes=amplitudes, memory_integrals=memories)
