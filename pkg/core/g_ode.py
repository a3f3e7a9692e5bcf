# core/g_ode.py - Linear g-ODEs x'_g = f - lambda x with closed-form solution
"""
Solves x'_g(t) = f(t) - lambda(t) x(t) on a window [a, b] for a
nondecreasing left-continuous g. At a jump t the equation reads

    x(t+) = x(t) (1 - lambda(t) dg(t)) + f(t) dg(t)

and between jumps x follows exp(-integral lambda dmu_g^c). The solution is
built from the regressive g-exponential kept as (log-magnitude, sign) so that
long windows with large lambda neither overflow nor lose sign flips.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np
from scipy.integrate import solve_ivp

from core.derivator import Derivator, JumpList, SegmentKind, default_grid
from core.errors import DomainError, GridError, IntervalError, QuadratureError, RegressivityError
from core.stieltjes_integral import Integrand, cumulative, integrate_continuous

logger = logging.getLogger(__name__)

Coefficient = Union[float, Callable[[float], float]]

# |1 - lambda * dg| at or below this is treated as the singular case lambda * dg = 1
REGRESSIVITY_TOL = 1e-12


def _as_function(coef: Coefficient) -> Tuple[Callable[[float], float], Optional[float]]:
    """(callable, constant value or None)"""
    if callable(coef):
        return coef, None
    value = float(coef)
    return (lambda t: value), value


def _is_singular(lam: float, delta: float) -> bool:
    return delta > 0.0 and abs(1.0 - lam * delta) <= REGRESSIVITY_TOL * max(1.0, abs(lam * delta))


@dataclass(frozen=True)
class LinearGODE:
    """
    x'_g = forcing - lambda_coef * x on window [a, b] with x(a) = x0.
    With x0_after_jump the initial value is x(a+): the atom at a is not applied.
    """
    lambda_coef: Coefficient
    forcing: Optional[Coefficient] = None
    x0: float = 0.0
    window: Tuple[float, float] = (0.0, 1.0)
    x0_after_jump: bool = False

    def __post_init__(self):
        a, b = (float(x) for x in self.window)
        if not a < b:
            raise IntervalError(f"window [{a}, {b}] must have a < b")
        if not math.isfinite(float(self.x0)):
            raise ValueError("x0 must be finite")
        object.__setattr__(self, "window", (a, b))

    def lam(self, t: float) -> float:
        return float(_as_function(self.lambda_coef)[0](t))

    def force(self, t: float) -> float:
        if self.forcing is None:
            return 0.0
        return float(_as_function(self.forcing)[0](t))

    @property
    def constant_lambda(self) -> Optional[float]:
        return _as_function(self.lambda_coef)[1]

    @property
    def homogeneous(self) -> bool:
        return self.forcing is None or (not callable(self.forcing) and float(self.forcing) == 0.0)

    def atom_jumps(self, d: Derivator) -> JumpList:
        """Jumps in [a, b) whose atom the solution passes through"""
        a, b = self.window
        jumps = d.jumps_in(a, b)
        if self.x0_after_jump:
            return JumpList(tuple((t, delta) for t, delta in jumps if t != a))
        return jumps

    def check_regressive(self, d: Derivator, mode: Optional[int] = None) -> None:
        """Raise RegressivityError at the first jump with lambda * dg = 1"""
        for t, delta in self.atom_jumps(d):
            lam = self.lam(t)
            if _is_singular(lam, delta):
                raise RegressivityError(t, lam, delta, mode)


def regressive_coefficients(lambda_coef: Coefficient, d: Derivator, t: float) -> Tuple[float, float]:
    """(lambda / (1 - lambda dg(t)), 1 / (1 - lambda dg(t))); (lambda, 1) off D_g"""
    lam = float(_as_function(lambda_coef)[0](t))
    delta = d.delta(t)
    if _is_singular(lam, delta):
        raise RegressivityError(t, lam, delta)
    denominator = 1.0 - lam * delta
    return lam / denominator, 1.0 / denominator


def log_coefficient(lambda_coef: Coefficient, d: Derivator, t: float) -> float:
    """Exponent density: lambda off D_g, -ln|1 - lambda dg| / dg on D_g"""
    lam = float(_as_function(lambda_coef)[0](t))
    delta = d.delta(t)
    if delta == 0.0:
        return lam
    if _is_singular(lam, delta):
        raise RegressivityError(t, lam, delta)
    return -math.log(abs(1.0 - lam * delta)) / delta


def exponential_log(lambda_coef: Coefficient, d: Derivator, t: float, a: float = 0.0,
                    right: bool = False, tol: Optional[float] = None) -> Tuple[float, float]:
    """
    (log |e(t)|, sign e(t)) for the g-exponential started at a.
    right=True gives e(t+), i.e. includes the atom at t.
    """
    lam_fn, constant = _as_function(lambda_coef)
    jumps = list(d.jumps_in(a, t))
    if right and d.delta(t) > 0.0:
        jumps.append((t, d.delta(t)))
    log_mag, sign = 0.0, 1.0
    for s, delta in jumps:
        lam = float(lam_fn(s))
        if _is_singular(lam, delta):
            raise RegressivityError(s, lam, delta)
        factor = 1.0 - lam * delta
        log_mag -= math.log(abs(factor))
        if factor < 0.0:
            sign = -sign
    if constant is not None:
        log_mag += constant * d.measure_minus_jumps(a, t)
    elif t > a:
        log_mag += float(integrate_continuous(d, lam_fn, a, t, tol))
    return log_mag, sign


def g_exponential(lambda_coef: Coefficient, d: Derivator, t: float, a: float = 0.0,
                  right: bool = False, tol: Optional[float] = None) -> float:
    """Regressive g-exponential e(t) = exp of the integral of the log coefficient over [a, t)"""
    log_mag, sign = exponential_log(lambda_coef, d, t, a, right, tol)
    try:
        return sign * math.exp(log_mag)
    except OverflowError:
        return sign * math.inf


def jump_update(x: float, lam: float, forcing: float, delta: float) -> float:
    """x(t+) from x(t) across an atom of size delta"""
    return x * (1.0 - lam * delta) + forcing * delta


class _Propagator:
    """Solution transport across jump-free stretches (s, t)"""

    def __init__(self, ode: LinearGODE, d: Derivator, tol: Optional[float]):
        self.ode = ode
        self.d = d
        self.tol = tol
        self.lam_fn, self.lam_const = _as_function(ode.lambda_coef)

    def continuous_log(self, s: float, t: float) -> float:
        """Integral of lambda over (s, t) against the continuous part of mu_g"""
        if self.lam_const is not None:
            return self.lam_const * max(0.0, self.d.eval(t) - self.d.right_limit(s))
        return float(integrate_continuous(self.d, self.lam_fn, s, t, self.tol))

    def forcing_term(self, s: float, t: float) -> float:
        """Integral over (s, t) of exp(-continuous_log(r, t)) f(r) dmu_g^c(r)"""
        if self.ode.homogeneous:
            return 0.0
        if self.lam_const is not None:
            lam, g_t = self.lam_const, self.d.eval(t)

            def kernel(r):
                return math.exp(-lam * (g_t - self.d.eval(r))) * self.ode.force(r)
        else:
            def kernel(r):
                return math.exp(-self.continuous_log(r, t)) * self.ode.force(r)
        return float(integrate_continuous(self.d, kernel, s, t, self.tol))

    def __call__(self, x_from: float, s: float, t: float) -> float:
        """x(t) given x(s+) = x_from"""
        return math.exp(-self.continuous_log(s, t)) * x_from + self.forcing_term(s, t)


@dataclass(eq=False)
class GFunctionSample:
    """
    Left values x(t_i) on a grid plus right limits x(t_i+) at jump grid points.
    Between grid points values come from the propagator when one is attached,
    otherwise from interpolation that is linear in g.
    """
    grid: np.ndarray
    left_values: np.ndarray
    derivator: Derivator
    right_values: Dict[int, float] = field(default_factory=dict)
    propagator: Optional[Callable[[float, float, float], float]] = None
    log_exponential: Optional[np.ndarray] = None
    exponential_sign: Optional[np.ndarray] = None

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.left_values = np.asarray(self.left_values, dtype=float)
        if self.grid.shape != self.left_values.shape or self.grid.ndim != 1:
            raise GridError("grid and values must be 1-d arrays of equal length")
        if np.any(np.diff(self.grid) <= 0):
            raise GridError("grid must be strictly increasing")

    @property
    def window(self) -> Tuple[float, float]:
        return float(self.grid[0]), float(self.grid[-1])

    def right_value(self, index: int) -> float:
        return float(self.right_values.get(index, self.left_values[index]))

    @property
    def right_array(self) -> np.ndarray:
        out = self.left_values.copy()
        for index, value in self.right_values.items():
            out[index] = value
        return out

    def jump_times(self) -> List[float]:
        return [float(self.grid[i]) for i in sorted(self.right_values)]

    def value_at(self, t: float) -> float:
        """Left value x(t) for t in the window"""
        lo, hi = self.window
        if not lo <= t <= hi:
            raise DomainError(f"t={t!r} is outside the sampled window [{lo}, {hi}]")
        index = int(np.searchsorted(self.grid, t, side="left"))
        if index < self.grid.size and self.grid[index] == t:
            return float(self.left_values[index])
        index -= 1
        start = float(self.grid[index])
        x_from = self.right_value(index)
        if self.propagator is not None:
            return float(self.propagator(x_from, start, t))
        g_lo = self.derivator.right_limit(start)
        g_hi = self.derivator.eval(float(self.grid[index + 1]))
        if g_hi <= g_lo:
            return x_from
        weight = (self.derivator.eval(t) - g_lo) / (g_hi - g_lo)
        return (1.0 - weight) * x_from + weight * float(self.left_values[index + 1])

    def values_at(self, times) -> np.ndarray:
        return np.array([self.value_at(float(t)) for t in np.ravel(times)])

    def __call__(self, t: float) -> float:
        return self.value_at(t)


def _checked_grid(ode: LinearGODE, d: Derivator, grid) -> np.ndarray:
    a, b = ode.window
    if grid is None:
        return default_grid(d, a, b)
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise GridError("grid needs at least the two window endpoints")
    if np.any(np.diff(grid) <= 0):
        raise GridError("grid must be strictly increasing")
    if grid[0] != a or grid[-1] != b:
        raise GridError(f"grid must start at {a} and end at {b}, got [{grid[0]}, {grid[-1]}]")
    present = set(grid.tolist())
    missing = [t for t in ode.atom_jumps(d).times if t not in present]
    if missing:
        raise GridError(f"grid misses jump times {missing}")
    return grid


def solve_linear(ode: LinearGODE, d: Derivator, grid=None, tol: Optional[float] = None,
                 mode: Optional[int] = None) -> GFunctionSample:
    """
    Closed-form solution on `grid` (default: default_grid of the window).
    The grid must contain every jump time of the window.
    """
    grid = _checked_grid(ode, d, grid)
    ode.check_regressive(d, mode)
    propagator = _Propagator(ode, d, tol)
    lam_const = propagator.lam_const
    g_left, g_right, deltas = d.sample(grid)
    if ode.x0_after_jump:
        deltas[0] = 0.0

    n = grid.size
    left = np.empty(n)
    left[0] = ode.x0
    logs = np.zeros(n)
    signs = np.ones(n)
    right: Dict[int, float] = {}
    for i in range(n - 1):
        t, t_next = float(grid[i]), float(grid[i + 1])
        x = left[i]
        delta = deltas[i]
        lam_t = ode.lam(t) if (lam_const is None or delta > 0.0) else lam_const
        atom_log, atom_sign, carried = 0.0, 1.0, x
        if delta > 0.0:
            denominator = 1.0 - lam_t * delta
            forcing_t = ode.force(t)
            right[i] = jump_update(x, lam_t, forcing_t, delta)
            atom_log = -math.log(abs(denominator))
            atom_sign = -1.0 if denominator < 0.0 else 1.0
            carried = x + forcing_t * delta / denominator
        if lam_const is not None:
            stretch = lam_const * max(0.0, g_left[i + 1] - g_right[i])
        else:
            stretch = propagator.continuous_log(t, t_next)
        logs[i + 1] = logs[i] + atom_log + stretch
        signs[i + 1] = signs[i] * atom_sign
        ratio = signs[i] * signs[i + 1] * math.exp(logs[i] - logs[i + 1])
        left[i + 1] = ratio * carried + propagator.forcing_term(t, t_next)

    return GFunctionSample(
        grid=grid,
        left_values=left,
        derivator=d,
        right_values=right,
        propagator=propagator,
        log_exponential=logs,
        exponential_sign=signs,
    )


def residual(ode: LinearGODE, d: Derivator, sol: GFunctionSample, tol: Optional[float] = None) -> float:
    """max_i |x(t_i) - x0 - integral over [a, t_i) of (f - lambda x) dmu_g|"""
    grid = sol.grid

    def defect_density(s):
        return ode.force(s) - ode.lam(s) * sol.value_at(s)

    integrand = Integrand(defect_density, known_discontinuities=tuple(grid.tolist()))
    running = cumulative(d, integrand, grid, tol).values.copy()
    if ode.x0_after_jump:
        a = float(grid[0])
        running[1:] -= defect_density(a) * d.delta(a)
    return float(np.max(np.abs(sol.left_values - ode.x0 - running)))


def solve_stepwise(ode: LinearGODE, d: Derivator, grid=None,
                   rtol: float = 1e-12, atol: float = 1e-14) -> GFunctionSample:
    """
    Independent reference solution: exact jump updates at atoms and an
    explicit Runge-Kutta integration of dx/dp = w(p) (f - lambda x) on every
    smooth segment piece, in the piece's parametrisation p.
    """
    grid = _checked_grid(ode, d, grid)
    ode.check_regressive(d)
    n = grid.size
    left = np.empty(n)
    left[0] = ode.x0
    right: Dict[int, float] = {}
    for i in range(n - 1):
        t, t_next = float(grid[i]), float(grid[i + 1])
        x = left[i]
        delta = 0.0 if (i == 0 and ode.x0_after_jump) else d.delta(t)
        if delta > 0.0:
            x = jump_update(x, ode.lam(t), ode.force(t), delta)
            right[i] = x
        for piece in d.pieces(t, t_next):
            if piece.segment.kind is SegmentKind.CONSTANT:
                continue
            shape, shift = piece.shape, piece.shift
            p0 = float(shape.to_param(piece.lo - shift))
            p1 = float(shape.to_param(piece.hi - shift))
            if not p1 > p0:
                continue

            def rhs(p, y, shape=shape, shift=shift):
                s = shift + float(shape.from_param(p))
                return [float(shape.weight(p)) * (ode.force(s) - ode.lam(s) * y[0])]

            result = solve_ivp(rhs, (p0, p1), [x], method="DOP853", rtol=rtol, atol=atol)
            if not result.success:
                raise QuadratureError(f"stepwise integration failed on ({piece.lo}, {piece.hi}): {result.message}")
            x = float(result.y[0, -1])
        left[i + 1] = x
    return GFunctionSample(grid=grid, left_values=left, derivator=d, right_values=right)
