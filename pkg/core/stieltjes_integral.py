# core/stieltjes_integral.py - Lebesgue-Stieltjes integrals against mu_g
"""
The integral over [a, b) splits into
  - the continuous part: adaptive Gauss-Legendre on every smooth segment
    piece, run in the piece's own parametrisation so that dg/dp stays smooth
  - the atomic part: f(t) * delta g(t) summed over the jumps in [a, b)
Constant pieces contribute nothing.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from config.constants import GAUSS_LEGENDRE_ORDER
from config.settings import SolverSettings
from core.derivator import Derivator, Piece, SegmentKind, identity_derivator
from core.errors import GridError, IntervalError, QuadratureError

logger = logging.getLogger(__name__)

_NODES, _WEIGHTS = np.polynomial.legendre.leggauss(GAUSS_LEGENDRE_ORDER)

# Panels whose estimate is already at roundoff level are accepted
_ROUNDOFF = 64 * np.finfo(float).eps


@dataclass(frozen=True)
class Integrand:
    """
    Function of time to integrate. With vectorized=True `value` receives an
    array of times and returns shape (n,) or (n, m); otherwise it is called
    once per node and may return a float or a length-m vector.
    """
    value: Callable
    known_discontinuities: Tuple[float, ...] = ()
    vectorized: bool = False

    def __call__(self, t):
        return self.value(t)

    def evaluate(self, times: np.ndarray) -> np.ndarray:
        """Values at `times`, stacked along axis 0"""
        if self.vectorized:
            out = np.asarray(self.value(times), dtype=float)
            if out.shape[:1] != times.shape:
                raise QuadratureError(
                    f"vectorized integrand returned shape {out.shape} for {times.shape[0]} nodes"
                )
        else:
            rows = [np.asarray(self.value(float(t)), dtype=float) for t in times]
            if len({row.shape for row in rows}) != 1:
                raise QuadratureError("integrand returned vectors of inconsistent length")
            out = np.stack(rows)
        finite = np.isfinite(out.reshape(len(times), -1)).all(axis=1)
        if not finite.all():
            bad = times[int(np.flatnonzero(~finite)[0])]
            raise QuadratureError(f"integrand is not finite at t={bad!r}")
        return out


def as_integrand(f: Union[Integrand, Callable]) -> Integrand:
    return f if isinstance(f, Integrand) else Integrand(f)


@dataclass(frozen=True)
class CumulativeIntegral:
    """F(t_i) = integral over [t_0, t_i) on a grid; F(t_0) = 0"""
    grid: np.ndarray
    values: np.ndarray


class StieltjesQuadrature:
    """Adaptive Gauss-Legendre engine shared by all integral flavours"""

    def __init__(self, tol: Optional[float] = None, max_depth: Optional[int] = None):
        tol = SolverSettings.default_tol() if tol is None else tol
        if not (isinstance(tol, (int, float)) and math.isfinite(tol) and tol > 0):
            raise QuadratureError(f"tolerance must be a positive finite number, got {tol!r}")
        self.tol = float(tol)
        self.max_depth = max_depth or SolverSettings.MAX_BISECTION_DEPTH
        self.exhausted_panels = 0
        self._value_shape = None

    def _check_shape(self, values: np.ndarray) -> None:
        shape = values.shape[1:]
        if self._value_shape is None:
            self._value_shape = shape
        elif shape != self._value_shape:
            raise QuadratureError("integrand returned vectors of inconsistent length")

    def _rule(self, f: Integrand, piece: Piece, lo: float, hi: float, weight_fn) -> np.ndarray:
        half = 0.5 * (hi - lo)
        p = 0.5 * (hi + lo) + half * _NODES
        times = piece.shift + np.asarray(piece.shape.from_param(p), dtype=float)
        values = f.evaluate(times)
        self._check_shape(values)
        w = np.asarray(weight_fn(p), dtype=float) * _WEIGHTS * half
        return np.tensordot(w, values, axes=(0, 0))

    def _adaptive(self, f: Integrand, piece: Piece, p0: float, p1: float, weight_fn, tol: float):
        width = p1 - p0
        total = None
        stack = [(p0, p1, self._rule(f, piece, p0, p1, weight_fn), 0)]
        while stack:
            lo, hi, whole, depth = stack.pop()
            mid = 0.5 * (lo + hi)
            left = self._rule(f, piece, lo, mid, weight_fn)
            right = self._rule(f, piece, mid, hi, weight_fn)
            refined = left + right
            err = float(np.max(np.abs(refined - whole)))
            local_tol = tol * (hi - lo) / width
            floor = _ROUNDOFF * float(np.max(np.abs(refined))) if refined.size else 0.0
            if err <= max(local_tol, floor) or depth + 1 >= self.max_depth:
                if err > max(local_tol, floor):
                    self.exhausted_panels += 1
                total = refined if total is None else total + refined
            else:
                stack.append((mid, hi, right, depth + 1))
                stack.append((lo, mid, left, depth + 1))
        return total

    def smooth_part(self, d: Derivator, f: Integrand, a: float, b: float,
                    extra_points: Iterable[float] = (), lebesgue: bool = False) -> Optional[np.ndarray]:
        """
        Continuous part over (a, b). With lebesgue=True the classical ds-integral
        is taken instead, using d only for its branch structure.
        """
        cuts = sorted({float(t) for t in extra_points} | set(f.known_discontinuities))
        spans: List[Tuple[Piece, float, float]] = []
        for piece in d.pieces(a, b):
            if not lebesgue and piece.segment.kind is SegmentKind.CONSTANT:
                continue
            inner = [t for t in cuts if piece.lo < t < piece.hi]
            edges = [piece.lo] + inner + [piece.hi]
            spans.extend((piece, lo, hi) for lo, hi in zip(edges[:-1], edges[1:]))
        total = None
        if not spans:
            return total
        share = self.tol / len(spans)
        for piece, lo, hi in spans:
            shape = piece.shape
            p0 = float(shape.to_param(lo - piece.shift))
            p1 = float(shape.to_param(hi - piece.shift))
            if not p1 > p0:
                continue
            weight_fn = shape.jacobian if lebesgue else shape.weight
            part = self._adaptive(f, piece, p0, p1, weight_fn, share)
            total = part if total is None else total + part
        return total

    def atomic_part(self, d: Derivator, f: Integrand, a: float, b: float) -> Optional[np.ndarray]:
        """Sum of f(t) * delta g(t) over jumps t in [a, b)"""
        jumps = d.jumps_in(a, b)
        if not len(jumps):
            return None
        values = f.evaluate(np.asarray(jumps.times, dtype=float))
        self._check_shape(values)
        return np.tensordot(np.asarray(jumps.deltas, dtype=float), values, axes=(0, 0))

    def report(self) -> None:
        if self.exhausted_panels:
            logger.warning(
                "quadrature reached the maximum bisection depth (%d) on %d panel(s); "
                "the result may miss the tolerance %g",
                self.max_depth, self.exhausted_panels, self.tol,
            )


def _combine(*parts) -> np.ndarray:
    present = [p for p in parts if p is not None]
    if not present:
        return np.zeros(())
    total = present[0]
    for part in present[1:]:
        total = total + part
    return np.asarray(total, dtype=float)


def _zero_like(engine: StieltjesQuadrature, result: np.ndarray) -> np.ndarray:
    if result.shape == () and engine._value_shape:
        return np.zeros(engine._value_shape)
    return result


def _integrate(d: Derivator, f, a: float, b: float, tol: Optional[float],
               breakpoints: Iterable[float]) -> np.ndarray:
    engine = StieltjesQuadrature(tol)
    if a > b:
        raise IntervalError(f"inverted interval [{a}, {b})")
    f = as_integrand(f)
    if a == b:
        d._check_time(a)
        return np.zeros(())
    smooth = engine.smooth_part(d, f, a, b, breakpoints)
    atoms = engine.atomic_part(d, f, a, b)
    engine.report()
    return _zero_like(engine, _combine(smooth, atoms))


def integrate(d: Derivator, f, a: float, b: float, tol: Optional[float] = None,
              breakpoints: Iterable[float] = ()) -> float:
    """Integral of a scalar f over [a, b) against mu_g"""
    result = _integrate(d, f, a, b, tol, breakpoints)
    if result.shape != ():
        raise QuadratureError("integrand returned a vector; use integrate_vector")
    return float(result)


def integrate_vector(d: Derivator, f, a: float, b: float, tol: Optional[float] = None,
                     breakpoints: Iterable[float] = ()) -> np.ndarray:
    """Componentwise integral of a vector-valued f over [a, b)"""
    return np.atleast_1d(_integrate(d, f, a, b, tol, breakpoints))


def integrate_continuous(d: Derivator, f, a: float, b: float, tol: Optional[float] = None,
                         breakpoints: Iterable[float] = ()) -> np.ndarray:
    """Integral against the continuous part of mu_g only (atoms dropped)"""
    if a > b:
        raise IntervalError(f"inverted interval [{a}, {b})")
    engine = StieltjesQuadrature(tol)
    smooth = engine.smooth_part(d, as_integrand(f), a, b, breakpoints) if a < b else None
    engine.report()
    return _zero_like(engine, _combine(smooth))


def integrate_classical(f, a: float, b: float, tol: Optional[float] = None,
                        derivator: Optional[Derivator] = None,
                        breakpoints: Iterable[float] = ()) -> np.ndarray:
    """
    Ordinary ds-integral over [a, b). When `derivator` is given its segment
    junctions become subdivision points and each piece is integrated in the
    segment's parametrisation, which keeps integrands built from g smooth.
    """
    if a > b:
        raise IntervalError(f"inverted interval [{a}, {b})")
    d = derivator if derivator is not None else identity_derivator(max(b, 1.0))
    engine = StieltjesQuadrature(tol)
    smooth = engine.smooth_part(d, as_integrand(f), a, b, breakpoints, lebesgue=True) if a < b else None
    engine.report()
    return _zero_like(engine, _combine(smooth))


def cumulative(d: Derivator, f, grid: Sequence[float], tol: Optional[float] = None) -> CumulativeIntegral:
    """Running integral F(t_i) over [t_0, t_i) on an increasing grid"""
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise GridError("grid must be a non-empty 1-d sequence")
    if np.any(np.diff(grid) <= 0):
        raise GridError("grid must be strictly increasing")
    f = as_integrand(f)
    increments = [
        _integrate(d, f, float(lo), float(hi), tol, ())
        for lo, hi in zip(grid[:-1], grid[1:])
    ]
    if increments:
        shape = max((inc.shape for inc in increments), key=len)
        stacked = np.stack([np.broadcast_to(inc, shape) for inc in increments])
        values = np.concatenate([np.zeros((1,) + stacked.shape[1:]), np.cumsum(stacked, axis=0)])
    else:
        values = np.zeros(1)
    return CumulativeIntegral(grid=grid, values=values)


def _sup_nodes(d: Derivator, a: float, b: float, panels: int = 16) -> np.ndarray:
    """Gauss nodes inside smooth pieces plus jump times: points carrying mass"""
    chunks = [np.asarray(d.jumps_in(a, b).times, dtype=float)]
    for piece in d.pieces(a, b):
        if piece.segment.kind is SegmentKind.CONSTANT:
            continue
        p0 = float(piece.shape.to_param(piece.lo - piece.shift))
        p1 = float(piece.shape.to_param(piece.hi - piece.shift))
        edges = np.linspace(p0, p1, panels + 1)
        for lo, hi in zip(edges[:-1], edges[1:]):
            p = 0.5 * (hi + lo) + 0.5 * (hi - lo) * _NODES
            chunks.append(piece.shift + np.asarray(piece.shape.from_param(p), dtype=float))
    return np.concatenate(chunks)


def lp_norm(d: Derivator, f, p: float, a: float, b: float, tol: Optional[float] = None) -> float:
    """L^p_g norm over [a, b); vector values use the Euclidean norm pointwise"""
    if not (p == math.inf or (isinstance(p, (int, float)) and p >= 1)):
        raise QuadratureError(f"L^p norm needs p >= 1 or p = inf, got {p!r}")
    f = as_integrand(f)
    if p == math.inf:
        nodes = _sup_nodes(d, a, b)
        if nodes.size == 0:
            return 0.0
        values = f.evaluate(nodes).reshape(nodes.size, -1)
        return float(np.max(np.linalg.norm(values, axis=1)))

    def power(times):
        values = f.evaluate(times).reshape(times.size, -1)
        return np.linalg.norm(values, axis=1) ** p

    return integrate(d, Integrand(power, f.known_discontinuities, vectorized=True), a, b, tol) ** (1.0 / p)
