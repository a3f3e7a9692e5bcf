# backend/spectral_solver.py - Truncated spectral solution of u'_g - div(k1 grad u) + k2 u = f
"""
Every mode k of the truncated expansion u_n(t) = sum_k xi_k(t) v_k solves the
scalar g-ODE  xi_k' = f_k - lambda_k xi_k,  xi_k(0) = u0_k.  The service below
checks the existence hypotheses, solves the modes (optionally in parallel),
computes solution norms and verifies the energy bound and the weak form.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config.constants import SCHEMA_VERSION
from config.settings import SolverSettings
from core.derivator import Derivator, default_grid
from core.errors import DerivatorSpecError, DomainError, RegressivityError
from core.g_ode import GFunctionSample, LinearGODE, REGRESSIVITY_TOL, solve_linear
from core.stieltjes_integral import Integrand, cumulative, integrate

logger = logging.getLogger(__name__)

ModeForcing = Optional[Callable[[float], float]]


@dataclass(eq=False)
class ParabolicProblem:
    """Modal data of the truncated problem on [0, horizon]"""
    derivator: Derivator
    eigenvalues: np.ndarray
    u0_coeffs: np.ndarray
    forcing_coeffs: Optional[Sequence[ModeForcing]] = None
    horizon: float = 1.0
    n_modes: Optional[int] = None

    def __post_init__(self):
        eigenvalues = np.asarray(self.eigenvalues, dtype=float).ravel()
        u0 = np.asarray(self.u0_coeffs, dtype=float).ravel()
        n = int(self.n_modes) if self.n_modes is not None else eigenvalues.size
        if n < 1:
            raise ValueError("n_modes must be >= 1")
        if eigenvalues.size < n or u0.size < n:
            raise ValueError(
                f"n_modes={n} but only {eigenvalues.size} eigenvalues and {u0.size} initial coefficients"
            )
        eigenvalues, u0 = eigenvalues[:n], u0[:n]
        if np.any(eigenvalues <= 0) or np.any(np.diff(eigenvalues) < 0):
            raise ValueError("eigenvalues must be positive and ascending")
        forcing = list(self.forcing_coeffs or [])[:n]
        forcing += [None] * (n - len(forcing))
        if self.derivator.delta(0.0) > 0.0:
            raise DerivatorSpecError("the spectral solver needs g continuous at t=0 (no initial jump)")
        if not (self.horizon > 0 and self.horizon <= self.derivator.t_max):
            raise DomainError(f"horizon {self.horizon!r} outside (0, {self.derivator.t_max}]")
        self.eigenvalues = eigenvalues
        self.u0_coeffs = u0
        self.forcing_coeffs = forcing
        self.n_modes = n
        self.horizon = float(self.horizon)

    def forcing(self, k: int) -> ModeForcing:
        """Forcing of mode k (0-based), None when the mode is unforced"""
        return self.forcing_coeffs[k]

    @property
    def forced_modes(self) -> List[int]:
        return [k for k, f in enumerate(self.forcing_coeffs) if f is not None]

    @property
    def u0_norm(self) -> float:
        return float(np.linalg.norm(self.u0_coeffs))

    def forcing_norm(self, tol: Optional[float] = None, modes: Optional[Sequence[int]] = None) -> float:
        """L^2_g(0, T; L^2) norm of the forcing, restricted to `modes` when given"""
        selected = [k for k in (modes if modes is not None else self.forced_modes) if self.forcing_coeffs[k] is not None]
        if not selected:
            return 0.0

        def squared(t):
            return math.fsum(self.forcing_coeffs[k](t) ** 2 for k in selected)

        return math.sqrt(max(0.0, integrate(self.derivator, squared, 0.0, self.horizon, tol)))


@dataclass
class ModeHypotheses:
    """Hypothesis quantities of one mode; h2..h5 are inf when H1 fails"""
    mode: int
    lam: float
    h1_offenders: List[Tuple[float, float]] = field(default_factory=list)
    h2: float = math.inf
    h3: float = math.inf
    h4: float = math.inf
    h5: float = math.inf
    sufficient: bool = False

    @property
    def h1(self) -> bool:
        return not self.h1_offenders

    @property
    def passed(self) -> bool:
        return self.h1 and all(math.isfinite(x) for x in (self.h2, self.h3, self.h4, self.h5))

    def to_dict(self) -> Dict:
        return {
            "mode": self.mode,
            "lambda": self.lam,
            "H1": self.h1,
            "H1_offenders": [{"time": t, "delta": d} for t, d in self.h1_offenders],
            "H2": self.h2 if self.h1 else None,
            "H3": self.h3 if self.h1 else None,
            "H4": self.h4 if self.h1 else None,
            "H5": self.h5 if self.h1 else None,
            "sufficient_condition": self.sufficient,
        }


@dataclass
class HypothesisReport:
    """Per-mode verdicts plus C1 = max(H2, H3) and C2 = max(H4, H5) over modes"""
    modes: List[ModeHypotheses]
    horizon: float

    @property
    def c1(self) -> float:
        return max(max(m.h2, m.h3) for m in self.modes)

    @property
    def c2(self) -> float:
        return max(max(m.h4, m.h5) for m in self.modes)

    @property
    def h1_passed(self) -> bool:
        return all(m.h1 for m in self.modes)

    @property
    def passed(self) -> bool:
        return all(m.passed for m in self.modes)

    @property
    def sufficient_condition(self) -> bool:
        return all(m.sufficient for m in self.modes)

    @property
    def h1_offenders(self) -> List[Tuple[int, float]]:
        return [(m.mode, t) for m in self.modes for t, _ in m.h1_offenders]

    def first_h1_violation(self) -> Optional[RegressivityError]:
        for m in self.modes:
            if m.h1_offenders:
                t, delta = m.h1_offenders[0]
                return RegressivityError(t, m.lam, delta, mode=m.mode)
        return None

    def to_dict(self) -> Dict:
        passed = self.passed
        return {
            "schema_version": SCHEMA_VERSION,
            "horizon": self.horizon,
            "passed": passed,
            "H1": self.h1_passed,
            "C1": self.c1 if passed else None,
            "C2": self.c2 if passed else None,
            "sufficient_condition": self.sufficient_condition,
            "H1_offenders": [{"mode": k, "time": t} for k, t in self.h1_offenders],
            "modes": [m.to_dict() for m in self.modes],
        }


@dataclass(eq=False)
class SolutionBundle:
    """Per-mode solutions on a common grid and the norms of u_n"""
    problem: ParabolicProblem
    grid: np.ndarray
    samples: List[GFunctionSample]
    norm_linf_l2: float = 0.0
    norm_l2_h1: float = 0.0
    dual_norm: float = 0.0
    _tables: Optional[tuple] = field(default=None, init=False, repr=False)

    def left_matrix(self) -> np.ndarray:
        """xi_k(t_i), shape (n_modes, n_grid)"""
        return np.vstack([s.left_values for s in self.samples])

    def right_matrix(self) -> np.ndarray:
        """xi_k(t_i+), shape (n_modes, n_grid)"""
        return np.vstack([s.right_array for s in self.samples])

    def refresh(self) -> None:
        """Drop cached tables after the samples were modified"""
        self._tables = None

    def _lookup_tables(self):
        if self._tables is None:
            d = self.problem.derivator
            g_right = np.array([d.right_limit(t) for t in self.grid])
            self._tables = (self.left_matrix(), self.right_matrix(), g_right)
        return self._tables

    def modal_values(self, times) -> np.ndarray:
        """xi_k at arbitrary times in [0, T], shape (len(times), n_modes)"""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        problem = self.problem
        d = problem.derivator
        grid = self.grid
        left, right, g_right = self._lookup_tables()
        out = np.empty((times.size, problem.n_modes))
        forced = problem.forced_modes
        for j, t in enumerate(times):
            index = int(np.searchsorted(grid, t, side="left"))
            if index < grid.size and grid[index] == t:
                out[j] = left[:, index]
                continue
            index -= 1
            if index < 0 or index >= grid.size - 1:
                raise DomainError(f"t={t!r} is outside the solved window")
            stretch = max(0.0, d.eval(t) - g_right[index])
            out[j] = right[:, index] * np.exp(-problem.eigenvalues * stretch)
            for k in forced:
                out[j, k] = self.samples[k].value_at(float(t))
        return out

    def to_frame(self) -> pd.DataFrame:
        """Long table with one row per (t, mode)"""
        rows = []
        for k, sample in enumerate(self.samples):
            right = sample.right_values
            for i, t in enumerate(sample.grid):
                rows.append({
                    "t": float(t),
                    "mode": k + 1,
                    "value": float(sample.left_values[i]),
                    "right_value": float(right[i]) if i in right else None,
                })
        return pd.DataFrame(rows, columns=["t", "mode", "value", "right_value"])


@dataclass
class EnergyReport:
    """lhs = |u|_{Linf(L2)} + |u|_{L2(H1)} against rhs = 2 sqrt(C1) |u0| + 2 sqrt(C2) |f|"""
    lhs: float
    rhs: float
    c1: float
    c2: float
    u0_norm: float
    forcing_norm: float
    dual_norm: float

    @property
    def c1_hat(self) -> float:
        return 2.0 * math.sqrt(self.c1)

    @property
    def c2_hat(self) -> float:
        return 2.0 * math.sqrt(self.c2)

    @property
    def ratio(self) -> float:
        if self.rhs == 0.0:
            return 0.0 if self.lhs == 0.0 else math.inf
        return self.lhs / self.rhs

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs * (1.0 + 1e-9) + 1e-14

    def to_dict(self) -> Dict:
        return {
            "lhs": self.lhs,
            "rhs": self.rhs,
            "ratio": self.ratio,
            "holds": self.holds,
            "C1_hat": self.c1_hat,
            "C2_hat": self.c2_hat,
            "dual_norm": self.dual_norm,
        }


def _mode_hypotheses(lam: float, g_left: np.ndarray, g_right: np.ndarray,
                     deltas: np.ndarray) -> Tuple[float, float, float, float, bool]:
    """
    H2..H5 and the sufficient condition for one mode by exact recursion over
    grid stretches. With A(t) = exp(-2 lam mu_c[0,t)) prod |1 - lam dg|^2 and
    P(t) = integral over [0,t) of the H4 kernel:
      smooth stretch of continuous mass u:  A <- A e^{-2 lam u},
                                            P <- P e^{-2 lam u} + (1 - e^{-2 lam u}) / (2 lam)
      jump of size D:                       A <- A |1 - lam D|^2,  P <- P |1 - lam D|^2 + D
    """
    n = g_left.size
    log_a, p = 0.0, 0.0
    h2, h3, h4, h5 = 1.0, 0.0, 0.0, 0.0
    drift = [0.0]
    drift_now = 0.0
    for i in range(n - 1):
        a_now = math.exp(log_a) if log_a < 700 else math.inf
        delta = deltas[i]
        if delta > 0.0:
            h3 += lam * a_now * delta
            h5 += lam * p * delta
            factor = 1.0 - lam * delta
            log_a += 2.0 * math.log(abs(factor))
            p = factor * factor * p + delta
            drift_now += math.log(abs(factor)) / lam
            # right limit at the jump: pairs (s, s+) are compared too
            drift.append(drift_now)
            a_now = math.exp(log_a) if log_a < 700 else math.inf
            h2 = max(h2, a_now)
            h4 = max(h4, p)
        u = max(0.0, g_left[i + 1] - g_right[i])
        decay = math.exp(-2.0 * lam * u)
        gained = -math.expm1(-2.0 * lam * u)
        h3 += a_now * gained / 2.0
        h5 += p * gained / 2.0 + u / 2.0 - gained / (4.0 * lam)
        log_a -= 2.0 * lam * u
        p = decay * p + gained / (2.0 * lam)
        drift_now -= u
        drift.append(drift_now)
        h2 = max(h2, math.exp(log_a) if log_a < 700 else math.inf)
        h4 = max(h4, p)
    # jump log-sum minus continuous mass must be nonincreasing, right limits included;
    # between samples it is monotone, so consecutive samples decide
    values = np.asarray(drift)
    scale = np.maximum(1.0, np.maximum(np.abs(values[:-1]), np.abs(values[1:])))
    sufficient = bool(np.all(np.diff(values) <= 1e-12 * scale))
    return h2, h3, h4, h5, sufficient


class SpectralSolver:
    """Hypothesis checks, per-mode solves and a-posteriori checks of the spectral problem"""

    def __init__(self, tol: Optional[float] = None, workers: Optional[int] = None,
                 points_per_stretch: Optional[int] = None):
        self.tol = SolverSettings.default_tol() if tol is None else tol
        self.workers = SolverSettings.workers() if workers is None else workers
        self.points_per_stretch = points_per_stretch or SolverSettings.POINTS_PER_STRETCH

    def default_grid(self, problem: ParabolicProblem) -> np.ndarray:
        return default_grid(problem.derivator, 0.0, problem.horizon, self.points_per_stretch)

    def _full_grid(self, problem: ParabolicProblem, grid) -> np.ndarray:
        d, horizon = problem.derivator, problem.horizon
        base = self.default_grid(problem) if grid is None else np.asarray(grid, dtype=float)
        extra = [0.0, horizon] + d.jumps_in(0.0, horizon).times
        return np.unique(np.concatenate([base, np.asarray(extra, dtype=float)]))

    def check_hypotheses(self, problem: ParabolicProblem, grid=None) -> HypothesisReport:
        """H1 per jump in [0, T], H2..H5 by recursion over the grid, sufficient condition per mode"""
        d, horizon = problem.derivator, problem.horizon
        grid = self._full_grid(problem, grid)
        jumps = list(d.jumps_in(0.0, horizon))
        if d.delta(horizon) > 0.0:
            jumps.append((horizon, d.delta(horizon)))
        g_left, g_right, deltas = d.sample(grid)
        deltas = deltas.copy()
        deltas[-1] = 0.0
        g_right[-1] = g_left[-1]

        modes = []
        for k, lam in enumerate(problem.eigenvalues):
            lam = float(lam)
            entry = ModeHypotheses(mode=k + 1, lam=lam)
            entry.h1_offenders = [
                (t, delta) for t, delta in jumps
                if abs(1.0 - lam * delta) <= REGRESSIVITY_TOL * max(1.0, abs(lam * delta))
            ]
            if entry.h1:
                entry.h2, entry.h3, entry.h4, entry.h5, entry.sufficient = _mode_hypotheses(
                    lam, g_left, g_right, deltas
                )
            modes.append(entry)
        report = HypothesisReport(modes=modes, horizon=horizon)
        if report.h1_passed:
            logger.info("Hypotheses: C1=%.6g C2=%.6g sufficient=%s", report.c1, report.c2, report.sufficient_condition)
        else:
            logger.warning("H1 fails for %d (mode, time) pair(s)", len(report.h1_offenders))
        return report

    def _solve_mode(self, problem: ParabolicProblem, grid: np.ndarray, k: int) -> GFunctionSample:
        ode = LinearGODE(
            lambda_coef=float(problem.eigenvalues[k]),
            forcing=problem.forcing(k),
            x0=float(problem.u0_coeffs[k]),
            window=(0.0, problem.horizon),
        )
        return solve_linear(ode, problem.derivator, grid, self.tol, mode=k + 1)

    def solve(self, problem: ParabolicProblem, grid=None) -> SolutionBundle:
        """Solve every mode on a common grid and fill in the solution norms"""
        d = problem.derivator
        for k, lam in enumerate(problem.eigenvalues):
            LinearGODE(float(lam), window=(0.0, problem.horizon)).check_regressive(d, mode=k + 1)
        grid = self.default_grid(problem) if grid is None else np.asarray(grid, dtype=float)
        logger.info("Solving %d modes on %d grid points (workers=%d)", problem.n_modes, grid.size, self.workers)

        modes = range(problem.n_modes)
        if self.workers > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                samples = list(pool.map(lambda k: self._solve_mode(problem, grid, k), modes))
        else:
            samples = [self._solve_mode(problem, grid, k) for k in modes]

        bundle = SolutionBundle(problem=problem, grid=grid, samples=samples)
        self._fill_norms(bundle)
        return bundle

    def _fill_norms(self, bundle: SolutionBundle) -> None:
        problem = bundle.problem
        lam = problem.eigenvalues
        left, right = bundle.left_matrix(), bundle.right_matrix()
        bundle.norm_linf_l2 = float(max(
            np.max(np.sqrt(np.sum(left ** 2, axis=0))),
            np.max(np.sqrt(np.sum(right ** 2, axis=0))),
        ))

        def energy(times):
            values = bundle.modal_values(times)
            return values ** 2 @ lam

        def dual(times):
            values = bundle.modal_values(times)
            residual = -lam[None, :] * values
            for k in problem.forced_modes:
                residual[:, k] += np.array([problem.forcing(k)(float(t)) for t in times])
            return residual ** 2 @ (1.0 / lam)

        d, horizon = problem.derivator, problem.horizon
        bundle.norm_l2_h1 = math.sqrt(max(0.0, integrate(d, Integrand(energy, vectorized=True), 0.0, horizon, self.tol)))
        bundle.dual_norm = math.sqrt(max(0.0, integrate(d, Integrand(dual, vectorized=True), 0.0, horizon, self.tol)))

    def solution_residual(self, problem: ParabolicProblem, bundle: SolutionBundle, test_mode_count: int) -> float:
        """
        Weak-form defect (u(t), v) - (u0, v) - integral over [0,t) of (f - A u, v) dmu_g
        for v the first test_mode_count eigenvectors, maximised over the grid
        """
        bundle.refresh()
        m = max(1, min(int(test_mode_count), problem.n_modes))
        lam = problem.eigenvalues[:m]
        forced = [k for k in problem.forced_modes if k < m]

        def density(times):
            values = bundle.modal_values(times)[:, :m]
            out = -lam[None, :] * values
            for k in forced:
                out[:, k] += np.array([problem.forcing(k)(float(t)) for t in times])
            return out

        integrand = Integrand(density, known_discontinuities=tuple(bundle.grid.tolist()), vectorized=True)
        running = cumulative(problem.derivator, integrand, bundle.grid, self.tol).values
        running = np.asarray(running).reshape(bundle.grid.size, -1)
        left = bundle.left_matrix()[:m].T
        return float(np.max(np.abs(left - problem.u0_coeffs[None, :m] - running)))

    def energy_check(self, problem: ParabolicProblem, bundle: SolutionBundle,
                     report: Optional[HypothesisReport] = None) -> EnergyReport:
        """Compare the computed norms with the a-priori bound built from C1 and C2"""
        report = report or self.check_hypotheses(problem, bundle.grid)
        c1, c2 = report.c1, report.c2
        u0_norm = problem.u0_norm
        forcing_norm = problem.forcing_norm(self.tol)
        lhs = bundle.norm_linf_l2 + bundle.norm_l2_h1
        rhs = 2.0 * math.sqrt(c1) * u0_norm + (2.0 * math.sqrt(c2) * forcing_norm if forcing_norm else 0.0)
        energy = EnergyReport(lhs, rhs, c1, c2, u0_norm, forcing_norm, bundle.dual_norm)
        logger.info("Energy check: lhs=%.6g rhs=%.6g ratio=%.4g", lhs, rhs, energy.ratio)
        return energy

    def truncation_tail_bound(self, problem: ParabolicProblem, report: HypothesisReport, n: int, p: int) -> float:
        """Bound on sup_t |u_{n+p}(t) - u_n(t)| from the modes n+1..n+p of the data"""
        tail = range(n, min(n + p, problem.n_modes))
        u0_tail = float(np.linalg.norm(problem.u0_coeffs[n:n + p]))
        forcing_tail = problem.forcing_norm(self.tol, modes=list(tail))
        bound = math.sqrt(2.0 * report.c1) * u0_tail
        if forcing_tail:
            bound += math.sqrt(2.0 * report.c2) * forcing_tail
        return bound


def check_hypotheses(problem: ParabolicProblem, grid=None) -> HypothesisReport:
    return SpectralSolver().check_hypotheses(problem, grid)


def solve(problem: ParabolicProblem, grid=None) -> SolutionBundle:
    return SpectralSolver().solve(problem, grid)


def solution_residual(problem: ParabolicProblem, bundle: SolutionBundle, test_mode_count: int) -> float:
    return SpectralSolver().solution_residual(problem, bundle, test_mode_count)


def energy_check(problem: ParabolicProblem, bundle: SolutionBundle,
                 report: Optional[HypothesisReport] = None) -> EnergyReport:
    return SpectralSolver().energy_check(problem, bundle, report)
