# core/errors.py - Exception hierarchy shared by every module
"""
Errors raised by the library. Only app.main turns them into exit codes.
"""


class GSpectralError(Exception):
    """Base class for all library errors"""


class ConfigError(GSpectralError):
    """Invalid configuration value (settings, env vars, JSON configs)"""


class DomainError(GSpectralError, ValueError):
    """Time outside the domain of a derivator"""


class IntervalError(GSpectralError, ValueError):
    """Inverted or otherwise invalid interval [a, b)"""


class DerivatorSpecError(GSpectralError, ValueError):
    """Segments that do not describe a nondecreasing left-continuous g"""


class QuadratureError(GSpectralError):
    """Non-finite integrand values or invalid tolerances"""


class GridError(GSpectralError, ValueError):
    """Time grid that misses jump times or is not increasing"""


class RegressivityError(GSpectralError):
    """lambda * delta g(t) == 1 at a jump: the linear g-ODE cannot pass the jump"""

    def __init__(self, time, lam, delta, mode=None):
        self.time = float(time)
        self.lam = float(lam)
        self.delta = float(delta)
        self.mode = mode
        where = f"mode {mode}, " if mode is not None else ""
        super().__init__(
            f"regressivity violated ({where}t={self.time!r}): "
            f"lambda*delta_g = {self.lam!r}*{self.delta!r} = 1"
        )

    def to_dict(self):
        """JSON payload used by the CLI error channel"""
        return {
            "error": "H1",
            "mode": self.mode,
            "time": self.time,
            "lambda": self.lam,
            "delta": self.delta,
        }


class MeshError(GSpectralError, ValueError):
    """Malformed or invalid triangle mesh"""

    def __init__(self, message, issues=None):
        self.issues = list(issues or [])
        if self.issues:
            details = "; ".join(
                f"line {line}: {text}" if line is not None else text
                for line, text in self.issues
            )
            message = f"{message}: {details}"
        super().__init__(message)


class EigenSolveError(GSpectralError):
    """Failure of the generalized eigen-solve (e.g. M not positive definite)"""


class ModelError(GSpectralError):
    """Silkworm model misuse or degenerate modal jump factors"""
