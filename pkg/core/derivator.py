# core/derivator.py - Nondecreasing left-continuous derivators g and the measure mu_g
"""
A derivator g is described piecewise: ordered segments tiling [0, T_max),
each with a closed-form shape and an explicit jump appended at its right end.
Jumps (D_g) and dead time (C_g) are therefore exact, never inferred.

Conventions used everywhere:
  - intervals are half-open [a, b); the jump at b is excluded
  - g is left-continuous: g(b) is the value of the segment ending at b
  - periodic derivators repeat the base segments with
    g(t) = k * increment + g(t - k * period), increment = g(period+) - g(0)
"""
import bisect
import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from config.constants import BUILTIN_DERIVATORS, SCHEMA_VERSION, SEGMENT_FORMS
from core.errors import DerivatorSpecError, DomainError, IntervalError

logger = logging.getLogger(__name__)

# Relative tolerance for junction continuity checks at construction
JUNCTION_TOL = 1e-12


class SegmentKind(Enum):
    SMOOTH = "smooth"
    CONSTANT = "constant"


# ---------------------------------------------------------------------------
# Closed-form shapes
#
# Every shape maps a local time s (inside the base period) to g(s). For
# quadrature a shape also offers a parametrisation s = s(p) in which both the
# Stieltjes weight dg/dp and the Lebesgue jacobian ds/dp are smooth.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IdentityShape:
    """g(s) = s"""
    tag = "identity"

    @property
    def is_constant(self) -> bool:
        return False

    def value(self, s):
        return s

    def density(self, s):
        return np.ones_like(np.asarray(s, dtype=float))

    def to_param(self, s):
        return s

    def from_param(self, p):
        return p

    def weight(self, p):
        return np.ones_like(np.asarray(p, dtype=float))

    def jacobian(self, p):
        return np.ones_like(np.asarray(p, dtype=float))

    def check_span(self, a: float, b: float) -> None:
        return None

    def params(self) -> Dict[str, float]:
        return {}


@dataclass(frozen=True)
class AffineShape:
    """g(s) = slope * s + intercept, slope >= 0"""
    slope: float
    intercept: float = 0.0
    tag = "affine"

    @property
    def is_constant(self) -> bool:
        return self.slope == 0.0

    def value(self, s):
        return self.slope * s + self.intercept

    def density(self, s):
        return np.full_like(np.asarray(s, dtype=float), self.slope)

    def to_param(self, s):
        return s

    def from_param(self, p):
        return p

    def weight(self, p):
        return np.full_like(np.asarray(p, dtype=float), self.slope)

    def jacobian(self, p):
        return np.ones_like(np.asarray(p, dtype=float))

    def check_span(self, a: float, b: float) -> None:
        if not (math.isfinite(self.slope) and self.slope >= 0.0):
            raise DerivatorSpecError(f"affine slope must be finite and >= 0, got {self.slope!r}")

    def params(self) -> Dict[str, float]:
        return {"slope": self.slope, "intercept": self.intercept}


@dataclass(frozen=True)
class ConstantShape:
    """g(s) = level"""
    level: float
    tag = "constant"

    @property
    def is_constant(self) -> bool:
        return True

    def value(self, s):
        if np.ndim(s):
            return np.full_like(np.asarray(s, dtype=float), self.level)
        return self.level

    def density(self, s):
        return np.zeros_like(np.asarray(s, dtype=float))

    def to_param(self, s):
        return s

    def from_param(self, p):
        return p

    def weight(self, p):
        return np.zeros_like(np.asarray(p, dtype=float))

    def jacobian(self, p):
        return np.ones_like(np.asarray(p, dtype=float))

    def check_span(self, a: float, b: float) -> None:
        if not math.isfinite(self.level):
            raise DerivatorSpecError("constant level must be finite")

    def params(self) -> Dict[str, float]:
        return {"level": self.level}


@dataclass(frozen=True)
class ArcShape:
    """
    Quarter-circle arcs scaled vertically:
      rise: g(s) = offset + scale * sqrt(radius^2 - (s - center)^2), s in [center - radius, center]
      fall: g(s) = offset - scale * sqrt(radius^2 - (s - center)^2), s in [center, center + radius]
    Both are nondecreasing; g' blows up at one end, so quadrature runs in the
    angle variable where dg/dtheta is smooth.
    """
    rising: bool
    center: float
    radius: float
    scale: float = 1.0
    offset: float = 0.0

    @property
    def tag(self) -> str:
        return "sqrt_rise" if self.rising else "sqrt_fall"

    @property
    def is_constant(self) -> bool:
        return self.scale == 0.0

    def _root(self, s):
        u = np.asarray(s, dtype=float) - self.center
        return np.sqrt(np.maximum(self.radius * self.radius - u * u, 0.0))

    def value(self, s):
        root = self._root(s)
        out = self.offset + self.scale * root if self.rising else self.offset - self.scale * root
        return float(out) if np.ndim(out) == 0 else out

    def density(self, s):
        u = np.asarray(s, dtype=float) - self.center
        root = self._root(s)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self.scale * (-u if self.rising else u) / root
        return out

    def to_param(self, s):
        ratio = np.clip((np.asarray(s, dtype=float) - self.center) / self.radius, -1.0, 1.0)
        return np.arccos(-ratio) if self.rising else np.arcsin(ratio)

    def from_param(self, p):
        if self.rising:
            return self.center - self.radius * np.cos(p)
        return self.center + self.radius * np.sin(p)

    def weight(self, p):
        trig = np.cos(p) if self.rising else np.sin(p)
        return self.scale * self.radius * trig

    def jacobian(self, p):
        trig = np.sin(p) if self.rising else np.cos(p)
        return self.radius * trig

    def check_span(self, a: float, b: float) -> None:
        if not (self.radius > 0 and self.scale >= 0):
            raise DerivatorSpecError(f"{self.tag}: radius must be > 0 and scale >= 0")
        slack = JUNCTION_TOL * max(1.0, abs(self.center) + self.radius)
        lo, hi = (self.center - self.radius, self.center) if self.rising else (self.center, self.center + self.radius)
        if a < lo - slack or b > hi + slack:
            raise DerivatorSpecError(
                f"{self.tag} with center {self.center} and radius {self.radius} "
                f"is monotone only on [{lo}, {hi}], span is [{a}, {b})"
            )

    def params(self) -> Dict[str, float]:
        return {"center": self.center, "radius": self.radius, "scale": self.scale, "offset": self.offset}


@dataclass(frozen=True)
class CallableShape:
    """Library-only smooth shape from user callables; not serializable"""
    value_fn: Callable[[float], float]
    density_fn: Callable[[float], float]
    tag = "callable"

    @property
    def is_constant(self) -> bool:
        return False

    def value(self, s):
        if np.ndim(s):
            return np.array([self.value_fn(float(x)) for x in np.ravel(s)]).reshape(np.shape(s))
        return float(self.value_fn(float(s)))

    def density(self, s):
        if np.ndim(s):
            return np.array([self.density_fn(float(x)) for x in np.ravel(s)]).reshape(np.shape(s))
        return float(self.density_fn(float(s)))

    def to_param(self, s):
        return s

    def from_param(self, p):
        return p

    def weight(self, p):
        return np.asarray(self.density(p), dtype=float)

    def jacobian(self, p):
        return np.ones_like(np.asarray(p, dtype=float))

    def check_span(self, a: float, b: float) -> None:
        samples = self.value(np.linspace(a, b, 33))
        if np.any(np.diff(samples) < -JUNCTION_TOL * max(1.0, float(np.max(np.abs(samples))))):
            raise DerivatorSpecError(f"callable segment on [{a}, {b}) is not nondecreasing")

    def params(self) -> Dict[str, float]:
        raise DerivatorSpecError("callable segments cannot be serialized")


def shape_from_tag(tag: str, params: Dict[str, Any]):
    """Build a closed-form shape from its JSON tag and parameters"""
    params = dict(params or {})
    try:
        if tag == "identity":
            return IdentityShape()
        if tag == "affine":
            return AffineShape(float(params["slope"]), float(params.get("intercept", 0.0)))
        if tag == "constant":
            return ConstantShape(float(params["level"]))
        if tag in ("sqrt_rise", "sqrt_fall"):
            return ArcShape(
                rising=(tag == "sqrt_rise"),
                center=float(params["center"]),
                radius=float(params["radius"]),
                scale=float(params.get("scale", 1.0)),
                offset=float(params.get("offset", 0.0)),
            )
    except KeyError as exc:
        raise DerivatorSpecError(f"segment form '{tag}' is missing parameter {exc}") from exc
    raise DerivatorSpecError(f"unknown segment form '{tag}', expected one of {SEGMENT_FORMS}")


# ---------------------------------------------------------------------------
# Segments, jumps and the derivator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Segment:
    """Closed-form piece of g on [start, end) with the jump g(end+) - g(end) appended"""
    start: float
    end: float
    shape: Any
    jump_after: float = 0.0

    @property
    def kind(self) -> SegmentKind:
        return SegmentKind.CONSTANT if self.shape.is_constant else SegmentKind.SMOOTH

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind.value,
            "span": [self.start, self.end],
            "form": self.shape.tag,
            "params": self.shape.params(),
            "jump_after": self.jump_after,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Segment":
        try:
            start, end = (float(x) for x in data["span"])
            shape = shape_from_tag(data["form"], data.get("params", {}))
        except (KeyError, TypeError, ValueError) as exc:
            raise DerivatorSpecError(f"malformed segment {data!r}: {exc}") from exc
        segment = cls(start, end, shape, float(data.get("jump_after", 0.0)))
        declared = data.get("kind")
        if declared is not None and declared != segment.kind.value:
            raise DerivatorSpecError(
                f"segment [{start}, {end}) declares kind '{declared}' but its form is {segment.kind.value}"
            )
        return segment


@dataclass(frozen=True)
class JumpList:
    """Ordered (time, delta) pairs with delta = g(t+) - g(t) > 0"""
    entries: Tuple[Tuple[float, float], ...] = ()

    def __iter__(self) -> Iterator[Tuple[float, float]]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def times(self) -> List[float]:
        return [t for t, _ in self.entries]

    @property
    def deltas(self) -> List[float]:
        return [delta for _, delta in self.entries]

    def total(self) -> float:
        return math.fsum(self.deltas)


@dataclass(frozen=True)
class Piece:
    """Overlap of one (possibly periodically shifted) segment with a window"""
    lo: float
    hi: float
    segment: Segment
    shift: float
    offset: float

    @property
    def shape(self):
        return self.segment.shape


@dataclass(frozen=True)
class Derivator:
    """Nondecreasing, left-continuous g built from segments tiling [0, T_max)"""
    segments: Tuple[Segment, ...]
    period: Optional[float] = None
    initial_jump: float = 0.0
    _ends: Tuple[float, ...] = field(default=(), init=False, repr=False, compare=False)
    _increment: float = field(default=0.0, init=False, repr=False, compare=False)

    def __post_init__(self):
        segments = tuple(self.segments)
        object.__setattr__(self, "segments", segments)
        self._validate()
        object.__setattr__(self, "_ends", tuple(seg.end for seg in segments))
        if self.period is not None:
            first, last = segments[0], segments[-1]
            increment = last.shape.value(last.end) + last.jump_after - first.shape.value(0.0)
            object.__setattr__(self, "_increment", float(increment))

    def _validate(self) -> None:
        segments = self.segments
        if not segments:
            raise DerivatorSpecError("a derivator needs at least one segment")
        if segments[0].start != 0.0:
            raise DerivatorSpecError(f"segments must start at 0, first starts at {segments[0].start}")
        for i, seg in enumerate(segments):
            if not (math.isfinite(seg.start) and math.isfinite(seg.end) and seg.start < seg.end):
                raise DerivatorSpecError(f"segment {i} has an empty or invalid span [{seg.start}, {seg.end})")
            if not (math.isfinite(seg.jump_after) and seg.jump_after >= 0.0):
                raise DerivatorSpecError(f"segment {i}: jump_after must be finite and >= 0")
            seg.shape.check_span(seg.start, seg.end)
            if i + 1 < len(segments):
                nxt = segments[i + 1]
                if nxt.start != seg.end:
                    raise DerivatorSpecError(
                        f"segments {i} and {i + 1} leave a gap or overlap at {seg.end} / {nxt.start}"
                    )
                left = seg.shape.value(seg.end) + seg.jump_after
                right = nxt.shape.value(nxt.start)
                if abs(left - right) > JUNCTION_TOL * max(1.0, abs(left)):
                    raise DerivatorSpecError(
                        f"junction at t={seg.end}: g(t)+jump = {left!r} but next segment starts at {right!r}"
                    )
        if self.period is not None:
            if not (self.period > 0 and self.period == segments[-1].end):
                raise DerivatorSpecError(
                    f"period {self.period!r} must equal the end of the last segment ({segments[-1].end})"
                )
            if self.initial_jump:
                raise DerivatorSpecError("initial_jump is only supported for non-periodic derivators")
            last = segments[-1]
            if last.shape.value(last.end) + last.jump_after < segments[0].shape.value(0.0):
                raise DerivatorSpecError("periodic extension would decrease g")
        if not (math.isfinite(self.initial_jump) and self.initial_jump >= 0.0):
            raise DerivatorSpecError("initial_jump must be finite and >= 0")

    # -- domain ------------------------------------------------------------

    @property
    def t_max(self) -> float:
        """Right end of the domain; infinite for periodic derivators"""
        return math.inf if self.period is not None else self.segments[-1].end

    @property
    def increment(self) -> float:
        """g(period+) - g(0) for periodic derivators, 0 otherwise"""
        return self._increment

    def _check_time(self, t: float) -> float:
        t = float(t)
        if not math.isfinite(t) or t < 0.0:
            raise DomainError(f"t={t!r} is outside the domain [0, {self.t_max}]")
        if t > self.t_max:
            raise DomainError(f"t={t!r} is outside the domain [0, {self.t_max}]")
        return t

    def _check_interval(self, a: float, b: float) -> Tuple[float, float]:
        if float(a) > float(b):
            raise IntervalError(f"inverted interval [{a}, {b})")
        return self._check_time(a), self._check_time(b)

    def _locate(self, t: float) -> Tuple[int, int, float]:
        """(period index k, segment index, local time) with t in (k P + a_i, k P + b_i]"""
        k = 0
        tau = t
        if self.period is not None and t > 0.0:
            period = self.period
            k = math.ceil(t / period) - 1
            tau = t - k * period
            if tau > period:
                k += 1
                tau = t - k * period
            elif tau <= 0.0 and k > 0:
                k -= 1
                tau = t - k * period
        index = min(bisect.bisect_left(self._ends, tau), len(self.segments) - 1)
        return k, index, tau

    # -- point values --------------------------------------------------------

    def eval(self, t: float) -> float:
        """g(t), left-continuous at junctions"""
        t = self._check_time(t)
        k, index, tau = self._locate(t)
        value = k * self._increment + float(self.segments[index].shape.value(tau))
        if t > 0.0:
            value += self.initial_jump
        return value

    def delta(self, t: float) -> float:
        """Jump size g(t+) - g(t); positive exactly on D_g"""
        t = self._check_time(t)
        if t == 0.0:
            return self.initial_jump
        _, index, tau = self._locate(t)
        if tau == self._ends[index]:
            return self.segments[index].jump_after
        return 0.0

    def right_limit(self, t: float) -> float:
        """g(t+) = g(t) + delta g(t)"""
        return self.eval(t) + self.delta(t)

    def sample(self, grid: Sequence[float]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Arrays (g, g+, delta g) on a grid"""
        values = np.array([self.eval(t) for t in grid], dtype=float)
        deltas = np.array([self.delta(t) for t in grid], dtype=float)
        return values, values + deltas, deltas

    # -- structure on windows -----------------------------------------------

    def _period_range(self, a: float, b: float) -> range:
        if self.period is None:
            return range(0, 1)
        return range(max(0, math.floor(a / self.period) - 1), math.ceil(b / self.period) + 1)

    def pieces(self, a: float, b: float) -> Iterator[Piece]:
        """Segment pieces overlapping (a, b), in time order"""
        a, b = self._check_interval(a, b)
        for k in self._period_range(a, b):
            shift = k * self.period if self.period is not None else 0.0
            offset = k * self._increment + self.initial_jump
            for seg in self.segments:
                lo = max(a, shift + seg.start)
                hi = min(b, shift + seg.end)
                if lo < hi:
                    yield Piece(lo, hi, seg, shift, offset)

    def jumps_in(self, a: float, b: float) -> JumpList:
        """All t in [a, b) with delta g(t) > 0"""
        a, b = self._check_interval(a, b)
        entries = []
        if self.initial_jump > 0.0 and a <= 0.0 < b:
            entries.append((0.0, self.initial_jump))
        for k in self._period_range(a, b):
            shift = k * self.period if self.period is not None else 0.0
            for seg in self.segments:
                t = shift + seg.end
                if seg.jump_after > 0.0 and a <= t < b:
                    entries.append((t, seg.jump_after))
        entries.sort()
        return JumpList(tuple(entries))

    def breakpoints(self, a: float, b: float) -> List[float]:
        """Segment junctions (branch changes, jumps, constancy endpoints) inside [a, b]"""
        a, b = self._check_interval(a, b)
        points = set()
        for k in self._period_range(a, b):
            shift = k * self.period if self.period is not None else 0.0
            for seg in self.segments:
                for t in (shift + seg.start, shift + seg.end):
                    if a <= t <= b:
                        points.add(t)
        return sorted(points)

    def measure(self, a: float, b: float) -> float:
        """mu_g([a, b)) = g(b) - g(a)"""
        a, b = self._check_interval(a, b)
        return max(0.0, self.eval(b) - self.eval(a))

    def measure_minus_jumps(self, a: float, b: float) -> float:
        """mu_g([a, b) minus D_g): the continuous part of the measure"""
        total = self.measure(a, b) - self.jumps_in(a, b).total()
        return max(0.0, total)

    def constancy_components(self, a: float, b: float) -> List[Tuple[float, float]]:
        """Maximal open subintervals of (a, b) on which g is constant"""
        a, b = self._check_interval(a, b)
        raw = []
        for piece in self.pieces(a, b):
            if piece.segment.kind is SegmentKind.CONSTANT:
                end_jump = piece.segment.jump_after if piece.hi == piece.shift + piece.segment.end else 0.0
                raw.append([piece.lo, piece.hi, end_jump])
        merged: List[List[float]] = []
        for lo, hi, jump in raw:
            if merged and merged[-1][1] == lo and merged[-1][2] == 0.0:
                merged[-1][1] = hi
                merged[-1][2] = jump
            else:
                merged.append([lo, hi, jump])
        return [(lo, hi) for lo, hi, _ in merged if lo < hi]

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "period": self.period,
            "initial_jump": self.initial_jump,
            "segments": [seg.to_dict() for seg in self.segments],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Derivator":
        if not isinstance(data, dict) or "segments" not in data:
            raise DerivatorSpecError("derivator JSON must be an object with a 'segments' list")
        version = data.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise DerivatorSpecError(f"unsupported derivator schema_version {version!r}")
        period = data.get("period")
        return cls(
            segments=tuple(Segment.from_dict(item) for item in data["segments"]),
            period=None if period is None else float(period),
            initial_jump=float(data.get("initial_jump", 0.0)),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Derivator":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DerivatorSpecError(f"invalid derivator JSON: {exc}") from exc
        return cls.from_dict(data)


# ---------------------------------------------------------------------------
# Builtins and helpers
# ---------------------------------------------------------------------------

def identity_derivator(t_max: float = 1e9) -> Derivator:
    """g(t) = t on [0, t_max]"""
    return Derivator((Segment(0.0, float(t_max), IdentityShape()),))


def silkworm_derivator() -> Derivator:
    """
    Life-cycle derivator of the silkworm model, period 5:
      1/2 sqrt(4t - t^2) on [0,2], 1 on (2,3], 2 - sqrt(6t - t^2 - 8) on (3,4], 3 on (4,5],
      then 4 + g(t - 5). Jumps of 1 at 5k+4 (death) and 5k+5 (rebirth).
    """
    return Derivator(
        segments=(
            Segment(0.0, 2.0, ArcShape(rising=True, center=2.0, radius=2.0, scale=0.5, offset=0.0)),
            Segment(2.0, 3.0, ConstantShape(1.0)),
            Segment(3.0, 4.0, ArcShape(rising=False, center=3.0, radius=1.0, scale=1.0, offset=2.0), 1.0),
            Segment(4.0, 5.0, ConstantShape(3.0), 1.0),
        ),
        period=5.0,
    )


def step_derivator(t0: float = 1.0, height: float = 2.0, t_max: float = 2.0) -> Derivator:
    """Pure jump measure: g = 0 on [0, t0], g = height on (t0, t_max]"""
    return Derivator((
        Segment(0.0, t0, ConstantShape(0.0), height),
        Segment(t0, t_max, ConstantShape(height)),
    ))


def identity_with_jumps(jumps: Sequence[Tuple[float, float]], t_max: float) -> Derivator:
    """g(t) = t + sum of deltas of jumps at times < t, on [0, t_max]"""
    jumps = sorted((float(t), float(d)) for t, d in jumps)
    segments = []
    start, level = 0.0, 0.0
    for t, delta in jumps:
        if not 0.0 < t < t_max:
            raise DerivatorSpecError(f"jump time {t} must lie inside (0, {t_max})")
        segments.append(Segment(start, t, AffineShape(1.0, level), delta))
        start, level = t, level + delta
    segments.append(Segment(start, float(t_max), AffineShape(1.0, level)))
    return Derivator(tuple(segments))


def builtin_derivator(name: str) -> Derivator:
    """Look up a builtin derivator by name"""
    builders = {
        "identity": identity_derivator,
        "silkworm": silkworm_derivator,
        "step": step_derivator,
    }
    if name not in builders:
        raise DerivatorSpecError(f"unknown builtin derivator '{name}', expected one of {BUILTIN_DERIVATORS}")
    return builders[name]()


def resolve_derivator(spec: str) -> Derivator:
    """Builtin name or path to a derivator JSON file"""
    if spec in BUILTIN_DERIVATORS:
        return builtin_derivator(spec)
    path = Path(spec)
    if not path.is_file():
        raise DerivatorSpecError(f"'{spec}' is neither a builtin derivator nor a readable JSON file")
    return Derivator.from_json(path.read_text(encoding="utf-8"))


def default_grid(d: Derivator, a: float, b: float, points_per_stretch: int = 200) -> np.ndarray:
    """
    Union of a, b, jump times, segment junctions (constancy endpoints included)
    and `points_per_stretch` uniform points inside every smooth piece
    """
    if points_per_stretch < 1:
        raise ValueError("points_per_stretch must be >= 1")
    points = {float(a), float(b)}
    points.update(d.breakpoints(a, b))
    points.update(d.jumps_in(a, b).times)
    chunks = [np.fromiter(points, dtype=float)]
    for piece in d.pieces(a, b):
        if piece.segment.kind is SegmentKind.SMOOTH:
            chunks.append(np.linspace(piece.lo, piece.hi, points_per_stretch + 1)[1:-1])
    return np.unique(np.concatenate(chunks))
