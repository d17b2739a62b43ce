"""
domain.py - Problems, potentials, grids, fields and exhaustions.

Every other plcrit module consumes the objects defined here:

- PotentialSpec: the potential V (or a probe W) as a small closed-form description.
- RadialProblem: exponent p, ambient dimension d, interval domain and potential.
- Grid / Field: a 1D node set with radial weight |r|^(d-1) and piecewise-linear nodal values.
- ExhaustionSchedule: nested levels (a_N, b_N) exhausting the domain, plus reference points.
- CompactSetSpec: a compact interval K inside the domain with boundary trace values.

Grids for exhaustion runs come from build_exhaustion_grid, which builds a single master grid
whose restrictions to the levels are nested and share their stencils. Level-to-level
comparisons are therefore made node by node without interpolation.

Configuration-facing types are frozen pydantic models. Grid and Field carry numpy arrays
and are frozen dataclasses with read-only arrays.
"""

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field as ModelField, model_validator
from scipy.optimize import brentq

from plcrit.lib.errors import ArgumentError, DomainError, EvaluationError

logger = logging.getLogger(__name__)

# 4-point Gauss-Legendre rule on [-1, 1]
_GAUSS_POINTS, _GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(4)

FIRST_CELL_FRACTION = 1e-3


class PotentialSpec(BaseModel):
    """
    Closed-form description of a potential.

    kind:
        zero        V = 0
        constant    V = c
        power       V = c * |r|**s
        bump        V = height * exp(1 - 1/(1 - x**2)) for |x| < 1, x = (r - center)/radius
        tabulated   piecewise-linear through samples, constant beyond the ends
    """

    model_config = ConfigDict(frozen=True)

    kind: Literal["zero", "constant", "power", "bump", "tabulated"] = "zero"
    c: float = 0.0
    s: float = 0.0
    center: float = 0.0
    radius: float = 1.0
    height: float = 1.0
    samples: tuple[tuple[float, float], ...] = ()

    @model_validator(mode="after")
    def _check_parameters(self):
        if self.kind == "bump" and not self.radius > 0:
            raise ValueError("bump radius must be positive")
        if self.kind == "tabulated":
            if len(self.samples) < 2:
                raise ValueError("tabulated potential needs at least two samples")
            xs = [x for x, _ in self.samples]
            if any(b <= a for a, b in zip(xs, xs[1:])):
                raise ValueError("tabulated sample abscissae must be strictly increasing")
        return self

    @classmethod
    def zero(cls):
        return cls()

    @classmethod
    def constant(cls, c):
        return cls(kind="constant", c=c)

    @classmethod
    def power(cls, c, s):
        return cls(kind="power", c=c, s=s)

    @classmethod
    def bump(cls, center, radius, height=1.0):
        return cls(kind="bump", center=center, radius=radius, height=height)

    @classmethod
    def tabulated(cls, samples):
        return cls(kind="tabulated", samples=tuple((float(x), float(y)) for x, y in samples))

    def evaluate(self, r):
        """Raw values at r. May contain inf or nan for singular power laws."""
        r = np.asarray(r, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(r)
        if self.kind == "constant":
            return np.full_like(r, self.c)
        if self.kind == "power":
            with np.errstate(divide="ignore", invalid="ignore"):
                return self.c * np.abs(r) ** self.s
        if self.kind == "bump":
            x = (r - self.center) / self.radius
            out = np.zeros_like(r)
            inside = np.abs(x) < 1.0
            out[inside] = self.height * np.exp(1.0 - 1.0 / (1.0 - x[inside] ** 2))
            return out
        xs, ys = np.asarray(self.samples, dtype=float).T
        return np.interp(r, xs, ys)

    def support(self):
        """Closed interval outside which the potential vanishes, or None if not compact."""
        if self.kind == "zero":
            return (0.0, 0.0)
        if self.kind == "bump":
            return (self.center - self.radius, self.center + self.radius)
        if self.kind == "tabulated":
            xs, ys = np.asarray(self.samples, dtype=float).T
            if ys[0] == 0.0 and ys[-1] == 0.0:
                return (float(xs[0]), float(xs[-1]))
        if self.kind == "constant" and self.c == 0.0:
            return (0.0, 0.0)
        return None

    def scaled(self, factor):
        """The potential multiplied by factor."""
        if self.kind == "zero":
            return self
        if self.kind in ("constant", "power"):
            return self.model_copy(update={"c": self.c * factor})
        if self.kind == "bump":
            return self.model_copy(update={"height": self.height * factor})
        return self.model_copy(
            update={"samples": tuple((x, y * factor) for x, y in self.samples)}
        )


class RadialProblem(BaseModel):
    """
    Discretizable instance of Q(u) = (1/p) * integral of (|u'|^p + V|u|^p) |r|^(d-1) dr.

    For d > 1 the domain lies in [0, inf). For d = 1 it may be any interval of the line,
    including (-inf, inf). When d > 1 and r_lo = 0 the origin is a symmetry center with
    a natural boundary condition, unless punctured is set, in which case r = 0 is a
    removed point approached by the exhaustion.
    """

    model_config = ConfigDict(frozen=True)

    p: float = ModelField(gt=1.0)
    d: float = ModelField(default=1.0, ge=1.0)
    r_lo: float = 0.0
    r_hi: float = math.inf
    potential: PotentialSpec = PotentialSpec()
    punctured: bool = False

    @model_validator(mode="after")
    def _check_domain(self):
        if not math.isfinite(self.p):
            raise ValueError("p must be finite")
        if not math.isfinite(self.d):
            raise ValueError("d must be finite")
        if math.isnan(self.r_lo) or math.isnan(self.r_hi):
            raise ValueError("domain ends must not be nan")
        if not self.r_lo < self.r_hi:
            raise ValueError(f"empty domain ({self.r_lo}, {self.r_hi})")
        if self.r_lo == math.inf or self.r_hi == -math.inf:
            raise ValueError("domain ends are inverted infinities")
        if self.d > 1 and self.r_lo < 0:
            raise ValueError("radial problems with d > 1 need r_lo >= 0")
        if self.punctured and not math.isfinite(self.r_lo):
            raise ValueError("a puncture needs a finite inner end")
        return self

    @property
    def has_center(self):
        return self.d > 1 and self.r_lo == 0.0 and not self.punctured

    @property
    def bounded(self):
        return math.isfinite(self.r_lo) and math.isfinite(self.r_hi)

    def contains(self, a, b):
        return self.r_lo <= a < b <= self.r_hi

    def with_potential(self, potential):
        return self.model_copy(update={"potential": potential})


@dataclass(frozen=True, eq=False)
class Grid:
    """
    Strictly increasing nodes with radial weight |r|^(d-1).

    law is "uniform", "geometric" or "composite" (exhaustion master grids and their
    restrictions). center marks a first node at r = 0 that carries the natural condition.
    """

    nodes: np.ndarray
    d: float = 1.0
    law: str = "uniform"
    ratio: Optional[float] = None
    center: bool = False

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 3:
            raise ArgumentError("a grid needs at least 3 nodes")
        if not np.all(np.isfinite(nodes)):
            raise ArgumentError("grid nodes must be finite")
        if np.any(np.diff(nodes) <= 0):
            raise ArgumentError("grid nodes must be strictly increasing")
        if self.law == "geometric" and (self.ratio is None or not self.ratio > 0):
            raise ArgumentError("geometric grids need a positive ratio")
        if self.d > 1 and nodes[0] < 0:
            raise ArgumentError("radial grids with d > 1 must lie in [0, inf)")
        if self.center and nodes[0] != 0.0:
            raise ArgumentError("a center grid must start at r = 0")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def size(self):
        return self.nodes.size

    @property
    def interval(self):
        return (float(self.nodes[0]), float(self.nodes[-1]))

    @property
    def weight_exponent(self):
        return self.d - 1.0

    def weight(self, r):
        return np.abs(np.asarray(r, dtype=float)) ** self.weight_exponent

    @cached_property
    def h(self):
        return np.diff(self.nodes)

    @cached_property
    def midpoints(self):
        return 0.5 * (self.nodes[:-1] + self.nodes[1:])

    @cached_property
    def cell_measure(self):
        """Exact integral of |r|^(d-1) over every cell."""
        a, b = self.nodes[:-1], self.nodes[1:]
        if self.d == 1.0:
            m = b - a
        else:
            m = (b ** self.d - a ** self.d) / self.d
        if np.any(m <= 0):
            raise ArgumentError("non-positive cell measure")
        return m

    @cached_property
    def node_mass(self):
        """Integral of the hat function of every node against |r|^(d-1)."""
        a, b = self.nodes[:-1], self.nodes[1:]
        half = 0.5 * (b - a)
        r = 0.5 * (a + b)[:, None] + half[:, None] * _GAUSS_POINTS[None, :]
        w = half[:, None] * _GAUSS_WEIGHTS[None, :] * self.weight(r)
        right_share = (r - a[:, None]) / (b - a)[:, None]
        mass = np.zeros(self.size)
        mass[:-1] += np.sum(w * (1.0 - right_share), axis=1)
        mass[1:] += np.sum(w * right_share, axis=1)
        return mass

    @cached_property
    def dirichlet_mask(self):
        mask = np.zeros(self.size, dtype=bool)
        mask[-1] = True
        mask[0] = not self.center
        return mask

    @property
    def interior_mask(self):
        return ~self.dirichlet_mask

    def locate(self, x):
        """Index of the node closest to x."""
        i = int(np.searchsorted(self.nodes, x))
        if i == 0:
            return 0
        if i >= self.size:
            return self.size - 1
        return i if self.nodes[i] - x < x - self.nodes[i - 1] else i - 1

    def mask_between(self, lo, hi):
        tol = 1e-12 * max(1.0, abs(lo), abs(hi))
        return (self.nodes >= lo - tol) & (self.nodes <= hi + tol)

    def restrict(self, a, b):
        """Sub-grid between the nodes a and b (both must be nodes)."""
        tol = 1e-12 * max(1.0, abs(a), abs(b))
        i0 = int(np.searchsorted(self.nodes, a - tol))
        i1 = int(np.searchsorted(self.nodes, b + tol, side="right")) - 1
        if i0 >= self.size or i1 < 0 or abs(self.nodes[i0] - a) > tol or abs(self.nodes[i1] - b) > tol:
            raise ArgumentError(f"({a}, {b}) does not start and end at grid nodes")
        return Grid(
            self.nodes[i0:i1 + 1],
            d=self.d,
            law=self.law,
            ratio=self.ratio,
            center=self.center and i0 == 0,
        )


@dataclass(frozen=True, eq=False)
class Field:
    """Piecewise-linear function given by its nodal values on a grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.grid.size,):
            raise ArgumentError(
                f"field has {values.size} values for a grid of {self.grid.size} nodes"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, grid, fn):
        return cls(grid, np.asarray(fn(grid.nodes), dtype=float))

    @classmethod
    def constant(cls, grid, c):
        return cls(grid, np.full(grid.size, float(c)))

    @cached_property
    def slopes(self):
        return np.diff(self.values) / self.grid.h

    @cached_property
    def midvalues(self):
        return 0.5 * (self.values[:-1] + self.values[1:])

    def with_values(self, values):
        return Field(self.grid, values)

    def at(self, x):
        return np.interp(x, self.grid.nodes, self.values)

    def is_compactly_supported(self, atol=0.0):
        """True when the field vanishes at the grid's Dirichlet end nodes."""
        return bool(np.all(np.abs(self.values[self.grid.dirichlet_mask]) <= atol))

    def window(self, lo, hi):
        mask = self.grid.mask_between(lo, hi)
        return self.grid.nodes[mask], self.values[mask]


class ExhaustionSchedule(BaseModel):
    """Nested levels (a_N, b_N), N = 1..L, with reference points x0 (and optionally x1)."""

    model_config = ConfigDict(frozen=True)

    levels: tuple[tuple[float, float], ...]
    x0: float
    x1: Optional[float] = None

    @model_validator(mode="after")
    def _check_nesting(self):
        if not self.levels:
            raise ValueError("an exhaustion needs at least one level")
        for a, b in self.levels:
            if not (math.isfinite(a) and math.isfinite(b) and a < b):
                raise ValueError(f"level ({a}, {b}) is not a bounded interval")
        for (a0, b0), (a1, b1) in zip(self.levels, self.levels[1:]):
            if a1 > a0 or b1 < b0 or (a1 == a0 and b1 == b0):
                raise ValueError(f"level ({a1}, {b1}) does not strictly contain ({a0}, {b0})")
        a, b = self.levels[0]
        if not a <= self.x0 < b:
            raise ValueError(f"reference point {self.x0} is not in the first level ({a}, {b})")
        return self

    @property
    def count(self):
        return len(self.levels)

    @property
    def omega1(self):
        return self.levels[0]

    def truncated(self, count):
        return self.model_copy(update={"levels": self.levels[:count]})

    def validate_for(self, problem):
        for a, b in self.levels:
            if a < problem.r_lo or b > problem.r_hi:
                raise DomainError(
                    f"level ({a}, {b}) leaves the domain ({problem.r_lo}, {problem.r_hi})"
                )
        return self


class CompactSetSpec(BaseModel):
    """Compact interval K = [k_lo, k_hi] with trace values (at k_lo, at k_hi)."""

    model_config = ConfigDict(frozen=True)

    k_lo: float
    k_hi: float
    trace: tuple[float, float] = (1.0, 1.0)

    @model_validator(mode="after")
    def _check_interval(self):
        if not (math.isfinite(self.k_lo) and math.isfinite(self.k_hi)):
            raise ValueError("a compact set must be bounded")
        if self.k_lo > self.k_hi:
            raise ValueError(f"empty compact set [{self.k_lo}, {self.k_hi}]")
        return self

    def is_center_ball(self, problem):
        return problem.has_center and self.k_lo == 0.0

    def check_inside(self, problem, level=None):
        """Raise ArgumentError unless K lies strictly inside the level (or the domain)."""
        lo, hi = level if level is not None else (problem.r_lo, problem.r_hi)
        left_ok = lo < self.k_lo or (self.is_center_ball(problem) and lo == 0.0)
        if not (left_ok and self.k_hi < hi):
            raise ArgumentError(f"K = [{self.k_lo}, {self.k_hi}] is not strictly inside ({lo}, {hi})")
        return self

    def node_mask(self, grid):
        return grid.mask_between(self.k_lo, self.k_hi)

    def trace_values(self, nodes):
        """Dirichlet data on K: linear between the two trace values."""
        lo_val, hi_val = self.trace
        if self.k_hi == self.k_lo:
            return np.full(np.shape(nodes), hi_val, dtype=float)
        return np.interp(nodes, [self.k_lo, self.k_hi], [lo_val, hi_val])


def sample_potential(potential, grid, dirichlet_mask=None):
    """
    Potential values at the grid nodes.

    Non-finite values at Dirichlet nodes are replaced by 0; anywhere else they raise
    EvaluationError.
    """
    values = np.array(potential.evaluate(grid.nodes), dtype=float)
    bad = ~np.isfinite(values)
    if not bad.any():
        return values
    mask = grid.dirichlet_mask if dirichlet_mask is None else dirichlet_mask
    if np.any(bad & ~mask):
        r = grid.nodes[bad & ~mask][0]
        raise EvaluationError(f"potential is not finite at interior node r = {r:g}")
    values[bad] = 0.0
    return values


def _geometric_ratio(cells, first_fraction=FIRST_CELL_FRACTION):
    """Ratio q whose first cell is first_fraction of the interval, for a given cell count."""
    if 1.0 / cells <= first_fraction:
        return 1.0

    def first_cell(q):
        with np.errstate(over="ignore"):
            total = np.expm1(cells * np.log(q)) / (q - 1.0)
        return 1.0 / total - first_fraction

    return float(brentq(first_cell, 1.0 + 1e-12, 1.0 / first_fraction + 1.0, xtol=1e-14))


def build_grid(problem, level, resolution, law="uniform", ratio=None):
    """
    Grid spanning the closed level with the given number of nodes.

    law="geometric" grows cells by a constant ratio away from the inner end; when no ratio
    is given it is chosen so that the first cell is 1e-3 of the level length.
    """
    a, b = (float(level[0]), float(level[1]))
    if not (math.isfinite(a) and math.isfinite(b)):
        raise DomainError(f"level ({a}, {b}) must be bounded")
    if not a < b:
        raise ArgumentError(f"empty level ({a}, {b})")
    if a < problem.r_lo or b > problem.r_hi:
        raise DomainError(f"level ({a}, {b}) leaves the domain ({problem.r_lo}, {problem.r_hi})")
    if int(resolution) != resolution or resolution < 3:
        raise ArgumentError(f"resolution must be an integer >= 3, got {resolution}")
    n = int(resolution)

    if law == "uniform":
        nodes = np.linspace(a, b, n)
        q = None
    elif law == "geometric":
        q = float(ratio) if ratio is not None else _geometric_ratio(n - 1)
        if not q > 0:
            raise ArgumentError(f"geometric ratio must be positive, got {q}")
        cells = q ** np.arange(n - 1, dtype=float)
        cells *= (b - a) / cells.sum()
        nodes = a + np.concatenate(([0.0], np.cumsum(cells)))
        nodes[-1] = b
    else:
        raise ArgumentError(f"unknown spacing law {law!r}")
    center = problem.has_center and a == 0.0
    return Grid(nodes, d=problem.d, law=law, ratio=q, center=center)


def embed(field, target):
    """Piecewise-linear interpolation onto target, zero outside the source interval."""
    a, b = field.grid.interval
    lo, hi = target.interval
    tol = 1e-12 * max(1.0, abs(a), abs(b))
    if lo > a + tol or hi < b - tol:
        raise ArgumentError(f"target ({lo}, {hi}) does not contain source ({a}, {b})")
    values = np.interp(target.nodes, field.grid.nodes, field.values, left=0.0, right=0.0)
    return Field(target, values)


def default_reference(problem):
    lo, hi = problem.r_lo, problem.r_hi
    if math.isinf(lo) and math.isinf(hi):
        return 0.0
    if math.isinf(hi):
        return lo + 1.0
    if math.isinf(lo):
        return hi - 1.0
    return 0.5 * (lo + hi)


def default_exhaustion(problem, levels=16, growth=2.0, reference=None, x1=None):
    """
    Geometric exhaustion around a reference point c.

    Infinite ends move out by the factor growth per level, punctured inner ends move in
    towards the puncture by the same factor, other finite ends stay fixed. For (0, inf)
    punctured this gives (c/2^N, c*2^N); for a half-line (a, inf) it gives (a, a + 2^N).
    """
    if levels < 1:
        raise ArgumentError("an exhaustion needs at least one level")
    if not growth > 1:
        raise ArgumentError(f"growth must exceed 1, got {growth}")
    lo, hi = problem.r_lo, problem.r_hi
    if not (math.isinf(lo) or math.isinf(hi) or problem.punctured):
        raise DomainError("bounded domains without a puncture have nothing to exhaust")
    c = default_reference(problem) if reference is None else float(reference)
    if not lo <= c < hi or (problem.punctured and c == lo):
        raise DomainError(f"reference point {c} is not inside the domain")
    span = 1.0 if math.isinf(hi) else hi - c

    out = []
    for n in range(1, levels + 1):
        scale = growth ** n
        if math.isinf(lo):
            a = c - span * scale
        elif problem.punctured:
            a = lo + (c - lo) / scale
        else:
            a = lo
        if math.isinf(hi):
            b = c + scale if math.isinf(lo) else lo + (c - lo) * scale
        else:
            b = hi
        out.append((a, b))
    return ExhaustionSchedule(levels=tuple(out), x0=c, x1=x1)


def hole_radii(problem, schedule, x0, first=None, law="geometric", growth=2.0):
    """
    Radii delta_N of the balls removed around a singular point x0, one per level.

    A puncture at the inner domain end uses the level ends themselves. Otherwise the radii
    shrink geometrically (law="geometric") or like first/N (law="harmonic").
    """
    if problem.punctured and x0 == problem.r_lo:
        return tuple(a - x0 for a, _ in schedule.levels)
    a1, b1 = schedule.omega1
    if not a1 <= x0 < b1:
        raise DomainError(f"singular point {x0} is not in the first level")
    if first is None:
        sides = [b1 - x0] + ([x0 - a1] if x0 > a1 else [])
        first = 0.25 * min(sides)
    if law == "geometric":
        return tuple(first / growth ** n for n in range(schedule.count))
    if law == "harmonic":
        return tuple(first / (n + 1) for n in range(schedule.count))
    raise ArgumentError(f"unknown hole law {law!r}")


def default_probe(schedule):
    """Smooth bump of height 1 on the middle third of the first level."""
    a, b = schedule.omega1
    return PotentialSpec.bump(center=0.5 * (a + b), radius=(b - a) / 6.0)


def _uniform_piece(a, b, h):
    n = max(1, int(math.ceil((b - a) / h - 1e-9)))
    return np.linspace(a, b, n + 1)


def _growing_piece(start, end, h_first, q):
    """Cells growing by q from start towards end."""
    length = abs(end - start)
    n = max(1, int(math.ceil(math.log1p((q - 1.0) * length / h_first) / math.log(q))))
    cells = h_first * q ** np.arange(n, dtype=float)
    cells *= length / cells.sum()
    offsets = np.concatenate(([0.0], np.cumsum(cells)))
    offsets[-1] = length
    return start + math.copysign(1.0, end - start) * offsets


def _graded_piece(start, end, focus, q):
    """Cells proportional to the distance from focus; start is the end farther from it."""
    d0, d1 = abs(start - focus), abs(end - focus)
    n = max(1, int(math.ceil(math.log(d0 / d1) / math.log(q) - 1e-9)))
    dist = d0 * (d1 / d0) ** (np.arange(n + 1) / n)
    nodes = focus + math.copysign(1.0, start - focus) * dist
    nodes[0], nodes[-1] = start, end
    return nodes


def _split(start, end, points):
    """Consecutive (start, end) pairs after cutting at the points strictly between them."""
    lo, hi = min(start, end), max(start, end)
    cuts = sorted({x for x in points if lo < x < hi}, reverse=end < start)
    ends = [start, *cuts, end]
    return list(zip(ends, ends[1:]))


def _outer_nodes(pieces, focus, infinite, h_first, q, breakpoints):
    chunks = []
    h_prev = h_first
    for start, end in pieces:
        for s, e in _split(start, end, breakpoints):
            if infinite:
                nodes = _growing_piece(s, e, h_prev, q)
                h_prev = abs(nodes[-1] - nodes[-2])
            else:
                nodes = _graded_piece(s, e, focus, q)
            chunks.append(nodes)
    return chunks


def build_exhaustion_grid(problem, schedule, resolution=1001, grading=1.02, breakpoints=(),
                          hole_center=None, holes=()):
    """
    Master grid for an exhaustion; every level is a restriction of it.

    The first level gets a uniform spacing of its length/(resolution - 1). Outside it,
    cells grow by the factor grading towards infinite ends and shrink in proportion to
    the distance towards finite ends that are approached by the levels. Balls of radii
    holes around hole_center are resolved by cells proportional to the distance from
    hole_center. Level ends, breakpoints, hole radii and the reference points are nodes.
    """
    if int(resolution) != resolution or resolution < 3:
        raise ArgumentError(f"resolution must be an integer >= 3, got {resolution}")
    if not grading > 1:
        raise ArgumentError(f"grading must exceed 1, got {grading}")
    schedule.validate_for(problem)
    a1, b1 = schedule.omega1
    h = (b1 - a1) / (int(resolution) - 1)
    points = [float(x) for x in breakpoints]
    points += [schedule.x0] + ([schedule.x1] if schedule.x1 is not None else [])

    chunks = []
    core = [(a1, b1)]
    if hole_center is not None and holes:
        xs = float(hole_center)
        radii = sorted(set(float(r) for r in holes), reverse=True)
        if not a1 <= xs < b1 or xs + radii[0] >= b1 or (xs > a1 and xs - radii[0] <= a1):
            raise ArgumentError("holes must lie inside the first level")
        core = [(xs + radii[0], b1)]
        right = [(xs + r0, xs + r1) for r0, r1 in zip(radii, radii[1:])]
        chunks += [_graded_piece(s, e, xs, grading) for s, e in right]
        chunks.append(np.array([xs, xs + radii[-1]]))
        if xs > a1:
            core.append((a1, xs - radii[0]))
            chunks += [_graded_piece(xs - r0, xs - r1, xs, grading)
                       for r0, r1 in zip(radii, radii[1:])]
            chunks.append(np.array([xs - radii[-1], xs]))
    for lo, hi in core:
        for s, e in _split(lo, hi, points):
            chunks.append(_uniform_piece(s, e, h))

    lefts = [(a0, a) for (a0, _), (a, _) in zip(schedule.levels, schedule.levels[1:]) if a < a0]
    rights = [(b0, b) for (_, b0), (_, b) in zip(schedule.levels, schedule.levels[1:]) if b > b0]
    chunks += _outer_nodes(lefts, problem.r_lo, math.isinf(problem.r_lo), h, grading, points)
    chunks += _outer_nodes(rights, problem.r_hi, math.isinf(problem.r_hi), h, grading, points)

    nodes = np.unique(np.concatenate(chunks))
    center = problem.has_center and nodes[0] == 0.0
    grid = Grid(nodes, d=problem.d, law="composite", center=center)
    logger.debug("exhaustion grid: %d nodes on (%g, %g)", grid.size, *grid.interval)
    return grid


class ExhaustionSettings(BaseModel):
    """Master-grid parameters shared by every exhaustion run."""

    model_config = ConfigDict(frozen=True)

    resolution: int = ModelField(default=1001, ge=3)
    grading: float = ModelField(default=1.02, gt=1.0)
    progress: bool = False


def level_grids(problem, schedule, settings=None, breakpoints=(), hole_center=None, holes=()):
    """Master grid and the list of level grids restricted from it."""
    settings = settings or ExhaustionSettings()
    master = build_exhaustion_grid(problem, schedule, settings.resolution, settings.grading,
                                   breakpoints, hole_center, holes)
    return master, [master.restrict(a, b) for a, b in schedule.levels]
