"""
energy.py - Energy functionals and the algebraic inequalities behind them.

Quantities are evaluated on piecewise-linear fields:

    Q(u) = (1/p) * [ sum_c m_c |u'_c|^p + sum_i w_i V_i |u_i|^p ]

with m_c the exact weighted cell measure and w_i the weighted hat-function moment of
node i (the trapezoid weight when d = 1). Slopes are cellwise constant, so the gradient
term is exact for the field. The Picone Lagrangian and the simplified energies use the
cell-midpoint values of the fields together with the cell slopes, which keeps the Picone
density nonnegative cell by cell.

Also provided: the elementary vector inequality ratio with its empirical envelope, the
Poincare-type residual, and residual checkers for the weighted gap inequalities.
"""

import logging
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.special import binom

from plcrit.lib.domain import Field, sample_potential
from plcrit.lib.errors import ArgumentError

logger = logging.getLogger(__name__)

_SERIES_TERMS = 24
_SERIES_RADIUS = 0.1


@dataclass(frozen=True)
class EnergyBreakdown:
    gradient_term: float
    potential_term: float
    total: float


@dataclass(frozen=True, eq=False)
class LagrangianField:
    """Per-cell Picone density and its weighted integral."""

    cells: np.ndarray
    total: float


@dataclass(frozen=True)
class SimplifiedEnergy:
    universal: float
    split: Optional[float]


class InequalityRatio(NamedTuple):
    value: float
    degenerate: bool


@dataclass(frozen=True)
class Envelope:
    low: float
    high: float
    samples: int


def _same_grid(*fields):
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid is not grid and not np.array_equal(f.grid.nodes, grid.nodes):
            raise ArgumentError("fields live on different grids")
    return grid


def _signed_power(x, e):
    """sign(x) * |x|**e, zero at zero."""
    return np.sign(x) * np.abs(x) ** e


def _potential_on(field, problem):
    zero_ends = field.grid.dirichlet_mask & (field.values == 0.0)
    return sample_potential(problem.potential, field.grid, zero_ends)


def energy_Q(u, problem, free_boundary=False):
    """
    Discrete Q(u) split into gradient and potential terms.

    u must vanish at the Dirichlet end nodes unless free_boundary is set.
    """
    scale = float(np.max(np.abs(u.values))) if u.values.size else 0.0
    if not free_boundary and not u.is_compactly_supported(atol=1e-12 * scale):
        raise ArgumentError("u must vanish at both boundary nodes (pass free_boundary=True)")
    grid = u.grid
    v = _potential_on(u, problem)
    gradient = float(np.sum(grid.cell_measure * np.abs(u.slopes) ** problem.p))
    potential = float(np.sum(grid.node_mass * v * np.abs(u.values) ** problem.p))
    return EnergyBreakdown(gradient, potential, (gradient + potential) / problem.p)


def _check_picone_pair(u, v):
    _same_grid(u, v)
    if np.any(v.values <= 0):
        raise ArgumentError("v must be strictly positive at every node")
    if np.any(u.values < 0):
        raise ArgumentError("u must be nonnegative")


def picone_cells(u_mid, u_slope, v_mid, v_slope, p):
    """Picone density L(u, v) from midpoint values and slopes (arrays of equal shape)."""
    ratio = u_mid / v_mid
    tb = ratio * v_slope
    return (np.abs(u_slope) ** p + (p - 1.0) * np.abs(tb) ** p
            - p * u_slope * _signed_power(tb, p - 1.0)) / p


def picone_density(u, v, problem):
    """Cellwise Picone Lagrangian L(u, v) for u >= 0, v > 0."""
    _check_picone_pair(u, v)
    cells = picone_cells(u.midvalues, u.slopes, v.midvalues, v.slopes, problem.p)
    return LagrangianField(cells, float(np.sum(u.grid.cell_measure * cells)))


def picone_gap(u, v, problem):
    """Q(u) minus the integral of L(u, v); vanishes in the limit when v solves Q'(v) = 0."""
    density = picone_density(u, v, problem)
    return energy_Q(u, problem).total - density.total


def simplified_energy(v, w, problem):
    """
    Two nonnegative surrogates of Q(vw).

    universal: integral of v^2 |w'|^2 (w|v'| + v|w'|)^(p-2), valid for every p.
    split (p >= 2 only): integral of v^p |w'|^p + v^2 |v'|^(p-2) w^(p-2) |w'|^2.
    """
    _same_grid(v, w)
    if np.any(v.values <= 0):
        raise ArgumentError("v must be strictly positive at every node")
    p = problem.p
    m = v.grid.cell_measure
    vm, wm = v.midvalues, np.abs(w.midvalues)
    dv, dw = np.abs(v.slopes), np.abs(w.slopes)
    moving = dw > 0
    cells = np.zeros_like(vm)
    base = wm[moving] * dv[moving] + vm[moving] * dw[moving]
    cells[moving] = vm[moving] ** 2 * dw[moving] ** 2 * base ** (p - 2.0)
    universal = float(np.sum(m * cells))
    split = None
    if p >= 2:
        split_cells = vm ** p * dw ** p + vm ** 2 * dv ** (p - 2.0) * wm ** (p - 2.0) * dw ** 2
        split = float(np.sum(m * split_cells))
    return SimplifiedEnergy(universal, split)


def simplified_energy_envelope(v, ws, problem):
    """(min, max) of Q(vw) over the universal simplified energy, across the test functions ws."""
    ws = list(ws)
    if not ws:
        raise ArgumentError("no test functions")
    ratios = np.empty(len(ws))
    for i, w in enumerate(ws):
        vw = Field(v.grid, v.values * w.values)
        ratios[i] = energy_Q(vw, problem).total / simplified_energy(v, w, problem).universal
    return Envelope(float(ratios.min()), float(ratios.max()), len(ws))


def _excess(x, q):
    """(1 + x)**q - 1 - q*x without cancellation for small |x|."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = np.abs(x) < _SERIES_RADIUS
    if small.any():
        xs = x[small]
        k = np.arange(2, _SERIES_TERMS + 2)
        out[small] = np.sum(binom(q, k)[None, :] * xs[:, None] ** k[None, :], axis=1)
    large = ~small
    if large.any():
        xl = x[large]
        with np.errstate(divide="ignore"):
            out[large] = np.expm1(q * np.log1p(xl)) - q * xl
    return out


def vector_inequality_ratios(a, b, p):
    """
    Vectorized ratio (|a+b|^p - |a|^p - p|a|^(p-2) a.b) / (|b|^2 (|a|+|b|)^(p-2)).

    a and b have shape (n, k). Rows with b = 0 give 1. Rows with a = b = 0 raise.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape != b.shape:
        raise ArgumentError("a and b must have the same shape")
    if not p > 1:
        raise ArgumentError(f"p must exceed 1, got {p}")
    na2 = np.sum(a * a, axis=1)
    nb2 = np.sum(b * b, axis=1)
    if np.any((na2 == 0) & (nb2 == 0)):
        raise ArgumentError("a and b are both zero")
    out = np.ones(a.shape[0])
    regular = (na2 > 0) & (nb2 > 0)
    if regular.any():
        na2r, nb2r = na2[regular], nb2[regular]
        dot = np.sum(a[regular] * b[regular], axis=1)
        q = 0.5 * p
        x = np.maximum((2.0 * dot + nb2r) / na2r, -1.0)
        beta = nb2r / na2r
        numer = na2r ** q * (_excess(x, q) + q * beta)
        na, nb = np.sqrt(na2r), np.sqrt(nb2r)
        out[regular] = numer / (nb2r * (na + nb) ** (p - 2.0))
    return out


def vector_inequality_ratio(a, b, p):
    """Ratio for a single pair. b = 0 returns 1 with the degenerate flag set."""
    a = np.asarray(a, dtype=float).reshape(1, -1)
    b = np.asarray(b, dtype=float).reshape(1, -1)
    value = float(vector_inequality_ratios(a, b, p)[0])
    return InequalityRatio(value, bool(np.all(b == 0)))


def vector_inequality_envelope(p, samples, rng, dim=3, magnitude_decades=3.0):
    """Empirical (min, max) of the ratio over random pairs with |b|/|a| spread over decades."""
    a = rng.standard_normal((samples, dim))
    b = rng.standard_normal((samples, dim))
    b *= (10.0 ** rng.uniform(-magnitude_decades, magnitude_decades, samples)
          * np.linalg.norm(a, axis=1) / np.linalg.norm(b, axis=1))[:, None]
    values = vector_inequality_ratios(a, b, p)
    return Envelope(float(values.min()), float(values.max()), samples)


def vector_inequality_sweep(p, angles=721, magnitudes=801, magnitude_decades=4.0):
    """
    Deterministic envelope over the two parameters the ratio depends on:
    the angle between a and b and the magnitude ratio |b|/|a|.
    """
    theta = np.linspace(0.0, np.pi, angles)
    rho = np.logspace(-magnitude_decades, magnitude_decades, magnitudes)
    tt, rr = np.meshgrid(theta, rho)
    a = np.column_stack([np.ones(tt.size), np.zeros(tt.size)])
    b = np.column_stack([rr.ravel() * np.cos(tt.ravel()), rr.ravel() * np.sin(tt.ravel())])
    values = vector_inequality_ratios(a, b, p)
    return Envelope(float(values.min()), float(values.max()), values.size)


def weighted_integral(field, values):
    """Lumped integral of values against the field's node masses."""
    return float(np.sum(field.grid.node_mass * values))


def poincare_residual(u, v_ground, weight, psi, C, problem):
    """Q(u) + C |int psi u|^p - (1/C) int W |u|^p."""
    grid = _same_grid(u, v_ground, psi)
    if not C > 0:
        raise ArgumentError(f"C must be positive, got {C}")
    pairing = weighted_integral(psi, psi.values * v_ground.values)
    scale = weighted_integral(psi, np.abs(psi.values * v_ground.values))
    if abs(pairing) <= 1e-14 * max(scale, 1e-300):
        raise ArgumentError("psi is orthogonal to the ground state")
    w = sample_potential(weight, grid)
    mass = weighted_integral(u, w * np.abs(u.values) ** problem.p)
    projection = abs(weighted_integral(u, psi.values * u.values)) ** problem.p
    return energy_Q(u, problem).total + C * projection - mass / C


def poincare_scan(family, v_ground, weight, psi, constants, problem):
    """
    Minimum Poincare residual over a family of test functions, for each C.

    Returns a list of (C, min residual) and the smallest C whose minimum is nonnegative
    (None if no constant in the scan is feasible).
    """
    rows = []
    for C in constants:
        rows.append((float(C), min(poincare_residual(u, v_ground, weight, psi, C, problem)
                                   for u in family)))
    feasible = [C for C, r in rows if r >= 0]
    return rows, (min(feasible) if feasible else None)


def gradient_gap_residual(u, problem, weight):
    """p*Q(u) - int W (|u'|^p + |u|^p), W sampled at cell midpoints for the gradient part."""
    grid = u.grid
    p = problem.p
    w_nodes = sample_potential(weight, grid)
    w_mid = np.asarray(weight.evaluate(grid.midpoints), dtype=float)
    weighted = (np.sum(grid.cell_measure * w_mid * np.abs(u.slopes) ** p)
                + np.sum(grid.node_mass * w_nodes * np.abs(u.values) ** p))
    return p * energy_Q(u, problem).total - float(weighted)


def sobolev_gap_residual(u, problem, weight):
    """p*Q(u) - (int W |u|^p*)^(p/p*) with p* = dp/(d - p); requires d > p."""
    p, d = problem.p, problem.d
    if not d > p:
        raise ArgumentError("the Sobolev exponent needs d > p")
    p_star = d * p / (d - p)
    w = sample_potential(weight, u.grid)
    mass = weighted_integral(u, w * np.abs(u.values) ** p_star)
    return p * energy_Q(u, problem).total - mass ** (p / p_star)


def random_bumps(grid, count, rng, support=None, modes=3):
    """
    Smooth nonnegative test functions vanishing outside support (default: the grid).

    Each is sin(pi x)^2 * (1 + sum_k a_k cos(2 pi k x) / (2 modes)) in the support's
    normalized coordinate x, with |a_k| <= 1, so values stay positive inside.
    """
    lo, hi = support if support is not None else grid.interval
    x = (grid.nodes - lo) / (hi - lo)
    inside = (x > 0) & (x < 1)
    out = []
    for _ in range(count):
        coeffs = rng.uniform(-1.0, 1.0, modes)
        k = np.arange(1, modes + 1)
        shape = 1.0 + np.sum(coeffs[:, None] * np.cos(2 * np.pi * k[:, None] * x[None, :]),
                             axis=0) / (2.0 * modes)
        values = np.where(inside, np.sin(np.pi * x) ** 2 * shape, 0.0)
        out.append(Field(grid, values * rng.uniform(0.5, 2.0)))
    return out
