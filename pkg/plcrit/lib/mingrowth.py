"""
mingrowth.py - Positive solutions of minimal growth and their certificates.

Purpose:
    Build positive solutions of Q'(u) = 0 away from a compact set or a point by monotone
    exhaustion, read off their behaviour near the singular point, and certify (or refute)
    minimal growth at infinity through the Picone energy of compactly supported competitors.

Workflow:
    1. uK_limit: Dirichlet solves on Omega_N minus K with a trace on K and zero data on the
       level ends. Solutions increase with N; the last one is the limit u^K.
    2. point_singularity_solution: solves Q'(u_N) = f_N on Omega_N minus a shrinking ball
       around x0, f_N a bump on the annulus (delta_N, 2 delta_N), post-scaled to u_N(x1) = 1.
    3. singularity_exponent / removability_test: log-log slope near x0, shell maxima and the
       flux jump across x0 after continuous extension.
    4. minimal_growth_certificate: infimum of the Picone energy outside Omega_2 over
       competitors with unit mass on B, per level. p = 2 is a generalized eigenproblem,
       other p use bound-constrained L-BFGS-B from the p = 2 minimizer.
    5. comparison_check: sub/supersolution comparison outside Omega_2, gated by a decaying
       certificate.

Every exhaustion run logs the per-level change on a fixed window, so convergence (or its
absence) is visible in the report.

Dependencies:
    numpy, scipy.sparse (certificate stiffness), scipy.optimize.minimize (L-BFGS-B),
    tqdm (optional per-level progress).
"""

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize
from tqdm import tqdm

from plcrit.lib.domain import (
    CompactSetSpec,
    ExhaustionSettings,
    Field,
    PotentialSpec,
    default_exhaustion,
    hole_radii,
    level_grids,
)
from plcrit.lib.energy import picone_cells
from plcrit.lib.errors import ArgumentError, DomainError, PreconditionError
from plcrit.lib.solvers import (
    DEFAULT_SETTINGS,
    ComparisonResult,
    DiscreteOperator,
    SignClass,
    classify_sign,
    generalized_inverse_iteration,
    principal_eigenpair,
    solve_operator,
)

logger = logging.getLogger(__name__)

MONOTONE_SLACK = 1e-8


class RemovabilityVerdict(str, enum.Enum):
    REMOVABLE = "removable"
    BLOWUP = "nonremovable(blowup)"
    FLUX = "nonremovable(flux)"
    UNDETERMINED = "undetermined"


class CertificateVerdict(str, enum.Enum):
    DECAYING = "decaying-to-zero"
    BOUNDED_AWAY = "bounded-away"
    UNDETERMINED = "undetermined"


@dataclass(frozen=True)
class MinimalGrowthRun:
    K: CompactSetSpec
    trace: tuple
    levels: tuple
    solutions: tuple
    limit: Field
    monotonicity: tuple
    window: tuple
    window_changes: tuple
    cauchy: bool
    converged: bool

    @property
    def monotone(self):
        return all(v <= MONOTONE_SLACK for v in self.monotonicity)


@dataclass(frozen=True)
class SingularityRun:
    x0: float
    x1: float
    radii: tuple
    levels: tuple
    solutions: tuple
    limit: Field
    window_changes: tuple
    converged: bool


class ExponentFit(NamedTuple):
    slope: float
    residual: float


@dataclass(frozen=True)
class RemovabilityReport:
    verdict: RemovabilityVerdict
    shell_radii: tuple
    shell_maxima: tuple
    flux_jump: Optional[float]
    exclude_radius: float
    reasons: tuple = field(default=())


@dataclass(frozen=True)
class CertificateRun:
    omega2: CompactSetSpec
    B: tuple
    mu: tuple
    verdict: CertificateVerdict
    minimizers: tuple
    normalization: tuple
    converged: bool = True


@dataclass(frozen=True)
class SetMonotonicityResult:
    error: float
    window: tuple
    inner: MinimalGrowthRun
    outer: MinimalGrowthRun


def _window_change(previous, current, window):
    nodes, values = previous.window(*window)
    if nodes.size == 0:
        return math.nan
    return float(np.max(np.abs(current.at(nodes) - values)))


def _check_positive_outside(problem, grid, K, settings):
    """lambda_1 of Omega_N minus K must be positive; automatic for V >= 0."""
    op = DiscreteOperator(problem, grid)
    if np.all(op.V[grid.interior_mask] >= 0):
        return
    lo, hi = grid.interval
    for a, b in ((lo, K.k_lo), (K.k_hi, hi)):
        piece = grid.mask_between(a, b)
        if b <= a or piece.sum() < 3:
            continue
        sub = grid.restrict(a, b)
        lam = principal_eigenpair(problem, sub, settings, potential=op.V[piece]).lam
        if lam <= 0:
            raise PreconditionError(f"lambda_1 of ({a:g}, {b:g}) is {lam:.6g}, not positive")


def _default_window(K, schedule):
    a1, b1 = schedule.omega1
    if b1 > K.k_hi:
        return (K.k_hi, b1)
    return (a1, K.k_lo)


def uK_limit(problem, K, schedule=None, trace=None, settings=None, grid_settings=None,
             window=None, cauchy_tol=1e-5, stop_at_cauchy=True):
    """
    Monotone exhaustion limit u^K of Dirichlet solves on Omega_N minus K.

    trace overrides the trace stored on K. Levels that do not contain K strictly are skipped.
    The run stops once the change on the window drops below cauchy_tol (stop_at_cauchy),
    or is truncated at the first level whose solve does not converge.
    """
    settings = settings or DEFAULT_SETTINGS
    grid_settings = grid_settings or ExhaustionSettings()
    if trace is not None:
        K = K.model_copy(update={"trace": tuple(float(t) for t in trace)})
    if min(K.trace) <= 0:
        raise ArgumentError(f"trace values must be positive, got {K.trace}")
    schedule = schedule or default_exhaustion(problem)
    schedule.validate_for(problem)
    window = tuple(window) if window is not None else _default_window(K, schedule)
    _, grids = level_grids(problem, schedule, grid_settings, (K.k_lo, K.k_hi))

    levels, solutions, monotonicity, changes = [], [], [], []
    cauchy = False
    converged = True
    for n, grid in tqdm(list(enumerate(grids, start=1)), disable=not grid_settings.progress,
                        desc="u^K levels"):
        try:
            K.check_inside(problem, grid.interval)
        except ArgumentError:
            logger.debug("level %d does not contain K, skipped", n)
            continue
        _check_positive_outside(problem, grid, K, settings)
        on_k = K.node_mask(grid)
        fixed = grid.dirichlet_mask | on_k
        values = np.where(on_k, K.trace_values(grid.nodes), 0.0)
        warm = solutions[-1].at(grid.nodes) if solutions else None
        if warm is not None:
            warm[grid.dirichlet_mask] = 0.0
        report = solve_operator(DiscreteOperator(problem, grid), fixed, values, None, settings, warm)
        if not report.converged:
            logger.warning("u^K: level %d did not converge, run truncated", n)
            converged = False
            break
        u = report.solution
        if solutions:
            prev = solutions[-1]
            monotonicity.append(float(np.max(prev.values - u.at(prev.grid.nodes))))
            changes.append(_window_change(prev, u, window))
            logger.info("u^K level %d: window change %.3e, monotonicity %.2e", n, changes[-1],
                        monotonicity[-1])
        levels.append((n, grid.interval))
        solutions.append(u)
        if changes and changes[-1] <= cauchy_tol:
            cauchy = True
            if stop_at_cauchy:
                break
    if not solutions:
        raise ArgumentError("no level of the exhaustion contains K")
    if any(v > MONOTONE_SLACK for v in monotonicity):
        logger.warning("u^K sequence is not monotone: max decrease %.3e", max(monotonicity))
    return MinimalGrowthRun(K, K.trace, tuple(levels), tuple(solutions), solutions[-1],
                            tuple(monotonicity), window, tuple(changes), cauchy, converged)


def set_monotonicity_check(problem, K0, K1, schedule=None, settings=None, grid_settings=None,
                           window=None):
    """
    Compare u^{K0} with u^{K1} outside K1 when K0 is inside K1 and the trace of K1 is read
    from u^{K0}. Returns the relative sup difference on the window.
    """
    if not (K1.k_lo <= K0.k_lo and K0.k_hi <= K1.k_hi):
        raise ArgumentError("K0 must be contained in K1")
    schedule = schedule or default_exhaustion(problem)
    inner = uK_limit(problem, K0, schedule, settings=settings, grid_settings=grid_settings,
                     stop_at_cauchy=False)
    trace = (float(inner.limit.at(K1.k_lo)), float(inner.limit.at(K1.k_hi)))
    window = tuple(window) if window is not None else _default_window(K1, schedule)
    outer = uK_limit(problem, K1, schedule, trace=trace, settings=settings,
                     grid_settings=grid_settings, window=window, stop_at_cauchy=False)
    nodes, values = outer.limit.window(*window)
    scale = max(float(np.max(np.abs(values))), 1e-300)
    error = float(np.max(np.abs(inner.limit.at(nodes) - values))) / scale
    logger.info("set monotonicity: relative difference %.3e on (%g, %g)", error, *window)
    return SetMonotonicityResult(error, window, inner, outer)


def _singular_point(problem, schedule, x0):
    if x0 is not None:
        return float(x0)
    return problem.r_lo if problem.punctured else schedule.x0


def _annulus_load(grid, x0, radius, one_sided):
    right = PotentialSpec.bump(x0 + 1.5 * radius, 0.5 * radius).evaluate(grid.nodes)
    if one_sided:
        return right
    return right + PotentialSpec.bump(x0 - 1.5 * radius, 0.5 * radius).evaluate(grid.nodes)


def point_singularity_run(problem, schedule=None, x0=None, x1=None, settings=None,
                          grid_settings=None, hole_law="geometric", first_radius=None):
    """
    Exhaustion solutions with a singularity at x0, normalized by u_N(x1) = 1.

    x0 defaults to the puncture (or the schedule's reference point); x1 defaults to the
    schedule's second reference point, else to its reference point.
    """
    settings = settings or DEFAULT_SETTINGS
    grid_settings = grid_settings or ExhaustionSettings()
    schedule = schedule or default_exhaustion(problem)
    schedule.validate_for(problem)
    x0 = _singular_point(problem, schedule, x0)
    if x1 is None:
        x1 = schedule.x1 if schedule.x1 is not None else schedule.x0
    x1 = float(x1)
    if x1 == x0:
        raise ArgumentError("the normalization point x1 must differ from x0")
    at_puncture = problem.punctured and x0 == problem.r_lo
    if not at_puncture and not problem.r_lo <= x0 < problem.r_hi:
        raise DomainError(f"singular point {x0} is not in the domain")
    growth = _schedule_growth(schedule)
    radii = hole_radii(problem, schedule, x0, first_radius, hole_law, growth)
    if abs(x1 - x0) < 2.0 * radii[0] * (1 - 1e-12):
        raise ArgumentError(f"x1 = {x1} lies inside the first load annulus around {x0}")
    a1, b1 = schedule.omega1
    if not a1 <= x1 <= b1:
        raise ArgumentError(f"x1 = {x1} is not in the first level ({a1}, {b1})")

    holes = () if at_puncture else radii
    _, grids = level_grids(problem, schedule, grid_settings, (x1,), None if at_puncture else x0,
                           holes)
    window = (a1, b1)
    levels, solutions, changes = [], [], []
    converged = True
    for n, (grid, delta) in enumerate(zip(grids, radii), start=1):
        dist = np.abs(grid.nodes - x0)
        one_sided = at_puncture or x0 - 2.0 * delta < grid.nodes[0]
        load = _annulus_load(grid, x0, delta, one_sided)
        fixed = grid.dirichlet_mask | (dist <= delta * (1 + 1e-9))
        report = solve_operator(DiscreteOperator(problem, grid), fixed, 0.0, load, settings)
        if not report.converged:
            logger.warning("point singularity: level %d did not converge, run truncated", n)
            converged = False
            break
        scale = float(report.solution.at(x1))
        if not scale > 0:
            raise ArgumentError(f"solution vanishes at x1 = {x1} on level {n}")
        u = report.solution.with_values(report.solution.values / scale)
        if solutions:
            prev = solutions[-1]
            far = np.abs(prev.grid.nodes - x0) >= 2.0 * radii[0]
            inside = prev.grid.mask_between(*window) & far
            changes.append(float(np.max(np.abs(u.at(prev.grid.nodes[inside]) - prev.values[inside]))))
            logger.info("point singularity level %d: delta=%.3e, window change %.3e", n, delta,
                        changes[-1])
        levels.append((n, grid.interval))
        solutions.append(u)
    if not solutions:
        raise ArgumentError("no level produced a solution")
    return SingularityRun(x0, x1, tuple(radii[:len(solutions)]), tuple(levels), tuple(solutions),
                          solutions[-1], tuple(changes), converged)


def point_singularity_solution(problem, schedule=None, x0=None, x1=None, **kwargs):
    """Limit of the point singularity exhaustion, normalized to 1 at x1."""
    return point_singularity_run(problem, schedule, x0, x1, **kwargs).limit


def _schedule_growth(schedule):
    """Ratio of consecutive level lengths (2 for a single level)."""
    if schedule.count < 2:
        return 2.0
    (a0, b0), (a1, b1) = schedule.levels[-2:]
    return max((b1 - a1) / (b0 - a0), 1.0 + 1e-12)


def singularity_exponent(u, x0, window, mode="power"):
    """
    Least-squares slope of log u against log |r - x0| over distances in window.

    mode="log" fits log u against log(-log |r - x0|) instead, the p = d profile.
    """
    lo, hi = (float(window[0]), float(window[1]))
    if not 0 < lo < hi:
        raise ArgumentError(f"fit window ({lo}, {hi}) must be a positive interval")
    if mode not in ("power", "log"):
        raise ArgumentError(f"unknown fit mode {mode!r}")
    if mode == "log" and hi >= 1:
        raise ArgumentError("the log fit needs distances below 1")
    dist = np.abs(u.grid.nodes - x0)
    mask = (dist >= lo) & (dist <= hi)
    if mask.sum() < 3:
        raise ArgumentError(f"fewer than three nodes in the fit window ({lo}, {hi})")
    values = u.values[mask]
    if np.any(values <= 0):
        raise ArgumentError("u must be positive on the fit window")
    x = np.log(dist[mask]) if mode == "power" else np.log(-np.log(dist[mask]))
    y = np.log(values)
    coeffs = np.polyfit(x, y, 1)
    residual = float(np.sqrt(np.mean((np.polyval(coeffs, x) - y) ** 2)))
    return ExponentFit(float(coeffs[0]), residual)


def _shells(dist, values, scale, exclude):
    radii, maxima = [], []
    rho = scale
    while rho / 2.0 >= exclude:
        mask = (dist >= rho / 2.0) & (dist <= rho)
        if mask.any():
            radii.append(rho)
            maxima.append(float(values[mask].max()))
        rho /= 2.0
    return radii, maxima


def _side_cell(grid, x0, exclude, side):
    """Index of the cell next to the excluded ball on one side of x0 (None if absent)."""
    nodes = grid.nodes
    if side < 0:
        cells = np.flatnonzero(nodes[1:] <= x0 - exclude)
        index = cells[-1] if cells.size else None
    else:
        cells = np.flatnonzero(nodes[:-1] >= x0 + exclude)
        index = cells[0] if cells.size else None
    return index


def removability_test(problem, u, x0, tol=1e-4, scale=1.0, exclude_radius=None):
    """
    Classify the singularity of a positive solution at x0.

    Shell maxima over dyadic annuli scale/2^k decide blowup. A bounded u is extended
    across x0 and the jump of the one-sided fluxes next to the excluded ball, normalized by
    the neighbourhood's amplitude, decides between a removable and a flux singularity.
    """
    grid = u.grid
    dist = np.abs(grid.nodes - x0)
    positive = (u.values > 0) & (dist > 0)
    if not positive.any():
        raise ArgumentError("u has no positive values near x0")
    if exclude_radius is None:
        exclude_radius = 4.0 * float(dist[positive].min())
    radii, maxima = _shells(dist, u.values, scale, exclude_radius)
    reasons = []
    if len(maxima) < 3:
        reasons.append(f"only {len(maxima)} shells outside radius {exclude_radius:.3e}")
        return RemovabilityReport(RemovabilityVerdict.UNDETERMINED, tuple(radii), tuple(maxima),
                                  None, exclude_radius, tuple(reasons))

    for lo, hi in ((x0 - scale, x0 - exclude_radius), (x0 + exclude_radius, x0 + scale)):
        side = grid.interior_mask & grid.mask_between(lo, hi)
        if side.sum() >= 1:
            sign = classify_sign(u, problem, tol=1e-4, window=(lo, hi))
            if sign != SignClass.SOLUTION:
                logger.warning("u classified as %s on (%g, %g)", sign.value, lo, hi)

    inner = maxima[-3:]
    growing = all(b >= a * (1 + 1e-3) for a, b in zip(inner, inner[1:]))
    ratio = maxima[-1] / max(maxima[0], 1e-300)
    if growing and ratio >= 1.5:
        reasons.append(f"shell maxima grow by {ratio:.3g} towards x0")
        return RemovabilityReport(RemovabilityVerdict.BLOWUP, tuple(radii), tuple(maxima), None,
                                  exclude_radius, tuple(reasons))
    increasing = all(b >= a * (1 - 1e-3) for a, b in zip(maxima, maxima[1:]))
    decreasing = all(b <= a * (1 + 1e-3) for a, b in zip(maxima, maxima[1:]))
    spread = max(maxima) / max(min(maxima), 1e-300)
    if not (increasing or decreasing) and spread >= 1.5:
        reasons.append(f"shell maxima oscillate with spread {spread:.3g}")
        return RemovabilityReport(RemovabilityVerdict.UNDETERMINED, tuple(radii), tuple(maxima),
                                  None, exclude_radius, tuple(reasons))

    op = DiscreteOperator(problem, grid)
    q = op.fluxes(u.values)
    left = _side_cell(grid, x0, exclude_radius, -1)
    right = _side_cell(grid, x0, exclude_radius, +1)
    q_left = 0.0 if left is None else float(q[left])
    q_right = 0.0 if right is None else float(q[right])
    near = (dist >= exclude_radius) & (dist <= scale)
    amplitude = float(np.max(np.abs(u.values[near]))) if near.any() else max(maxima)
    norm = (amplitude / scale) ** (problem.p - 1.0) * max(abs(x0), scale) ** (problem.d - 1.0)
    jump = abs(q_left - q_right) / max(norm, 1e-300)
    reasons.append(f"normalized flux jump {jump:.3e} (fluxes {q_left:.3e}, {q_right:.3e})")
    verdict = RemovabilityVerdict.FLUX if jump > 10.0 * tol else RemovabilityVerdict.REMOVABLE
    logger.info("removability at %g: %s (%s)", x0, verdict.value, reasons[-1])
    return RemovabilityReport(verdict, tuple(radii), tuple(maxima), jump, exclude_radius,
                              tuple(reasons))


def _positive_values(u, nodes):
    if isinstance(u, Field):
        lo, hi = u.grid.interval
        tol = 1e-12 * max(1.0, abs(lo), abs(hi))
        if nodes[0] < lo - tol or nodes[-1] > hi + tol:
            raise ArgumentError(f"u is given on ({lo}, {hi}) but needed on ({nodes[0]}, {nodes[-1]})")
        values = u.at(nodes)
    else:
        values = np.asarray(u(nodes), dtype=float)
    if np.any(~np.isfinite(values)) or np.any(values <= 0):
        raise ArgumentError("u must be finite and positive on the certificate region")
    return values


def _certificate_region(grid, omega2, B):
    """Sub-grid on the side of Omega_2 that holds B, and its Dirichlet mask."""
    lo, hi = grid.interval
    if B[0] > omega2.k_hi:
        sub = grid.restrict(omega2.k_hi, hi)
        fixed = np.zeros(sub.size, dtype=bool)
        fixed[-1] = True
    elif B[1] < omega2.k_lo:
        if grid.center:
            raise ArgumentError("B between the center and Omega_2 has no Dirichlet end")
        sub = grid.restrict(lo, omega2.k_lo)
        fixed = np.zeros(sub.size, dtype=bool)
        fixed[0] = True
    else:
        raise ArgumentError(f"B = {tuple(B)} must lie on one side outside Omega_2")
    return sub, fixed


def _linear_certificate(sub, fixed, u, b_mask):
    """p = 2: min of int u^2 |(w/u)'|^2 with int_B w^2 = 1, as a generalized eigenproblem."""
    k = sub.cell_measure * u[:-1] * u[1:] / sub.h ** 2
    diag = np.zeros(sub.size)
    diag[:-1] += k
    diag[1:] += k
    stiffness = sp.diags([-k, diag, -k], [-1, 0, 1], format="csr")
    free = ~fixed
    mass = sub.node_mass * u ** 2 * b_mask
    mu, phi, iterations, converged = generalized_inverse_iteration(
        stiffness[free][:, free], mass[free])
    w = np.zeros(sub.size)
    w[free] = u[free] * phi
    return mu, w, converged


def _picone_ratio(x, free, sub, u_mid, s_u, b_mass, p):
    w = np.zeros(sub.size)
    w[free] = x
    h = sub.h
    w_mid = 0.5 * (w[:-1] + w[1:])
    s_w = np.diff(w) / h
    cells = picone_cells(w_mid, s_w, u_mid, s_u, p)
    energy = float(np.sum(sub.cell_measure * cells))
    norm = float(np.sum(b_mass * np.abs(w) ** p))
    if norm <= 0:
        return math.inf, np.zeros_like(x)
    ratio_cells = w_mid / u_mid
    t = ratio_cells * s_u
    with np.errstate(divide="ignore", invalid="ignore"):
        t_pow = np.where(t != 0, np.abs(t) ** (p - 2.0), 0.0)
    d_slope = np.sign(s_w) * np.abs(s_w) ** (p - 1.0) - np.sign(t) * np.abs(t) ** (p - 1.0)
    d_mid = (p - 1.0) * (s_u / u_mid) * (np.sign(t) * np.abs(t) ** (p - 1.0) - s_w * t_pow)
    m = sub.cell_measure
    grad_j = np.zeros(sub.size)
    grad_j[:-1] += m * (0.5 * d_mid - d_slope / h)
    grad_j[1:] += m * (0.5 * d_mid + d_slope / h)
    grad_n = p * b_mass * np.abs(w) ** (p - 1.0)
    ratio = energy / norm
    grad = (grad_j - ratio * grad_n) / norm
    return ratio, grad[free]


def _nonlinear_certificate(sub, fixed, u, b_mask, p, start):
    u_mid = 0.5 * (u[:-1] + u[1:])
    s_u = np.diff(u) / sub.h
    b_mass = sub.node_mass * b_mask
    free = ~fixed
    result = minimize(_picone_ratio, np.maximum(start[free], 0.0), jac=True, method="L-BFGS-B",
                      args=(free, sub, u_mid, s_u, b_mass, p),
                      bounds=[(0.0, None)] * int(free.sum()),
                      options={"maxiter": 5000, "ftol": 1e-15, "gtol": 1e-12})
    w = np.zeros(sub.size)
    w[free] = result.x
    if not result.success:
        logger.debug("certificate descent: %s", result.message)
    return float(result.fun), w, bool(result.success)


def _certificate_verdict(mus):
    if len(mus) < 2 or mus[0] <= 0:
        return CertificateVerdict.UNDETERMINED
    first, last = mus[0], mus[-1]
    if last <= 1e-3 * first:
        return CertificateVerdict.DECAYING
    tail = mus[-3:]
    steady = len(tail) == 3 and all(abs(b - a) <= 0.05 * abs(b) for a, b in zip(tail, tail[1:]))
    if last >= 1e-1 * first and steady:
        return CertificateVerdict.BOUNDED_AWAY
    return CertificateVerdict.UNDETERMINED


def minimal_growth_certificate(problem, u, omega2, B, schedule=None, settings=None,
                               grid_settings=None):
    """
    Per-level infimum mu_N of the Picone energy of w against u outside Omega_2, over
    w >= 0 vanishing at the level end with int_B |w|^p = 1.

    u is a Field covering the levels or a callable of r. mu_N decaying to zero certifies
    minimal growth of u at infinity; a bounded-away sequence is reported as evidence only.
    """
    grid_settings = grid_settings or ExhaustionSettings()
    schedule = schedule or default_exhaustion(problem)
    schedule.validate_for(problem)
    B = (float(B[0]), float(B[1]))
    a1, b1 = schedule.omega1
    if not B[0] < B[1]:
        raise ArgumentError(f"empty window B = {B}")
    if not (a1 <= B[0] and B[1] <= b1):
        raise ArgumentError(f"B = {B} must lie in the first level ({a1}, {b1})")
    omega2.check_inside(problem, (a1, b1))
    p = problem.p
    _, grids = level_grids(problem, schedule, grid_settings, (omega2.k_lo, omega2.k_hi, *B))

    mus, minimizers, norms = [], [], []
    all_converged = True
    for n, grid in tqdm(list(enumerate(grids, start=1)), disable=not grid_settings.progress,
                        desc="certificate levels"):
        sub, fixed = _certificate_region(grid, omega2, B)
        values = _positive_values(u, sub.nodes)
        slopes = np.abs(np.diff(values) / sub.h)
        if p != 2 and np.any(slopes <= 1e-14 * max(float(slopes.max()), 1e-300)):
            raise PreconditionError("|u'| vanishes on the certificate region")
        b_mask = sub.mask_between(*B).astype(float)
        mu, w, converged = _linear_certificate(sub, fixed, values, b_mask)
        if p != 2:
            mu, w, converged = _nonlinear_certificate(sub, fixed, values, b_mask, p, w)
        mass = float(np.sum(sub.node_mass * b_mask * np.abs(w) ** p))
        w = w / mass ** (1.0 / p)
        all_converged = all_converged and converged
        mus.append(max(mu, 0.0))
        norms.append(float(np.sum(sub.node_mass * b_mask * np.abs(w) ** p)))
        minimizers.append(Field(sub, w))
        logger.info("certificate level %d (%g, %g): mu=%.6e%s", n, *grid.interval, mu,
                    "" if converged else " (not converged)")
    verdict = _certificate_verdict(mus)
    logger.info("certificate verdict: %s", verdict.value)
    return CertificateRun(omega2, B, tuple((n, mu) for n, mu in enumerate(mus, start=1)),
                          verdict, tuple(minimizers), tuple(norms), all_converged)


def _outside(grid, omega2):
    nodes = grid.nodes
    return (nodes < omega2.k_lo) | (nodes > omega2.k_hi)


def comparison_check(problem, u_sub, v_super, omega2, certificate, tol=1e-8, sign_tol=1e-4):
    """
    u_sub <= v_super + tol outside Omega_2, given u_sub <= v_super on the boundary of
    Omega_2 and a decaying certificate for u_sub.
    """
    if certificate.verdict != CertificateVerdict.DECAYING:
        raise PreconditionError(
            f"the certificate for u_sub is {certificate.verdict.value}, not decaying-to-zero")
    grid = u_sub.grid
    if v_super.grid is not grid and not np.array_equal(v_super.grid.nodes, grid.nodes):
        raise ArgumentError("u_sub and v_super live on different grids")
    lo, hi = grid.interval
    gap = 1e-9 * max(1.0, abs(omega2.k_lo), abs(omega2.k_hi))
    failed = []
    for a, b in ((lo, omega2.k_lo - gap), (omega2.k_hi + gap, hi)):
        region = grid.interior_mask & grid.mask_between(a, b)
        if b <= a or not region.any():
            continue
        if classify_sign(u_sub, problem, sign_tol, (a, b)) not in (SignClass.SOLUTION,
                                                                    SignClass.SUBSOLUTION):
            failed.append(f"u_sub is not a subsolution on ({a:g}, {b:g})")
        if classify_sign(v_super, problem, sign_tol, (a, b)) not in (SignClass.SOLUTION,
                                                                      SignClass.SUPERSOLUTION):
            failed.append(f"v_super is not a supersolution on ({a:g}, {b:g})")
    if np.any(u_sub.values <= 0) or np.any(v_super.values <= 0):
        failed.append("u_sub and v_super must be positive")
    for x in (omega2.k_lo, omega2.k_hi):
        if lo <= x <= hi and u_sub.at(x) > v_super.at(x) + tol:
            failed.append(f"u_sub > v_super at {x:g}")
    if failed:
        raise PreconditionError("comparison hypotheses failed: " + ", ".join(failed))
    outside = _outside(grid, omega2)
    violation = float(max(0.0, np.max((u_sub.values - v_super.values)[outside]))) \
        if outside.any() else 0.0
    return ComparisonResult(violation <= tol, violation)
