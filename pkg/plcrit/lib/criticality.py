"""
criticality.py - Null sequences, criticality verdicts, ground states and Q-capacity.

Purpose:
    Decide whether Q_V is critical or subcritical on an exhausted domain and produce the
    matching artifact: the ground state in the critical case, a positivity weight in the
    subcritical case.

Workflow:
    1. For each level Omega_N of the exhaustion, compute the threshold t_N, the largest t
       with Q_{V - tW} >= 0 on Omega_N, together with the principal function v_N of
       Q'_V(v) = t_N W |v|^(p-2) v normalized by v_N(x0) = 1.
    2. Thresholds decrease along the exhaustion. A plateau, or a steady Aitken limit, above
       10*eps_crit means subcritical; decay below eps_crit (or a steady logarithmic decay)
       means critical.
    3. Critical: the last v_N is the ground state. Subcritical: t*W/2 is a positivity
       weight, certified by principal eigenvalues on every level.

Q-capacity is computed as an obstacle problem: equality u = 1 on K first, then a
primal-dual active-set loop if some multiplier on K is negative.

Dependencies:
    numpy, tqdm (optional per-level progress), pydantic (settings).
"""

import enum
import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field as ModelField
from tqdm import tqdm

from plcrit.lib.domain import (
    ExhaustionSettings,
    Field,
    default_exhaustion,
    default_probe,
    level_grids,
    sample_potential,
)
from plcrit.lib.energy import (
    energy_Q,
    gradient_gap_residual,
    random_bumps,
    sobolev_gap_residual,
)
from plcrit.lib.errors import (
    ArgumentError,
    ConvergenceError,
    PreconditionError,
    StateError,
)
from plcrit.lib.solvers import (
    DEFAULT_SETTINGS,
    DiscreteOperator,
    as_grid,
    SignClass,
    classify_sign,
    generalized_inverse_iteration,
    principal_eigenpair,
    solve_operator,
)

logger = logging.getLogger(__name__)


class Verdict(str, enum.Enum):
    CRITICAL = "critical"
    SUBCRITICAL = "subcritical"
    UNDETERMINED = "undetermined"


class VerdictSettings(BaseModel):
    model_config = ConfigDict(frozen=True)

    eps_crit: float = ModelField(default=1e-4, gt=0)
    plateau_rtol: float = ModelField(default=0.01, gt=0)
    loglog_slope: float = -0.5
    max_ratio: float = ModelField(default=0.9, gt=0, lt=1)
    limit_fraction: float = ModelField(default=0.75, gt=0, le=1)
    extrapolation_rtol: float = ModelField(default=0.1, gt=0)
    method: str = "rayleigh"
    threshold_atol: float = ModelField(default=1e-6, gt=0)
    with_weight: bool = True


@dataclass(frozen=True)
class NullSequenceTerm:
    level: int
    interval: tuple
    t: float
    v: Field
    energy: float
    identity_rhs: float
    window_mass: float
    window_integral: float
    converged: bool

    @property
    def identity_error(self):
        scale = max(abs(self.energy), abs(self.identity_rhs), 1e-300)
        return abs(self.energy - self.identity_rhs) / scale


@dataclass(frozen=True)
class PositivityWeight:
    weight: object
    margin: float
    margins: tuple
    certified: bool
    monotone: bool


@dataclass(frozen=True)
class CriticalityReport:
    thresholds: tuple
    verdict: Verdict
    t_star_estimate: float
    energies: tuple
    terms: tuple
    monotone: bool
    probe: object
    ground_state: Optional[Field] = None
    positivity_weight: Optional[PositivityWeight] = None
    reasons: tuple = field(default=())
    converged: bool = True


@dataclass(frozen=True)
class CapacityReport:
    value: float
    minimizer: Field
    active_set: tuple
    multipliers: np.ndarray
    kkt: bool
    iterations: int


def _probe_values(W, grid):
    values = sample_potential(W, grid)
    if np.any(values < 0):
        raise ArgumentError("the probe W must be nonnegative")
    if not np.any(values[grid.interior_mask] > 0):
        raise ArgumentError("the probe W vanishes on the level")
    if np.any(values[grid.dirichlet_mask] != 0):
        raise ArgumentError("the probe W must vanish at the level boundary")
    return values


def _require_nonnegative(op, settings):
    """Q_V >= 0 on the level; automatic when V >= 0 at the free nodes."""
    free = op.grid.interior_mask
    if np.all(op.V[free] >= 0):
        return
    lam = principal_eigenpair(op.problem, op.grid, settings, potential=op.V).lam
    if lam < -1e-12 * max(1.0, float(np.max(np.abs(op.V)))):
        raise PreconditionError(f"Q_V is not nonnegative on the level: lambda_1 = {lam:.6g}")


def _linear_threshold(op, weight, free):
    """p = 2: smallest t with (K + wV) v = t diag(wW) v on the free nodes."""
    a = op.jacobian(np.zeros(op.grid.size))[free][:, free]
    t, v, iterations, _ = generalized_inverse_iteration(a, op.w[free] * weight[free])
    out = np.zeros(op.grid.size)
    out[free] = v
    return t, out, iterations


def threshold_pair(op, weight, settings=None):
    """
    Smallest t and principal v with Q'_V(v) = t W |v|^(p-2) v and zero Dirichlet data.

    t is returned as the generalized Rayleigh quotient p Q_V(v) / int W|v|^p of the final
    iterate, so the energy identity holds for the returned pair to rounding.
    """
    settings = settings or DEFAULT_SETTINGS
    grid = op.grid
    free = grid.interior_mask
    p = op.p
    lin = DiscreteOperator(op.problem.model_copy(update={"p": 2.0}), grid, op.V)
    t, v, iterations = _linear_threshold(lin, weight, free)
    converged = True
    if p != 2:
        v = v / op.mass(v, weight) ** (1.0 / p)
        t = op.energy(v) / op.mass(v, weight)
        converged = False
        for iterations in range(1, settings.eigen_max_iter + 1):
            rhs = weight * v ** (p - 1.0)
            warm = v / t ** (1.0 / (p - 1.0)) if t > 0 else None
            report = solve_operator(op, grid.dirichlet_mask, 0.0, rhs, settings, warm)
            if not report.converged:
                logger.warning("threshold iteration %d: inner solve did not converge", iterations)
                break
            v = np.abs(report.solution.values)
            v = v / op.mass(v, weight) ** (1.0 / p)
            t_new = op.energy(v) / op.mass(v, weight)
            done = abs(t_new - t) <= settings.eigen_rtol * abs(t_new)
            t = t_new
            if done:
                converged = True
                break
    return t, v, iterations, converged


def threshold_tN(problem, level, W, method="rayleigh", settings=None, atol=1e-6,
                 resolution=None):
    """
    Largest t such that Q_{V - tW} >= 0 on the level.

    method="bisection" brackets lambda_1(V - tW) = 0 to absolute tolerance atol;
    method="rayleigh" solves the generalized eigenproblem directly.
    """
    settings = settings or DEFAULT_SETTINGS
    grid = as_grid(problem, level, resolution)
    op = DiscreteOperator(problem, grid)
    weight = _probe_values(W, grid)
    _require_nonnegative(op, settings)
    if method == "rayleigh":
        return threshold_pair(op, weight, settings)[0]
    if method != "bisection":
        raise ArgumentError(f"unknown threshold method {method!r}")

    def lam(t):
        return principal_eigenpair(problem, grid, settings, potential=op.V - t * weight).lam

    lo, hi = 0.0, 1.0
    for _ in range(64):
        if lam(hi) < 0:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise ConvergenceError("could not bracket the threshold")
    while hi - lo > atol:
        mid = 0.5 * (lo + hi)
        if lam(mid) >= 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _check_probe_support(W, schedule):
    support = W.support()
    a, b = schedule.omega1
    if support is None or support[0] < a or support[1] > b:
        raise ArgumentError(f"the probe must be compactly supported in the first level ({a}, {b})")


def _breakpoints(W):
    support = W.support()
    return () if support is None else tuple(support)


def null_sequence(problem, schedule=None, W=None, settings=None, grid_settings=None):
    """
    Per-level (t_N, v_N, Q_V(v_N)) with v_N(x0) = 1.

    A level whose iteration does not converge ends the sequence; the terms computed so
    far are returned.
    """
    settings = settings or DEFAULT_SETTINGS
    grid_settings = grid_settings or ExhaustionSettings()
    schedule = schedule or default_exhaustion(problem)
    schedule.validate_for(problem)
    W = W or default_probe(schedule)
    _check_probe_support(W, schedule)
    _, grids = level_grids(problem, schedule, grid_settings, _breakpoints(W))
    a1, b1 = schedule.omega1
    p = problem.p

    terms = []
    levels = enumerate(zip(schedule.levels, grids), start=1)
    for n, (interval, grid) in tqdm(levels, total=schedule.count, disable=not grid_settings.progress,
                                    desc="levels"):
        op = DiscreteOperator(problem, grid)
        weight = _probe_values(W, grid)
        _require_nonnegative(op, settings)
        t, v, iterations, converged = threshold_pair(op, weight, settings)
        if not converged:
            logger.warning("level %d: threshold iteration did not converge, truncating", n)
            break
        v = v / np.interp(schedule.x0, grid.nodes, v)
        energy = op.energy(v) / p
        rhs = t / p * op.mass(v, weight)
        inside = grid.mask_between(a1, b1)
        window_mass = float(np.sum(grid.node_mass[inside] * np.abs(v[inside]) ** p))
        window_integral = float(np.sum(grid.node_mass[inside] * v[inside]))
        term = NullSequenceTerm(n, tuple(interval), t, Field(grid, v), energy, rhs,
                                window_mass, window_integral, converged)
        logger.info("level %d (%.4g, %.4g): t=%.6e Q(v)=%.6e identity error %.1e (%d its)",
                    n, interval[0], interval[1], t, energy, term.identity_error, iterations)
        terms.append(term)
    return terms


def _loglog_slope(ts, lengths, last=4):
    """Slope of log t against log log of the relative level size over the last levels."""
    k = min(last, len(ts))
    if k < 2 or min(ts[-k:]) <= 0:
        return 0.0
    x = np.log(np.log(np.asarray(lengths[-k:]) / lengths[0]) + 1.0)
    y = np.log(np.asarray(ts[-k:]))
    if np.ptp(x) == 0:
        return 0.0
    return float(np.polyfit(x, y, 1)[0])


def extrapolated_limit(ts, max_ratio=0.9):
    """
    Aitken limit of the last three thresholds.

    None unless both decrements are negative and shrink by a ratio below max_ratio, the
    signature of t_N = t* + c q^N. A decay like c / N^k gives about t_N / (k + 1) instead.
    """
    if len(ts) < 3:
        return None
    t0, t1, t2 = ts[-3:]
    d1, d2 = t1 - t0, t2 - t1
    if not (d1 < 0 and d2 <= 0) or d2 / d1 >= max_ratio:
        return None
    return t2 - d2 * d2 / (d2 - d1)


def classify_thresholds(ts, lengths, verdict_settings=None):
    """
    Verdict and the reasons behind it from a threshold sequence.

    Rules, in order: a plateau above 10*eps_crit is subcritical; t_N or its extrapolated
    limit below eps_crit is critical; an extrapolated limit that is steady, above
    10*eps_crit and at least limit_fraction of t_N is subcritical; a decreasing sequence
    with a steep log-log slope and no such limit is critical.
    """
    vs = verdict_settings or VerdictSettings()
    if len(ts) < 3:
        return Verdict.UNDETERMINED, ("fewer than three levels",)
    tail = ts[-3:]
    decreasing = all(b <= a + 1e-9 for a, b in zip(tail, tail[1:]))
    change = max(abs(b - a) / max(abs(b), 1e-300) for a, b in zip(tail, tail[1:]))
    last = ts[-1]
    if change < vs.plateau_rtol and last > 10 * vs.eps_crit:
        return Verdict.SUBCRITICAL, (f"plateau: relative change {change:.2e} at t={last:.4e}",)
    if decreasing and last <= vs.eps_crit:
        return Verdict.CRITICAL, (f"t_N={last:.3e} below eps_crit={vs.eps_crit:g}",)
    limit = extrapolated_limit(ts, vs.max_ratio) if decreasing else None
    if limit is not None and limit <= vs.eps_crit:
        return Verdict.CRITICAL, (f"extrapolated limit {limit:.3e} below eps_crit={vs.eps_crit:g}",)
    bounded = limit is not None and limit >= vs.limit_fraction * last
    if bounded and limit > 10 * vs.eps_crit:
        previous = extrapolated_limit(ts[:-1], vs.max_ratio)
        if previous is not None and abs(previous - limit) <= vs.extrapolation_rtol * limit:
            return Verdict.SUBCRITICAL, (
                f"extrapolated limit {limit:.4e} ({limit / last:.2f} of t_N), "
                f"previous estimate {previous:.4e}",)
    slope = _loglog_slope(ts, lengths)
    if decreasing and slope <= vs.loglog_slope and not bounded:
        return Verdict.CRITICAL, (f"logarithmic decay: slope {slope:.3f} in log log level size",)
    detail = "none" if limit is None else f"{limit:.3e}"
    return Verdict.UNDETERMINED, (
        f"t_N={last:.3e}, change {change:.2e}, slope {slope:.3f}, extrapolated limit {detail}",)


def _t_star(verdict, ts, vs):
    if verdict == Verdict.CRITICAL:
        return 0.0
    limit = extrapolated_limit(ts, vs.max_ratio)
    return limit if limit is not None and 0 < limit <= ts[-1] else ts[-1]


def criticality_verdict(problem, schedule=None, W=None, settings=None, grid_settings=None,
                        verdict_settings=None):
    """
    Thresholds over the exhaustion and the resulting verdict.

    The critical case carries the last v_N as ground state; the subcritical case carries a
    certified positivity weight unless verdict_settings.with_weight is False.
    """
    vs = verdict_settings or VerdictSettings()
    schedule = schedule or default_exhaustion(problem)
    W = W or default_probe(schedule)
    terms = null_sequence(problem, schedule, W, settings, grid_settings)
    if not terms:
        raise ConvergenceError("no level produced a threshold")
    ts = [term.t for term in terms]
    lengths = [b - a for a, b in (term.interval for term in terms)]
    monotone = all(b <= a + 1e-9 for a, b in zip(ts, ts[1:]))
    if not monotone:
        logger.warning("thresholds are not monotone along the exhaustion")
    verdict, reasons = classify_thresholds(ts, lengths, vs)
    logger.info("verdict %s (%s)", verdict.value, "; ".join(reasons))

    report = CriticalityReport(
        thresholds=tuple((term.level, term.t) for term in terms),
        verdict=verdict,
        t_star_estimate=_t_star(verdict, ts, vs),
        energies=tuple(term.energy for term in terms),
        terms=tuple(terms),
        monotone=monotone,
        probe=W,
        ground_state=terms[-1].v if verdict == Verdict.CRITICAL else None,
        reasons=reasons,
        converged=len(terms) == schedule.count,
    )
    if verdict == Verdict.SUBCRITICAL and vs.with_weight:
        weight = positivity_weight(problem, schedule.truncated(len(terms)), W, report,
                                   settings, grid_settings)
        report = replace(report, positivity_weight=weight)
    return report


def ground_state(problem, schedule=None, W=None, settings=None, grid_settings=None,
                 refine=True, report=None):
    """
    Ground state of a critical Q_V, normalized to 1 at x0.

    With refine set, the last level is recomputed on a grid with twice the resolution and
    the deviation on the first level is logged.
    """
    grid_settings = grid_settings or ExhaustionSettings()
    schedule = schedule or default_exhaustion(problem)
    W = W or default_probe(schedule)
    report = report or criticality_verdict(problem, schedule, W, settings, grid_settings,
                                           VerdictSettings(with_weight=False))
    if report.verdict != Verdict.CRITICAL:
        raise StateError(f"no ground state: verdict is {report.verdict.value}")
    state = report.ground_state
    if refine:
        finer = grid_settings.model_copy(update={"resolution": 2 * grid_settings.resolution - 1})
        last = schedule.truncated(len(report.terms))
        fine = null_sequence(problem, last, W, settings, finer)
        if fine:
            a, b = schedule.omega1
            nodes, coarse = state.window(a, b)
            deviation = float(np.max(np.abs(fine[-1].v.at(nodes) - coarse)))
            logger.info("ground state refinement deviation on (%g, %g): %.3e", a, b, deviation)
    sign = classify_sign(state, problem, tol=1e-4, window=schedule.omega1)
    if sign != SignClass.SOLUTION:
        logger.warning("ground state classified as %s on the first level", sign.value)
    return state


def positivity_weight(problem, schedule=None, W=None, report=None, settings=None,
                      grid_settings=None):
    """
    t*W/2 with principal eigenvalues of Q_{V - t*W/2} on every level.

    certified is set when the eigenvalue on the largest level is >= -1e-8.
    """
    settings = settings or DEFAULT_SETTINGS
    grid_settings = grid_settings or ExhaustionSettings()
    schedule = schedule or default_exhaustion(problem)
    W = W or default_probe(schedule)
    if report is None:
        report = criticality_verdict(problem, schedule, W, settings, grid_settings,
                                     VerdictSettings(with_weight=False))
    if report.verdict != Verdict.SUBCRITICAL:
        raise StateError(f"no positivity weight: verdict is {report.verdict.value}")
    t_star = report.t_star_estimate
    if not t_star > 0:
        raise StateError("the threshold estimate is not positive")
    weight = W.scaled(0.5 * t_star)
    _, grids = level_grids(problem, schedule, grid_settings, _breakpoints(W))
    margins = []
    for grid in grids:
        values = sample_potential(problem.potential, grid) - sample_potential(weight, grid)
        margins.append(principal_eigenpair(problem, grid, settings, potential=values).lam)
    monotone = all(b <= a + 1e-9 for a, b in zip(margins, margins[1:]))
    certified = margins[-1] >= -1e-8
    logger.info("positivity weight t*/2=%.6e: margin %.3e (certified=%s)",
                0.5 * t_star, min(margins), certified)
    return PositivityWeight(weight, float(min(margins)), tuple(margins), certified, monotone)


GAP_KINDS = ("weight", "gradient", "sobolev")


def _weight_gap_residual(u, problem, weight):
    values = sample_potential(weight, u.grid)
    mass = float(np.sum(u.grid.node_mass * values * np.abs(u.values) ** problem.p))
    return problem.p * energy_Q(u, problem).total - mass


_GAP_RESIDUALS = {
    "weight": _weight_gap_residual,
    "gradient": gradient_gap_residual,
    "sobolev": sobolev_gap_residual,
}


def gap_inequality_check(problem, grid, weight, samples=500, rng=None, kind="weight"):
    """
    Minimum residual of a weighted gap inequality over random compactly supported u >= 0.

    kind="weight":   p*Q_V(u) - int W|u|^p
    kind="gradient": p*Q_V(u) - int W(|u'|^p + |u|^p)
    kind="sobolev":  p*Q_V(u) - (int W|u|^p*)^(p/p*)
    """
    if kind not in _GAP_RESIDUALS:
        raise ArgumentError(f"unknown gap inequality {kind!r}, expected one of {GAP_KINDS}")
    residual = _GAP_RESIDUALS[kind]
    rng = rng if rng is not None else np.random.default_rng(0)
    worst = min(residual(u, problem, weight) for u in random_bumps(grid, samples, rng))
    logger.info("%s gap inequality: minimum residual %.3e over %d samples", kind, worst, samples)
    return worst


def _kkt_solve(op, fixed_dirichlet, k_mask, settings, max_rounds=50):
    """Minimize Q with u = 0 on the boundary and u >= 1 on K by a primal-dual active set."""
    grid = op.grid
    active = k_mask.copy()
    zero = np.zeros(grid.size)
    iterations = 0
    for rounds in range(1, max_rounds + 1):
        fixed = fixed_dirichlet | active
        values = np.where(active, 1.0, 0.0)
        report = solve_operator(op, fixed, values, None, settings)
        iterations += report.iterations
        u = report.solution.values
        r = op.residual(u, zero)
        tol = 1e-8 * max(float(np.max(op.scale(u, zero))), 1e-300)
        release = active & (r < -tol)
        capture = k_mask & ~active & (u < 1.0 - 1e-12)
        if not release.any() and not capture.any():
            return report, active, r, True, iterations
        logger.debug("active set round %d: release %d, capture %d", rounds,
                     int(release.sum()), int(capture.sum()))
        active = (active & ~release) | capture
    return report, active, r, False, iterations


def q_capacity(problem, K, level, settings=None, resolution=None):
    """
    Q-capacity of K relative to the level: min Q(u) over u = 0 on the level boundary,
    u >= 1 on the nodes of K.
    """
    settings = settings or DEFAULT_SETTINGS
    grid = as_grid(problem, level, resolution)
    K.check_inside(problem, grid.interval)
    k_mask = K.node_mask(grid)
    if not k_mask.any():
        raise ArgumentError("K contains no grid node")
    op = DiscreteOperator(problem, grid)
    _require_nonnegative(op, settings)
    report, active, r, kkt, iterations = _kkt_solve(op, grid.dirichlet_mask, k_mask, settings)
    if not kkt:
        logger.warning("capacity active-set loop did not settle")
    u = report.solution
    value = op.energy(u.values) / problem.p
    return CapacityReport(
        value=value,
        minimizer=u,
        active_set=tuple(int(i) for i in np.flatnonzero(active)),
        multipliers=np.where(k_mask, r, 0.0),
        kkt=kkt,
        iterations=iterations,
    )


def capacity_sequence(problem, K, schedule, settings=None, grid_settings=None):
    """Cap_Q(K, Omega_N) along the exhaustion (levels that do not contain K are skipped)."""
    grid_settings = grid_settings or ExhaustionSettings()
    _, grids = level_grids(problem, schedule, grid_settings, (K.k_lo, K.k_hi))
    out = []
    for n, grid in enumerate(grids, start=1):
        try:
            K.check_inside(problem, grid.interval)
        except ArgumentError:
            continue
        cap = q_capacity(problem, K, grid, settings)
        logger.info("level %d: capacity %.8e", n, cap.value)
        out.append((n, cap.value))
    return out
