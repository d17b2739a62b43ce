"""
suites.py - Named randomized property suites run by the validate command.

Each suite draws its samples from a generator seeded by (seed, suite index), checks one
invariant at reduced scale and returns a SuiteResult. Failures are report content, never
exceptions; a solver that does not converge marks the result as not converged.
"""

import logging
from dataclasses import dataclass

import numpy as np

from plcrit.lib.domain import (
    CompactSetSpec,
    ExhaustionSettings,
    Field,
    PotentialSpec,
    RadialProblem,
    build_grid,
    default_exhaustion,
)
from plcrit.lib.criticality import null_sequence
from plcrit.lib.energy import (
    energy_Q,
    picone_density,
    random_bumps,
    simplified_energy_envelope,
    vector_inequality_envelope,
)
from plcrit.lib.errors import ArgumentError, ConvergenceError, PlcritError
from plcrit.lib.mingrowth import (
    CertificateVerdict,
    comparison_check,
    minimal_growth_certificate,
    uK_limit,
)
from plcrit.lib.solvers import lambda1, solve_dirichlet, wcp_check

logger = logging.getLogger(__name__)

PICONE_RESOLUTION = 4001
PICONE_RTOL = 1e-6
REFINEMENT_RTOL = 0.1

_SUITES = {}


@dataclass(frozen=True)
class SuiteResult:
    name: str
    passed: bool
    detail: str
    converged: bool = True


def suite(name, description):
    def register(fn):
        _SUITES[name] = (fn, description)
        return fn
    return register


def list_suites():
    """(name, description) for every registered suite, in registration order."""
    return [(name, description) for name, (_, description) in _SUITES.items()]


def _positive_solution(p, resolution=401):
    problem = RadialProblem(p=p, d=1, r_lo=0.0, r_hi=1.0, potential=PotentialSpec.constant(1.0))
    report = solve_dirichlet(problem, (0.0, 1.0), (1.0, 1.0), resolution=resolution)
    if not report.converged:
        raise ConvergenceError(f"positive solution for p={p:g} did not converge")
    return problem, report.solution


def _split(samples, parts):
    """samples spread over parts as evenly as possible, earlier parts first."""
    return [samples // parts + (1 if i < samples % parts else 0) for i in range(parts)]


@suite("picone-nonnegativity", "Picone density is nonnegative cell by cell")
def _picone_nonnegativity(rng, samples):
    worst = np.inf
    for p in (1.5, 2.0, 3.0):
        problem, v = _positive_solution(p)
        for u in random_bumps(v.grid, samples, rng):
            worst = min(worst, float(picone_density(u, v, problem).cells.min()))
    return worst >= -1e-12, f"min density {worst:.3e}"


@suite("picone-identity", "Q(u) equals the integral of L(u, v) for a positive solution v")
def _picone_identity(rng, samples):
    details = []
    passed = True
    for p in (1.5, 2.0, 3.0):
        problem, v = _positive_solution(p, PICONE_RESOLUTION)
        worst = 0.0
        for u in random_bumps(v.grid, samples, rng):
            q = energy_Q(u, problem).total
            worst = max(worst, abs(q - picone_density(u, v, problem).total) / (1.0 + abs(q)))
        passed = passed and worst <= PICONE_RTOL
        details.append(f"p={p:g}: {worst:.3e}")
    return passed, f"max relative gap at {PICONE_RESOLUTION} nodes: " + "; ".join(details)


@suite("vector-inequality", "vector inequality ratio is finite and positive, 1 at p = 2")
def _vector_inequality(rng, samples):
    details = []
    passed = True
    for p in (1.2, 1.5, 2.0, 3.0, 4.0):
        env = vector_inequality_envelope(p, max(samples, 10_000), rng)
        ok = np.isfinite(env.low) and np.isfinite(env.high) and env.low > 0
        if p == 2.0:
            ok = ok and abs(env.low - 1.0) <= 1e-12 and abs(env.high - 1.0) <= 1e-12
        passed = passed and ok
        details.append(f"p={p:g}: [{env.low:.4g}, {env.high:.4g}]")
    return passed, "; ".join(details)


def _moved(coarse, fine):
    return max(abs(fine.low - coarse.low) / coarse.low, abs(fine.high - coarse.high) / coarse.high)


@suite("simplified-energy", "Q(vw) over its simplified energy stays in a refinement-stable interval")
def _simplified_energy(rng, samples):
    details = []
    passed = True
    for p in (1.5, 3.0):
        bump_seed = int(rng.integers(2 ** 32))
        envelopes = []
        for resolution in (401, 801):
            problem, v = _positive_solution(p, resolution)
            ws = random_bumps(v.grid, samples, np.random.default_rng(bump_seed))
            envelopes.append(simplified_energy_envelope(v, ws, problem))
        coarse, fine = envelopes
        ok = bool(np.isfinite(fine.high) and coarse.low > 0 and fine.low > 0)
        moved = _moved(coarse, fine) if ok else np.inf
        passed = passed and ok and moved < REFINEMENT_RTOL
        details.append(f"p={p:g}: [{coarse.low:.4g}, {coarse.high:.4g}] -> "
                       f"[{fine.low:.4g}, {fine.high:.4g}], moved {moved:.2%}")
    return passed, "; ".join(details)


@suite("wcp-battery", "weak comparison holds for ordered boundary data and loads")
def _wcp_battery(rng, samples):
    resolution = 201
    failures = 0
    worst = 0.0
    trials = 0
    for p, count in zip((2.0, 3.0), _split(samples, 2)):
        problem = RadialProblem(p=p, d=1, r_lo=0.0, r_hi=1.0, potential=PotentialSpec.constant(1.0))
        grid = build_grid(problem, (0.0, 1.0), resolution)
        lam = lambda1(problem, grid)
        for u in random_bumps(grid, count, rng):
            low = rng.uniform(0.0, 1.0, 2)
            high = low + rng.uniform(0.0, 1.0, 2)
            f1 = u.values * rng.uniform(0.0, 1.0)
            f2 = f1 + u.values * rng.uniform(0.0, 1.0)
            first = solve_dirichlet(problem, grid, tuple(low), f1)
            second = solve_dirichlet(problem, grid, tuple(high), f2)
            if not (first.converged and second.converged):
                raise ConvergenceError(f"wcp pair {trials + failures + 1} (p={p:g}) did not converge")
            try:
                result = wcp_check(first.solution, second.solution, problem, lam=lam)
            except PlcritError as e:
                logger.warning("wcp battery: %s", e)
                failures += 1
                continue
            trials += 1
            worst = max(worst, result.max_violation)
            failures += 0 if result.holds else 1
    return failures == 0, f"{trials} pairs, max violation {worst:.3e}, {failures} failures"


@suite("threshold-monotonicity", "t_N is non-increasing and satisfies the energy identity")
def _threshold_monotonicity(rng, samples):
    problem = RadialProblem(p=2.0, d=1, r_lo=-np.inf, r_hi=np.inf)
    schedule = default_exhaustion(problem, levels=6)
    terms = null_sequence(problem, schedule, grid_settings=ExhaustionSettings(resolution=201))
    if len(terms) < schedule.count:
        raise ConvergenceError(f"thresholds stopped at level {len(terms)} of {schedule.count}")
    ts = [term.t for term in terms]
    monotone = all(b <= a + 1e-9 for a, b in zip(ts, ts[1:]))
    identity = max(term.identity_error for term in terms)
    return monotone and identity <= 1e-8, f"t_N {ts[0]:.4e} -> {ts[-1]:.4e}, identity {identity:.1e}"


@suite("uk-monotonicity", "u_N increases along the exhaustion")
def _uk_monotonicity(rng, samples):
    problem = RadialProblem(p=2.0, d=3)
    schedule = default_exhaustion(problem, levels=6)
    run = uK_limit(problem, CompactSetSpec(k_lo=0.0, k_hi=1.0), schedule,
                   grid_settings=ExhaustionSettings(resolution=201), stop_at_cauchy=False)
    if not run.converged:
        raise ConvergenceError("a u_N solve did not converge")
    worst = max(run.monotonicity) if run.monotonicity else 0.0
    return run.monotone, f"max decrease {worst:.3e} over {len(run.solutions)} levels"


def comparison_pairs(rng, count, grid, r_boundary=2.0):
    """Supersolutions beta/r + gamma + eta (1 + r^2)^(-1/2) dominating 1/r at r_boundary (d = 3, p = 2)."""
    r = grid.nodes
    out = []
    while len(out) < count:
        beta, gamma, eta = rng.uniform(0.0, 2.0), rng.uniform(0.0, 1.0), rng.uniform(0.0, 2.0)
        at_boundary = beta / r_boundary + gamma + eta / np.sqrt(1.0 + r_boundary ** 2)
        if at_boundary < 1.0 / r_boundary:
            continue
        out.append(Field(grid, beta / r + gamma + eta / np.sqrt(1.0 + r ** 2)))
    return out


@suite("comparison-battery", "certified minimal-growth 1/r lies below admissible supersolutions")
def _comparison_battery(rng, samples):
    problem = RadialProblem(p=2.0, d=3)
    omega2 = CompactSetSpec(k_lo=0.0, k_hi=2.0)
    schedule = default_exhaustion(problem, levels=12, reference=5.0)
    certificate = minimal_growth_certificate(problem, lambda r: 1.0 / r, omega2, (3.0, 4.0),
                                             schedule, grid_settings=ExhaustionSettings(resolution=201))
    if not certificate.converged:
        raise ConvergenceError("a certificate level did not converge")
    if certificate.verdict != CertificateVerdict.DECAYING:
        return False, f"certificate verdict {certificate.verdict.value}"
    grid = build_grid(problem, (1.0, 50.0), 981)
    u_sub = Field(grid, 1.0 / grid.nodes)
    worst = 0.0
    failures = 0
    for v_super in comparison_pairs(rng, samples, grid):
        result = comparison_check(problem, u_sub, v_super, omega2, certificate)
        worst = max(worst, result.max_violation)
        failures += 0 if result.holds else 1
    return failures == 0, f"{samples} pairs, max violation {worst:.3e}"


def run_suites(names=None, seed=0, samples=200):
    """
    Run the named suites (all by default) and return their results.

    samples is the number of random draws per suite: test functions per exponent for the
    Picone and simplified-energy suites, pairs for the comparison batteries.
    """
    if samples < 1:
        raise ArgumentError(f"samples must be >= 1, got {samples}")
    names = list(names) if names else list(_SUITES)
    unknown = [name for name in names if name not in _SUITES]
    if unknown:
        raise ArgumentError(f"unknown suites: {', '.join(unknown)}")
    results = []
    for index, name in enumerate(_SUITES):
        if name not in names:
            continue
        fn, _ = _SUITES[name]
        rng = np.random.default_rng([seed, index])
        converged = True
        try:
            passed, detail = fn(rng, samples)
        except ConvergenceError as e:
            passed, detail, converged = False, f"ConvergenceError: {e}", False
        except PlcritError as e:
            passed, detail = False, f"{type(e).__name__}: {e}"
        logger.info("suite %s: %s (%s)", name, "pass" if passed else "FAIL", detail)
        results.append(SuiteResult(name, bool(passed), detail, converged))
    return results
