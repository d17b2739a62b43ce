"""
run.py - Batch front end for plcrit.

This script reads one YAML config, runs its single command and writes a JSON report plus
CSV profiles into the output directory. Reports embed the config hash, the effective
solver settings and the seed, so identical config + seed gives identical files.

Commands:
    eig        principal eigenpair on a level                    eig.json, eigenfunction.csv
    solve      Dirichlet solve on a level                         solve.json, solution.csv
    critical   thresholds t_N, verdict, ground state or weight   critical.json, thresholds.csv,
                                                                  ground_state.csv
    capacity   Q-capacity of K on a level or along the levels     capacity.json, capacity.csv
    mingrowth  u^K exhaustion limit                               mingrowth.json, levels.csv, uK.csv
    singular   point singularity solution, exponent, removability singular.json, singular.csv
    certify    minimal-growth certificate mu_N                    certify.json, mu.csv
    validate   randomized property suites                         validate.json

CSV profiles have the columns node,value; tables are documented in README.md.

Exit codes:
    0 success, 1 validation failure (config, arguments, failing suite), 2 non-convergence.

Usage:
    python -m plcrit.main.run --config <path> [--seed N] [--out DIR] [--tol X] [--levels N]
"""

import argparse
import logging
import math
import os
import sys

from plcrit.lib.criticality import capacity_sequence, criticality_verdict, q_capacity
from plcrit.lib.domain import Field, build_grid, sample_potential
from plcrit.lib.errors import ConfigError, ConvergenceError, PlcritError
from plcrit.lib.mingrowth import (
    minimal_growth_certificate,
    point_singularity_run,
    removability_test,
    singularity_exponent,
    uK_limit,
)
from plcrit.lib.solvers import principal_eigenpair, solve_dirichlet
from plcrit.lib.suites import list_suites, run_suites
from plcrit.lib.utils import (
    apply_overrides,
    config_hash,
    load_config,
    load_env,
    setup_logging,
    write_json,
    write_profile_csv,
    write_table_csv,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NOT_CONVERGED = 2


class RunContext:
    """Validated config plus the objects every command needs."""

    def __init__(self, config):
        self.config = config
        self.command = config.command
        self.out = config.output
        self.problem = config.problem.build()
        self.settings = config.solver
        self.grid_settings = config.exhaustion.settings(config.progress)

    def schedule(self):
        return self.config.exhaustion.schedule(self.problem)

    def path(self, name):
        return os.path.join(self.out, name)


def run_eig(ctx):
    cmd = ctx.command
    result = principal_eigenpair(ctx.problem, cmd.level, ctx.settings, cmd.method,
                                 resolution=cmd.resolution)
    write_profile_csv(ctx.path("eigenfunction.csv"), result.eigenfunction)
    report = {
        "lambda": result.lam,
        "iterations": result.iterations,
        "converged": result.converged,
        "method": result.method,
        "shift": result.shift,
    }
    return report, result.converged


def run_solve(ctx):
    cmd = ctx.command
    load = None
    if cmd.load is not None:
        grid = build_grid(ctx.problem, cmd.level, cmd.resolution)
        load = Field(grid, sample_potential(cmd.load, grid))
    report = solve_dirichlet(ctx.problem, cmd.level, cmd.boundary, load, ctx.settings,
                             checked=True, resolution=cmd.resolution)
    write_profile_csv(ctx.path("solution.csv"), report.solution)
    return {
        "iterations": report.iterations,
        "final_residual_norm": report.final_residual_norm,
        "regularization_eps_final": report.regularization_eps_final,
        "converged": report.converged,
    }, report.converged


def run_critical(ctx):
    cmd = ctx.command
    schedule = ctx.schedule()
    report = criticality_verdict(ctx.problem, schedule, cmd.probe, ctx.settings,
                                 ctx.grid_settings, cmd.verdict)
    rows = [(term.level, term.interval[0], term.interval[1], term.t, term.energy,
             term.identity_error, term.window_mass, term.window_integral)
            for term in report.terms]
    write_table_csv(ctx.path("thresholds.csv"),
                    ("level", "a", "b", "t", "energy", "identity_error", "window_mass",
                     "window_integral"), rows)
    out = {
        "verdict": report.verdict.value,
        "thresholds": [list(row) for row in report.thresholds],
        "t_star_estimate": report.t_star_estimate,
        "energies": list(report.energies),
        "monotone": report.monotone,
        "reasons": list(report.reasons),
        "probe": report.probe,
        "converged": report.converged,
    }
    if report.ground_state is not None:
        write_profile_csv(ctx.path("ground_state.csv"), report.ground_state)
    if report.positivity_weight is not None:
        weight = report.positivity_weight
        out["positivity_weight"] = {
            "weight": weight.weight,
            "margin": weight.margin,
            "margins": list(weight.margins),
            "certified": weight.certified,
            "monotone": weight.monotone,
        }
    return out, report.converged


def run_capacity(ctx):
    cmd = ctx.command
    if cmd.level is not None:
        cap = q_capacity(ctx.problem, cmd.K, cmd.level, ctx.settings, cmd.resolution)
        write_profile_csv(ctx.path("capacity.csv"), cap.minimizer)
        return {"value": cap.value, "kkt": cap.kkt, "active_set_size": len(cap.active_set),
                "iterations": cap.iterations}, cap.kkt
    sequence = capacity_sequence(ctx.problem, cmd.K, ctx.schedule(), ctx.settings,
                                 ctx.grid_settings)
    write_table_csv(ctx.path("capacity.csv"), ("level", "capacity"), sequence)
    return {"capacities": [list(row) for row in sequence]}, True


def run_mingrowth(ctx):
    cmd = ctx.command
    run = uK_limit(ctx.problem, cmd.K, ctx.schedule(), settings=ctx.settings,
                   grid_settings=ctx.grid_settings, window=cmd.window)
    rows = []
    for i, (n, (a, b)) in enumerate(run.levels):
        change = run.window_changes[i - 1] if i > 0 else math.nan
        decrease = run.monotonicity[i - 1] if i > 0 else math.nan
        rows.append((n, a, b, change, decrease))
    write_table_csv(ctx.path("levels.csv"), ("level", "a", "b", "window_change", "max_decrease"),
                    rows)
    write_profile_csv(ctx.path("uK.csv"), run.limit)
    return {
        "levels": len(run.levels),
        "window": list(run.window),
        "window_changes": list(run.window_changes),
        "monotone": run.monotone,
        "cauchy": run.cauchy,
        "converged": run.converged,
    }, run.converged


def run_singular(ctx):
    cmd = ctx.command
    run = point_singularity_run(ctx.problem, ctx.schedule(), cmd.x0, cmd.x1, settings=ctx.settings,
                                grid_settings=ctx.grid_settings, hole_law=cmd.hole_law)
    write_profile_csv(ctx.path("singular.csv"), run.limit)
    out = {
        "x0": run.x0,
        "x1": run.x1,
        "radii": list(run.radii),
        "window_changes": list(run.window_changes),
        "converged": run.converged,
    }
    if cmd.fit_window is not None:
        fit = singularity_exponent(run.limit, run.x0, cmd.fit_window, cmd.fit_mode)
        out["exponent"] = {"slope": fit.slope, "residual": fit.residual, "mode": cmd.fit_mode}
    removable = removability_test(ctx.problem, run.limit, run.x0)
    out["removability"] = {"verdict": removable.verdict.value, "flux_jump": removable.flux_jump,
                           "reasons": list(removable.reasons)}
    return out, run.converged


def run_certify(ctx):
    cmd = ctx.command
    certificate = minimal_growth_certificate(ctx.problem, cmd.u.evaluate, cmd.omega2, cmd.B,
                                             ctx.schedule(), ctx.settings, ctx.grid_settings)
    write_table_csv(ctx.path("mu.csv"), ("level", "mu"), certificate.mu)
    return {
        "verdict": certificate.verdict.value,
        "mu": [list(row) for row in certificate.mu],
        "normalization": list(certificate.normalization),
        "converged": certificate.converged,
    }, certificate.converged


def run_validate(ctx):
    results = run_suites(ctx.command.suites, ctx.config.seed, ctx.command.samples)
    converged = all(r.converged for r in results)
    return {
        "suites": {r.name: {"passed": r.passed, "detail": r.detail} for r in results},
        "available": [name for name, _ in list_suites()],
        "passed": all(r.passed for r in results),
        "converged": converged,
    }, converged


HANDLERS = {
    "eig": run_eig,
    "solve": run_solve,
    "critical": run_critical,
    "capacity": run_capacity,
    "mingrowth": run_mingrowth,
    "singular": run_singular,
    "certify": run_certify,
    "validate": run_validate,
}


def run(config):
    """Dispatch the config's command, write its report and return the exit status."""
    ctx = RunContext(config)
    os.makedirs(ctx.out, exist_ok=True)
    name = config.command.name
    logger.info("running %s (config %s)", name, config_hash(config)[:12])
    try:
        result, converged = HANDLERS[name](ctx)
    except ConvergenceError as e:
        logger.error("%s: %s", name, e)
        result, converged = {"error": str(e)}, False
    report = {
        "command": name,
        "config_hash": config_hash(config),
        "seed": config.seed,
        "solver": config.solver,
        "result": result,
    }
    write_json(ctx.path(f"{name}.json"), report)
    if not converged:
        return EXIT_NOT_CONVERGED
    if name == "validate" and not result["passed"]:
        return EXIT_INVALID
    return EXIT_OK


def main(argv=None):
    """
    Entry point: parse flags, load the config, run it.

    Returns:
        int: Exit code (0 success, 1 usage or validation error, 2 non-convergence).
    """
    argv = sys.argv[1:] if argv is None else argv
    parser = argparse.ArgumentParser(prog="plcrit", description="p-Laplacian criticality runs")
    parser.add_argument("--config", help="YAML run configuration")
    parser.add_argument("--seed", type=int, help="seed for randomized suites")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--tol", type=float, help="solver tolerance override")
    parser.add_argument("--levels", type=int, help="number of exhaustion levels")
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_INVALID
    if not args.config:
        print(f"Usage: {parser.prog} --config <path> [--seed N] [--out DIR] [--tol X] [--levels N]")
        return EXIT_INVALID

    env = load_env()
    try:
        config = load_config(args.config)
        config = apply_overrides(config, env, args.out, args.seed, args.tol, args.levels)
    except (ConfigError, OSError) as e:
        print(f"Usage: {parser.prog} --config <path>: {e}")
        return EXIT_INVALID

    os.makedirs(config.output, exist_ok=True)
    level = getattr(logging, (env.get("log_level") or "INFO").upper(), logging.INFO)
    setup_logging(os.path.join(config.output, "plcrit.log"), level=level)
    try:
        status = run(config)
    except PlcritError as e:
        logger.error("%s: %s", type(e).__name__, e)
        print(f"{config.command.name} failed: {e}")
        return EXIT_INVALID
    print(f"{config.command.name}: exit {status}, report in {config.output}")
    return status


if __name__ == "__main__":
    sys.exit(main())
