import math

import numpy as np
import pytest
import scipy.sparse as sp

from plcrit.lib.domain import Field, PotentialSpec, RadialProblem, build_grid
from plcrit.lib.errors import ArgumentError, PreconditionError
from plcrit.lib.oracles import example_supersolution, shooting_eigenvalue
from plcrit.lib.solvers import (
    DiscreteOperator,
    SignClass,
    SolverSettings,
    classify_sign,
    generalized_inverse_iteration,
    lambda1,
    principal_eigenpair,
    sign_margins,
    solve_dirichlet,
    wcp_check,
    weak_residual,
)

UNIT = RadialProblem(p=2.0, d=1, r_lo=0.0, r_hi=1.0)


def test_settings_defaults():
    settings = SolverSettings()
    assert settings.tolerance(2.0) == 1e-10
    assert settings.tolerance(3.0) == 1e-8
    assert SolverSettings(tol=1e-6).tolerance(2.0) == 1e-6
    assert settings.eps_schedule() == pytest.approx([1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8])
    assert settings.eps_schedule(warm=True)[0] == pytest.approx(1e-4)


def test_linear_function_is_harmonic():
    grid = build_grid(UNIT, (0.0, 1.0), 101)
    u = Field.from_function(grid, lambda r: 2.0 + 3.0 * r)
    assert np.max(np.abs(weak_residual(u, None, UNIT).values)) <= 1e-12


def test_operator_rejects_mismatched_potential():
    grid = build_grid(UNIT, (0.0, 1.0), 11)
    with pytest.raises(ArgumentError):
        DiscreteOperator(UNIT, grid, potential=np.zeros(3))


def test_principal_eigenvalue_p2():
    result = principal_eigenpair(UNIT, (0.0, 1.0), resolution=2000)
    assert result.method == "direct"
    assert result.lam == pytest.approx(math.pi ** 2, rel=1e-3)
    assert np.all(result.eigenfunction.values[1:-1] > 0)
    op = DiscreteOperator(UNIT, result.eigenfunction.grid)
    assert op.rayleigh(result.eigenfunction.values) == pytest.approx(result.lam, rel=1e-10)


def test_eigenvalue_shift_by_constant():
    shifted = UNIT.with_potential(PotentialSpec.constant(3.0))
    base = principal_eigenpair(UNIT, (0.0, 1.0), resolution=401)
    moved = principal_eigenpair(shifted, (0.0, 1.0), resolution=401)
    assert moved.lam == pytest.approx(base.lam + 3.0, rel=1e-8)
    assert moved.eigenfunction.values == pytest.approx(base.eigenfunction.values, rel=1e-6, abs=1e-9)


def test_power_method_agrees_with_direct():
    direct = principal_eigenpair(UNIT, (0.0, 1.0), resolution=401)
    power = principal_eigenpair(UNIT, (0.0, 1.0), method="power", resolution=401)
    assert power.converged
    assert power.lam == pytest.approx(direct.lam, rel=1e-7)


def test_principal_eigenvalue_p3_matches_shooting():
    problem = RadialProblem(p=3.0, d=1, r_lo=0.0, r_hi=1.0)
    result = principal_eigenpair(problem, (0.0, 1.0), resolution=401)
    assert result.method == "power" and result.converged
    assert result.lam == pytest.approx(shooting_eigenvalue(3.0, 1, 0.0, 1.0), rel=5e-3)
    history = result.history
    assert all(b <= a * (1 + 1e-8) for a, b in zip(history, history[1:]))


def test_radial_eigenvalue_matches_shooting():
    problem = RadialProblem(p=2.0, d=3)
    result = principal_eigenpair(problem, (0.0, 1.0), resolution=801)
    assert result.lam == pytest.approx(shooting_eigenvalue(2.0, 3, 0.0, 1.0), rel=1e-3)


def test_direct_eigensolver_needs_p2():
    problem = RadialProblem(p=3.0, d=1, r_lo=0.0, r_hi=1.0)
    with pytest.raises(ArgumentError):
        principal_eigenpair(problem, (0.0, 1.0), method="direct", resolution=11)
    with pytest.raises(ArgumentError):
        principal_eigenpair(UNIT, (0.0, 1.0), method="lanczos", resolution=11)


def test_generalized_inverse_iteration_diagonal():
    a = sp.diags([2.0, 3.0, 8.0]).tocsr()
    t, v, _, converged = generalized_inverse_iteration(a, np.array([1.0, 1.0, 1.0]))
    assert converged
    assert t == pytest.approx(2.0, rel=1e-10)
    assert v == pytest.approx([1.0, 0.0, 0.0], abs=1e-5)


def test_solve_homogeneity_p2():
    problem = UNIT.with_potential(PotentialSpec.constant(1.0))
    u1 = solve_dirichlet(problem, (0.0, 1.0), (1.0, 2.0), resolution=201).solution
    u2 = solve_dirichlet(problem, (0.0, 1.0), (3.0, 6.0), resolution=201).solution
    assert u2.values == pytest.approx(3.0 * u1.values, rel=1e-9)


def test_solve_homogeneity_p3():
    problem = RadialProblem(p=3.0, d=1, r_lo=0.0, r_hi=1.0, potential=PotentialSpec.constant(1.0))
    r1 = solve_dirichlet(problem, (0.0, 1.0), (1.0, 2.0), resolution=201)
    r2 = solve_dirichlet(problem, (0.0, 1.0), (3.0, 6.0), resolution=201)
    assert r1.converged and r2.converged
    assert r2.solution.values == pytest.approx(3.0 * r1.solution.values, rel=1e-6)


def test_solve_with_load_p_less_than_two():
    problem = RadialProblem(p=1.5, d=1, r_lo=0.0, r_hi=1.0)
    report = solve_dirichlet(problem, (0.0, 1.0), (0.0, 0.0), np.ones(201), resolution=201)
    assert report.converged
    assert report.regularization_eps_final == pytest.approx(1e-8)
    u = report.solution
    assert np.all(u.values[1:-1] > 0)
    assert u.values == pytest.approx(u.values[::-1], rel=1e-5, abs=1e-9)


@pytest.mark.parametrize("p", [1.5, 3.0])
def test_halving_final_regularization_keeps_solution(p):
    problem = RadialProblem(p=p, d=3)
    coarse = SolverSettings(eps_start=0.1, eps_end=1e-6)
    halved = SolverSettings(eps_start=0.05, eps_end=5e-7)
    first = solve_dirichlet(problem, (1.0, 2.0), (1.0, 0.0), settings=coarse, resolution=401)
    second = solve_dirichlet(problem, (1.0, 2.0), (1.0, 0.0), settings=halved, resolution=401)
    assert first.converged and second.converged
    assert first.regularization_eps_final == pytest.approx(1e-6)
    assert second.regularization_eps_final == pytest.approx(5e-7)
    gap = np.max(np.abs(first.solution.values - second.solution.values))
    assert gap <= 1e-6 * np.max(np.abs(first.solution.values))


def test_solve_rejects_bad_data():
    with pytest.raises(ArgumentError):
        solve_dirichlet(UNIT, (0.0, 1.0), (-1.0, 0.0), resolution=11)
    with pytest.raises(ArgumentError):
        solve_dirichlet(UNIT, (0.0, 1.0), (0.0, 0.0), -np.ones(11), resolution=11)


def test_checked_solve_needs_positive_eigenvalue():
    problem = UNIT.with_potential(PotentialSpec.constant(-20.0))
    with pytest.raises(PreconditionError):
        solve_dirichlet(problem, (0.0, 1.0), (1.0, 0.0), checked=True, resolution=101)
    assert lambda1(problem, build_grid(problem, (0.0, 1.0), 101)) < 0


def test_classify_sign_examples():
    ball = RadialProblem(p=2.0, d=3)
    grid = build_grid(ball, (0.0, 10.0), 1001)
    assert classify_sign(Field.constant(grid, 1.0), ball) == SignClass.SOLUTION
    bump = Field.from_function(grid, lambda r: example_supersolution(2.0, 3.0, r))
    assert classify_sign(bump, ball) == SignClass.SUPERSOLUTION
    assert classify_sign(bump.with_values(-bump.values), ball) == SignClass.SUBSOLUTION


def test_classify_sign_p3_supersolution_on_window():
    problem = RadialProblem(p=3.0, d=4)
    grid = build_grid(problem, (0.0, 10.0), 2001)
    u = Field.from_function(grid, lambda r: example_supersolution(3.0, 4.0, r))
    assert classify_sign(u, problem, window=(0.5, 9.5)) == SignClass.SUPERSOLUTION


def test_discrete_newtonian_profile_is_nearly_a_solution():
    ball = RadialProblem(p=2.0, d=3)
    grid = build_grid(ball, (1.0, 50.0), 981)
    u = Field.from_function(grid, lambda r: 1.0 / r)
    low, high = sign_margins(u, ball)
    assert -1e-4 < low <= high < 1e-4
    assert classify_sign(u, ball, tol=1e-4) == SignClass.SOLUTION


def test_weak_comparison_holds():
    problem = UNIT.with_potential(PotentialSpec.constant(1.0))
    grid = build_grid(problem, (0.0, 1.0), 201)
    load = np.sin(np.pi * grid.nodes) ** 2
    u1 = solve_dirichlet(problem, grid, (0.5, 0.2), load).solution
    u2 = solve_dirichlet(problem, grid, (1.0, 0.2), 2.0 * load).solution
    result = wcp_check(u1, u2, problem)
    assert result.holds
    assert result.max_violation == 0.0


def test_weak_comparison_reports_failed_hypothesis():
    problem = UNIT.with_potential(PotentialSpec.constant(1.0))
    grid = build_grid(problem, (0.0, 1.0), 101)
    u1 = solve_dirichlet(problem, grid, (1.0, 1.0)).solution
    u2 = solve_dirichlet(problem, grid, (0.5, 0.5)).solution
    with pytest.raises(PreconditionError, match="on the boundary"):
        wcp_check(u1, u2, problem)
