"""
solvers.py - Discrete weak forms, Dirichlet solves and principal eigenpairs.

Purpose:
    Turn the discrete energy of energy.py into equations. For a piecewise-linear u the
    weak residual at node i is

        F_i = sum over cells c next to i of (m_c / h_c) |s_c|^(p-2) s_c * (+-1)
              + w_i V_i |u_i|^(p-2) u_i - w_i f_i

    i.e. the derivative of the discrete Q minus the lumped load. Everything else builds on
    it: Dirichlet solves, inverse power iteration, sign classification and the weak
    comparison harness.

Workflow of a solve:
    1. p = 2 is linear and is solved in one sparse factorization.
    2. Otherwise start from the p = 2 solution with the same data, then run damped Newton
       on the regularized flux (s^2 + (eps*sigma_c)^2)^((p-2)/2) s for eps = 1e-1 ... 1e-8,
       sigma_c being the local slope scale, and finish with Newton on the exact residual.
    3. Armijo backtracking on the squared residual norm; stagnation is reported, not raised.

Tolerances are relative: max |F_i| over free nodes divided by the largest nodal scale
sum |flux| + w|V||u|^(p-1) + w|f|, which keeps them meaningful on exhaustion grids whose
cells span many orders of magnitude.

Dependencies:
    numpy, scipy.sparse (tridiagonal assembly), scipy.sparse.linalg (spsolve, splu),
    scipy.linalg.eigh_tridiagonal (p = 2 eigenpairs), pydantic (settings model).
"""

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict, Field as ModelField
from scipy.linalg import eigh_tridiagonal
from scipy.sparse.linalg import splu, spsolve

from plcrit.lib.domain import Field, Grid, build_grid, sample_potential
from plcrit.lib.errors import ArgumentError, PreconditionError

logger = logging.getLogger(__name__)

DEFAULT_RESOLUTION = 1001
_ARMIJO = 1e-4
_MIN_STEP = 1e-10
_FLOOR = 1e-6


class SolverSettings(BaseModel):
    """Tolerances and schedules shared by all solvers. tol=None picks 1e-10 (p=2) or 1e-8."""

    model_config = ConfigDict(frozen=True)

    tol: Optional[float] = ModelField(default=None, gt=0)
    eps_start: float = ModelField(default=1e-1, gt=0)
    eps_end: float = ModelField(default=1e-8, gt=0)
    eps_factor: float = ModelField(default=10.0, gt=1)
    warm_eps: float = ModelField(default=1e-4, gt=0)
    max_newton: int = ModelField(default=200, ge=1)
    eigen_rtol: float = ModelField(default=1e-8, gt=0)
    eigen_max_iter: int = ModelField(default=500, ge=1)

    def tolerance(self, p):
        if self.tol is not None:
            return self.tol
        return 1e-10 if p == 2 else 1e-8

    def eps_schedule(self, warm=False):
        out = []
        eps = self.eps_start
        while eps >= self.eps_end * (1 - 1e-12):
            if not warm or eps <= self.warm_eps * (1 + 1e-12):
                out.append(eps)
            eps /= self.eps_factor
        return out


DEFAULT_SETTINGS = SolverSettings()


@dataclass(frozen=True)
class SolveReport:
    solution: Field
    iterations: int
    final_residual_norm: float
    regularization_eps_final: float
    converged: bool


@dataclass(frozen=True)
class EigenResult:
    lam: float
    eigenfunction: Field
    iterations: int
    converged: bool
    shift: float = 0.0
    method: str = "direct"
    history: tuple = field(default=())


@dataclass(frozen=True)
class ComparisonResult:
    holds: bool
    max_violation: float


class SignClass(str, enum.Enum):
    SOLUTION = "solution"
    SUPERSOLUTION = "supersolution"
    SUBSOLUTION = "subsolution"
    NEITHER = "neither"


def _phi(x, p, eps=None):
    """|x|^(p-2) x, or its regularization (x^2 + eps^2)^((p-2)/2) x."""
    if p == 2:
        return np.array(x, dtype=float)
    if eps is None:
        return np.sign(x) * np.abs(x) ** (p - 1.0)
    return (x * x + eps * eps) ** (0.5 * (p - 2.0)) * x


def _dphi(x, p, eps=None, floor=None):
    if p == 2:
        return np.ones_like(x)
    if eps is None:
        a = np.abs(x) if floor is None else np.maximum(np.abs(x), floor)
        return (p - 1.0) * a ** (p - 2.0)
    x2, e2 = x * x, eps * eps
    return (x2 + e2) ** (0.5 * (p - 4.0)) * ((p - 1.0) * x2 + e2)


def local_scale(x):
    """Largest |x| over each entry and its neighbours; zeros replaced by a tiny fraction of the max."""
    a = np.abs(np.asarray(x, dtype=float))
    out = a.copy()
    out[1:] = np.maximum(out[1:], a[:-1])
    out[:-1] = np.maximum(out[:-1], a[1:])
    top = float(a.max()) if a.size else 0.0
    fill = _FLOOR * top if top > 0 else 1.0
    return np.where(out > 0, out, fill)


class DiscreteOperator:
    """
    Assembled pieces of the discrete Q on one grid.

    The nodal potential defaults to the problem's potential; callers may pass explicit
    values (e.g. V - tW) and a constant shift.
    """

    def __init__(self, problem, grid, potential=None, shift=0.0):
        self.problem = problem
        self.grid = grid
        self.p = problem.p
        self.h = grid.h
        self.m = grid.cell_measure
        self.w = grid.node_mass
        self.kappa = self.m / self.h
        if potential is None:
            base = sample_potential(problem.potential, grid)
        else:
            base = np.asarray(potential, dtype=float)
            if base.shape != (grid.size,):
                raise ArgumentError("potential values do not match the grid")
        self.shift = float(shift)
        self.V = base + self.shift

    def slopes(self, u):
        return np.diff(u) / self.h

    def fluxes(self, u, eps_cells=None):
        return self.kappa * _phi(self.slopes(u), self.p, eps_cells)

    def residual(self, u, f, eps_cells=None, eps_nodes=None):
        q = self.fluxes(u, eps_cells)
        r = self.w * (self.V * _phi(u, self.p, eps_nodes) - f)
        r[:-1] -= q
        r[1:] += q
        return r

    def scale(self, u, f):
        """Nodal magnitude of the terms entering the residual."""
        q = np.abs(self.fluxes(u))
        s = self.w * (np.abs(self.V) * np.abs(u) ** (self.p - 1.0) + np.abs(f))
        s[:-1] += q
        s[1:] += q
        return s

    def relative_norm(self, r, u, f, free):
        if not free.any():
            return 0.0
        top = float(np.max(self.scale(u, f)))
        return float(np.max(np.abs(r[free]))) / (top if top > 0 else 1.0)

    def jacobian(self, u, eps_cells=None, eps_nodes=None, floors=(None, None)):
        s = self.slopes(u)
        k = self.kappa * _dphi(s, self.p, eps_cells, floors[0]) / self.h
        diag = self.w * self.V * _dphi(u, self.p, eps_nodes, floors[1])
        diag[:-1] += k
        diag[1:] += k
        return sp.diags([-k, diag, -k], [-1, 0, 1], format="csr")

    def energy(self, u):
        """p times the discrete Q (gradient plus potential sums)."""
        p = self.p
        return float(np.sum(self.m * np.abs(self.slopes(u)) ** p)
                     + np.sum(self.w * self.V * np.abs(u) ** p))

    def mass(self, u, weight=None):
        """Lumped integral of weight |u|^p (weight defaults to 1)."""
        a = np.abs(u) ** self.p
        return float(np.sum(self.w * (a if weight is None else weight * a)))

    def rayleigh(self, u):
        return self.energy(u) / self.mass(u)


def _newton_stage(op, u, free, f, eps_cells, eps_nodes, floors, tol, max_iter):
    r = op.residual(u, f, eps_cells, eps_nodes)
    norm = op.relative_norm(r, u, f, free)
    iterations = 0
    while norm > tol and iterations < max_iter:
        jac = op.jacobian(u, eps_cells, eps_nodes, floors)[free][:, free]
        step = spsolve(jac.tocsc(), -r[free])
        if not np.all(np.isfinite(step)):
            logger.debug("singular Newton system after %d iterations", iterations)
            break
        merit = float(np.dot(r[free], r[free]))
        t = 1.0
        while True:
            trial = u.copy()
            trial[free] += t * step
            r_trial = op.residual(trial, f, eps_cells, eps_nodes)
            merit_trial = float(np.dot(r_trial[free], r_trial[free]))
            if merit_trial <= (1.0 - 2.0 * _ARMIJO * t) * merit:
                break
            t *= 0.5
            if t < _MIN_STEP:
                logger.debug("line search stagnated at relative residual %.3e", norm)
                return u, iterations, norm
        u, r = trial, r_trial
        iterations += 1
        norm = op.relative_norm(r, u, f, free)
    return u, iterations, norm


def _linear_guess(op, u_fixed, free, f):
    """Solution of the p = 2 problem with the same data and potential."""
    lin = DiscreteOperator(op.problem.model_copy(update={"p": 2.0}), op.grid, op.V)
    r = lin.residual(u_fixed, f)
    jac = lin.jacobian(u_fixed)[free][:, free]
    u = u_fixed.copy()
    u[free] = spsolve(jac.tocsc(), -r[free])
    if not np.all(np.isfinite(u)):
        return u_fixed.copy()
    return u


def _rescale_guess(op, u, f, free):
    """Best multiple of u for homogeneous boundary data: c^(p-1) <Q'(u), u> = <f, u>."""
    work = op.energy(u)
    load = float(np.sum(op.w * f * u))
    if work > 0 and load > 0:
        return u * (load / work) ** (1.0 / (op.p - 1.0))
    return u


def solve_operator(op, fixed_mask, fixed_values, f=None, settings=None, warm_start=None):
    """
    Solve Q'(u) = f at the free nodes with u = fixed_values on fixed_mask.

    This is the engine behind every Dirichlet-type solve (level boundaries, traces on a
    compact set, removed balls, obstacle equality constraints).
    """
    settings = settings or DEFAULT_SETTINGS
    grid = op.grid
    p = op.p
    f = np.zeros(grid.size) if f is None else np.asarray(f, dtype=float)
    free = ~np.asarray(fixed_mask, dtype=bool)
    u_fixed = np.zeros(grid.size)
    u_fixed[~free] = np.asarray(fixed_values, dtype=float)[~free] if np.ndim(fixed_values) else fixed_values
    tol = settings.tolerance(p)

    if warm_start is not None:
        u = np.array(warm_start, dtype=float)
        u[~free] = u_fixed[~free]
    else:
        u = _linear_guess(op, u_fixed, free, f)
        if p != 2 and not np.any(u_fixed):
            u = _rescale_guess(op, u, f, free)

    stages = [] if p == 2 else settings.eps_schedule(warm=warm_start is not None)
    iterations = 0
    eps_final = 0.0
    for eps in stages + [0.0]:
        sigma = local_scale(op.slopes(u))
        nu = local_scale(u)
        floors = (_FLOOR * sigma, _FLOOR * nu)
        if eps > 0:
            eps_cells = eps * sigma
            eps_nodes = eps * nu if p < 2 else None
            stage_tol = max(tol, eps)
        else:
            eps_cells = eps_nodes = None
            stage_tol = tol
        u, its, norm = _newton_stage(op, u, free, f, eps_cells, eps_nodes, floors,
                                     stage_tol, settings.max_newton)
        iterations += its
        if eps > 0:
            eps_final = eps
        logger.debug("stage eps=%.1e: %d iterations, relative residual %.3e", eps, its, norm)

    r = op.residual(u, f)
    norm = op.relative_norm(r, u, f, free)
    converged = norm <= tol
    if not converged:
        logger.warning("solve did not converge: relative residual %.3e > %.1e", norm, tol)
    return SolveReport(Field(grid, u), iterations, norm, eps_final if p != 2 else 0.0, converged)


def as_grid(problem, level, resolution=None):
    """Accept a Grid or build a uniform one on an interval."""
    if isinstance(level, Grid):
        return level
    return build_grid(problem, level, resolution or DEFAULT_RESOLUTION)


def _nodal(f, grid, name="f"):
    if f is None:
        return np.zeros(grid.size)
    values = f.values if isinstance(f, Field) else np.asarray(f, dtype=float)
    if values.shape != (grid.size,):
        raise ArgumentError(f"{name} does not match the grid")
    return np.array(values, dtype=float)


def weak_residual(u, f, problem):
    """Weak residual at every node, zero at the Dirichlet end nodes."""
    grid = u.grid
    op = DiscreteOperator(problem, grid)
    r = op.residual(u.values, _nodal(f, grid))
    r[grid.dirichlet_mask] = 0.0
    return Field(grid, r)


def solve_dirichlet(problem, level, boundary=(0.0, 0.0), f=None, settings=None,
                    checked=False, warm_start=None, resolution=None):
    """
    Solve Q'(u) = f on a level with boundary values (left, right).

    level is a Grid or an interval (then a uniform grid is built). The left value is
    ignored at a symmetry center. checked=True runs the eigenvalue pre-check.
    """
    if isinstance(f, Field) and not isinstance(level, Grid):
        grid = f.grid
        lo, hi = grid.interval
        if abs(lo - level[0]) > 1e-12 * max(1.0, abs(lo)) or abs(hi - level[1]) > 1e-12 * max(1.0, abs(hi)):
            raise ArgumentError(f"the load lives on ({lo}, {hi}), not on the level {tuple(level)}")
    else:
        grid = as_grid(problem, level, resolution)
    left, right = (float(boundary[0]), float(boundary[1]))
    if not (math.isfinite(left) and math.isfinite(right)) or left < 0 or right < 0:
        raise ArgumentError(f"boundary values must be finite and nonnegative, got {boundary}")
    load = _nodal(f, grid)
    if np.any(load < 0):
        raise ArgumentError("the load f must be nonnegative")
    op = DiscreteOperator(problem, grid)
    if checked and (np.any(load > 0) or left > 0 or right > 0):
        lam = principal_eigenpair(problem, grid, settings).lam
        if lam <= 0:
            raise PreconditionError(f"principal eigenvalue {lam:.6g} of the level is not positive")
    fixed = np.zeros(grid.size)
    if not grid.center:
        fixed[0] = left
    fixed[-1] = right
    warm = None if warm_start is None else _nodal(warm_start, grid, "warm start")
    return solve_operator(op, grid.dirichlet_mask, fixed, load, settings, warm)


def _tent(grid):
    a, b = grid.interval
    r = grid.nodes
    u = b - r if grid.center else np.minimum(r - a, b - r)
    return np.maximum(u, 0.0)


def _normalize(op, u):
    return u / op.mass(u) ** (1.0 / op.p)


def _direct_eigenpair(op, free):
    """p = 2: lowest eigenpair of the symmetric tridiagonal pencil (K, diag(w)) on free nodes."""
    k = op.kappa / op.h
    diag = op.w * op.V
    diag[:-1] += k
    diag[1:] += k
    idx = np.flatnonzero(free)
    w = op.w[idx]
    d = diag[idx] / w
    e = -k[idx[:-1]] / np.sqrt(w[:-1] * w[1:])
    lam, vec = eigh_tridiagonal(d, e, select="i", select_range=(0, 0))
    u = np.zeros(op.grid.size)
    u[idx] = vec[:, 0] / np.sqrt(w)
    if u[idx].sum() < 0:
        u = -u
    return float(lam[0]), u


def principal_eigenpair(problem, level, settings=None, method="auto", potential=None,
                        resolution=None):
    """
    Principal eigenpair of Q'(u) = lambda |u|^(p-2) u with zero Dirichlet data.

    method: "direct" (p = 2 only), "power" (inverse power iteration) or "auto".
    The eigenfunction is positive and normalized by the weighted L^p mass.
    """
    settings = settings or DEFAULT_SETTINGS
    grid = as_grid(problem, level, resolution)
    p = problem.p
    free = grid.interior_mask
    if method == "auto":
        method = "direct" if p == 2 else "power"
    if method not in ("direct", "power"):
        raise ArgumentError(f"unknown eigen method {method!r}")
    if method == "direct" and p != 2:
        raise ArgumentError("the direct eigensolver needs p = 2")
    op = DiscreteOperator(problem, grid, potential)

    if method == "direct":
        lam, u = _direct_eigenpair(op, free)
        u = _normalize(op, u)
        return EigenResult(lam, Field(grid, u), 1, True, 0.0, "direct", (lam,))

    shift = max(0.0, -float(np.min(op.V[free])))
    shifted = DiscreteOperator(problem, grid, op.V, shift)
    if p == 2:
        u = _tent(grid)
    else:
        lin = DiscreteOperator(problem.model_copy(update={"p": 2.0}), grid, op.V)
        u = _direct_eigenpair(lin, free)[1]
    u = _normalize(op, np.abs(u))
    lam = op.rayleigh(u)
    history = [lam]
    converged = False
    iterations = 0
    for iterations in range(1, settings.eigen_max_iter + 1):
        rhs = np.abs(u) ** (p - 1.0)
        warm = u / (lam + shift) ** (1.0 / (p - 1.0)) if lam + shift > 0 else None
        report = solve_operator(shifted, grid.dirichlet_mask, 0.0, rhs, settings, warm)
        if not report.converged:
            logger.warning("inner solve failed at eigen iteration %d", iterations)
            break
        u_new = _normalize(op, np.abs(report.solution.values))
        lam_new = op.rayleigh(u_new)
        history.append(lam_new)
        done = abs(lam_new - lam) <= settings.eigen_rtol * max(abs(lam_new), 1e-300)
        u, lam = u_new, lam_new
        if done:
            converged = True
            break
    if not converged:
        logger.warning("inverse power iteration stopped after %d iterations (lambda=%.8g)",
                       iterations, lam)
    return EigenResult(lam, Field(grid, u), iterations, converged, shift, "power", tuple(history))


def generalized_inverse_iteration(a, b, rtol=1e-13, max_iter=2000):
    """
    Smallest eigenpair of a v = t diag(b) v for a sparse symmetric positive definite a and
    b >= 0 not identically zero. v is positive and normalized by sum b v^2 = 1.
    """
    lu = splu(a.tocsc())
    v = np.where(b > 0, 1.0, 0.5)
    t = math.inf
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        v = lu.solve(b * v)
        v /= math.sqrt(float(np.dot(b * v, v)))
        t_new = float(np.dot(v, a @ v))
        done = abs(t_new - t) <= rtol * abs(t_new)
        t = t_new
        if done:
            converged = True
            break
    if not converged:
        logger.warning("generalized inverse iteration stopped after %d iterations", iterations)
    return t, np.abs(v), iterations, converged


def lambda1(problem, grid, potential=None, settings=None):
    return principal_eigenpair(problem, grid, settings, potential=potential).lam


def sign_margins(u, problem, window=None):
    """Smallest and largest relative weak residual of Q'(u) over the interior nodes."""
    grid = u.grid
    op = DiscreteOperator(problem, grid)
    zero = np.zeros(grid.size)
    r = op.residual(u.values, zero)
    s = op.scale(u.values, zero)
    rel = np.divide(r, s, out=np.zeros_like(r), where=s > 0)
    mask = grid.interior_mask
    if window is not None:
        mask = mask & grid.mask_between(*window)
    if not mask.any():
        raise ArgumentError("no interior nodes to classify")
    return float(rel[mask].min()), float(rel[mask].max())


def classify_sign(u, problem, tol=1e-6, window=None):
    """Solution, supersolution, subsolution or neither, by the sign of the relative residual."""
    low, high = sign_margins(u, problem, window)
    sup = low >= -tol
    sub = high <= tol
    if sup and sub:
        return SignClass.SOLUTION
    if sup:
        return SignClass.SUPERSOLUTION
    if sub:
        return SignClass.SUBSOLUTION
    return SignClass.NEITHER


def wcp_check(u1, u2, problem, tol=1e-8, hypothesis_tol=1e-6, lam=None, settings=None):
    """
    Weak comparison: verify the hypotheses, then check u1 <= u2 + tol at every node.

    Hypotheses (relative residual tolerance hypothesis_tol): Q'(u1) <= Q'(u2),
    Q'(u2) >= 0, u1 <= u2 and u2 >= 0 on the boundary, positive principal eigenvalue.
    """
    grid = u1.grid
    if u2.grid is not grid and not np.array_equal(u2.grid.nodes, grid.nodes):
        raise ArgumentError("u1 and u2 live on different grids")
    op = DiscreteOperator(problem, grid)
    zero = np.zeros(grid.size)
    r1 = op.residual(u1.values, zero)
    r2 = op.residual(u2.values, zero)
    s = np.maximum(op.scale(u1.values, zero), op.scale(u2.values, zero))
    s = np.where(s > 0, s, 1.0)
    inner = grid.interior_mask
    edge = grid.dirichlet_mask

    failed = []
    if np.any((r1 - r2)[inner] > hypothesis_tol * s[inner]):
        failed.append("Q'(u1) <= Q'(u2)")
    if np.any(r2[inner] < -hypothesis_tol * s[inner]):
        failed.append("Q'(u2) >= 0")
    if np.any(u1.values[edge] > u2.values[edge] + tol):
        failed.append("u1 <= u2 on the boundary")
    if np.any(u2.values[edge] < -tol):
        failed.append("u2 >= 0 on the boundary")
    if lam is None:
        lam = lambda1(problem, grid, settings=settings)
    if not lam > 0:
        failed.append("lambda_1 > 0")
    if failed:
        raise PreconditionError("comparison hypotheses failed: " + ", ".join(failed))

    violation = float(max(0.0, np.max(u1.values - u2.values)))
    return ComparisonResult(violation <= tol, violation)
