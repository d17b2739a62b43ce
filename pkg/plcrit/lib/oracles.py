"""
oracles.py - Closed forms and shooting references for radial p-Laplace problems.

Independent of the finite element machinery, these give the reference values the solvers
are checked against:

- pi_p and the principal eigenvalue (p - 1)(pi_p / L)^p of an interval with V = 0.
- shooting_eigenvalue: principal eigenvalue of the radial ODE by shooting + brentq.
- radial_capacity: energy of the radial capacitor on an annulus (inner, outer).
- radial_minimal_growth: the u^K profile of a ball for V = 0.
- example_supersolution: [1 + r^(p/(p-1))]^((p-d)/p), positive supersolution for d > p.
- singularity_alpha: (p - d)/(p - 1).

Constants follow the radial reduction used everywhere else: the angular measure is 1.
"""

import logging
import math

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from plcrit.lib.domain import PotentialSpec
from plcrit.lib.errors import ArgumentError, ConvergenceError

logger = logging.getLogger(__name__)


def pi_p(p):
    """Half period of the p-sine: 2 pi (p - 1)^(1/p) / (p sin(pi / p))."""
    if not p > 1:
        raise ArgumentError(f"p must exceed 1, got {p}")
    return 2.0 * math.pi * (p - 1.0) ** (1.0 / p) / (p * math.sin(math.pi / p))


def interval_eigenvalue(p, length):
    """Principal Dirichlet eigenvalue of -Delta_p on an interval of the given length, d = 1."""
    if not length > 0:
        raise ArgumentError(f"length must be positive, got {length}")
    return (p - 1.0) * (pi_p(p) / length) ** p


def singularity_alpha(p, d):
    return (p - d) / (p - 1.0)


def _signed_root(x, e):
    return np.sign(x) * np.abs(x) ** e


def _shoot(lam, p, d, r_lo, r_hi, potential):
    """u(r_hi) for the initial value problem, or -(r_hi - r_z) if u vanishes at r_z first."""
    inv = 1.0 / (p - 1.0)

    def rhs(r, y):
        u, z = y
        w = r ** (d - 1.0)
        v = float(potential.evaluate(np.array([r]))[0])
        return [_signed_root(z / w, inv), -w * (lam - v) * _signed_root(u, p - 1.0)]

    def crossing(r, y):
        return y[0]

    crossing.terminal = True
    crossing.direction = -1

    if d > 1 and r_lo == 0:
        r0 = 1e-8 * r_hi
        v0 = float(potential.evaluate(np.array([0.0]))[0])
        y0 = [1.0, -(lam - v0) * r0 ** d / d]
    else:
        # start just past the zero at r_lo with unit slope
        step = 1e-9 * (r_hi - r_lo)
        r0 = r_lo + step
        y0 = [step, r0 ** (d - 1.0)]
    sol = solve_ivp(rhs, (r0, r_hi), y0, method="DOP853", rtol=1e-11, atol=1e-14,
                    events=crossing)
    if sol.status == 1 and sol.t_events[0].size:
        return -(r_hi - float(sol.t_events[0][0]))
    if sol.status < 0:
        raise ConvergenceError(f"shooting failed at lambda={lam}: {sol.message}")
    return float(sol.y[0, -1])


def shooting_eigenvalue(p, d, r_lo, r_hi, potential=None, lam_hi=None, xtol=1e-12):
    """
    Principal eigenvalue of -(r^(d-1) |u'|^(p-2) u')' + r^(d-1) V |u|^(p-2) u
    = lambda r^(d-1) |u|^(p-2) u on (r_lo, r_hi), zero at r_hi and at r_lo (or regular at a
    center r_lo = 0 when d > 1).
    """
    if not (math.isfinite(r_lo) and math.isfinite(r_hi) and r_lo < r_hi):
        raise ArgumentError(f"shooting needs a bounded interval, got ({r_lo}, {r_hi})")
    potential = potential or PotentialSpec.zero()
    sample = potential.evaluate(np.linspace(r_lo, r_hi, 257))
    lo = float(np.min(sample)) if np.all(np.isfinite(sample)) else 0.0
    hi = lam_hi if lam_hi is not None else lo + 1.0
    for _ in range(200):
        if _shoot(hi, p, d, r_lo, r_hi, potential) < 0:
            break
        lo, hi = hi, hi + 2.0 * (hi - lo)
    else:
        raise ConvergenceError("could not bracket the principal eigenvalue")
    lam = brentq(_shoot, lo, hi, args=(p, d, r_lo, r_hi, potential), xtol=xtol, rtol=1e-13)
    logger.debug("shooting eigenvalue p=%g d=%g on (%g, %g): %.12g", p, d, r_lo, r_hi, lam)
    return float(lam)


def radial_capacity(p, d, inner, outer):
    """
    Q-capacity (V = 0) of the ball of radius inner relative to the ball of radius outer,
    with radial weight r^(d-1): (1/p) |alpha|^(p-1) |inner^alpha - outer^alpha|^(1-p),
    or (1/p) log(outer/inner)^(1-p) when p = d. outer = inf is allowed when p < d.
    """
    if not 0 < inner < outer:
        raise ArgumentError(f"need 0 < inner < outer, got ({inner}, {outer})")
    if p == d:
        if math.isinf(outer):
            return 0.0
        return math.log(outer / inner) ** (1.0 - p) / p
    alpha = singularity_alpha(p, d)
    far = 0.0 if math.isinf(outer) and alpha < 0 else outer ** alpha
    if math.isinf(far):
        return 0.0
    return abs(alpha) ** (p - 1.0) * abs(inner ** alpha - far) ** (1.0 - p) / p


def radial_dirichlet_profile(p, d, r, inner, outer, trace=1.0):
    """Radial p-harmonic function on (inner, outer), trace at inner and 0 at outer."""
    r = np.asarray(r, dtype=float)
    if not 0 < inner < outer:
        raise ArgumentError(f"need 0 < inner < outer, got ({inner}, {outer})")
    if math.isinf(outer) and p >= d:
        raise ArgumentError(f"an infinite outer radius needs p < d, got p={p}, d={d}")
    if p == d:
        return trace * np.log(outer / r) / math.log(outer / inner)
    alpha = singularity_alpha(p, d)
    far = 0.0 if math.isinf(outer) else outer ** alpha
    return trace * (r ** alpha - far) / (inner ** alpha - far)


def radial_minimal_growth(p, d, r, inner, trace=1.0):
    """u^K for K the ball of radius inner and V = 0: trace (r/inner)^alpha for p < d, else trace."""
    r = np.asarray(r, dtype=float)
    if p >= d:
        return np.full_like(r, float(trace))
    return trace * (r / inner) ** singularity_alpha(p, d)


def example_supersolution(p, d, r):
    """[1 + r^(p/(p-1))]^((p-d)/p); a positive supersolution of -Delta_p u = 0 when d > p."""
    r = np.asarray(r, dtype=float)
    return (1.0 + np.abs(r) ** (p / (p - 1.0))) ** ((p - d) / p)
