import math

import numpy as np
import pytest

from plcrit.lib.domain import PotentialSpec
from plcrit.lib.errors import ArgumentError
from plcrit.lib.oracles import (
    example_supersolution,
    interval_eigenvalue,
    pi_p,
    radial_capacity,
    radial_dirichlet_profile,
    radial_minimal_growth,
    shooting_eigenvalue,
    singularity_alpha,
)


def test_pi_p():
    assert pi_p(2.0) == pytest.approx(math.pi, rel=1e-14)
    assert pi_p(3.0) == pytest.approx(3.04703, rel=1e-4)
    with pytest.raises(ArgumentError):
        pi_p(1.0)


def test_interval_eigenvalue():
    assert interval_eigenvalue(2.0, 1.0) == pytest.approx(math.pi ** 2)
    assert interval_eigenvalue(2.0, 2.0) == pytest.approx(math.pi ** 2 / 4)
    # (p - 1)(pi_p / L)^p scales like L^-p
    assert interval_eigenvalue(3.0, 2.0) == pytest.approx(interval_eigenvalue(3.0, 1.0) / 8)
    with pytest.raises(ArgumentError):
        interval_eigenvalue(2.0, 0.0)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_shooting_matches_interval_formula(p):
    assert shooting_eigenvalue(p, 1, 0.0, 1.0) == pytest.approx(interval_eigenvalue(p, 1.0), rel=1e-5)


def test_shooting_ball_p2():
    # first zero of sin(r)/r
    assert shooting_eigenvalue(2.0, 3, 0.0, 1.0) == pytest.approx(math.pi ** 2, rel=1e-7)


def test_shooting_with_constant_potential():
    shifted = shooting_eigenvalue(2.0, 1, 0.0, 1.0, PotentialSpec.constant(5.0))
    assert shifted == pytest.approx(math.pi ** 2 + 5.0, rel=1e-7)


def test_shooting_needs_bounded_interval():
    with pytest.raises(ArgumentError):
        shooting_eigenvalue(2.0, 1, 0.0, math.inf)


def test_radial_capacity_closed_forms():
    assert radial_capacity(2.0, 3.0, 1.0, math.inf) == pytest.approx(0.5)
    assert radial_capacity(2.0, 3.0, 1.0, 2.0) == pytest.approx(1.0)
    assert radial_capacity(2.0, 2.0, 1.0, math.e) == pytest.approx(0.5)
    assert radial_capacity(3.0, 3.0, 1.0, math.inf) == 0.0
    assert radial_capacity(2.0, 1.0, 1.0, math.inf) == 0.0
    with pytest.raises(ArgumentError):
        radial_capacity(2.0, 3.0, 2.0, 1.0)


def test_radial_profiles():
    r = np.array([1.0, 2.0, 4.0])
    assert radial_minimal_growth(2.0, 3.0, r, 1.0) == pytest.approx(1.0 / r)
    assert radial_minimal_growth(3.0, 2.0, r, 1.0, trace=2.0) == pytest.approx([2.0, 2.0, 2.0])
    profile = radial_dirichlet_profile(2.0, 3.0, r, 1.0, 4.0)
    assert profile == pytest.approx([1.0, 1.0 / 3.0, 0.0])
    log_profile = radial_dirichlet_profile(2.0, 2.0, r, 1.0, 4.0)
    assert log_profile == pytest.approx([1.0, 0.5, 0.0])


def test_radial_profile_to_infinity():
    r = np.array([1.0, 2.0, 4.0])
    assert radial_dirichlet_profile(2.0, 3.0, r, 1.0, math.inf) == pytest.approx(1.0 / r)


@pytest.mark.parametrize("p, d", [(3.0, 2.0), (2.0, 2.0), (4.0, 1.0)])
def test_radial_profile_to_infinity_needs_p_below_d(p, d):
    with pytest.raises(ArgumentError, match="p < d"):
        radial_dirichlet_profile(p, d, np.array([1.0, 2.0]), 1.0, math.inf)


@pytest.mark.parametrize("inner, outer", [(0.0, 1.0), (2.0, 1.0), (1.0, 1.0)])
def test_radial_profile_rejects_bad_radii(inner, outer):
    with pytest.raises(ArgumentError, match="inner < outer"):
        radial_dirichlet_profile(2.0, 3.0, np.array([1.5]), inner, outer)


def test_singularity_alpha_and_supersolution():
    assert singularity_alpha(2.0, 3.0) == -1.0
    assert singularity_alpha(3.0, 3.0) == 0.0
    r = np.array([0.0, 1.0])
    assert example_supersolution(2.0, 3.0, r) == pytest.approx([1.0, 2.0 ** -0.5])
