import math

import numpy as np
import pytest

from plcrit.lib.criticality import (
    Verdict,
    VerdictSettings,
    capacity_sequence,
    classify_thresholds,
    criticality_verdict,
    extrapolated_limit,
    gap_inequality_check,
    ground_state,
    null_sequence,
    positivity_weight,
    q_capacity,
    threshold_tN,
)
from plcrit.lib.domain import (
    CompactSetSpec,
    ExhaustionSettings,
    PotentialSpec,
    RadialProblem,
    build_grid,
    default_exhaustion,
)
from plcrit.lib.errors import ArgumentError, StateError
from plcrit.lib.oracles import radial_capacity

COARSE = ExhaustionSettings(resolution=201)
LINE = RadialProblem(p=2.0, d=1, r_lo=-math.inf)
SPACE = RadialProblem(p=2.0, d=3)
PROBE = PotentialSpec.bump(center=0.5, radius=0.25)


@pytest.fixture(scope="module")
def line_report():
    schedule = default_exhaustion(LINE, levels=10)
    return schedule, criticality_verdict(LINE, schedule, grid_settings=COARSE)


@pytest.fixture(scope="module")
def space_report():
    schedule = default_exhaustion(SPACE, levels=10)
    return schedule, criticality_verdict(SPACE, schedule, grid_settings=COARSE)


def test_threshold_methods_agree_p2():
    problem = RadialProblem(p=2.0, d=1, r_lo=0.0, r_hi=1.0)
    rayleigh = threshold_tN(problem, (0.0, 1.0), PROBE, resolution=201)
    bisection = threshold_tN(problem, (0.0, 1.0), PROBE, method="bisection", resolution=201)
    assert rayleigh > 0
    assert bisection == pytest.approx(rayleigh, abs=1e-5)


def test_threshold_methods_agree_p3():
    problem = RadialProblem(p=3.0, d=1, r_lo=0.0, r_hi=1.0)
    rayleigh = threshold_tN(problem, (0.0, 1.0), PROBE, resolution=101)
    bisection = threshold_tN(problem, (0.0, 1.0), PROBE, method="bisection", atol=1e-4,
                             resolution=101)
    assert bisection == pytest.approx(rayleigh, rel=1e-3)


def test_threshold_shrinks_with_larger_level():
    problem = RadialProblem(p=2.0, d=1, r_lo=0.0, r_hi=4.0)
    small = threshold_tN(problem, (0.0, 1.0), PROBE, resolution=201)
    large = threshold_tN(problem, (0.0, 2.0), PROBE, resolution=401)
    assert large < small


def test_threshold_rejects_bad_probes():
    problem = RadialProblem(p=2.0, d=1, r_lo=0.0, r_hi=1.0)
    with pytest.raises(ArgumentError, match="boundary"):
        threshold_tN(problem, (0.0, 1.0), PotentialSpec.constant(1.0), resolution=51)
    with pytest.raises(ArgumentError, match="nonnegative"):
        threshold_tN(problem, (0.0, 1.0), PROBE.scaled(-1.0), resolution=51)
    with pytest.raises(ArgumentError):
        threshold_tN(problem, (0.0, 1.0), PROBE, method="newton", resolution=51)


def test_null_sequence_identity_and_normalization():
    schedule = default_exhaustion(LINE, levels=5)
    terms = null_sequence(LINE, schedule, grid_settings=ExhaustionSettings(resolution=101))
    assert [term.level for term in terms] == [1, 2, 3, 4, 5]
    ts = [term.t for term in terms]
    assert all(b <= a + 1e-12 for a, b in zip(ts, ts[1:]))
    for term in terms:
        assert term.converged
        assert term.identity_error <= 1e-8
        assert term.v.at(schedule.x0) == pytest.approx(1.0, rel=1e-12)
        assert term.window_mass > 0 and term.window_integral > 0


def test_null_sequence_needs_probe_in_first_level():
    schedule = default_exhaustion(LINE, levels=3)
    with pytest.raises(ArgumentError):
        null_sequence(LINE, schedule, PotentialSpec.bump(center=10.0, radius=1.0), grid_settings=COARSE)


def test_classify_thresholds_rules():
    lengths = [1.0, 2.0, 4.0, 8.0, 16.0]
    plateau = [1.0, 0.5, 0.4, 0.399, 0.3985]
    assert classify_thresholds(plateau, lengths)[0] == Verdict.SUBCRITICAL
    vanishing = [1e-2, 1e-3, 1e-4, 5e-5]
    assert classify_thresholds(vanishing, lengths[:4])[0] == Verdict.CRITICAL
    assert classify_thresholds([1.0, 0.5], lengths[:2])[0] == Verdict.UNDETERMINED
    noisy = [1.0, 2.0, 1.0, 2.0]
    verdict, reasons = classify_thresholds(noisy, lengths[:4])
    assert verdict == Verdict.UNDETERMINED and reasons
    strict = VerdictSettings(plateau_rtol=1e-4, limit_fraction=1.0)
    assert classify_thresholds(plateau, lengths, strict)[0] != Verdict.SUBCRITICAL


def test_extrapolated_limit():
    assert extrapolated_limit([1.0, 0.5]) is None
    assert extrapolated_limit([1.0, 2.0, 1.5]) is None
    assert extrapolated_limit([3.0, 2.0, 1.0]) is None
    geometric = [0.3 + 0.5 ** n for n in range(6)]
    assert extrapolated_limit(geometric) == pytest.approx(0.3, rel=1e-12)
    harmonic = [1.0 / n for n in range(1, 9)]
    assert extrapolated_limit(harmonic) == pytest.approx(1.0 / 14.0, rel=1e-12)


def test_slow_subcritical_decay_is_extrapolated():
    lengths = [2.0 ** n for n in range(1, 9)]
    ts = [8.65, 2.74, 1.59, 1.16, 0.957, 0.843, 0.774, 0.730]
    verdict, reasons = classify_thresholds(ts, lengths)
    assert verdict == Verdict.SUBCRITICAL
    assert "extrapolated limit" in reasons[0]


def test_harmonic_decay_is_critical():
    lengths = [2.0 ** n for n in range(1, 9)]
    ts = [1.0 / n for n in range(1, 9)]
    verdict, reasons = classify_thresholds(ts, lengths)
    assert verdict == Verdict.CRITICAL
    assert "logarithmic decay" in reasons[0]


def test_geometric_decay_to_zero_is_critical():
    lengths = [2.0 ** n for n in range(1, 9)]
    ts = [0.1 * 0.5 ** n for n in range(8)]
    verdict, reasons = classify_thresholds(ts, lengths)
    assert verdict == Verdict.CRITICAL
    assert "extrapolated limit" in reasons[0]


def test_line_is_critical(line_report):
    _, report = line_report
    assert report.verdict == Verdict.CRITICAL
    assert report.monotone
    assert report.t_star_estimate == 0.0
    assert report.ground_state is not None
    assert report.positivity_weight is None
    assert len(report.thresholds) == 10


def test_line_ground_state_is_nearly_constant(line_report):
    schedule, report = line_report
    state = ground_state(LINE, schedule, grid_settings=COARSE, refine=False, report=report)
    _, values = state.window(*schedule.omega1)
    assert np.all(values > 0)
    assert values == pytest.approx(np.ones_like(values), abs=0.02)


def test_line_has_no_positivity_weight(line_report):
    schedule, report = line_report
    with pytest.raises(StateError):
        positivity_weight(LINE, schedule, report=report, grid_settings=COARSE)


def test_space_is_subcritical(space_report):
    _, report = space_report
    assert report.verdict == Verdict.SUBCRITICAL
    assert report.t_star_estimate > 1e-3
    assert report.ground_state is None
    weight = report.positivity_weight
    assert weight.certified
    assert weight.margin >= -1e-8
    assert len(weight.margins) == len(report.terms)


def test_space_has_no_ground_state(space_report):
    schedule, report = space_report
    with pytest.raises(StateError):
        ground_state(SPACE, schedule, grid_settings=COARSE, report=report)


def test_plane_is_critical():
    problem = RadialProblem(p=2.0, d=2)
    report = criticality_verdict(problem, default_exhaustion(problem, levels=10),
                                 grid_settings=COARSE)
    assert report.verdict == Verdict.CRITICAL


def test_borderline_exponent_is_critical():
    problem = RadialProblem(p=3.0, d=3)
    report = criticality_verdict(problem, default_exhaustion(problem, levels=8),
                                 grid_settings=ExhaustionSettings(resolution=101))
    assert report.verdict == Verdict.CRITICAL


def test_supercritical_dimension_for_p3_is_subcritical():
    problem = RadialProblem(p=3.0, d=4)
    report = criticality_verdict(problem, default_exhaustion(problem, levels=8),
                                 grid_settings=ExhaustionSettings(resolution=101))
    assert report.verdict == Verdict.SUBCRITICAL
    assert report.converged
    assert 0 < report.t_star_estimate < report.thresholds[-1][1]
    weight = report.positivity_weight
    assert weight.certified
    assert weight.margin >= -1e-8


def test_ground_state_does_not_depend_on_window_potential(line_report):
    schedule, report = line_report
    other = criticality_verdict(LINE, schedule, W=PotentialSpec.bump(center=0.5, radius=0.5),
                                grid_settings=COARSE)
    assert report.verdict == other.verdict == Verdict.CRITICAL
    nodes = np.linspace(*schedule.omega1, 41)
    assert other.ground_state.at(nodes) == pytest.approx(report.ground_state.at(nodes), abs=1e-2)


def test_positivity_weight_satisfies_gap_inequality(space_report):
    _, report = space_report
    grid = build_grid(SPACE, (0.0, 8.0), 401)
    worst = gap_inequality_check(SPACE, grid, report.positivity_weight.weight, samples=100,
                                 rng=np.random.default_rng(0))
    assert worst > 0
    with pytest.raises(ArgumentError):
        gap_inequality_check(SPACE, grid, report.positivity_weight.weight, kind="hardy")


def test_capacity_of_ball_matches_closed_form():
    K = CompactSetSpec(k_lo=0.0, k_hi=1.0)
    cap = q_capacity(SPACE, K, (0.0, 4.0), resolution=801)
    assert cap.kkt
    assert cap.value == pytest.approx(radial_capacity(2.0, 3.0, 1.0, 4.0), rel=1e-3)
    assert np.all(cap.minimizer.values >= -1e-12)
    assert cap.minimizer.values[cap.minimizer.grid.nodes <= 1.0] == pytest.approx(1.0)


def test_capacity_of_interval_on_line_is_exact():
    K = CompactSetSpec(k_lo=-1.0, k_hi=1.0)
    sequence = capacity_sequence(LINE, K, default_exhaustion(LINE, levels=6), grid_settings=COARSE)
    assert [n for n, _ in sequence] == [1, 2, 3, 4, 5, 6]
    for n, value in sequence:
        assert value == pytest.approx(1.0 / (2.0 ** n - 1.0), rel=1e-6)


def test_capacity_sequence_decreases_to_exterior_capacity():
    K = CompactSetSpec(k_lo=0.0, k_hi=1.0)
    sequence = capacity_sequence(SPACE, K, default_exhaustion(SPACE, levels=6), grid_settings=COARSE)
    values = [value for _, value in sequence]
    assert all(b < a for a, b in zip(values, values[1:]))
    assert values[-1] == pytest.approx(radial_capacity(2.0, 3.0, 1.0, 64.0), rel=5e-3)
    assert values[-1] > radial_capacity(2.0, 3.0, 1.0, math.inf)


def test_capacity_needs_K_inside_level():
    with pytest.raises(ArgumentError):
        q_capacity(SPACE, CompactSetSpec(k_lo=0.0, k_hi=2.0), (0.0, 2.0), resolution=51)
