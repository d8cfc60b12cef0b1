import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ssmc import dirac, discrete, uniform
from ssmc.dominance import (DiracMixture, DominanceReport, LadderRules, PreconditionError, Theorem,
                            Verdict, boundary_pair_weights, estimate_offset, finite_support_weights,
                            interior_pair_weights, key_lemma_diagnostics, laplace_ratio,
                            monotone_limit_measure, predict_dominance, unique_max_dominance,
                            weak_convergence_distance)
from ssmc.occupation import Binning, MeasureKind, OccupationMeasure, limiting_occupation, tv_distance
from ssmc.sserw import Kind, SserwModel, asymptotic_profile, log_m, m_closed

LADDER = [25, 50, 100, 200]
WIDE = [25, 100, 400]


def m_seq(kind):
    def at(N):
        model = SserwModel(Kind.parse(kind), N)
        return lambda t: np.array([m_closed(model, x).m for x in np.atleast_1d(t)])
    return at


def log_m_seq(kind):
    def at(N):
        model = SserwModel(Kind.parse(kind), N)
        return lambda t: log_m(model, t)
    return at


# ---------------------------------------------------------------------------
# finite support
# ---------------------------------------------------------------------------


def test_symmetric_atoms_keep_their_weights():
    rep = finite_support_weights({0.3: 0.25, 0.7: 0.75}, log_m_seq("AW"), LADDER, log_scale=True)
    assert rep.verdict is Verdict.NO_DOMINANCE
    assert rep.points.tolist() == [0.3, 0.7]
    assert rep.weights == pytest.approx([0.25, 0.75], abs=1e-9)


def test_flat_dominance_at_one_half():
    # the ratio decays like 1/N, so the ladder must span more than a factor of ten
    rep = finite_support_weights({0.3: 0.5, 0.5: 0.5}, m_seq("Flat"), WIDE)
    assert rep.verdict is Verdict.DOMINANCE
    assert rep.theorem is Theorem.FINITE_SUPPORT
    assert rep.points.tolist() == [0.5]
    assert rep.weights.tolist() == [1.0]


def test_flat_polynomial_ratios_give_no_dominance():
    rep = finite_support_weights({0.2: 0.5, 0.3: 0.5}, m_seq("Flat"), LADDER)
    assert rep.verdict is Verdict.NO_DOMINANCE
    assert rep.theorem is Theorem.MONOTONE_LIMIT
    assert rep.weights == pytest.approx([0.4, 0.6], abs=1e-6)
    assert rep.limit_measure.mass_at(0.3) == pytest.approx(0.6, abs=1e-6)


def test_finite_support_preconditions():
    with pytest.raises(PreconditionError):
        finite_support_weights({0.3: 1.0}, m_seq("Flat"), LADDER)
    with pytest.raises(PreconditionError):
        finite_support_weights({0.3: 0.5, 0.5: 0.5}, m_seq("Flat"), [50, 25])


def test_oscillating_ratio_is_inconclusive():
    def seq(N):
        return lambda t: np.where(np.asarray(t) < 0.4, 1.0 + 0.5 * (N % 2), 1.0)
    rep = finite_support_weights({0.3: 0.5, 0.5: 0.5}, seq, [1, 2, 3, 4])
    assert rep.verdict is Verdict.INCONCLUSIVE


def test_report_serializes():
    rep = finite_support_weights({0.3: 0.5, 0.5: 0.5}, m_seq("Flat"), WIDE)
    data = json.loads(rep.to_json())
    assert data["verdict"] == "Dominance" and data["theorem"] == "FiniteSupport"
    assert data["points"] == [0.5]


# ---------------------------------------------------------------------------
# unique maximizer
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("kind, low, high, expected", [
    (Kind.SINGLE_WELL, 0.3, 0.9, 0.3),
    (Kind.ALTERNATING_WELLS, 0.3, 0.6, 0.3),
    (Kind.ALTERNATING_WELLS, 0.45, 0.8, 0.8),
])
def test_unique_max(kind, low, high, expected):
    prof = asymptotic_profile(kind)
    rep = unique_max_dominance(prof.h_N, uniform(low, high), [50, 100, 200, 400], h_limit=prof.h)
    assert rep.verdict is Verdict.DOMINANCE
    assert rep.points == pytest.approx([expected])
    assert rep.weights.tolist() == [1.0]


def test_tied_maxima_are_inconclusive():
    prof = asymptotic_profile(Kind.ALTERNATING_WELLS)
    rep = unique_max_dominance(prof.h_N, uniform(0.3, 0.7), [50, 100, 200], h_limit=prof.h)
    assert rep.verdict is Verdict.INCONCLUSIVE


def test_unique_max_by_extrapolation():
    prof = asymptotic_profile(Kind.SINGLE_WELL)
    rep = unique_max_dominance(prof.h_N, uniform(0.3, 0.9), [100, 200, 400])
    assert rep.points == pytest.approx([0.3])


# ---------------------------------------------------------------------------
# pair weights
# ---------------------------------------------------------------------------


def test_boundary_pair_symmetric():
    assert boundary_pair_weights((1.0, 1.0), (-2.0, 2.0)) == (0.5, 0.5)


def test_boundary_pair_density_ratio():
    w = boundary_pair_weights((1.0, 3.0), (-2.0, 2.0))
    assert w == pytest.approx((0.25, 0.75), abs=1e-12)


def test_boundary_pair_offset():
    w = boundary_pair_weights((1.0, 1.0), (-1.0, 1.0), math.log(2.0), 0.0)
    assert w == pytest.approx((2 / 3, 1 / 3), abs=1e-12)


def test_boundary_pair_callables():
    prof = asymptotic_profile(Kind.ALTERNATING_WELLS)
    w = boundary_pair_weights(lambda t: 2.5, prof.h_prime, a=0.3, b=0.7, h=prof.h)
    assert w == pytest.approx((0.5, 0.5), abs=1e-12)


@pytest.mark.parametrize("kwargs", [
    dict(g_mu=(1.0, 1.0), h_prime=(1.0, 1.0)),
    dict(g_mu=(0.0, 1.0), h_prime=(-1.0, 1.0)),
    dict(g_mu=(1.0, 1.0), h_prime=(-1.0, 1.0), d1=math.inf),
    dict(g_mu=(1.0, 1.0), h_prime=(-1.0, 1.0), h=(1.0, 2.0)),
    dict(g_mu=lambda t: 1.0, h_prime=(-1.0, 1.0)),
])
def test_boundary_pair_preconditions(kwargs):
    with pytest.raises(PreconditionError):
        boundary_pair_weights(**kwargs)


@pytest.mark.parametrize("g, c, expected", [
    ((1.0, 1.0), (-2.0, -2.0), (0.5, 0.5)),
    ((1.0, 2.0), (-2.0, -2.0), (1 / 3, 2 / 3)),
    ((1.0, 1.0), (-1.0, -4.0), (2 / 3, 1 / 3)),
])
def test_interior_pair(g, c, expected):
    assert interior_pair_weights(g, c) == pytest.approx(expected, abs=1e-12)


def test_interior_pair_needs_negative_curvature():
    with pytest.raises(PreconditionError):
        interior_pair_weights((1.0, 1.0), (-1.0, 0.0))


@settings(max_examples=60, deadline=None)
@given(g=st.tuples(st.floats(1e-3, 1e3), st.floats(1e-3, 1e3)),
       s=st.tuples(st.floats(1e-3, 1e3), st.floats(1e-3, 1e3)),
       d=st.tuples(st.floats(-5, 5), st.floats(-5, 5)))
def test_pair_weights_positive_and_normalized(g, s, d):
    for w in (boundary_pair_weights(g, (-s[0], s[1]), *d), interior_pair_weights(g, (-s[0], -s[1]), *d)):
        assert min(w) > 0
        assert sum(w) == pytest.approx(1.0, abs=1e-12)


def test_offset_converges_for_single_well():
    prof = asymptotic_profile(Kind.SINGLE_WELL)
    d, ladder = estimate_offset(log_m_seq("SW"), prof.h, 0.3, [100, 200, 400, 800])
    assert np.all(np.isfinite(ladder))
    assert abs(ladder[-1] - ladder[-2]) < 1e-6
    assert d == pytest.approx(ladder[-1], abs=1e-6)


# ---------------------------------------------------------------------------
# monotone limit
# ---------------------------------------------------------------------------


def test_flat_limit_density():
    prof = asymptotic_profile(Kind.FLAT)
    b = Binning.uniform(0.1, 0.3, 64)
    rep = monotone_limit_measure(uniform(0.1, 0.3), m_seq("Flat"), prof.scaling, LADDER, m_bar=prof.m_bar,
                                 binning=b)
    assert rep.verdict is Verdict.NO_DOMINANCE
    assert rep.limit_measure.mass_between(0.2, 0.3) == pytest.approx(math.log(0.6 / 0.4) / math.log(2.0), abs=1e-8)


def test_single_well_limit_density():
    prof = asymptotic_profile(Kind.SINGLE_WELL)
    b = Binning.uniform(0.6, 0.9, 60)
    rep = monotone_limit_measure(uniform(0.6, 0.9), m_seq("SW"), prof.scaling, LADDER, m_bar=prof.m_bar,
                                 binning=b)
    assert rep.verdict is Verdict.NO_DOMINANCE
    # density proportional to 1/(2t - 1)
    expected = math.log(0.5 / 0.2) / math.log(0.8 / 0.2)
    assert rep.limit_measure.mass_between(0.6, 0.75) == pytest.approx(expected, abs=1e-8)


def test_dirac_limit_is_point_mass():
    rep = monotone_limit_measure(dirac(0.4), m_seq("Flat"), lambda N: float(N), LADDER)
    assert rep.weights.tolist() == [1.0]
    assert rep.limit_measure.masses.tolist() == [1.0]


def test_non_monotone_scaling_is_inconclusive():
    def seq(N):
        return lambda t: np.full(np.shape(t), 1.0 + (N % 2))
    rep = monotone_limit_measure(uniform(0.1, 0.3), seq, lambda N: 1.0, [1, 2, 3])
    assert rep.verdict is Verdict.INCONCLUSIVE


# ---------------------------------------------------------------------------
# Laplace ratios and key-lemma diagnostics
# ---------------------------------------------------------------------------


def test_laplace_ratio_of_one_is_one():
    prof = asymptotic_profile(Kind.SINGLE_WELL)
    for N in (10, 400):
        r = laplace_ratio(lambda t: 1.0, lambda N: (lambda t: prof.h_N(N, t)), uniform(0.3, 0.9), N)
        assert r == pytest.approx(1.0, abs=1e-12)


def test_laplace_ratio_concentrates_at_the_maximizer():
    prof = asymptotic_profile(Kind.SINGLE_WELL)
    r = laplace_ratio(lambda t: t, lambda N: (lambda t: prof.h_N(N, t)), uniform(0.3, 0.9), 400)
    assert r == pytest.approx(0.3, abs=0.02)


def test_laplace_ratio_flat_exponent_is_the_mean():
    flat = lambda N: (lambda t: np.zeros_like(np.asarray(t, dtype=float)))  # noqa: E731
    for N in (1, 1000):
        assert laplace_ratio(lambda t: t * t, flat, uniform(0.2, 0.8), N) == pytest.approx(0.28, rel=1e-10)
    assert laplace_ratio(lambda t: t, flat, discrete([0.2, 0.6], [0.25, 0.75]), 5) == pytest.approx(0.5)


def test_condition_a_decreases_for_two_wells():
    diag = key_lemma_diagnostics(uniform(0.3, 0.7), log_m_seq("AW"), [0.3, 0.7], [0.05], [50, 100])
    assert diag.condA_ratio[1, 0] < diag.condA_ratio[0, 0]
    assert diag.condA_decreasing[0]
    assert np.all(np.isfinite(diag.log_ball))
    assert diag.c_limit[0, 1] == pytest.approx(1.0, rel=0.05)


def test_covering_ball_has_empty_complement():
    diag = key_lemma_diagnostics(uniform(0.3, 0.7), log_m_seq("AW"), [0.5], [0.3], [25, 50])
    assert np.all(diag.condA_ratio == 0.0)
    assert np.all(np.isneginf(diag.log_complement))


def test_condition_a_stalls_without_dominance():
    diag = key_lemma_diagnostics(uniform(0.1, 0.3), log_m_seq("Flat"), [0.3], [0.05], [100, 200, 400])
    ratios = diag.condA_ratio[:, 0]
    # m_N / N tends to 1/(1 - 2t), so the ratio settles at log(0.8/0.5) / log(0.5/0.4)
    expected = math.log(1.6) / math.log(1.25)
    assert ratios == pytest.approx(expected, rel=0.02)
    assert not diag.condA_decreasing[0]


def test_candidates_outside_support_rejected():
    with pytest.raises(PreconditionError):
        key_lemma_diagnostics(uniform(0.3, 0.7), log_m_seq("AW"), [0.2], [0.05], [25, 50])


# ---------------------------------------------------------------------------
# bounded-Lipschitz distance
# ---------------------------------------------------------------------------


def test_distance_to_itself_is_zero():
    m = DiracMixture([0.3, 0.7], [0.5, 0.5])
    assert weak_convergence_distance(m, m) == 0.0


def test_two_diracs():
    d = weak_convergence_distance(DiracMixture([0.3], [1.0]), DiracMixture([0.7], [1.0]))
    assert d == pytest.approx(0.4, abs=1e-12)


def test_uniform_against_centre():
    b = Binning.uniform(0.0, 1.0, 64)
    u = OccupationMeasure(b, np.full(64, 1 / 64), MeasureKind.LIMITING)
    d = weak_convergence_distance(u, DiracMixture([0.5], [1.0]))
    assert d == pytest.approx(0.25, abs=1 / 64)


def test_far_points_use_truncated_metric():
    d = weak_convergence_distance(DiracMixture([0.0], [1.0]), DiracMixture([5.0], [1.0]))
    assert d == pytest.approx(2.0)


@settings(max_examples=40, deadline=None)
@given(x=st.lists(st.floats(0, 1), min_size=1, max_size=5), y=st.lists(st.floats(0, 1), min_size=1, max_size=5))
def test_distance_is_symmetric(x, y):
    p = DiracMixture(x, np.full(len(x), 1 / len(x)))
    q = DiracMixture(y, np.full(len(y), 1 / len(y)))
    d = weak_convergence_distance(p, q)
    assert d >= 0
    assert d == pytest.approx(weak_convergence_distance(q, p), abs=1e-12)


# ---------------------------------------------------------------------------
# orchestration
# ---------------------------------------------------------------------------


def test_report_never_claims_the_whole_support():
    with pytest.raises(ValueError):
        DominanceReport(Verdict.DOMINANCE, None, [0.3], [0.5])
    rep = finite_support_weights({0.3: 0.5, 0.7: 0.5}, log_m_seq("AW"), LADDER, log_scale=True,
                                 rules=LadderRules(converge_rel=1e-12))
    assert rep.verdict is not Verdict.DOMINANCE


def test_two_wells_predict_boundary_pair():
    rep = predict_dominance("AW", uniform(0.3, 0.7), LADDER)
    assert rep.verdict is Verdict.DOMINANCE
    assert rep.theorem is Theorem.BOUNDARY_PAIR
    assert rep.points.tolist() == [0.3, 0.7]
    assert rep.weights == pytest.approx([0.5, 0.5], abs=1e-9)
    bl = rep.evidence["bl_distance"]
    assert np.all(np.diff(bl) < 0)
    assert bl[-1] <= 0.05


def test_single_well_bl_trend():
    rep = predict_dominance("SW", uniform(0.3, 0.9), [50, 100, 200, 400])
    assert rep.theorem is Theorem.UNIQUE_MAX and rep.points == pytest.approx([0.3])
    bl = rep.evidence["bl_distance"]
    assert np.all(np.diff(bl) < 0) and bl[-1] <= 0.05


def test_flat_finite_n_close_to_limit():
    prof = asymptotic_profile(Kind.FLAT)
    b = Binning.uniform(0.1, 0.3, 64)
    lim = limiting_occupation(uniform(0.1, 0.3), prof.m_bar, b)
    finite = limiting_occupation(uniform(0.1, 0.3), m_seq("Flat")(200), b)
    assert tv_distance(finite, lim) <= 0.01


def test_predict_discrete_and_dirac():
    rep = predict_dominance("Flat", discrete([0.3, 0.5], [0.5, 0.5]), WIDE, bl_trend=False)
    assert rep.points.tolist() == [0.5]
    rep = predict_dominance("SW", dirac(0.4), LADDER)
    assert rep.verdict is Verdict.NO_DOMINANCE and rep.weights.tolist() == [1.0]
