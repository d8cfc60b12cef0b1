import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import oracle_m_rational, oracle_matrix
from ssmc import ChainSpec
from ssmc.hitting import (HittingError, expected_hitting, hitting_distribution, min_hitting_survival,
                          survival_at)
from ssmc.sserw import Kind, SserwModel, chain_spec


def spec_of(kind, N):
    return chain_spec(SserwModel(kind, N))


def dense_spec(kind, N):
    """Same walk with no banded structure, to force the LU path."""
    s = spec_of(kind, N)
    return ChainSpec(s.n_states, s.origin, s.targets, s.transition, labels=s.labels)


@pytest.mark.parametrize("kind, N, theta, expected", [
    (Kind.FLAT, 2, 0.3, 2 / 0.58),
    (Kind.ALTERNATING_WELLS, 1, 0.3, 2 / (1 - 2 * 0.3 * 0.7)),
    (Kind.FLAT, 10, 0.5, 100.0),
])
def test_expected_hitting_examples(kind, N, theta, expected):
    for spec in (spec_of(kind, N), dense_spec(kind, N)):
        sol = expected_hitting(spec, theta)
        assert sol.at_origin == pytest.approx(expected, rel=1e-12)
        assert np.all(sol.expectations >= 1)


@settings(max_examples=30, deadline=None)
@given(kind=st.sampled_from(list(Kind)), N=st.integers(1, 12), theta=st.floats(0.05, 0.95))
def test_banded_and_dense_paths_agree(kind, N, theta):
    banded = expected_hitting(spec_of(kind, N), theta)
    dense = expected_hitting(dense_spec(kind, N), theta)
    # LU accuracy degrades with the conditioning, which grows like m
    rel = max(1e-8, 1e-14 * banded.expectations.max())
    assert banded.expectations == pytest.approx(dense.expectations, rel=rel)
    assert banded.at_origin == pytest.approx(oracle_m_rational(kind.value, N, theta), rel=1e-10)


def test_solution_satisfies_system():
    Q, _ = oracle_matrix("SingleWell", 6, 0.35)
    sol = expected_hitting(spec_of(Kind.SINGLE_WELL, 6), 0.35)
    inner = sol.states
    A = np.eye(inner.size) - Q[np.ix_(inner, inner)]
    assert np.max(np.abs(A @ sol.expectations - 1.0)) <= 1e-10 * np.max(sol.expectations)


def test_sparse_path_for_large_dense_chains():
    # 2201 states, above the dense LU limit
    s = dense_spec(Kind.FLAT, 1100)
    assert expected_hitting(s, 0.5).at_origin == pytest.approx(1100.0**2, rel=1e-9)


def test_unreachable_targets_raise():
    with pytest.raises(HittingError):
        expected_hitting(spec_of(Kind.SINGLE_WELL, 3), 0.0)
    with pytest.raises(HittingError):
        expected_hitting(dense_spec(Kind.SINGLE_WELL, 3), 0.0)


def test_at_reports_zero_on_targets():
    sol = expected_hitting(spec_of(Kind.FLAT, 3), 0.4)
    assert sol.at(0) == 0.0
    assert sol.at(3) == sol.at_origin


# ---------------------------------------------------------------------------
# distributions
# ---------------------------------------------------------------------------


def test_flat_one_absorbs_in_one_step():
    d = hitting_distribution(spec_of(Kind.FLAT, 1), 0.37, horizon=5)
    assert d.survival.tolist() == [1.0, 0.0, 0.0, 0.0, 0.0, 0.0]


def test_flat_two_absorbs_on_even_steps():
    d = hitting_distribution(spec_of(Kind.FLAT, 2), 0.5, horizon=6)
    assert d.survival.tolist() == [1.0, 1.0, 0.5, 0.5, 0.25, 0.25, 0.125]


def test_survival_sums_to_mean():
    d = hitting_distribution(spec_of(Kind.FLAT, 2), 0.3, horizon=1000)
    lo, hi = d.partial_mean()
    assert lo == hi
    assert lo == pytest.approx(2 / 0.58, abs=1e-6)
    assert d.truncated_mass < 1e-12


@pytest.mark.parametrize("kind, N, theta", [(Kind.SINGLE_WELL, 6, 0.3), (Kind.ALTERNATING_WELLS, 3, 0.7),
                                            (Kind.FLAT, 9, 0.45)])
def test_oracle_identity(kind, N, theta):
    spec = spec_of(kind, N)
    m = expected_hitting(spec, theta).at_origin
    d = hitting_distribution(spec, theta, horizon=int(60 * m))
    assert d.truncated_mass <= 1e-12
    assert d.partial_mean()[0] == pytest.approx(m, rel=1e-10)


def test_strided_grid_brackets_mean():
    spec = spec_of(Kind.SINGLE_WELL, 8)
    m = expected_hitting(spec, 0.3).at_origin
    d = hitting_distribution(spec, 0.3, horizon=int(40 * m), stride=37, prefix=500)
    lo, hi = d.partial_mean()
    assert lo <= m <= hi + d.truncated_mass * m
    assert d.mean_estimate() == pytest.approx(m, rel=1e-3)
    assert np.all(np.diff(d.times[: 501]) == 1)
    assert np.all(np.diff(d.times[501:]) <= 37)


def test_survival_is_monotone_and_starts_at_one():
    d = hitting_distribution(spec_of(Kind.ALTERNATING_WELLS, 4), 0.35)
    assert d.survival[0] == 1.0
    assert np.all(np.diff(d.survival) <= 0)


def test_longer_horizon_never_increases_truncation():
    spec = spec_of(Kind.SINGLE_WELL, 5)
    masses = [hitting_distribution(spec, 0.35, horizon=h).truncated_mass for h in (50, 200, 800, 3200)]
    assert all(b <= a for a, b in zip(masses, masses[1:]))


def test_leak_accounting_keeps_tiny_survival_accurate():
    # geometric decay rate of the slowest mode, checked far into the tail
    spec = spec_of(Kind.SINGLE_WELL, 12)
    m = expected_hitting(spec, 0.3).at_origin
    d = hitting_distribution(spec, 0.3, horizon=int(30 * m), stride=1000, prefix=10_000)
    x = d.times / m
    tail = x > 5
    slope = np.polyfit(x[tail], np.log(d.survival[tail]), 1)[0]
    assert slope == pytest.approx(-1.0, rel=1e-3)


# ---------------------------------------------------------------------------
# survival with extra absorbers
# ---------------------------------------------------------------------------


def test_one_step_survival_next_to_origin():
    spec = spec_of(Kind.SINGLE_WELL, 3)
    curves = min_hitting_survival(spec, 0.3, extra_absorbers={spec.origin}, horizon=3)
    i = int(np.flatnonzero(spec.labels[curves.starts] == 1)[0])
    assert curves.curves[0, i] == 1.0
    assert curves.curves[1, i] == pytest.approx(0.3)
    assert curves.sup[0] == 1.0


def test_sup_survival_below_markov_bound():
    N, theta = 3, 0.3
    spec = spec_of(Kind.SINGLE_WELL, N)
    for R in (20, 80, 320):
        _, s = survival_at(spec, theta, set(spec.targets) | {spec.origin}, R)
        assert s.max() <= (N - 1) / (R * (1 - 2 * theta))


def test_survival_at_matches_iteration():
    spec = spec_of(Kind.ALTERNATING_WELLS, 2)
    absorbers = set(spec.targets) | {spec.origin}
    curves = min_hitting_survival(spec, 0.4, extra_absorbers={spec.origin}, horizon=25)
    starts, s = survival_at(spec, 0.4, absorbers, 25)
    assert np.array_equal(starts, curves.starts)
    assert s == pytest.approx(curves.curves[25], rel=1e-12)


def test_replace_keeps_spec_usable():
    spec = dataclasses.replace(spec_of(Kind.FLAT, 4), name="copy")
    assert expected_hitting(spec, 0.5).at_origin == pytest.approx(16.0)
