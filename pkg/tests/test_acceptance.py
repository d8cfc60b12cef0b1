"""Acceptance criteria, one test each.

Every criterion prints ``CRITERION k: PASS`` or ``CRITERION k: FAIL`` with
its wall time and the measured quantity; the lines are repeated in the
terminal summary.  Run ``pytest tests/test_acceptance.py -s`` to see them
inline.  Criteria 3 and 9 are not attainable as stated and are marked
``xfail(strict=True)``; each has a supplementary test with the attainable
version next to it.
"""

import functools
import math
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from conftest import CRITERIA, oracle_m_rational
from ssmc import discrete, simulate_steps, uniform
from ssmc.core import replica_seed
from ssmc.dominance import (DiracMixture, Theorem, Verdict, boundary_pair_weights, finite_support_weights,
                            predict_dominance, weak_convergence_distance)
from ssmc.expcli import main
from ssmc.metastability import (cutoff_coverage, exact_scaled_times, fernandez_check, ks_to_exp1,
                                proof_threshold, sample_scaled_times)
from ssmc.occupation import Binning, empirical_occupation, limiting_occupation, tv_distance
from ssmc.sserw import Kind, SserwModel, asymptotic_profile, chain_spec, log_m, m_closed, m_exact

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@contextmanager
def criterion(k: int, limit_s: float | None = None):
    """Time the block, record PASS/FAIL, and enforce the runtime limit."""
    info: dict = {}
    start = time.perf_counter()
    try:
        yield info
        elapsed = time.perf_counter() - start
        if limit_s is not None:
            assert elapsed < limit_s, f"runtime {elapsed:.1f}s exceeds {limit_s}s"
    except BaseException:
        _report(k, "FAIL", time.perf_counter() - start, info)
        raise
    _report(k, "PASS", elapsed, info)


def _report(k, status, elapsed, info):
    detail = ", ".join(f"{key}={_short(v)}" for key, v in info.items())
    line = f"CRITERION {k}: {status} ({elapsed:.2f}s){' ' + detail if detail else ''}"
    CRITERIA.append(line)
    print(line)


def _short(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_short(float(x)) for x in v) + "]"
    return str(v)


def model_m(kind, N):
    model = SserwModel(kind, N)
    return lambda t: np.array([m_closed(model, x).m for x in np.atleast_1d(t)])


def model_log_m(kind, N):
    model = SserwModel(kind, N)
    return lambda t: log_m(model, t)


# ---------------------------------------------------------------------------


def test_criterion_1_closed_form_vs_linear_solve():
    with criterion(1, limit_s=5.0) as info:
        thetas = np.round(np.arange(1, 20) * 0.05, 2)
        worst_solver = worst_rational = 0.0
        for kind in Kind:
            for N in range(1, 21):
                model = SserwModel(kind, N)
                for t in thetas:
                    closed = m_closed(model, t).m
                    worst_solver = max(worst_solver, abs(closed - m_exact(model, t)) / closed)
                    worst_rational = max(worst_rational, abs(closed - oracle_m_rational(kind.value, N, t)) / closed)
        info.update(vs_solver=worst_solver, vs_rational=worst_rational)
        assert worst_solver <= 1e-9
        assert worst_rational <= 1e-9


def test_criterion_2_exact_anchors():
    with criterion(2) as info:
        bad = []
        for N in range(1, 101):
            for kind, expected in ((Kind.FLAT, N * N), (Kind.SINGLE_WELL, N * N), (Kind.ALTERNATING_WELLS, 4 * N * N)):
                if m_closed(SserwModel(kind, N), 0.5).m != expected:
                    bad.append((kind.value, N))
        info["mismatches"] = len(bad)
        assert not bad


TWO_ATOMS = discrete([0.3, 0.5], [0.5, 0.5])


@functools.cache
def flat_half_masses():
    spec = chain_spec(SserwModel(Kind.FLAT, 10))
    b = Binning.from_atoms([0.3, 0.5])
    return np.array([empirical_occupation(simulate_steps(spec, TWO_ATOMS, 1_000_000, replica_seed(2024, r)), b)
                     .mass_at(0.5) for r in range(20)])


@pytest.mark.xfail(strict=True, reason="0.8073 is not the limit: m_10(0.3) = 24.99 gives 0.80007, and the "
                                       "reset step after each hit lowers the empirical limit to 0.7953")
def test_criterion_3_occupation_limit():
    with criterion(3, limit_s=60.0) as info:
        masses = flat_half_masses()
        dev = float(np.mean(np.abs(masses - 0.8073)))
        info.update(mean_mass=float(masses.mean()), mean_abs_dev=dev)
        assert dev <= 0.01


def test_criterion_3_supplement_reset_adjusted_limit():
    # every cycle after the first lasts one reset step plus the hitting time
    m_half, m_low = 100.0, m_closed(SserwModel(Kind.FLAT, 10), 0.3).m
    expected = (m_half + 1) / (m_half + 1 + m_low + 1)
    assert float(np.mean(np.abs(flat_half_masses() - expected))) <= 0.01
    # and the renewal limit without the reset step
    lim = limiting_occupation(TWO_ATOMS, model_m(Kind.FLAT, 10), Binning.from_atoms([0.3, 0.5]))
    assert lim.mass_at(0.5) == pytest.approx(0.80007, abs=5e-5)


def test_criterion_4_finite_support_dichotomy():
    with criterion(4, limit_s=10.0) as info:
        # 1/N decay needs a ladder spanning more than the factor-ten zero rule
        dom = finite_support_weights({0.3: 0.5, 0.5: 0.5}, lambda N: model_m(Kind.FLAT, N), [25, 100, 400])
        nodom = finite_support_weights({0.2: 0.5, 0.3: 0.5}, lambda N: model_m(Kind.FLAT, N), [25, 50, 100, 200])
        info.update(dominance=dom.verdict.value, no_dominance_weights=nodom.weights)
        assert dom.verdict is Verdict.DOMINANCE
        assert dom.points.tolist() == [0.5] and dom.weights.tolist() == [1.0]
        assert nodom.verdict is Verdict.NO_DOMINANCE
        assert np.max(np.abs(nodom.weights - [0.4, 0.6])) <= 1e-6


def test_criterion_5_unique_maximizer():
    with criterion(5, limit_s=30.0) as info:
        mu = uniform(0.3, 0.9)
        target = DiracMixture([0.3], [1.0])
        bl = [weak_convergence_distance(limiting_occupation(mu, log_m_eval=model_log_m(Kind.SINGLE_WELL, N)), target)
              for N in (50, 100, 200, 400)]
        info["bl"] = bl
        assert all(b < a for a, b in zip(bl, bl[1:]))
        assert bl[-1] <= 0.05


def test_criterion_6_boundary_pair():
    with criterion(6) as info:
        prof = asymptotic_profile(Kind.ALTERNATING_WELLS)
        mu = uniform(0.3, 0.7)
        w = boundary_pair_weights(mu.pdf, prof.h_prime, a=0.3, b=0.7, h=prof.h)
        w13 = boundary_pair_weights((1.0, 3.0), (float(prof.h_prime(0.3)), float(prof.h_prime(0.7))))
        target = DiracMixture([0.3, 0.7], [0.5, 0.5])
        bl = [weak_convergence_distance(limiting_occupation(mu, log_m_eval=model_log_m(Kind.ALTERNATING_WELLS, N)),
                                        target) for N in (25, 50, 100, 200)]
        report = predict_dominance("AW", mu, [25, 50, 100, 200], bl_trend=False)
        info.update(weights=w, weights_1_3=w13, bl=bl)
        assert w == (0.5, 0.5)
        assert abs(w13[0] - 0.25) <= 1e-12 and abs(w13[1] - 0.75) <= 1e-12
        assert all(b < a for a, b in zip(bl, bl[1:]))
        assert report.theorem is Theorem.BOUNDARY_PAIR
        assert report.points.tolist() == [0.3, 0.7]


def test_criterion_7_monotone_limit():
    with criterion(7, limit_s=10.0) as info:
        mu = uniform(0.1, 0.3)
        b = Binning.uniform(0.1, 0.3, 64)
        finite = limiting_occupation(mu, model_m(Kind.FLAT, 200), b)
        limit = limiting_occupation(mu, lambda t: 1.0 / (1.0 - 2.0 * np.asarray(t)), b)
        tv = tv_distance(finite, limit)
        info["tv"] = tv
        assert tv <= 0.01


METASTABLE_CASES = [(Kind.SINGLE_WELL, t, (6, 10, 14, 18)) for t in (0.2, 0.3, 0.4)] + \
                   [(Kind.ALTERNATING_WELLS, t, (4, 6, 8)) for t in (0.3, 0.7)]


def test_criterion_8_exponential_limit():
    with criterion(8, limit_s=120.0) as info:
        finals = []
        for kind, theta, ladder in METASTABLE_CASES:
            ks = [ks_to_exp1(exact_scaled_times(SserwModel(kind, N), theta)) for N in ladder]
            assert all(b < a for a, b in zip(ks, ks[1:])), (kind.value, theta, ks)
            finals.append(ks[-1])
        info["final_ks"] = finals
        assert max(finals) <= 0.1


def _coverage_ladder(kind, theta, ladder, k=10_000):
    return [cutoff_coverage(sample_scaled_times(SserwModel(kind, N), theta, k, seed=N), 0.9, 1.1) for N in ladder]


@pytest.mark.xfail(strict=True, reason="the scaled time has standard deviation of order N^-1/2, so "
                                       "coverage of (0.9, 1.1) is about 0.95 (SW) and 0.84 (Flat) at N=400")
def test_criterion_9_cut_off():
    with criterion(9, limit_s=120.0) as info:
        sw = _coverage_ladder(Kind.SINGLE_WELL, 0.8, (50, 100, 200, 400))
        flat = _coverage_ladder(Kind.FLAT, 0.3, (50, 100, 200, 400))
        info.update(sw=sw, flat=flat)
        for cov in (sw, flat):
            assert all(b > a for a, b in zip(cov, cov[1:]))
            assert cov[-1] >= 0.99


@pytest.mark.slow
def test_criterion_9_supplement_larger_sizes():
    # the same coverage threshold is reached once the ladder is long enough
    sw = _coverage_ladder(Kind.SINGLE_WELL, 0.8, (400, 1600))
    flat = _coverage_ladder(Kind.FLAT, 0.3, (400, 3200))
    assert sw[1] > sw[0] and sw[1] >= 0.99
    assert flat[1] > flat[0] and flat[1] >= 0.99


def test_criterion_10_escape_time_hypothesis():
    with criterion(10, limit_s=60.0) as info:
        theta = 0.3
        sups, ratios = [], []
        for N in (10, 20, 40):
            model = SserwModel(Kind.SINGLE_WELL, N)
            check = fernandez_check(model, theta, proof_threshold(model, theta))
            assert check.sup_survival <= math.sqrt((1 - 2 * theta) / (N - 1))
            sups.append(check.sup_survival)
            ratios.append(check.ratio)
        info.update(sup_survival=sups, ratio=ratios)
        assert all(b < a for a, b in zip(ratios, ratios[1:]))
        assert ratios[-1] < 1e-3


def test_criterion_11_determinism(tmp_path):
    with criterion(11) as info:
        runner = CliRunner()
        checked = 0
        for name in sorted(p.name for p in CONFIGS.glob("*.yaml")):
            blobs = []
            for i, threads in enumerate((1, 4, 4)):
                out = tmp_path / f"{name}-{i}"
                res = runner.invoke(main, ["run", "--config", str(CONFIGS / name), "--threads", str(threads),
                                           "--out-dir", str(out)])
                assert res.exit_code == 0, res.output
                blobs.append({p.name: p.read_bytes() for p in out.iterdir() if p.name != "manifest.json"})
            assert blobs[0] == blobs[1] == blobs[2], name
            checked += 1
        info["configs"] = checked
