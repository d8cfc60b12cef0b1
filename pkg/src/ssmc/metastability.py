"""Limits of the scaled switching time ``tau_N / m_N(theta)``.

Two regimes are distinguished: convergence to an Exp(1) law (metastable
escape from a well) and concentration at 1 (cut-off).  Exact survival
curves come from :mod:`ssmc.hitting`; Monte Carlo samples from
:func:`ssmc.core.simulate_switches`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .core import dirac, simulate_switches
from .hitting import HittingDistribution, hitting_distribution, survival_at
from .sserw import Kind, SserwModel, chain_spec, m_closed

MC_BUDGET = 10**7
UNIT_STEPS = 200_000
GRID_POINTS = 200_000
HORIZON_MEANS = 30.0

__all__ = [
    "BudgetGuardError",
    "Source",
    "ScaledTimeSample",
    "LimitKind",
    "LimitVerdict",
    "VerdictRules",
    "FernandezCheck",
    "sample_scaled_times",
    "exact_scaled_times",
    "ks_to_exp1",
    "cutoff_coverage",
    "fernandez_check",
    "proof_threshold",
    "limit_verdict",
    "scaled_sample",
    "classify_ladder",
]


class BudgetGuardError(RuntimeError):
    """A Monte Carlo request would exceed the per-sample step budget."""


class Source(str, enum.Enum):
    MONTE_CARLO = "MonteCarlo"
    EXACT = "Exact"


@dataclass(eq=False)
class ScaledTimeSample:
    """Samples of ``tau / m`` or the exact law of it.

    For the exact source ``distribution`` holds the unscaled survival curve
    and ``values`` is empty.
    """

    kind: Kind
    theta: float
    n: int
    source: Source
    m: float
    values: np.ndarray = field(default_factory=lambda: np.empty(0))
    k: int | None = None
    seed: int | None = None
    distribution: HittingDistribution | None = None

    @property
    def truncated_mass(self) -> float:
        return self.distribution.truncated_mass if self.distribution is not None else 0.0

    def survival(self, x) -> np.ndarray:
        """``P(tau / m > x)``."""
        x = np.asarray(x, dtype=float)
        if self.source is Source.EXACT:
            return self.distribution.at(np.floor(x * self.m))
        v = np.sort(self.values)
        return 1.0 - np.searchsorted(v, x, side="right") / v.size

    def curve(self) -> tuple[np.ndarray, np.ndarray]:
        """``(t, survival)`` on the scaled grid (exact) or at the order statistics."""
        if self.source is Source.EXACT:
            return self.distribution.times / self.m, self.distribution.survival
        v = np.sort(self.values)
        return v, 1.0 - np.arange(1, v.size + 1) / v.size


def sample_scaled_times(model: SserwModel, theta: float, k: int, seed: int,
                        budget: float = MC_BUDGET) -> ScaledTimeSample:
    """``k`` Monte Carlo draws of ``tau_N / m_N(theta)`` started from ``delta_theta``.

    Raises :class:`BudgetGuardError` when ``m_N(theta)`` exceeds ``budget``
    steps; use :func:`exact_scaled_times` there.
    """
    m = m_closed(model, theta).m
    if not m <= budget:
        raise BudgetGuardError(
            f"m_N(theta) = {m:.3g} expected steps per sample exceeds the Monte Carlo budget "
            f"of {budget:.3g}; use the Exact source")
    batch = simulate_switches(chain_spec(model), dirac(theta), int(k), seed)
    return ScaledTimeSample(model.kind, float(theta), model.n, Source.MONTE_CARLO, m,
                            batch.taus / m, k=int(k), seed=int(seed))


def exact_scaled_times(model: SserwModel, theta: float, horizon_means: float = HORIZON_MEANS,
                       unit_steps: int = UNIT_STEPS, grid_points: int = GRID_POINTS) -> ScaledTimeSample:
    """Exact law of ``tau_N / m_N(theta)`` up to ``horizon_means`` means.

    The first ``unit_steps`` steps are resolved one by one; beyond that the
    curve is sampled on about ``grid_points`` equally spaced times.
    """
    m = m_closed(model, theta).m
    if not math.isfinite(m):
        raise BudgetGuardError(f"m_N(theta) overflows; the exact curve is out of reach (log m = "
                               f"{m_closed(model, theta).log_m:.6g})")
    horizon = int(math.ceil(horizon_means * m))
    prefix = min(horizon, int(unit_steps))
    stride = max(1, int(math.ceil((horizon - prefix) / grid_points)))
    dist = hitting_distribution(chain_spec(model), theta, horizon=horizon, stride=stride, prefix=prefix)
    return ScaledTimeSample(model.kind, float(theta), model.n, Source.EXACT, m, distribution=dist)


def _exact_ks(sample: ScaledTimeSample) -> tuple[float, float]:
    d = sample.distribution
    x = d.times / sample.m
    F = 1.0 - d.survival
    G = -np.expm1(-x)
    unit = np.diff(d.times) == 1
    # on a unit step F is flat, so the extremes sit at the two ends
    exact_step = np.maximum(np.abs(F[:-1] - G[:-1]), np.abs(F[:-1] - G[1:]))
    # on a longer gap F is only known to be monotone
    bound_step = np.maximum(F[1:] - G[:-1], G[1:] - F[:-1])
    point_step = np.abs(F[:-1] - G[:-1])
    tail = max(d.survival[-1], math.exp(-x[-1]))
    point = max(float(np.max(np.where(unit, exact_step, point_step))), abs(F[-1] - G[-1]), tail)
    upper = max(float(np.max(np.where(unit, exact_step, bound_step))), tail)
    return point + d.truncated_mass, upper + d.truncated_mass


def ks_to_exp1(sample: ScaledTimeSample, upper_bound: bool = False) -> float:
    """Kolmogorov-Smirnov distance between the scaled law and Exp(1).

    For the exact source the distance is exact on unit-step stretches of
    the curve and evaluated at grid points on strided stretches; the
    truncated mass is added.  ``upper_bound=True`` instead returns a
    rigorous bound that covers the unresolved gaps.
    """
    if sample.source is Source.EXACT:
        point, upper = _exact_ks(sample)
        return min(1.0, upper if upper_bound else point)
    if sample.values.size < 100:
        raise ValueError("need at least 100 samples")
    return float(stats.kstest(sample.values, "expon").statistic)


def cutoff_coverage(sample: ScaledTimeSample, c1: float, c2: float) -> float:
    """Probability (or sample fraction) that ``tau / m`` lies in ``(c1, c2)``."""
    if not 0 < c1 < 1 < c2:
        raise ValueError("need 0 < c1 < 1 < c2")
    if sample.source is Source.EXACT:
        # P(c1 m < tau < c2 m) = S(floor(c1 m)) - S(ceil(c2 m) - 1)
        lo = math.floor(c1 * sample.m)
        hi = math.ceil(c2 * sample.m) - 1
        s = sample.distribution.at([lo, hi])
        return float(max(0.0, s[0] - s[1]))
    v = sample.values
    return float(np.mean((v > c1) & (v < c2)))


@dataclass(frozen=True)
class FernandezCheck:
    """The two quantities in the hypothesis of the escape-time criterion."""

    sup_survival: float
    ratio: float
    threshold: float
    m: float


def fernandez_check(model: SserwModel, theta: float, R: float) -> FernandezCheck:
    """``sup_x P_x(min(tau_T, tau_origin) > R)`` and ``R / m_N(theta)``.

    The supremum runs over starts outside the target set and the origin;
    survival is computed exactly with one matrix power.
    """
    if R < 1:
        raise ValueError("R must be >= 1")
    spec = chain_spec(model)
    absorbers = set(spec.targets) | {spec.origin}
    _, s = survival_at(spec, theta, absorbers, int(math.floor(R)))
    cf = m_closed(model, theta)
    ratio = math.exp(math.log(R) - cf.log_m)
    return FernandezCheck(float(s.max()) if s.size else 0.0, ratio, float(R), cf.m)


def proof_threshold(model: SserwModel, theta: float, eps: float = 0.5) -> float:
    """Threshold ``R_N`` used in the escape-time proofs of the two well models."""
    N = model.n
    if model.kind is Kind.SINGLE_WELL:
        return ((N - 1) / (1 - 2 * theta)) ** (1 + eps)
    if model.kind is Kind.ALTERNATING_WELLS:
        return (N / abs(2 * theta - 1)) ** (1 + eps)
    raise ValueError("the flat model has no metastable regime")


class LimitKind(str, enum.Enum):
    EXP_ONE = "ExpOne"
    CUT_OFF = "CutOff"
    NEITHER = "Neither"


@dataclass(frozen=True)
class VerdictRules:
    """Finite-ladder proxies: Exp(1) if KS ends below ``ks_max`` and strictly
    decreases; cut-off if coverage of ``(c1, c2)`` ends above
    ``coverage_min`` and increases."""

    ks_max: float = 0.1
    coverage_min: float = 0.95
    c1: float = 0.9
    c2: float = 1.1


@dataclass(eq=False)
class LimitVerdict:
    kind: LimitKind
    N_grid: np.ndarray
    ks: np.ndarray
    coverage: np.ndarray
    c1: float
    c2: float
    source: Source
    ks_upper: np.ndarray | None = None

    def to_dict(self) -> dict:
        out = {"kind": self.kind.value, "N_grid": self.N_grid.tolist(), "ks": self.ks.tolist(),
               "coverage": self.coverage.tolist(), "c1": self.c1, "c2": self.c2, "source": self.source.value}
        if self.ks_upper is not None:
            out["ks_upper"] = self.ks_upper.tolist()
        return out


def scaled_sample(model: SserwModel, theta: float, source: Source | str = Source.EXACT,
                  k: int = 10_000, seed: int = 0, budget: float = MC_BUDGET) -> ScaledTimeSample:
    """Exact law or ``k`` Monte Carlo draws of ``tau_N / m_N(theta)``."""
    if Source(source) is Source.EXACT:
        return exact_scaled_times(model, theta)
    return sample_scaled_times(model, theta, k, seed, budget)


def classify_ladder(ks, coverage, rules: VerdictRules | None = None) -> LimitKind:
    """Apply the finite-ladder rules to KS and coverage sequences."""
    rules = rules or VerdictRules()
    ks, coverage = np.asarray(ks, dtype=float), np.asarray(coverage, dtype=float)
    if ks[-1] < rules.ks_max and np.all(np.diff(ks) < 0):
        return LimitKind.EXP_ONE
    if coverage[-1] > rules.coverage_min and np.all(np.diff(coverage) > 0):
        return LimitKind.CUT_OFF
    return LimitKind.NEITHER


def limit_verdict(kind, theta: float, N_grid: Sequence[int], source: Source | str = Source.EXACT,
                  k: int = 10_000, seed: int = 0, rules: VerdictRules | None = None,
                  budget: float = MC_BUDGET) -> LimitVerdict:
    """Classify the scaled switching time along a ladder of sizes."""
    rules = rules or VerdictRules()
    source = Source(source)
    Ns = np.asarray(list(N_grid), dtype=int)
    ks, cov, up = [], [], []
    for N in Ns:
        sample = scaled_sample(SserwModel(kind, int(N)), theta, source, k, seed, budget)
        if source is Source.EXACT:
            up.append(ks_to_exp1(sample, upper_bound=True))
        ks.append(ks_to_exp1(sample))
        cov.append(cutoff_coverage(sample, rules.c1, rules.c2))
    ks, cov = np.array(ks), np.array(cov)
    return LimitVerdict(classify_ladder(ks, cov, rules), Ns, ks, cov, rules.c1, rules.c2, source,
                        np.array(up) if source is Source.EXACT else None)
