"""Occupation measures of the state process.

The empirical measure counts the time the state process spends in each bin.
Its almost-sure limit weights ``mu`` by the expected cycle length:
``P(A) = E_mu[1_A m] / E_mu[m]``.
"""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, field

import numpy as np

from ._quad import QuadratureError, grid_shift, log_sum, log_weights, shifted_integral
from .core import DiscreteDistribution, StateDistribution, SwitchBatch, SwitchRecord, Trajectory

DEFAULT_BINS = 64
MASS_TOL = 1e-9

__all__ = [
    "AccountingError",
    "BudgetError",
    "DivergenceError",
    "Binning",
    "MeasureKind",
    "OccupationMeasure",
    "RenewalEstimate",
    "empirical_occupation",
    "renewal_occupation",
    "records_from_trajectory",
    "limiting_occupation",
    "tv_distance",
]


class AccountingError(ValueError):
    """A state fell outside every bin."""


class BudgetError(ValueError):
    """The supplied cycles do not cover the requested time budget."""


class DivergenceError(ArithmeticError):
    """``E_mu[m]`` is numerically infinite; use a dominance analysis instead."""


@dataclass(frozen=True, eq=False)
class Binning:
    """Atoms of a discrete law, or uniform bins ``[edges[j], edges[j+1])``."""

    atoms: np.ndarray | None = None
    edges: np.ndarray | None = None

    def __post_init__(self):
        if (self.atoms is None) == (self.edges is None):
            raise ValueError("give exactly one of atoms or edges")

    @classmethod
    def from_atoms(cls, atoms) -> "Binning":
        return cls(atoms=np.sort(np.asarray(atoms, dtype=float)))

    @classmethod
    def uniform(cls, low: float, high: float, n_bins: int = DEFAULT_BINS) -> "Binning":
        return cls(edges=np.linspace(float(low), float(high), int(n_bins) + 1))

    @classmethod
    def for_mu(cls, mu: StateDistribution, n_bins: int = DEFAULT_BINS) -> "Binning":
        if isinstance(mu, DiscreteDistribution):
            return cls.from_atoms(mu.atoms)
        return cls.uniform(*mu.support_bounds, n_bins)

    @property
    def is_atomic(self) -> bool:
        return self.atoms is not None

    @property
    def size(self) -> int:
        return self.atoms.size if self.is_atomic else self.edges.size - 1

    @property
    def left(self) -> np.ndarray:
        return self.atoms if self.is_atomic else self.edges[:-1]

    @property
    def right(self) -> np.ndarray:
        return self.atoms if self.is_atomic else self.edges[1:]

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.left + self.right)

    def same_as(self, other: "Binning") -> bool:
        if self.is_atomic != other.is_atomic:
            return False
        a, b = (self.atoms, other.atoms) if self.is_atomic else (self.edges, other.edges)
        return a.shape == b.shape and bool(np.all(a == b))

    def assign(self, values) -> np.ndarray:
        """Bin index of every value; the last uniform bin is closed on the right."""
        v = np.asarray(values, dtype=float)
        if self.is_atomic:
            idx = np.searchsorted(self.atoms, v)
            idx = np.minimum(idx, self.atoms.size - 1)
            bad = self.atoms[idx] != v
        else:
            idx = np.searchsorted(self.edges, v, side="right") - 1
            idx = np.where(v == self.edges[-1], self.size - 1, idx)
            bad = (idx < 0) | (idx >= self.size)
        if np.any(bad):
            raise AccountingError(f"state {v[bad][0]!r} outside the binning")
        return idx


class MeasureKind(str, enum.Enum):
    EMPIRICAL = "Empirical"
    LIMITING = "Limiting"
    ASYMPTOTIC = "Asymptotic"


@dataclass(eq=False)
class OccupationMeasure:
    """Bin masses summing to one.

    ``centroids`` locate each bin's mass (the atoms for atomic binnings, the
    conditional mean for quadrature-based measures); they default to the
    bin centers.  ``index`` is ``n`` for empirical and ``N`` for limiting
    measures.
    """

    binning: Binning
    masses: np.ndarray
    kind: MeasureKind
    index: int | None = None
    centroids: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.masses = np.asarray(self.masses, dtype=float)
        if self.masses.shape != (self.binning.size,):
            raise ValueError("one mass per bin required")
        if np.any(self.masses < 0) or abs(self.masses.sum() - 1.0) > MASS_TOL:
            raise ValueError(f"masses must be nonnegative and sum to 1 (sum={self.masses.sum()!r})")
        if self.centroids is None:
            self.centroids = self.binning.centers.copy()

    def mass_at(self, theta: float) -> float:
        return float(self.masses[self.binning.assign([theta])[0]])

    def mass_between(self, low: float, high: float) -> float:
        """Total mass of the bins contained in ``[low, high]``."""
        inside = (self.binning.left >= low - 1e-12) & (self.binning.right <= high + 1e-12)
        return float(self.masses[inside].sum())

    def rows(self):
        atoms = self.binning.atoms if self.binning.is_atomic else None
        for j in range(self.binning.size):
            yield (self.binning.left[j], self.binning.right[j],
                   atoms[j] if atoms is not None else None, self.masses[j])

    def to_csv(self, path_or_buf=None) -> str | None:
        """Columns ``bin_left, bin_right, atom, mass``; ``atom`` is empty for intervals."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bin_left", "bin_right", "atom", "mass"])
        for left, right, atom, mass in self.rows():
            w.writerow(["%.17e" % left, "%.17e" % right, "" if atom is None else "%.17e" % atom, "%.17e" % mass])
        text = buf.getvalue()
        if path_or_buf is None:
            return text
        if hasattr(path_or_buf, "write"):
            path_or_buf.write(text)
        else:
            with open(path_or_buf, "w", newline="") as fh:
                fh.write(text)
        return None


def empirical_occupation(trajectory: Trajectory, binning: Binning) -> OccupationMeasure:
    """Fraction of indices ``k = 1..n`` whose state falls in each bin."""
    states = trajectory.states[1:]
    idx = binning.assign(states)
    counts = np.bincount(idx, minlength=binning.size)
    return OccupationMeasure(binning, counts / states.size, MeasureKind.EMPIRICAL, index=int(states.size))


@dataclass(eq=False)
class RenewalEstimate:
    """Cycle-weighted bin masses over the first ``n`` steps.

    ``weighted_masses`` holds the complete cycles, ``remainder_mass`` the
    partial cycle running at time ``n`` (attributed to ``remainder_bin``).
    ``lower`` and ``upper`` bracket the occupation measure by normalizing
    with ``M_n + 1`` and ``M_n`` complete cycles respectively.
    """

    cycle_count: int
    weighted_masses: np.ndarray
    remainder_mass: float
    remainder_bin: int | None
    lower: np.ndarray
    upper: np.ndarray
    binning: Binning

    def measure(self) -> OccupationMeasure:
        masses = self.weighted_masses.copy()
        if self.remainder_bin is not None:
            masses[self.remainder_bin] += self.remainder_mass
        return OccupationMeasure(self.binning, masses, MeasureKind.EMPIRICAL, index=None)


def _as_columns(records):
    if isinstance(records, SwitchBatch):
        return np.asarray(records.thetas, dtype=float), np.asarray(records.taus, dtype=np.int64)
    records = list(records)
    thetas = np.array([r.theta if isinstance(r, SwitchRecord) else r[0] for r in records], dtype=float)
    taus = np.array([r.tau if isinstance(r, SwitchRecord) else r[1] for r in records], dtype=np.int64)
    return thetas, taus


def renewal_occupation(records, n: int, binning: Binning) -> RenewalEstimate:
    """Occupation over ``n`` steps rebuilt from consecutive renewal cycles.

    ``records`` is a :class:`~ssmc.core.SwitchBatch` or a sequence of
    :class:`~ssmc.core.SwitchRecord` / ``(theta, tau)`` pairs.
    """
    thetas, taus = _as_columns(records)
    n = int(n)
    if n < 1:
        raise ValueError("n must be >= 1")
    if np.any(taus < 1):
        raise ValueError("cycle lengths must be >= 1")
    ends = np.cumsum(taus)
    if ends.size == 0 or ends[-1] < n:
        raise BudgetError(f"records cover {int(ends[-1]) if ends.size else 0} steps, need {n}")
    M = int(np.searchsorted(ends, n, side="right"))
    idx = binning.assign(thetas)
    complete = np.bincount(idx[:M], weights=taus[:M].astype(float), minlength=binning.size)
    covered = int(ends[M - 1]) if M else 0
    rem = (n - covered) / n
    rem_bin = int(idx[M]) if n > covered else None
    through_next = complete.copy()
    if M < taus.size:
        through_next[idx[M]] += taus[M]
        total_next = covered + int(taus[M])
    else:
        total_next = covered
    lower = complete / total_next
    upper = through_next / covered if covered else np.full(binning.size, np.inf)
    return RenewalEstimate(M, complete / n, rem, rem_bin, lower, upper, binning)


def records_from_trajectory(trajectory: Trajectory) -> list[SwitchRecord]:
    """Cycles ``(eta at S_i, S_i - S_{i-1}, X_{S_i})`` of a trajectory.

    A trailing partial cycle is included with its length up to ``n`` and
    exit state ``-1``.
    """
    out = []
    prev = 0
    for s in trajectory.switch_times:
        out.append(SwitchRecord(float(trajectory.states[s]), int(s - prev), int(trajectory.locations[s])))
        prev = int(s)
    if prev < trajectory.n:
        out.append(SwitchRecord(float(trajectory.states[trajectory.n]), trajectory.n - prev, -1))
    return out


def limiting_occupation(mu: StateDistribution, m_eval=None, binning: Binning | None = None, *,
                        log_m_eval=None, index: int | None = None,
                        kind: MeasureKind = MeasureKind.LIMITING) -> OccupationMeasure:
    """``E_mu[1_bin m] / E_mu[m]`` for every bin.

    Give either ``m_eval`` or ``log_m_eval``; the latter keeps exponentially
    large expectations in range.  Continuous laws are integrated per bin by
    adaptive quadrature at relative tolerance 1e-8 in the shifted log
    domain.  Raises :class:`DivergenceError` when ``E_mu[m]`` is not finite.
    """
    if (m_eval is None) == (log_m_eval is None):
        raise ValueError("give exactly one of m_eval or log_m_eval")
    if log_m_eval is None:
        def log_m_eval(t, _m=m_eval):
            with np.errstate(divide="ignore"):
                return np.log(np.asarray(_m(t), dtype=float))
    if binning is None:
        binning = Binning.for_mu(mu)
    if isinstance(mu, DiscreteDistribution):
        lm = log_weights(log_m_eval, mu.atoms)
        if not np.all(np.isfinite(lm)):
            raise DivergenceError("m is not finite at some atom")
        _, w = log_sum(lm, mu.weights)
        idx = binning.assign(mu.atoms)
        masses = np.bincount(idx, weights=w, minlength=binning.size)
        cw = np.bincount(idx, weights=w * mu.atoms, minlength=binning.size)
        total = masses.sum()
        with np.errstate(invalid="ignore"):
            centroids = np.where(masses > 0, cw / np.where(masses > 0, masses, 1.0), binning.centers)
        return OccupationMeasure(binning, masses / total, kind, index=index, centroids=centroids)
    if binning.is_atomic:
        raise ValueError("continuous laws need an interval binning")
    low, high = mu.support_bounds
    try:
        shift = grid_shift(log_m_eval, low, high)
        masses = np.empty(binning.size)
        first = np.empty(binning.size)
        # overlaps narrower than this are edge rounding, not support
        sliver = 1e-12 * (high - low)
        for j in range(binning.size):
            a, b = max(binning.left[j], low), min(binning.right[j], high)
            if b - a <= sliver:
                masses[j] = first[j] = 0.0
                continue
            masses[j] = shifted_integral(log_m_eval, mu.pdf, a, b, shift)
            first[j] = shifted_integral(log_m_eval, mu.pdf, a, b, shift, f=lambda t: t) if masses[j] > 0 else 0.0
    except QuadratureError as exc:
        raise DivergenceError(f"E_mu[m] could not be integrated: {exc}") from exc
    total = masses.sum()
    if not np.isfinite(total) or total <= 0:
        raise DivergenceError("E_mu[m] is not a positive finite number")
    centroids = np.where(masses > 0, first / np.where(masses > 0, masses, 1.0), binning.centers)
    return OccupationMeasure(binning, masses / total, kind, index=index, centroids=centroids,
                             meta={"log_shift": shift, "log_normalizer": shift + float(np.log(total))})


def tv_distance(p: OccupationMeasure, q: OccupationMeasure) -> float:
    """Total variation ``sum |p - q| / 2`` on a shared binning."""
    if not p.binning.same_as(q.binning):
        raise ValueError("measures must share a binning")
    return 0.5 * float(np.abs(p.masses - q.masses).sum())
