"""Exact hitting-time expectations and survival curves at a fixed parameter.

This module is the ground truth for the closed forms in :mod:`ssmc.sserw`
and for the Monte Carlo paths in :mod:`ssmc.core`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from . import _walk
from .core import ChainSpec, _states_not_reaching_targets, _support_graph

DENSE_LIMIT = 2048
HORIZON_CAP = 10**8
RESIDUAL_TOL = 1e-10

__all__ = [
    "HittingError",
    "HittingSolution",
    "HittingDistribution",
    "SurvivalCurves",
    "expected_hitting",
    "hitting_distribution",
    "min_hitting_survival",
    "survival_at",
]


class HittingError(ArithmeticError):
    """The absorbed linear system is singular or failed its residual check."""


@dataclass(eq=False)
class HittingSolution:
    """``E_x[tau_T]`` for every non-target state ``x``."""

    states: np.ndarray
    expectations: np.ndarray
    at_origin: float
    residual: float

    def at(self, x: int) -> float:
        i = np.searchsorted(self.states, x)
        if i >= self.states.size or self.states[i] != x:
            return 0.0
        return float(self.expectations[i])


@dataclass(eq=False)
class HittingDistribution:
    """Survival function ``S(t) = P(tau > t)`` on an increasing grid of times.

    The grid is ``0, 1, ..., prefix`` followed by steps of ``stride`` up to
    ``horizon``.  Between strided grid points only monotonicity is known.
    """

    times: np.ndarray
    survival: np.ndarray
    stride: int
    prefix: int

    @property
    def horizon(self) -> int:
        return int(self.times[-1])

    @property
    def truncated_mass(self) -> float:
        return float(self.survival[-1])

    def partial_mean(self) -> tuple[float, float]:
        """Bounds on ``sum_{t < horizon} S(t)``; equal on a unit-step grid."""
        gaps = np.diff(self.times).astype(float)
        upper = math.fsum(gaps * self.survival[:-1])
        # the first step of each gap is known exactly, the rest only bounded below
        lower = math.fsum(self.survival[:-1] + (gaps - 1.0) * self.survival[1:])
        return lower, upper

    def mean_estimate(self) -> float:
        """``E[tau]`` from the curve plus a geometric tail beyond the horizon."""
        lo, hi = self.partial_mean()
        body = 0.5 * (lo + hi)
        sH = self.survival[-1]
        if sH <= 0 or self.survival.size < 3:
            return body
        # two grid steps back, so period-2 chains give a clean ratio
        span = float(self.times[-1] - self.times[-3])
        prev = self.survival[-3]
        rate = (sH / prev) ** (1.0 / span) if prev > 0 else 0.0
        return body + (sH / (1.0 - rate) if rate < 1.0 else math.inf)

    def at(self, t) -> np.ndarray:
        """``S(t)`` at grid points; between strided points the left value (an upper bound)."""
        idx = np.searchsorted(self.times, np.asarray(t), side="right") - 1
        return self.survival[np.clip(idx, 0, self.times.size - 1)]


@dataclass(eq=False)
class SurvivalCurves:
    """``S_x(t) = P_x(tau_{T u extra} > t)`` for every non-absorbed start ``x``."""

    starts: np.ndarray
    curves: np.ndarray  # shape (horizon + 1, len(starts))

    @property
    def sup(self) -> np.ndarray:
        if self.starts.size == 0:
            return np.zeros(self.curves.shape[0])
        return self.curves.max(axis=1)


def _interior_birth_death(spec: ChainSpec) -> bool:
    return spec.bands is not None and spec.targets == {0, spec.n_states - 1}


def _restricted(spec: ChainSpec, theta: float, absorbers: frozenset):
    keep = np.array([x for x in range(spec.n_states) if x not in absorbers], dtype=np.int64)
    if spec.n_states <= DENSE_LIMIT:
        Q = spec.matrix(theta)
        return keep, Q[np.ix_(keep, keep)]
    Q = scipy.sparse.csr_matrix(spec.matrix(theta))
    return keep, Q[keep][:, keep]


def expected_hitting(spec: ChainSpec, theta: float) -> HittingSolution:
    """Solve ``(I - Q_R) m = 1`` on the non-target states.

    Birth-death specs absorbed at both ends use a subtraction-free
    tridiagonal elimination; everything else goes through LU (dense up to
    2048 states, sparse beyond).
    """
    theta = float(theta)
    if _interior_birth_death(spec):
        down, _, up = spec.bands(theta)
        m = _walk.birth_death_solve(np.ascontiguousarray(down[1:-1], dtype=float),
                                    np.ascontiguousarray(up[1:-1], dtype=float))
        if m.size == 0:
            stuck = _states_not_reaching_targets(_support_graph(spec.matrix(theta), spec), spec)
            raise HittingError(f"theta={theta:g}: targets unreachable from states {stuck}")
        states = np.arange(1, spec.n_states - 1)
        r = m - 1.0 - down[1:-1] * np.concatenate([[0.0], m[:-1]]) - up[1:-1] * np.concatenate([m[1:], [0.0]])
        r -= (1.0 - down[1:-1] - up[1:-1]) * m
    else:
        stuck = _states_not_reaching_targets(_support_graph(spec.matrix(theta), spec), spec)
        if stuck:
            raise HittingError(f"theta={theta:g}: targets unreachable from states {stuck}")
        states, QR = _restricted(spec, theta, spec.targets)
        ones = np.ones(states.size)
        try:
            if scipy.sparse.issparse(QR):
                A = scipy.sparse.identity(states.size, format="csc") - QR.tocsc()
                m = scipy.sparse.linalg.spsolve(A, ones)
                r = A @ m - ones
            else:
                A = np.eye(states.size) - QR
                m = scipy.linalg.lu_solve(scipy.linalg.lu_factor(A), ones)
                r = A @ m - ones
        except (np.linalg.LinAlgError, RuntimeError) as exc:  # pragma: no cover
            raise HittingError(f"theta={theta:g}: singular absorbed system") from exc
    norm = float(np.max(np.abs(m)))
    res = float(np.max(np.abs(r))) if r.size else 0.0
    if not np.all(np.isfinite(m)) or res > RESIDUAL_TOL * max(norm, 1.0):
        raise HittingError(f"theta={theta:g}: residual {res:.3g} exceeds tolerance")
    origin = int(np.searchsorted(states, spec.origin))
    return HittingSolution(states, m, float(m[origin]), res)


def _leaky_kernel(spec: ChainSpec, theta: float):
    """Live states, the live-to-live block and the one-step leak into the targets."""
    Q = spec.matrix(theta)
    states = np.array([x for x in range(spec.n_states) if x not in spec.targets], dtype=np.int64)
    L = np.ascontiguousarray(Q[np.ix_(states, states)])
    leak = np.ascontiguousarray(Q[np.ix_(states, sorted(spec.targets))].sum(axis=1))
    return states, L, leak


def _matrix_power(P, k: int):
    if scipy.sparse.issparse(P):
        P = P.toarray()
    return np.linalg.matrix_power(P, int(k))


def hitting_distribution(spec: ChainSpec, theta: float, horizon: int | None = None,
                         stride: int = 1, prefix: int | None = None) -> HittingDistribution:
    """Iterate the substochastic restriction of ``Q^(theta)`` from the origin.

    The first ``prefix`` steps (default: all of them when ``stride == 1``,
    none otherwise) are taken one at a time; the rest in jumps of
    ``stride`` using the ``stride``-th matrix power.  The horizon is rounded
    up to the grid.  The default horizon is ``20 m(theta)`` capped at 1e8.
    """
    if horizon is None:
        m = expected_hitting(spec, theta).at_origin
        horizon = int(min(math.ceil(20 * m), HORIZON_CAP))
    horizon = int(horizon)
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    stride = max(1, int(stride))
    if prefix is None:
        prefix = horizon if stride == 1 else 0
    prefix = min(int(prefix), horizon)
    n_tail = -(-(horizon - prefix) // stride)
    states, L, leak = _leaky_kernel(spec, theta)
    surv = np.empty(prefix + n_tail + 1)
    surv[0] = 1.0
    gone = 0.0
    if spec.bands is not None:
        down, stay, up = (np.ascontiguousarray(b, dtype=float) for b in spec.bands(theta))
        v = np.zeros(spec.n_states)
        v[spec.origin] = 1.0
        gone = _walk.banded_survival(down, stay, up, spec.target_mask, v, gone, prefix, surv[1:prefix + 1])
        v = v[states]
    else:
        v = (states == spec.origin).astype(float)
        gone = _walk.leaky_survival(L, leak, v, gone, prefix, surv[1:prefix + 1])
    if n_tail:
        Ls, leak_s = _walk.leaky_power(L, leak, stride)
        _walk.leaky_survival(Ls, leak_s, v, gone, n_tail, surv[prefix + 1:])
    # rounding can leave ties a few ulps out of order
    np.minimum.accumulate(surv, out=surv)
    times = np.concatenate([np.arange(prefix + 1), prefix + stride * np.arange(1, n_tail + 1)]).astype(np.int64)
    return HittingDistribution(times, surv, stride, prefix)


def min_hitting_survival(spec: ChainSpec, theta: float, extra_absorbers=(), horizon: int = 1) -> SurvivalCurves:
    """Survival of ``min(tau_T, tau_A)`` from every start, ``t = 0..horizon``.

    Starts inside ``T u A`` are absorbed at time 0 and are not reported.
    """
    absorbers = frozenset(spec.targets) | frozenset(int(a) for a in extra_absorbers)
    starts, P = _restricted(spec, theta, absorbers)
    u = np.ones(starts.size)
    curves = np.empty((int(horizon) + 1, starts.size))
    curves[0] = u
    for t in range(1, int(horizon) + 1):
        u = P @ u
        curves[t] = u
    return SurvivalCurves(starts, curves)


def survival_at(spec: ChainSpec, theta: float, absorbers, t: int) -> tuple[np.ndarray, np.ndarray]:
    """``(starts, P_x(tau_absorbers > t))`` via a single matrix power."""
    starts, P = _restricted(spec, theta, frozenset(int(a) for a in absorbers))
    u = _matrix_power(P, int(t)) @ np.ones(starts.size)
    return starts, u
