"""Self-switching random walks in three drift landscapes.

``Flat``
    Gambler's ruin on ``[-N, N]``: right with probability ``theta`` everywhere.
``SingleWell``
    On ``[-N, N]``: right with probability ``theta`` on ``[1, N-1]`` and
    ``1 - theta`` on ``[-N+1, 0]``, so ``theta`` is the probability of
    stepping away from the origin.
``AlternatingWells``
    On ``[-2N, 2N]``: right with probability ``1 - theta`` on ``[-N, N]`` and
    ``theta`` on the outer blocks, giving wells at ``+-N``.

All three start at the origin and are absorbed at the two ends.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .core import ChainSpec, ParamSpace, _bands_to_dense
from .hitting import expected_hitting

NEAR_HALF = 1e-6

__all__ = [
    "DomainError",
    "Kind",
    "SserwModel",
    "ClosedForm",
    "AsymptoticProfile",
    "build_matrix",
    "chain_spec",
    "potential",
    "m_closed",
    "m_exact",
    "log_m",
    "asymptotic_profile",
]


class DomainError(ValueError):
    """Parameter outside the domain where the requested quantity is finite."""


class Kind(str, enum.Enum):
    FLAT = "Flat"
    SINGLE_WELL = "SingleWell"
    ALTERNATING_WELLS = "AlternatingWells"

    @classmethod
    def parse(cls, value) -> "Kind":
        if isinstance(value, cls):
            return value
        key = str(value).replace("-", "").replace("_", "").lower()
        aliases = {"flat": cls.FLAT, "singlewell": cls.SINGLE_WELL, "sw": cls.SINGLE_WELL,
                   "alternatingwells": cls.ALTERNATING_WELLS, "aw": cls.ALTERNATING_WELLS}
        if key not in aliases:
            raise ValueError(f"unknown model kind {value!r}")
        return aliases[key]


@dataclass(frozen=True)
class SserwModel:
    kind: Kind
    n: int

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind.parse(self.kind))
        if int(self.n) < 1:
            raise ValueError("N must be >= 1")
        object.__setattr__(self, "n", int(self.n))

    @property
    def half_width(self) -> int:
        return 2 * self.n if self.kind is Kind.ALTERNATING_WELLS else self.n

    @property
    def positions(self) -> np.ndarray:
        w = self.half_width
        return np.arange(-w, w + 1)

    @property
    def n_states(self) -> int:
        return 2 * self.half_width + 1

    @property
    def origin(self) -> int:
        """Index of position 0."""
        return self.half_width

    @property
    def targets(self) -> frozenset:
        return frozenset({0, self.n_states - 1})

    def index(self, position: int) -> int:
        return int(position) + self.half_width


def _right_uses_theta(model: SserwModel, x: np.ndarray) -> np.ndarray:
    """True where the step to the right has probability ``theta``."""
    N = model.n
    if model.kind is Kind.FLAT:
        return np.ones(x.shape, dtype=bool)
    if model.kind is Kind.SINGLE_WELL:
        return x >= 1
    return np.abs(x) > N


def _step_probabilities(model: SserwModel, theta: float):
    """Right/left probabilities at every position, target blocks included."""
    x = model.positions
    right = np.where(_right_uses_theta(model, x), theta, 1.0 - theta)
    left = np.where(_right_uses_theta(model, x), 1.0 - theta, theta)
    return left, right


def _bands(model: SserwModel, theta: float):
    if not 0.0 <= theta <= 1.0:
        raise DomainError(f"theta={theta!r} outside [0, 1]")
    down, up = _step_probabilities(model, float(theta))
    stay = np.zeros(model.n_states)
    for end in (0, model.n_states - 1):
        down[end] = up[end] = 0.0
        stay[end] = 1.0
    return down, stay, up


def build_matrix(model: SserwModel, theta: float) -> np.ndarray:
    """Dense transition matrix; the two target rows are self-loops."""
    return _bands_to_dense(*_bands(model, float(theta)))


def chain_spec(model: SserwModel) -> ChainSpec:
    return ChainSpec(
        n_states=model.n_states,
        origin=model.origin,
        targets=model.targets,
        transition=lambda theta: build_matrix(model, theta),
        bands=lambda theta: _bands(model, theta),
        labels=model.positions,
        space=ParamSpace.interval(0.0, 1.0),
        name=f"{model.kind.value}(N={model.n})",
    )


def potential(model: SserwModel, theta: float) -> tuple[np.ndarray, np.ndarray]:
    """Cumulative log-ratio of left to right step probabilities.

    ``V(0) = 0``; for positive ``n`` the increments at ``1..n`` are summed,
    for negative ``n`` the increments at ``n+1..0`` are subtracted.  Target
    states use the drift of the block they close.

    Returns ``(positions, V)``.
    """
    theta = float(theta)
    if not 0.0 < theta < 1.0:
        raise DomainError("potential needs theta in (0, 1): log of a zero probability")
    left, right = _step_probabilities(model, theta)
    inc = np.log(left) - np.log(right)
    w = model.half_width
    V = np.zeros(model.n_states)
    V[w + 1:] = np.cumsum(inc[w + 1:])
    # V(n) = -sum_{i=n+1}^{0} inc(i), built from the origin outward
    V[:w] = -np.cumsum(inc[1:w + 1][::-1])[::-1]
    return model.positions, V


class ClosedForm(NamedTuple):
    log_m: float
    m: float


def _log_ratio(theta):
    """``log((1 - theta) / theta)`` without cancellation near one half."""
    return np.log1p((1.0 - 2.0 * theta) / theta)


def _log_2sinh(y):
    return y + np.log1p(-np.exp(-2.0 * y))


def _log_m_offcenter(kind: Kind, N: int, theta: np.ndarray) -> np.ndarray:
    """Closed-form ``log m_N`` for ``theta`` in the open domain, ``theta != 1/2``."""
    L = _log_ratio(theta)
    eps = 1.0 - 2.0 * theta
    A = 2.0 * theta * (1.0 - theta) / eps**2
    if kind is Kind.FLAT:
        return math.log(N) - np.log(np.abs(eps)) + np.log(np.tanh(N * np.abs(L) / 2.0))
    if kind is Kind.SINGLE_WELL:
        out = np.empty_like(theta)
        NL = N * L
        direct = NL <= 600.0
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            m = A * np.expm1(NL) - N / eps
            # m = A e^{NL} (1 - q)
            q = np.exp(-NL) * (1.0 + N * eps / (2.0 * theta * (1.0 - theta)))
            big = np.log(A) + NL + np.log1p(-q)
        out[direct] = np.log(m[direct])
        out[~direct] = big[~direct]
        return out
    y = N * np.abs(L)
    near_w = np.where(theta < 0.5, 1.0 - theta, theta)
    far_w = 1.0 - near_w
    return (np.log(A) + np.log(-np.expm1(-y)) + _log_2sinh(y)
            - np.log(near_w + far_w * np.exp(-y)))


def log_m(model: SserwModel, theta) -> np.ndarray | float:
    """``log m_N(theta)``, vectorized over ``theta``.

    Exact at ``theta = 1/2``; within ``1e-6`` of it the banded linear solve
    replaces the closed form.  Raises :class:`DomainError` where ``m_N`` is
    infinite (single well at 0, alternating wells at 0 and 1).
    """
    scalar = np.ndim(theta) == 0
    t = np.atleast_1d(np.asarray(theta, dtype=float))
    if np.any((t < 0) | (t > 1)) or np.any(np.isnan(t)):
        raise DomainError("theta must lie in [0, 1]")
    kind, N = model.kind, model.n
    if kind is Kind.SINGLE_WELL and np.any(t == 0.0):
        raise DomainError("single well at theta=0 never leaves the origin's block: m is infinite")
    if kind is Kind.ALTERNATING_WELLS and np.any((t == 0.0) | (t == 1.0)):
        raise DomainError("alternating wells at theta in {0, 1} is trapped between the wells: m is infinite")
    out = np.empty_like(t)
    half = t == 0.5
    out[half] = math.log(float(N * N if kind is not Kind.ALTERNATING_WELLS else 4 * N * N))
    routed = (~half) & (np.abs(t - 0.5) < NEAR_HALF)
    if kind is Kind.FLAT:
        routed |= (t == 0.0) | (t == 1.0)
    if kind is Kind.SINGLE_WELL:
        one = t == 1.0
        out[one] = math.log(N)
    else:
        one = np.zeros_like(half)
    for i in np.flatnonzero(routed):
        out[i] = math.log(m_exact(model, t[i]))
    rest = ~(half | routed | one)
    if np.any(rest):
        out[rest] = _log_m_offcenter(kind, N, t[rest])
    return float(out[0]) if scalar else out


def m_closed(model: SserwModel, theta: float) -> ClosedForm:
    """Expected switching time from the closed form, with its logarithm.

    ``m`` is ``inf`` when it exceeds the float range; ``log_m`` is always
    finite on the domain.
    """
    theta = float(theta)
    lm = log_m(model, theta)
    if theta == 0.5:
        N = model.n
        return ClosedForm(lm, float(N * N if model.kind is not Kind.ALTERNATING_WELLS else 4 * N * N))
    if theta == 1.0 and model.kind is Kind.SINGLE_WELL:
        return ClosedForm(lm, float(model.n))
    m = math.exp(lm) if lm < 709.0 else math.inf
    return ClosedForm(lm, m)


def m_exact(model: SserwModel, theta: float) -> float:
    """``m_N(theta)`` from the absorbed linear system (the oracle)."""
    return expected_hitting(chain_spec(model), float(theta)).at_origin


# ---------------------------------------------------------------------------
# limits as N grows
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AsymptoticProfile:
    """Growth rate ``h_N = log(m_N) / N``, its limit and derivatives.

    ``m_bar`` with ``scaling`` describes ``m_N / a_N -> m_bar`` where that
    limit is finite (``None`` otherwise).  ``h_prime`` and ``h_second`` are
    taken on the side of 1/2 that contains their argument.
    """

    kind: Kind
    h: Callable
    h_prime: Callable
    h_second: Callable
    h_domain: tuple[float, float]
    m_bar: Callable | None
    m_bar_domain: tuple[float, float] | None
    scaling: Callable[[int], float] | None

    def h_N(self, N: int, theta):
        return log_m(SserwModel(self.kind, N), theta) / N


def _vec(f):
    def g(theta):
        t = np.asarray(theta, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = f(t)
        return float(r) if np.ndim(theta) == 0 else r
    return g


def asymptotic_profile(model: SserwModel | Kind | str) -> AsymptoticProfile:
    kind = model.kind if isinstance(model, SserwModel) else Kind.parse(model)
    if kind is Kind.FLAT:
        return AsymptoticProfile(
            kind=kind,
            h=_vec(lambda t: np.zeros_like(t)),
            h_prime=_vec(lambda t: np.zeros_like(t)),
            h_second=_vec(lambda t: np.zeros_like(t)),
            h_domain=(0.0, 1.0),
            m_bar=_vec(lambda t: 1.0 / np.abs(1.0 - 2.0 * t)),
            m_bar_domain=(0.0, 1.0),
            scaling=lambda N: float(N),
        )
    if kind is Kind.SINGLE_WELL:
        return AsymptoticProfile(
            kind=kind,
            h=_vec(lambda t: np.where(t < 0.5, np.log((1.0 - t) / t), 0.0)),
            h_prime=_vec(lambda t: np.where(t < 0.5, -1.0 / (t * (1.0 - t)), 0.0)),
            h_second=_vec(lambda t: np.where(t < 0.5, (1.0 - 2.0 * t) / (t * (1.0 - t)) ** 2, 0.0)),
            h_domain=(0.0, 1.0),
            m_bar=_vec(lambda t: np.where(t > 0.5, 1.0 / (2.0 * t - 1.0), np.inf)),
            m_bar_domain=(0.5, 1.0),
            scaling=lambda N: float(N),
        )
    return AsymptoticProfile(
        kind=kind,
        h=_vec(lambda t: np.abs(np.log((1.0 - t) / t))),
        h_prime=_vec(lambda t: np.sign(t - 0.5) / (t * (1.0 - t))),
        h_second=_vec(lambda t: np.sign(t - 0.5) * (1.0 / (1.0 - t) ** 2 - 1.0 / t**2)),
        h_domain=(0.0, 1.0),
        m_bar=None,
        m_bar_domain=None,
        scaling=None,
    )
