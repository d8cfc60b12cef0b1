"""Data model and exact simulation of self-switching Markov chains.

A self-switching chain couples a location process ``X`` on a finite set with
a state process ``eta`` on a compact parameter space.  The location moves
under ``Q^(eta)``; whenever it sits in the target set it is reset to the
origin on the next step and a fresh state is drawn from ``mu``.

Randomness
----------
Every simulation consumes a single stream of uniforms from
``numpy.random.Generator(PCG64(SeedSequence(seed)))``.  Each trajectory
index consumes exactly one uniform, in index order: index 0 draws
``eta_0``, a reset index draws the new state, and every other index draws
the location move.  :func:`simulate_switches` consumes one uniform for the
cycle's state followed by one per step.  Replica ``i`` of a master seed uses
``SeedSequence(master, spawn_key=(i,))`` (see :func:`replica_seed`).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np
from scipy import stats
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components

from . import _walk

ROW_TOL = 1e-12
INVERSE_CDF_CELLS = 2**14

__all__ = [
    "SpecError",
    "ParamSpace",
    "StateDistribution",
    "DiscreteDistribution",
    "ContinuousDistribution",
    "discrete",
    "dirac",
    "uniform",
    "beta",
    "from_density",
    "ChainSpec",
    "ValidationReport",
    "validate",
    "Trajectory",
    "SwitchRecord",
    "SwitchBatch",
    "simulate_steps",
    "simulate_switches",
    "replica_seed",
]


class SpecError(ValueError):
    """A chain specification violates the model's structural assumptions."""


# ---------------------------------------------------------------------------
# parameter space and state distributions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ParamSpace:
    """Either a finite set of atoms or a closed interval."""

    low: float
    high: float
    atoms: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.atoms is not None:
            a = tuple(float(t) for t in self.atoms)
            if len(a) == 0 or list(a) != sorted(set(a)):
                raise ValueError("atoms must be distinct and sorted")
            object.__setattr__(self, "atoms", a)
        elif not self.low < self.high:
            raise ValueError("interval requires low < high")

    @classmethod
    def interval(cls, low: float = 0.0, high: float = 1.0) -> "ParamSpace":
        return cls(float(low), float(high))

    @classmethod
    def finite(cls, atoms: Sequence[float]) -> "ParamSpace":
        atoms = tuple(float(a) for a in atoms)
        return cls(min(atoms), max(atoms), atoms)

    def contains(self, theta: float) -> bool:
        if self.atoms is not None:
            return float(theta) in self.atoms
        return self.low <= theta <= self.high


class StateDistribution:
    """Sampling law ``mu`` of the state process."""

    is_discrete: bool

    @property
    def support_bounds(self) -> tuple[float, float]:
        """``(a*, b*)``: the smallest closed interval carrying all the mass."""
        raise NotImplementedError

    def ppf(self, u):
        """Inverse CDF, used to turn stream uniforms into states."""
        raise NotImplementedError


@dataclass(eq=False)
class DiscreteDistribution(StateDistribution):
    atoms: np.ndarray
    weights: np.ndarray
    is_discrete: bool = field(default=True, init=False)

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float).ravel()
        weights = np.asarray(self.weights, dtype=float).ravel()
        if atoms.shape != weights.shape or atoms.size == 0:
            raise ValueError("atoms and weights must be nonempty and aligned")
        if np.any(weights <= 0):
            raise ValueError("atom weights must be positive")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"atom weights sum to {weights.sum()!r}, not 1")
        order = np.argsort(atoms, kind="stable")
        atoms, weights = atoms[order], weights[order]
        if np.any(np.diff(atoms) == 0):
            raise ValueError("atoms must be distinct")
        self.atoms = atoms
        self.weights = weights
        self._cum = np.cumsum(weights)

    @property
    def support_bounds(self):
        return float(self.atoms[0]), float(self.atoms[-1])

    def ppf(self, u):
        idx = np.searchsorted(self._cum, np.asarray(u) * self._cum[-1], side="right")
        idx = np.minimum(idx, self.atoms.size - 1)
        return self.atoms[idx]

    def __repr__(self):
        pairs = ", ".join(f"{a:g}: {w:g}" for a, w in zip(self.atoms, self.weights))
        return f"DiscreteDistribution({{{pairs}}})"


@dataclass(eq=False)
class ContinuousDistribution(StateDistribution):
    """Density ``pdf`` on ``[low, high]`` with an inverse CDF.

    When ``inverse_cdf`` is not given, the CDF is tabulated on a
    ``2**14``-cell grid (5-point Gauss-Legendre per cell) and inverted by
    linear interpolation.
    """

    pdf: Callable[[np.ndarray], np.ndarray]
    low: float
    high: float
    inverse_cdf: Callable[[np.ndarray], np.ndarray] | None = None
    name: str = "density"
    is_discrete: bool = field(default=False, init=False)

    def __post_init__(self):
        self.low = float(self.low)
        self.high = float(self.high)
        if not self.low < self.high:
            raise ValueError("density support requires low < high")
        if self.inverse_cdf is None:
            grid, cdf = _tabulate_cdf(self.pdf, self.low, self.high, INVERSE_CDF_CELLS)
            if abs(cdf[-1] - 1.0) > 1e-8:
                raise ValueError(f"density integrates to {cdf[-1]!r}, not 1")
            cdf = cdf / cdf[-1]
            self._grid, self._cdf = grid, cdf
            self.inverse_cdf = lambda u: np.interp(u, cdf, grid)

    @property
    def support_bounds(self):
        return self.low, self.high

    def ppf(self, u):
        return np.clip(self.inverse_cdf(np.asarray(u, dtype=float)), self.low, self.high)

    def __repr__(self):
        return f"ContinuousDistribution({self.name} on [{self.low:g}, {self.high:g}])"


def _tabulate_cdf(pdf, low, high, cells):
    nodes, w = np.polynomial.legendre.leggauss(5)
    edges = np.linspace(low, high, cells + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    pts = mid[:, None] + half[:, None] * nodes[None, :]
    vals = np.asarray(pdf(pts.ravel()), dtype=float).reshape(pts.shape)
    if np.any(vals < 0):
        raise ValueError("density must be nonnegative")
    mass = (vals * w[None, :]).sum(axis=1) * half
    return edges, np.concatenate([[0.0], np.cumsum(mass)])


def discrete(atoms: Sequence[float], weights: Sequence[float] | None = None) -> DiscreteDistribution:
    atoms = np.asarray(atoms, dtype=float)
    if weights is None:
        weights = np.full(atoms.size, 1.0 / atoms.size)
    return DiscreteDistribution(atoms, np.asarray(weights, dtype=float))


def dirac(theta: float) -> DiscreteDistribution:
    return DiscreteDistribution(np.array([float(theta)]), np.array([1.0]))


def uniform(low: float, high: float) -> ContinuousDistribution:
    width = high - low
    return ContinuousDistribution(
        pdf=lambda t: np.where((np.asarray(t) >= low) & (np.asarray(t) <= high), 1.0 / width, 0.0),
        low=low,
        high=high,
        inverse_cdf=lambda u: low + width * u,
        name="uniform",
    )


def beta(a: float, b: float, low: float = 0.0, high: float = 1.0) -> ContinuousDistribution:
    """Beta(a, b) law affinely mapped onto ``[low, high]``."""
    law = stats.beta(a, b, loc=low, scale=high - low)
    return ContinuousDistribution(pdf=law.pdf, low=low, high=high, inverse_cdf=law.ppf, name=f"beta({a:g},{b:g})")


def from_density(pdf: Callable, low: float, high: float, name: str = "density") -> ContinuousDistribution:
    return ContinuousDistribution(pdf=pdf, low=low, high=high, name=name)


# ---------------------------------------------------------------------------
# chain specification
# ---------------------------------------------------------------------------

Bands = tuple[np.ndarray, np.ndarray, np.ndarray]


@dataclass(eq=False)
class ChainSpec:
    """Location space, transition family, origin and target set.

    ``transition(theta)`` returns the dense ``n_states x n_states`` matrix.
    Nearest-neighbour chains may also supply ``bands(theta)`` returning the
    ``(down, stay, up)`` probabilities of every state; solvers use the
    banded path when it is present.  ``labels`` maps indices to display
    positions (e.g. ``-N..N``).
    """

    n_states: int
    origin: int
    targets: frozenset
    transition: Callable[[float], np.ndarray]
    bands: Callable[[float], Bands] | None = None
    labels: np.ndarray | None = None
    space: ParamSpace = field(default_factory=ParamSpace.interval)
    name: str = "chain"

    def __post_init__(self):
        self.targets = frozenset(int(t) for t in self.targets)
        if self.labels is None:
            self.labels = np.arange(self.n_states)
        self.labels = np.asarray(self.labels)

    @property
    def target_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_states, dtype=np.bool_)
        mask[list(self.targets)] = True
        return mask

    def matrix(self, theta: float) -> np.ndarray:
        if self.bands is not None:
            return _bands_to_dense(*self.bands(theta))
        return np.asarray(self.transition(theta), dtype=float)


def _bands_to_dense(down, stay, up):
    n = down.shape[0]
    Q = np.diag(stay.astype(float))
    Q[np.arange(1, n), np.arange(n - 1)] = down[1:]
    Q[np.arange(n - 1), np.arange(1, n)] = up[:-1]
    return Q


@dataclass
class ValidationReport:
    """Outcome of :func:`validate`.

    ``violations`` are fatal and make ``ok`` false.  ``notes`` record
    reducible matrices under which the target set is still hit almost
    surely from the origin (e.g. the single-well walk at ``theta = 1``).
    """

    violations: list[tuple[float | None, str]] = field(default_factory=list)
    notes: list[tuple[float | None, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def reasons(self) -> list[str]:
        return [r for _, r in self.violations]

    def __str__(self):
        if self.ok:
            return "valid"
        return "; ".join(r if t is None else f"theta={t:g}: {r}" for t, r in self.violations)


def validate(spec: ChainSpec, thetas: Sequence[float]) -> ValidationReport:
    """Check stochasticity, irreducibility and ``origin not in targets``.

    Rows of target states are not inspected: the dynamics never use them.
    Irreducibility is judged on the location process, i.e. with an edge
    from every target back to the origin.
    """
    report = ValidationReport()
    thetas = list(np.atleast_1d(np.asarray(thetas, dtype=float)))
    if not thetas:
        raise ValueError("need at least one parameter value")
    n = spec.n_states
    if not 0 <= spec.origin < n:
        report.violations.append((None, f"origin {spec.origin} outside location space"))
        return report
    if not spec.targets or any(not 0 <= t < n for t in spec.targets):
        report.violations.append((None, "target set empty or outside location space"))
        return report
    if spec.origin in spec.targets:
        report.violations.append((None, "origin in target set"))
    for theta in thetas:
        if not spec.space.contains(theta):
            report.violations.append((theta, "parameter outside the parameter space"))
            continue
        for problem, fatal in _matrix_problems(spec, theta):
            (report.violations if fatal else report.notes).append((theta, problem))
    return report


def _matrix_problems(spec: ChainSpec, theta: float):
    Q = spec.matrix(theta)
    n = spec.n_states
    if Q.shape != (n, n):
        yield f"matrix shape {Q.shape} != ({n}, {n})", True
        return
    live = ~spec.target_mask
    if np.any(Q[live] < 0) or not np.all(np.isfinite(Q[live])):
        yield "negative or non-finite transition probability", True
        return
    sums = Q.sum(axis=1)
    for row in np.flatnonzero(live & (np.abs(sums - 1.0) > ROW_TOL)):
        yield f"row {row} not stochastic (sums to {sums[row]:.15g})", True
    adj = _support_graph(Q, spec)
    ncomp, _ = connected_components(adj, directed=True, connection="strong")
    if ncomp > 1:
        stuck = _states_not_reaching_targets(adj, spec)
        if stuck:
            yield f"targets unreachable from states {stuck}", True
        else:
            yield "not irreducible; targets are still hit almost surely", False


def _support_graph(Q, spec):
    A = (Q > 0).astype(np.int8)
    A[spec.target_mask] = 0
    A[list(spec.targets), spec.origin] = 1
    return csr_matrix(A)


def _states_not_reaching_targets(adj, spec):
    """Non-target states reachable from the origin that never reach T."""
    reach = set(breadth_first_order(adj, spec.origin, directed=True, return_predecessors=False).tolist())
    back = set()
    for t in spec.targets:
        back.update(breadth_first_order(adj.T.tocsr(), t, directed=True, return_predecessors=False).tolist())
    return sorted(int(spec.labels[x]) for x in reach - back - spec.targets)


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class Trajectory:
    """Path ``(X_0, eta_0), ..., (X_n, eta_n)`` of the coupled chain."""

    locations: np.ndarray
    states: np.ndarray
    switch_times: np.ndarray
    labels: np.ndarray

    @property
    def n(self) -> int:
        return self.locations.size - 1

    @property
    def positions(self) -> np.ndarray:
        return self.labels[self.locations]


@dataclass(frozen=True)
class SwitchRecord:
    theta: float
    tau: int
    exit_state: int


@dataclass(eq=False)
class SwitchBatch:
    """Renewal cycles ``(Theta_i, tau_i, X_{S_i})`` stored column-wise."""

    thetas: np.ndarray
    taus: np.ndarray
    exit_states: np.ndarray

    def __len__(self):
        return self.taus.size

    def __getitem__(self, i) -> SwitchRecord:
        return SwitchRecord(float(self.thetas[i]), int(self.taus[i]), int(self.exit_states[i]))

    def __iter__(self) -> Iterator[SwitchRecord]:
        return (self[i] for i in range(len(self)))


def replica_seed(master: int, replica: int) -> np.random.SeedSequence:
    """Seed of replica ``replica``; independent of how many replicas run."""
    return np.random.SeedSequence(int(master), spawn_key=(int(replica),))


def _seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(int(seed))


class _UniformStream:
    def __init__(self, seed, block: int = 1 << 16):
        self._gen = np.random.Generator(np.random.PCG64(_seed_sequence(seed)))
        self._block = block
        self.buf = self._gen.random(block)
        self.pos = 0

    def refill(self):
        self.buf = self._gen.random(self._block)
        self.pos = 0

    def next(self) -> float:
        if self.pos >= self.buf.size:
            self.refill()
        u = self.buf[self.pos]
        self.pos += 1
        return float(u)


class _Compiled:
    """Per-parameter CSR layout with row-wise cumulative probabilities."""

    __slots__ = ("indptr", "indices", "cum")

    def __init__(self, spec: ChainSpec, theta: float):
        Q = spec.matrix(theta)
        Q = Q.copy()
        live = ~spec.target_mask
        sums = Q.sum(axis=1)
        bad = np.flatnonzero(live & ((np.abs(sums - 1.0) > ROW_TOL) | np.any(Q < 0, axis=1)))
        if bad.size:
            raise SpecError(f"theta={theta:g}: row {bad[0]} not stochastic")
        stuck = _states_not_reaching_targets(_support_graph(Q, spec), spec)
        if stuck:
            raise SpecError(f"theta={theta:g}: targets unreachable from states {stuck}")
        # target rows are never used; give them a harmless self-loop
        Q[~live] = 0.0
        Q[~live, np.flatnonzero(~live)] = 1.0
        S = csr_matrix(Q)
        S.eliminate_zeros()
        data = S.data
        glob = np.cumsum(data)
        starts = S.indptr[:-1]
        offset = np.where(starts > 0, glob[np.maximum(starts - 1, 0)], 0.0)
        self.indptr = S.indptr.astype(np.int64)
        self.indices = S.indices.astype(np.int64)
        self.cum = glob - np.repeat(offset, np.diff(S.indptr))


class _Walker:
    def __init__(self, spec: ChainSpec, mu: StateDistribution):
        if spec.origin in spec.targets:
            raise SpecError("origin in target set")
        self.spec = spec
        self.mu = mu
        self.is_target = spec.target_mask
        self._cache: dict[float, _Compiled] = {}

    def compiled(self, theta: float) -> _Compiled:
        c = self._cache.get(theta)
        if c is None:
            c = _Compiled(self.spec, theta)
            if self.mu.is_discrete:
                self._cache[theta] = c
        return c

    def draw_theta(self, stream: _UniformStream) -> float:
        return float(self.mu.ppf(stream.next()))

    def run(self, stream, comp, x, max_steps, out, out_pos):
        """Walk until a target, or ``max_steps``; refills the stream as needed."""
        steps = 0
        while True:
            if stream.pos >= stream.buf.size:
                stream.refill()
            x, k, stream.pos, hit = _walk.walk(
                comp.indptr, comp.indices, comp.cum, self.is_target,
                x, stream.buf, stream.pos, max_steps - steps, out, out_pos + steps,
            )
            steps += k
            if hit or steps >= max_steps:
                return x, steps, hit


_NO_OUT = np.empty(0, dtype=np.int64)


def simulate_steps(spec: ChainSpec, mu: StateDistribution, n: int, seed) -> Trajectory:
    """Simulate ``n`` steps of the coupled chain from ``(origin, mu)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    walker = _Walker(spec, mu)
    stream = _UniformStream(seed)
    loc = np.empty(n + 1, dtype=np.int64)
    eta = np.empty(n + 1, dtype=float)
    switches = []
    x0 = spec.origin
    i = 0
    loc[0] = x0
    theta = walker.draw_theta(stream)
    eta[0] = theta
    while i < n:
        comp = walker.compiled(theta)
        _, steps, hit = walker.run(stream, comp, int(loc[i]), n - i, loc, i + 1)
        eta[i + 1:i + 1 + steps] = theta
        i += steps
        if hit:
            switches.append(i)
            if i < n:
                i += 1
                loc[i] = x0
                theta = walker.draw_theta(stream)
                eta[i] = theta
    return Trajectory(loc, eta, np.asarray(switches, dtype=np.int64), spec.labels)


def simulate_switches(spec: ChainSpec, mu: StateDistribution, k: int, seed) -> SwitchBatch:
    """Draw ``k`` independent renewal cycles.

    Each cycle samples ``Theta ~ mu`` and runs the location chain from the
    origin until it enters the target set; ``tau`` is that hitting time.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    walker = _Walker(spec, mu)
    stream = _UniformStream(seed)
    thetas = np.empty(k)
    taus = np.empty(k, dtype=np.int64)
    exits = np.empty(k, dtype=np.int64)
    big = np.iinfo(np.int64).max // 2
    for j in range(k):
        theta = walker.draw_theta(stream)
        x, steps, _ = walker.run(stream, walker.compiled(theta), spec.origin, big, _NO_OUT, 0)
        thetas[j], taus[j], exits[j] = theta, steps, x
    return SwitchBatch(thetas, taus, exits)
