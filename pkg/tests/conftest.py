"""Shared oracles.

The walk matrices here are rebuilt from the transition rules alone,
without going through :mod:`ssmc.sserw`, so they serve as an independent
route for closed-form and solver checks.
"""

from fractions import Fraction

import numpy as np
import pytest


def right_probability(kind: str, N: int, x: int, theta: float) -> float:
    """P(x -> x + 1) for the three walks."""
    if kind == "Flat":
        return theta
    if kind == "SingleWell":
        return theta if x >= 1 else 1.0 - theta
    if kind == "AlternatingWells":
        return theta if abs(x) > N else 1.0 - theta
    raise ValueError(kind)


def oracle_matrix(kind: str, N: int, theta: float):
    """Dense transition matrix on positions ``-W..W`` and the position array."""
    W = 2 * N if kind == "AlternatingWells" else N
    pos = np.arange(-W, W + 1)
    n = pos.size
    Q = np.zeros((n, n))
    for i, x in enumerate(pos):
        if i in (0, n - 1):
            Q[i, i] = 1.0
            continue
        p = right_probability(kind, N, x, theta)
        Q[i, i + 1] = p
        Q[i, i - 1] = 1.0 - p
    return Q, pos


def oracle_m(kind: str, N: int, theta: float) -> float:
    """Expected time from 0 to the ends, by a dense solve of (I - Q) m = 1."""
    Q, pos = oracle_matrix(kind, N, theta)
    inner = slice(1, pos.size - 1)
    A = np.eye(pos.size - 2) - Q[inner, inner]
    m = np.linalg.solve(A, np.ones(pos.size - 2))
    return float(m[np.flatnonzero(pos[inner] == 0)[0]])


@pytest.fixture
def tmp_cwd(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def oracle_m_rational(kind: str, N: int, theta: float) -> float:
    """Same quantity in exact rational arithmetic (tridiagonal elimination).

    Immune to the conditioning loss of the float solve when ``m`` is large.
    """
    t = Fraction(theta)
    W = 2 * N if kind == "AlternatingWells" else N
    xs = list(range(-W + 1, W))
    # m(x) - p m(x+1) - q m(x-1) = 1 with m = 0 at both ends
    c_prev, d_prev = Fraction(0), Fraction(0)
    cs, ds = [], []
    for x in xs:
        p = t if _uses_theta(kind, N, x) else 1 - t
        q = 1 - p
        denom = 1 - q * c_prev
        c_prev, d_prev = p / denom, (1 + q * d_prev) / denom
        cs.append(c_prev)
        ds.append(d_prev)
    m = Fraction(0)
    values = {}
    for x, c, d in zip(reversed(xs), reversed(cs), reversed(ds)):
        m = d + c * m
        values[x] = m
    return float(values[0])


def _uses_theta(kind: str, N: int, x: int) -> bool:
    return right_probability(kind, N, x, 0.25) == 0.25


# lines recorded by the acceptance suite, repeated in the terminal summary
CRITERIA: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
