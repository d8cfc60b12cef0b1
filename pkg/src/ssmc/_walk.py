"""Compiled inner loops for walking a chain on a compressed row layout."""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def walk(indptr, indices, cum, is_target, x, buf, pos, max_steps, out, out_pos):
    """Advance the chain from ``x`` one uniform per step.

    Stops when a target is entered, ``max_steps`` steps were taken, or the
    uniform buffer is exhausted.  Visited locations are written to
    ``out[out_pos:]`` when ``out`` is non-empty.

    Returns ``(x, steps, pos, hit)``.
    """
    steps = 0
    record = out.shape[0] > 0
    n_buf = buf.shape[0]
    while steps < max_steps and pos < n_buf:
        lo = indptr[x]
        hi = indptr[x + 1]
        level = buf[pos] * cum[hi - 1]
        pos += 1
        k = lo
        while k < hi - 1 and cum[k] <= level:
            k += 1
        x = indices[k]
        steps += 1
        if record:
            out[out_pos] = x
            out_pos += 1
        if is_target[x]:
            return x, steps, pos, True
    return x, steps, pos, False


@njit(cache=True)
def birth_death_solve(down, up):
    """Expected absorption times of a birth-death chain absorbed at both ends.

    ``down[i]`` and ``up[i]`` are the left/right jump probabilities of the
    interior state ``i + 1``; holding probability is implied.  The
    elimination carries complements explicitly, so every operation is on
    nonnegative numbers and the result keeps full relative accuracy even
    when the expectations are astronomically large.

    Returns the interior expectations, or an empty array if some interior
    state cannot reach either end.
    """
    n = down.shape[0]
    alpha = np.empty(n)
    beta = np.empty(n)
    gamma_prev = 1.0
    beta_prev = 0.0
    for i in range(n):
        a = down[i]
        c = up[i]
        d = c + a * gamma_prev
        if not d > 0.0:
            return np.empty(0)
        alpha[i] = c / d
        beta[i] = (1.0 + a * beta_prev) / d
        gamma_prev = a * gamma_prev / d
        beta_prev = beta[i]
    m = np.empty(n)
    m[n - 1] = beta[n - 1]
    for i in range(n - 2, -1, -1):
        m[i] = alpha[i] * m[i + 1] + beta[i]
    return m


@njit(cache=True, nogil=True)
def _settle(v, absorbed_mass):
    """Restore ``sum(v) + absorbed_mass == 1``, trusting the smaller side."""
    live = 0.0
    for i in range(v.shape[0]):
        live += v[i]
    if live >= absorbed_mass:
        target = 1.0 - absorbed_mass
        if live > 0.0:
            for i in range(v.shape[0]):
                v[i] *= target / live
        return absorbed_mass, target
    return 1.0 - live, live


@njit(cache=True, nogil=True)
def banded_survival(down, stay, up, absorbed, v, absorbed_mass, n_steps, out):
    """Push the row vector ``v`` through a tridiagonal kernel ``n_steps`` times.

    Mass entering an ``absorbed`` state is moved to ``absorbed_mass``, which
    is accumulated from nonnegative terms so that it stays accurate when the
    per-step leak is tiny.  ``out[t]`` receives the surviving mass after
    ``t + 1`` steps.  ``v`` is updated in place; the final absorbed mass is
    returned.
    """
    n = v.shape[0]
    w = np.empty(n)
    for t in range(n_steps):
        for i in range(n):
            if absorbed[i]:
                leak = 0.0
                if i > 0:
                    leak += v[i - 1] * up[i - 1]
                if i < n - 1:
                    leak += v[i + 1] * down[i + 1]
                absorbed_mass += leak
                w[i] = 0.0
            else:
                acc = v[i] * stay[i]
                if i > 0:
                    acc += v[i - 1] * up[i - 1]
                if i < n - 1:
                    acc += v[i + 1] * down[i + 1]
                w[i] = acc
        for i in range(n):
            v[i] = w[i]
        absorbed_mass, out[t] = _settle(v, absorbed_mass)
    return absorbed_mass


@njit(cache=True, nogil=True)
def _compose(L1, l1, L2, l2):
    """Two consecutive leaky steps: ``(L1 L2, l1 + L1 l2)`` with rows renormalized."""
    L = L1 @ L2
    leak = l1 + L1 @ l2
    for i in range(L.shape[0]):
        row = 0.0
        for j in range(L.shape[1]):
            row += L[i, j]
        if row > 0.0:
            scale = (1.0 - leak[i]) / row
            for j in range(L.shape[1]):
                L[i, j] *= scale
    return L, leak


@njit(cache=True, nogil=True)
def leaky_power(L, leak, k):
    """``k``-step kernel of a substochastic matrix with its leak vector.

    ``L`` is the transition block among live states and ``leak[i]`` the
    probability of leaving from ``i`` in one step.  The leak of the power
    is built from nonnegative terms only, and the live rows are rescaled so
    that each row plus its leak sums to one.  This keeps the escape rate
    accurate to a few ulps even when ``k`` times the rate is far below 1.
    """
    n = L.shape[0]
    R = np.eye(n)
    r = np.zeros(n)
    B = L.copy()
    b = leak.copy()
    while k > 0:
        if k & 1:
            R, r = _compose(R, r, B, b)
        k >>= 1
        if k:
            B, b = _compose(B, b, B, b)
    return R, r


@njit(cache=True, nogil=True)
def leaky_survival(L, leak, v, absorbed_mass, n_steps, out):
    """Iterate ``v <- v L`` moving ``v . leak`` into ``absorbed_mass`` each step."""
    n = v.shape[0]
    for t in range(n_steps):
        gone = 0.0
        for i in range(n):
            gone += v[i] * leak[i]
        w = v @ L
        for i in range(n):
            v[i] = w[i]
        absorbed_mass += gone
        absorbed_mass, out[t] = _settle(v, absorbed_mass)
    return absorbed_mass
