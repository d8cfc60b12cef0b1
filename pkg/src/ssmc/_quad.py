"""Shifted log-domain quadrature for integrands of the form ``exp(N g_N) dmu``."""

from __future__ import annotations

import warnings

import numpy as np
from scipy import integrate

EPSREL = 1e-8
SHIFT_GRID = 2049


class QuadratureError(ArithmeticError):
    """An exponential-scale integral could not be evaluated reliably."""


def log_weights(log_w, x) -> np.ndarray:
    """Evaluate ``log_w`` on an array, falling back to a scalar loop."""
    x = np.asarray(x, dtype=float)
    try:
        out = np.asarray(log_w(x), dtype=float)
        if out.shape == x.shape:
            return out
    except (TypeError, ValueError):
        pass
    return np.array([float(log_w(float(t))) for t in x.ravel()]).reshape(x.shape)


def grid_shift(log_w, low: float, high: float, extra=()) -> float:
    """Grid maximum of ``log_w`` on ``[low, high]``, used as the common shift."""
    x = np.concatenate([np.linspace(low, high, SHIFT_GRID), np.asarray(extra, dtype=float)])
    x = x[(x >= low) & (x <= high)]
    vals = log_weights(log_w, x)
    finite = vals[np.isfinite(vals)]
    if finite.size == 0:
        raise QuadratureError("log-weight is not finite anywhere on the support")
    if np.any(vals == np.inf):
        raise QuadratureError("log-weight is +inf on the support")
    return float(finite.max())


def _scalar(x) -> float:
    return float(np.asarray(x, dtype=float).reshape(-1)[0])


def shifted_integral(log_w, density, low: float, high: float, shift: float, f=None,
                     epsrel: float = EPSREL) -> float:
    """``int_low^high f * density * exp(log_w - shift)`` by adaptive Gauss-Kronrod."""
    if high <= low:
        return 0.0

    def integrand(t):
        lw = _scalar(log_w(t)) - shift
        if lw == -np.inf:
            return 0.0
        val = _scalar(density(t)) * np.exp(lw)
        return val * _scalar(f(t)) if f is not None else val

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, _ = integrate.quad(integrand, low, high, epsrel=epsrel, epsabs=0.0, limit=200)
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(f"quadrature on [{low:g}, {high:g}] failed: {exc}") from exc
    if not np.isfinite(val):
        raise QuadratureError(f"quadrature on [{low:g}, {high:g}] is not finite")
    return float(val)


def log_sum(log_terms, weights) -> tuple[float, np.ndarray]:
    """Shift and normalized weights ``w_j exp(l_j - shift)`` for a discrete sum."""
    log_terms = np.asarray(log_terms, dtype=float)
    shift = float(np.max(log_terms))
    return shift, np.asarray(weights, dtype=float) * np.exp(log_terms - shift)
