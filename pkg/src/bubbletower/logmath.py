"""Underflow-safe helpers for quantities stored as natural logarithms.

Every field in this package is carried as ``log(value)``; a value of zero is
``-inf``.  Signed quantities travel as a ``(sign, log|value|)`` pair.
"""
from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

NEG_INF = -np.inf
LN10 = np.log(10.0)


class CancellationError(ArithmeticError):
    """Mixed-sign terms cancelled below working precision."""


def log1mexp(x):
    """log(1 - exp(x)) for x <= 0 (Maechler's two-branch rule)."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(x > -np.log(2.0),
                       np.log(-np.expm1(np.minimum(x, 0.0))),
                       np.log1p(-np.exp(np.minimum(x, 0.0))))
    return out[()] if out.ndim == 0 else out


def logexpm1(y):
    """log(exp(y) - 1) for y >= 0, stable for tiny and huge y."""
    y = np.asarray(y, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        big = y + np.log(-np.expm1(-np.maximum(y, 1e-300)))
        small = np.log(np.expm1(np.minimum(y, 30.0)))
    out = np.where(y > 30.0, big, small)
    return out[()] if out.ndim == 0 else out


def softplus(x):
    """log(1 + exp(x))."""
    return np.logaddexp(0.0, x)


def log_diff(a, b):
    """log(exp(a) - exp(b)) for a >= b; -inf when equal."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    with np.errstate(invalid="ignore"):
        d = np.where(np.isneginf(b), -np.inf, b - a)
    out = np.where(np.isneginf(a), NEG_INF, a + log1mexp(np.minimum(d, 0.0)))
    return out[()] if out.ndim == 0 else out


def signed_logsumexp(logs, signs, axis=None, rtol=1e-12):
    """Sum of ``signs * exp(logs)`` returned as ``(sign, log|sum|)``.

    Raises CancellationError when the result is smaller than ``rtol`` times
    the largest term, i.e. its sign is not determined at double precision.
    """
    logs = np.asarray(logs, dtype=float)
    signs = np.asarray(signs, dtype=float)
    val, sgn = logsumexp(logs, b=signs, axis=axis, return_sign=True)
    peak = np.max(logs, axis=axis)
    finite = np.isfinite(peak)
    lost = finite & ((val - peak) < np.log(rtol))
    if np.any(lost):
        raise CancellationError("signed log-sum lost its sign below working precision")
    return sgn, val


def log1m_pow(log_z, log_1mz, e: float):
    """log(1 - z**e) for 0 < z < 1, given log z and log(1 - z).

    When 1 - z is tiny, 1 - z**e = e (1 - z) (1 + O(1 - z)), so the result
    stays exact even when log z itself has underflowed to zero.
    """
    log_z = np.asarray(log_z, dtype=float)
    log_1mz = np.asarray(log_1mz, dtype=float)
    with np.errstate(over="ignore"):
        s = np.exp(np.minimum(log_1mz, 0.0))
    tiny = log_1mz < -30.0
    near = np.log(e) + log_1mz + np.log1p(np.where(tiny, (1.0 - e) * s / 2.0, 0.0))
    far = log1mexp(np.minimum(e * log_z, 0.0))
    out = np.where(tiny, near, far)
    return out[()] if out.ndim == 0 else out


def to_log10(x):
    return np.asarray(x, dtype=float) / LN10
