"""The envelope functions f, M, Z, F that cap the nonlinearity.

Plain-float versions serve tests and small arguments.  The ``log_*``
versions take ``z1 = U`` and ``z3 = P`` as logarithms and ``z2 = kappa`` as
a :class:`Curv` pair, because the construction evaluates them at
kappa = k_i with 1 - k_i far below double precision.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kelvin import Dimensions
from .logmath import NEG_INF, log1m_pow, log1mexp, log_diff, logexpm1


def _pe(dim: Dimensions):
    return float(dim.p), float(dim.c_exponent)


def eval_f(z1, z2, z3, dim: Dimensions):
    p, _ = _pe(dim)
    z1, z2, z3 = (np.asarray(v, dtype=float) for v in (z1, z2, z3))
    return z2 * (z1 + z3) ** p - z1 ** p


def _check_z2(z2):
    if np.any(np.asarray(z2) >= 1) or np.any(np.asarray(z2) <= 0):
        raise ValueError("M and Z need 0 < z2 < 1")


def eval_Z(z2, z3, dim: Dimensions):
    _check_z2(z2)
    _, e = _pe(dim)
    q = np.asarray(z2, dtype=float) ** e
    return np.asarray(z3, dtype=float) * q / (1.0 - q)


def eval_M(z2, z3, dim: Dimensions):
    _check_z2(z2)
    p, e = _pe(dim)
    z2 = np.asarray(z2, dtype=float)
    return z2 * np.asarray(z3, dtype=float) ** p / (1.0 - z2 ** e) ** (1.0 / e)


def eval_F(z1, z2, z3, dim: Dimensions):
    scalar = all(np.ndim(v) == 0 for v in (z1, z2, z3))
    z1, z2, z3 = np.broadcast_arrays(*(np.atleast_1d(np.asarray(v, dtype=float)) for v in (z1, z2, z3)))
    out = np.array(eval_f(z1, z2, z3, dim), dtype=float)
    low = z2 < 1
    if np.any(low):
        Z = eval_Z(z2[low], z3[low], dim)
        M = eval_M(z2[low], z3[low], dim)
        sub = out[low]
        cap = z1[low] > Z
        sub[cap] = M[cap]
        out[low] = sub
    return out.reshape(()) if scalar else out


@dataclass
class Curv:
    """kappa values as ``log_k`` and ``log_1mk = log(1 - kappa)`` (NaN where kappa >= 1)."""

    log_k: np.ndarray
    log_1mk: np.ndarray

    @classmethod
    def from_values(cls, k) -> "Curv":
        k = np.asarray(k, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return cls(np.log(k), np.where(k < 1, np.log1p(-np.minimum(k, 1.0)), np.nan))

    @property
    def below_one(self):
        return ~np.isnan(self.log_1mk)


def _log1m_kpow(c: Curv, e: float):
    """log(1 - kappa^e) for kappa < 1."""
    return log1m_pow(c.log_k, np.nan_to_num(c.log_1mk, nan=0.0), e)


def log_Z(c: Curv, log_z3, dim: Dimensions):
    _, e = _pe(dim)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        return np.asarray(log_z3) + e * c.log_k - _log1m_kpow(c, e)


def log_M(c: Curv, log_z3, dim: Dimensions):
    p, e = _pe(dim)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        return c.log_k + p * np.asarray(log_z3) - _log1m_kpow(c, e) / e


def log_f(log_z1, c: Curv, log_z3, dim: Dimensions):
    """(sign, log|f|) with f = kappa (U + P)^p - U^p = U^p (kappa (1 + P/U)^p - 1).

    The bracket is expm1(A), A = p log1p(P/U) + log kappa, and A is formed as
    a difference of logs so that a kappa within 1e-4000 of 1 still decides
    the sign correctly.
    """
    p, _ = _pe(dim)
    lu, lp = np.broadcast_arrays(np.asarray(log_z1, dtype=float), np.asarray(log_z3, dtype=float))
    lk, l1mk = np.broadcast_arrays(c.log_k, c.log_1mk)
    zero_u = np.isneginf(lu)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        lr = np.where(zero_u, 0.0, lp - lu)
        # log of p*log1p(r) >= 0 part
        log_gain = np.log(p) + np.where(lr < -30, lr, np.log(np.log1p(np.exp(np.minimum(lr, 700.0)))))
        big = lr >= 700
        log_gain = np.where(big, np.log(p) + np.log(np.maximum(lr, 1.0)), log_gain)
        below = ~np.isnan(l1mk)
        # log(-log kappa) where kappa < 1
        neg_lk = np.where(below & (l1mk < -30), l1mk, np.log(np.maximum(-lk, 1e-320)))
        A_pos = ~below | (log_gain > neg_lk)
        above = np.where(lk > 0, np.logaddexp(log_gain, np.log(np.where(lk > 0, lk, 1.0))), log_gain)
        logA = np.where(~below, above,
                        np.where(A_pos, log_diff(log_gain, neg_lk), log_diff(neg_lk, log_gain)))
        A = np.exp(np.minimum(logA, 700.0))
        log_br = np.where(A_pos, np.where(A < 1e-8, logA, logexpm1(np.minimum(A, 1e300))),
                          np.where(A < 1e-8, logA, log1mexp(-A)))
        val = p * lu + log_br
    sign = np.where(A_pos, 1.0, -1.0)
    # U = 0: f = kappa P^p
    val = np.where(zero_u, lk + p * lp, val)
    sign = np.where(zero_u, 1.0, sign)
    return sign, val


def log_H(log_U, c: Curv, log_P, dim: Dimensions):
    """log F(U, kappa, P); F > 0 whenever P > 0."""
    sgn, lf = log_f(log_U, c, log_P, dim)
    below = c.below_one
    if not np.any(below):
        return lf
    with np.errstate(invalid="ignore"):
        lz = log_Z(c, log_P, dim)
        lm = log_M(c, log_P, dim)
        cap = below & (np.asarray(log_U) > lz)
    return np.where(cap, lm, lf)


def log_under_H(log_U, c: Curv, log_P, dim: Dimensions):
    """(sign, log|f|) of the untruncated nonlinearity f(U, kappa, P)."""
    return log_f(log_U, c, log_P, dim)


__all__ = ["eval_f", "eval_M", "eval_Z", "eval_F", "Curv", "log_f", "log_M", "log_Z", "log_H",
           "log_under_H", "NEG_INF"]
