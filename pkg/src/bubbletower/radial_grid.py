"""Newton potentials of sampled radial densities on geometric grids.

Densities here come from nonlinear evaluations (the correction's source
term), span hundreds of orders of magnitude, and are only known at nodes.
They are interpolated linearly in t between nodes; every panel integral of
the interpolant against t^k is done in closed form and accumulated in the
log domain.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .logmath import NEG_INF, log1mexp, logexpm1


def geometric_grid(t_min: float, t_max: float, per_efold: int = 10, kinks=()) -> np.ndarray:
    """Geometric nodes from t_min to t_max with the given kinks inserted."""
    count = max(2, int(math.ceil(per_efold * math.log(t_max / t_min))) + 1)
    t = np.geomspace(t_min, t_max, count)
    kinkset = {float(k) for k in kinks}
    t = np.union1d(t, np.fromiter(kinkset, float))
    keep = [t[0]]
    for x in t[1:]:
        if x / keep[-1] > 1.01:
            keep.append(x)
        elif x in kinkset:
            if keep[-1] in kinkset:
                keep.append(x)
            else:
                keep[-1] = x
    return np.array(keep)


def _panel_log_weights(lt: np.ndarray, k: int):
    """Log weights (w_left, w_right) of the linear interpolant against t^k."""
    lb = lt[1:]
    q = np.exp(lt[:-1] - lb)
    e1 = 1.0 / (k + 2) - q / (k + 1) + q ** (k + 2) / ((k + 1) * (k + 2))
    e0 = 1.0 / (k + 1) - 1.0 / (k + 2) - q ** (k + 1) / (k + 1) + q ** (k + 2) / (k + 2)
    base = (k + 1) * lb - np.log1p(-q)
    return base + np.log(e0), base + np.log(e1)


def _panel_logs(lt, log_g, k):
    """Log of the panel integrals of g t^k.

    Where g is locally a power law (log-log slope steady across neighbouring
    panels, as in the far-field tails of potentials) panels interpolate g as
    a power law; elsewhere, and next to zeros, g is interpolated linearly.
    """
    w0, w1 = _panel_log_weights(lt, k)
    linear = np.logaddexp(log_g[:-1] + w0, log_g[1:] + w1)
    la, lb = lt[:-1], lt[1:]
    lr = lb - la
    ok = np.isfinite(log_g[:-1]) & np.isfinite(log_g[1:])
    ga = np.where(ok, log_g[:-1], 0.0)
    gb = np.where(ok, log_g[1:], 0.0)
    sigma = (gb - ga) / lr
    jump = np.abs(np.diff(sigma))
    bend = np.maximum(np.concatenate([[np.inf], jump]), np.concatenate([jump, [np.inf]]))
    ok &= bend < 0.02
    s = sigma + k + 1
    y = s * lr
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        small = np.abs(y) < 1e-8
        pos = np.where(y > 0, logexpm1(np.maximum(y, 1e-300)), 0.0)
        neg = np.where(y < 0, log1mexp(np.minimum(y, -1e-300)), 0.0)
        core = np.where(small, np.log(lr), np.where(y > 0, pos, neg) - np.log(np.abs(s)))
    power = ga + (k + 1) * la + core
    return np.where(ok, power, linear)


def newton_log(lt: np.ndarray, log_g: np.ndarray, n: int) -> np.ndarray:
    """log of (-Delta)^(-1) g at the nodes ``exp(lt)``, g sampled as log values.

    Nodes are passed as logarithms so grids may span thousands of decades.

    g is taken constant on [0, t_0] and extended past t_max by the power law
    fitted to the last two nodes (which must decay faster than t^-2).
    """
    first_inner = log_g[0] + n * lt[0] - math.log(n)
    inner = np.concatenate([[first_inner], _panel_logs(lt, log_g, n - 1)])
    A = np.logaddexp.accumulate(inner)
    outer = _panel_logs(lt, log_g, 1)
    if np.isneginf(log_g[-1]):
        tail = NEG_INF
    else:
        sigma = (log_g[-1] - log_g[-2]) / (lt[-1] - lt[-2])
        if not sigma < -2.0:
            raise ValueError(f"sampled density decays too slowly at the grid end (slope {sigma:.3g})")
        tail = log_g[-1] + 2 * lt[-1] - math.log(-sigma - 2.0)
    rev = np.concatenate([[tail], outer[::-1]])
    B = np.logaddexp.accumulate(rev)[::-1]
    with np.errstate(invalid="ignore"):
        out = np.logaddexp(A + (2 - n) * lt, B) - math.log(n - 2)
    return out


_LOG_FLOOR = -1e6


@dataclass
class GridProfile:
    """Radial log-profile on a geometric grid in units of ``scale``.

    Evaluates ``scale**order * profile(r/scale)`` in log form; below the
    first node the profile is flat, past the last node it decays like
    r^(order - n).
    """

    log_t: np.ndarray
    log_val: np.ndarray
    order: int
    n: int

    def value_log(self, r_log, scale_log: float = 0.0):
        x = np.asarray(r_log, dtype=float) - scale_log
        # a vanishing profile (log -inf) is interpolated through a finite floor
        vals = np.maximum(self.log_val, _LOG_FLOOR)
        inside = np.interp(x, self.log_t, vals)
        far = vals[-1] + (self.order - self.n) * np.maximum(x - self.log_t[-1], 0.0)
        out = np.where(x > self.log_t[-1], far, inside)
        out = np.where(out <= _LOG_FLOOR / 2, -np.inf, out)
        return self.order * scale_log + out


def riesz_grid_profile(log_t: np.ndarray, log_g: np.ndarray, n: int, m: int) -> GridProfile:
    """m-fold Newton potential of a sampled density on nodes ``exp(log_t)``.

    The grid must reach far past the support.
    """
    lt = np.asarray(log_t, dtype=float)
    vals = np.asarray(log_g, dtype=float)
    for _ in range(m):
        vals = newton_log(lt, vals, n)
    return GridProfile(lt, vals, 2 * m, n)
