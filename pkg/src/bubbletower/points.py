"""Points stored relative to bubble centers.

Ring centers sit ~1e-30 apart in global coordinates and dyadic balls have
radii down to ~1e-557, far below what a double can resolve next to |x| ~ 1e-2.  A
point is therefore stored as ``center + rho_anchor * eta`` and every
distance to a center is produced directly as a logarithm.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc
from scipy.special import ndtri


@dataclass
class Centers:
    """Bubble centers: global doubles plus exact ring-local coordinates.

    ``xi[i]`` is the position of a ring center in units of
    ``exp(ring_scale_log)`` about the ring's own midpoint; dyadic centers
    have ``cluster = -1``.
    """

    x: np.ndarray
    cluster: np.ndarray
    xi: np.ndarray
    ring_scale_log: float

    @property
    def count(self) -> int:
        return len(self.x)

    @property
    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.x, axis=1)


@dataclass
class Points:
    """``anchor[k] = j`` means point k is ``x_j + rho_j * eta[k]``; ``-1`` means free at ``y[k]``.

    ``log_scale[k]``, when finite, replaces ``log rho_j`` as the offset unit
    of an anchored point, so offsets far outside the double range of
    ``eta`` itself stay representable.
    """

    anchor: np.ndarray
    y: np.ndarray
    eta: np.ndarray
    log_scale: np.ndarray | None = None

    @classmethod
    def free(cls, y) -> "Points":
        y = np.atleast_2d(np.asarray(y, dtype=float))
        return cls(np.full(len(y), -1), y.copy(), np.zeros_like(y))

    @classmethod
    def around(cls, centers: Centers, j: int, eta, log_scale=None) -> "Points":
        eta = np.atleast_2d(np.asarray(eta, dtype=float))
        ls = None if log_scale is None else np.broadcast_to(np.asarray(log_scale, dtype=float),
                                                             (len(eta),)).copy()
        return cls(np.full(len(eta), j), np.repeat(centers.x[j:j + 1], len(eta), axis=0), eta, ls)

    def __len__(self):
        return len(self.anchor)

    @staticmethod
    def concat(parts) -> "Points":
        parts = list(parts)
        ls = None
        if any(p.log_scale is not None for p in parts):
            ls = np.concatenate([p.log_scale if p.log_scale is not None else np.full(len(p), np.nan)
                                 for p in parts])
        return Points(np.concatenate([p.anchor for p in parts]),
                      np.concatenate([p.y for p in parts]),
                      np.concatenate([p.eta for p in parts]), ls)

    def subset(self, sl) -> "Points":
        return Points(self.anchor[sl], self.y[sl], self.eta[sl],
                      None if self.log_scale is None else self.log_scale[sl])

    def scale_log(self, log_rho) -> np.ndarray:
        """log of the offset unit of each point (-inf for free points)."""
        base = np.where(self.anchor >= 0, np.asarray(log_rho, dtype=float)[np.maximum(self.anchor, 0)], -np.inf)
        if self.log_scale is None:
            return base
        return np.where(np.isnan(self.log_scale), base, self.log_scale)

    def global_coords(self, log_rho) -> np.ndarray:
        """Double-precision positions (offsets below resolution are lost)."""
        scale = np.exp(self.scale_log(log_rho))
        return self.y + scale[:, None] * self.eta

    def log_norm(self, log_rho) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(np.linalg.norm(self.global_coords(log_rho), axis=1))


def displacements(points: Points, centers: Centers, log_rho, units: bool = True):
    """Log distances (P, N) and unit vectors (P, N, n) from each center to each point.

    With ``units=False`` the unit vectors are skipped and ``None`` is returned
    in their place.
    """
    log_rho = np.asarray(log_rho, dtype=float)
    P, N = len(points), centers.count
    a = points.anchor
    has = a >= 0
    ai = np.maximum(a, 0)
    g = points.global_coords(log_rho)
    own = points.scale_log(log_rho)
    diff = g[:, None, :] - centers.x[None, :, :]
    scale = np.zeros((P, N))
    same = has[:, None] & (a[:, None] == np.arange(N)[None, :])
    ring_a = has & (centers.cluster[ai] == 0)
    ring_pair = ring_a[:, None] & (centers.cluster[None, :] == 0) & ~same
    if np.any(ring_pair):
        rel = np.exp(own - centers.ring_scale_log)
        local = centers.xi[ai] + rel[:, None] * points.eta
        loc_diff = local[:, None, :] - centers.xi[None, :, :]
        diff = np.where(ring_pair[..., None], loc_diff, diff)
        scale = np.where(ring_pair, centers.ring_scale_log, scale)
    if np.any(same):
        diff = np.where(same[..., None], points.eta[:, None, :], diff)
        scale = np.where(same, own[:, None], scale)
    norm = np.linalg.norm(diff, axis=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_d = np.log(norm) + scale
        unit = np.where(norm[..., None] > 0, diff / norm[..., None], 0.0) if units else None
    return log_d, unit


def ball_samples(n: int, count: int, seed: int, radius: float = 1.0) -> np.ndarray:
    """Deterministic low-discrepancy points in the closed n-ball.

    Directions come from Gaussianized Sobol coordinates and radii from the
    last coordinate; the center and the 2n axis points on the boundary are
    always included.
    """
    sob = qmc.Sobol(n + 1, scramble=True, seed=seed)
    need = max(count - 2 * n - 1, 1)
    u = sob.random_base2(int(np.ceil(np.log2(need))))[:need]
    g = ndtri(np.clip(u[:, :n], 1e-12, 1 - 1e-12))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = u[:, n] ** (1.0 / n)
    pts = g * r[:, None]
    axes = np.concatenate([np.eye(n), -np.eye(n)])
    out = np.concatenate([np.zeros((1, n)), axes, pts])[:count]
    return radius * out
