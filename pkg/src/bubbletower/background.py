"""Background curvature presets k, growth gauges phi, and the smooth cutoff."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def _e(t):
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)


def _de(t):
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        safe = np.where(t > 0, t, 1.0)
        return np.where(t > 0, np.exp(-1.0 / safe) / safe ** 2, 0.0)


def smoothstep(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    a, b = _e(t), _e(1.0 - np.asarray(t, dtype=float))
    return a / (a + b)


def smoothstep_prime(t):
    t = np.asarray(t, dtype=float)
    a, b = _e(t), _e(1.0 - t)
    da, db = _de(t), -_de(1.0 - t)
    return (da * (a + b) - a * (da + db)) / (a + b) ** 2


def eta(t):
    """Cutoff: 1 on [0, 1], 0 on [3/2, inf)."""
    return 1.0 - smoothstep(2.0 * (np.asarray(t, dtype=float) - 1.0))


def eta_prime(t):
    return -2.0 * smoothstep_prime(2.0 * (np.asarray(t, dtype=float) - 1.0))


ETA_PRIME_MAX = float(np.max(np.abs(eta_prime(np.linspace(1.0, 1.5, 20001)))))


@dataclass
class BackgroundK:
    """Radial background curvature with k(0) = 1 and grad k(0) = 0.

    Presets: ``const``; ``flat_bump`` (1 + amp * smoothstep((r - r0)/(r1 - r0)),
    identically 1 near 0); ``quadratic`` (1 + amp * r^2 * eta(r / R)).
    After normalization the profile is blended to 1 on ``B_blend``.
    """

    preset: str = "const"
    params: dict = field(default_factory=dict)
    blend: float | None = None

    def __post_init__(self):
        if self.preset not in ("const", "flat_bump", "quadratic"):
            raise ValueError(f"unknown background preset {self.preset!r}")

    def _raw(self, r):
        r = np.asarray(r, dtype=float)
        if self.preset == "const":
            return np.ones_like(r), np.zeros_like(r)
        amp = float(self.params.get("amp", 0.1))
        if self.preset == "flat_bump":
            r0, r1 = float(self.params.get("r0", 0.3)), float(self.params.get("r1", 0.8))
            u = (r - r0) / (r1 - r0)
            return 1.0 + amp * smoothstep(u), amp * smoothstep_prime(u) / (r1 - r0)
        R = float(self.params.get("R", 1.0))
        return (1.0 + amp * r ** 2 * eta(r / R),
                amp * (2 * r * eta(r / R) + r ** 2 * eta_prime(r / R) / R))

    def profile(self, r):
        """(k, dk/dr) as functions of |x|."""
        k, dk = self._raw(r)
        if self.blend is None:
            return k, dk
        r = np.asarray(r, dtype=float)
        g = 1.0 - eta(r / self.blend)
        dg = -eta_prime(r / self.blend) / self.blend
        return 1.0 + (k - 1.0) * g, dk * g + (k - 1.0) * dg

    def value(self, x):
        r = np.linalg.norm(np.atleast_2d(x), axis=-1)
        return self.profile(r)[0]

    def grad(self, x):
        x = np.atleast_2d(x)
        r = np.linalg.norm(x, axis=-1)
        dk = self.profile(r)[1]
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(r[:, None] > 0, x / np.where(r > 0, r, 1.0)[:, None], 0.0)
        return dk[:, None] * unit

    def bounds(self, r_max: float = 50.0):
        """(inf k, sup k) from a dense radial scan; k is 1 beyond the preset support."""
        r = np.concatenate([np.linspace(0.0, 2.0, 20001), np.geomspace(2.0, r_max, 2001)])
        k = self.profile(r)[0]
        return float(min(k.min(), 1.0)), float(max(k.max(), 1.0))

    def flat_radius(self) -> float:
        """Largest radius on which k is exactly 1 (0 when unknown)."""
        if self.preset == "const":
            return math.inf
        if self.preset == "flat_bump":
            return float(self.params.get("r0", 0.3))
        return self.blend or 0.0


def normalize_background(k: BackgroundK, eps: float, samples: int = 10_000):
    """Return (k_tilde, delta) with k_tilde = 1 on B_delta and ||k_tilde - k||_C1 < eps/2."""
    if not 0 < eps < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    r0 = k.profile(np.array([0.0, 1e-9]))
    if abs(r0[0][0] - 1.0) > 1e-12 or abs(r0[1][1]) > 1e-6:
        raise ValueError("background must satisfy k(0) = 1 and grad k(0) = 0")
    flat = k.flat_radius()
    if flat >= eps / 2:
        return k, eps / 2
    if flat > 0:
        return k, flat
    blend = eps / 2
    r = np.linspace(0.0, 1.0, samples)
    while True:
        kt = BackgroundK(k.preset, dict(k.params), blend)
        rr = r * 1.5 * blend
        a, da = k.profile(rr)
        b, db = kt.profile(rr)
        if np.max(np.abs(a - b)) + np.max(np.abs(da - db)) < eps / 2:
            return kt, blend
        blend /= 2


@dataclass(frozen=True)
class GaugePhi:
    """Growth gauge phi on (0, 1): ``power`` t^-q or ``exp`` exp(1/t)."""

    preset: str = "power"
    q: float = 4.0

    def log_value(self, t):
        t = np.asarray(t, dtype=float)
        if self.preset == "power":
            return -self.q * np.log(t)
        if self.preset == "exp":
            return 1.0 / t
        raise ValueError(f"unknown gauge preset {self.preset!r}")

    @classmethod
    def parse(cls, text: str) -> "GaugePhi":
        if text == "exp":
            return cls("exp", 0.0)
        if text.startswith("power"):
            _, _, q = text.partition(":")
            return cls("power", float(q) if q else 4.0)
        raise ValueError(f"cannot parse gauge {text!r}; expected power:q or exp")
