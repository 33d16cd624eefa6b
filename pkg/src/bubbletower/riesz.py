"""Newton and Riesz potentials of radial, piecewise-linear densities.

A radial density that is linear on each interval of a knot list has a
Newton potential that is, on each interval, a finite Laurent sum
sum_e a_e r^e.  Integer exponents stay away from the logarithmic cases
because n > 2m, so the m-fold composition is exact.  With rational knots
and values the whole computation runs in ``Fraction`` arithmetic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .kelvin import Dimensions
from .logmath import NEG_INF, signed_logsumexp


@dataclass(frozen=True)
class RieszKernelConstants:
    """gamma_nm normalizes I_2m = gamma_nm |x|^(2m-n) * (.) = (-Delta)^(-m).

    Each Newton step carries the 1/(n-2) of the radial Green formula; no
    further constant enters the composition.
    """

    dim: Dimensions

    @property
    def gamma_nm(self) -> float:
        return riesz_gamma(self.dim.n, self.dim.m)

    @property
    def newton_step(self) -> Fraction:
        return Fraction(1, self.dim.n - 2)


def riesz_gamma(n: int, m: int) -> float:
    return math.gamma(n / 2 - m) / (4 ** m * math.pi ** (n / 2) * math.gamma(m))


def sphere_area(n: int) -> float:
    """Surface area of the unit sphere S^(n-1) in R^n."""
    return 2 * math.pi ** (n / 2) / math.gamma(n / 2)


@dataclass
class RadialDensity:
    """Piecewise-linear radial profile about ``center``.

    ``pieces[j] = (left, right)`` are the values at ``knots[j]`` and
    ``knots[j+1]``; the profile vanishes beyond the last knot.
    """

    knots: Sequence
    pieces: Sequence
    center: np.ndarray | None = None

    def __post_init__(self):
        if len(self.knots) != len(self.pieces) + 1 or self.knots[0] != 0:
            raise ValueError("knots must start at 0 and bracket every piece")
        if any(b <= a for a, b in zip(self.knots, self.knots[1:])):
            raise ValueError("knots must increase")
        if any(v < 0 for pc in self.pieces for v in pc):
            raise ValueError("density profile must be nonnegative")

    @property
    def support_radius(self):
        return self.knots[-1]

    @classmethod
    def ball_indicator(cls, radius=Fraction(1), center=None):
        return cls([Fraction(0), radius], [(Fraction(1), Fraction(1))], center)

    @classmethod
    def tent(cls, plateau_radius=Fraction(1), center=None):
        """1 on [0, R], linear down to 0 at 2R."""
        R = plateau_radius
        return cls([Fraction(0), R, 2 * R], [(Fraction(1), Fraction(1)), (Fraction(1), Fraction(0))],
                   center)

    def value(self, r):
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        for (a, b), (va, vb) in zip(zip(self.knots, self.knots[1:]), self.pieces):
            a, b, va, vb = float(a), float(b), float(va), float(vb)
            sel = (r >= a) & (r < b)
            out[sel] = va + (vb - va) * (r[sel] - a) / (b - a)
        return out

    def to_laurent(self) -> "LaurentProfile":
        knots = list(self.knots)
        zero = knots[0] * 0
        pieces = []
        for (a, b), (va, vb) in zip(zip(knots, knots[1:]), self.pieces):
            slope = (vb - va) / (b - a)
            pieces.append({0: va - slope * a, 1: slope})
        pieces.append({})
        return LaurentProfile(knots + [math.inf], pieces, zero)


@dataclass
class LaurentProfile:
    """Piecewise sum_e a_e r^e on [knots[j], knots[j+1]); last knot is inf."""

    knots: list
    pieces: list
    zero: object = 0.0

    def _piece_index(self, r):
        edges = np.array([float(k) for k in self.knots[1:-1]])
        return np.searchsorted(edges, r, side="right")

    def value(self, r):
        r = np.asarray(r, dtype=float)
        idx = self._piece_index(r)
        out = np.zeros_like(r)
        for j, piece in enumerate(self.pieces):
            sel = idx == j
            if not np.any(sel):
                continue
            rs = r[sel]
            acc = np.zeros_like(rs)
            for e, a in piece.items():
                with np.errstate(divide="ignore"):
                    acc += float(a) * rs ** e
            out[sel] = acc
        return out

    def value_log(self, r_log):
        """log of the profile at exp(r_log); profile must be positive there."""
        r_log = np.atleast_1d(np.asarray(r_log, dtype=float))
        idx = self._piece_index(np.exp(np.minimum(r_log, 700.0)))
        out = np.full_like(r_log, NEG_INF)
        for j, piece in enumerate(self.pieces):
            sel = idx == j
            if not np.any(sel) or not piece:
                continue
            es = np.array(list(piece.keys()), dtype=float)
            cs = [float(a) for a in piece.values()]
            logs = np.array([math.log(abs(c)) if c != 0 else NEG_INF for c in cs])
            sg = np.array([1.0 if c >= 0 else -1.0 for c in cs])
            rl = r_log[sel]
            rl = np.where(np.isneginf(rl), -745.0, rl)
            terms = logs[:, None] + es[:, None] * rl[None, :]
            _, val = signed_logsumexp(terms, sg[:, None] * np.ones_like(terms), axis=0, rtol=1e-14)
            out[sel] = val
        return out

    def newton(self, n: int) -> "LaurentProfile":
        """(-Delta)^(-1) in R^n through the radial Green formula."""
        K = len(self.pieces)
        lo = self.knots[:-1]
        hi = self.knots[1:]
        inner = []
        for j, piece in enumerate(self.pieces):
            tot = self.zero
            for e, a in piece.items():
                if e + n == 0:
                    raise ArithmeticError("logarithmic term in inner Newton integral")
                if j == 0 and e + n < 0:
                    raise ArithmeticError("density not integrable at the origin")
                if j < K - 1:
                    tot += a * (_pw(hi[j], e + n) - _pw(lo[j], e + n)) / (e + n)
            inner.append(tot)
        outer = []
        for j, piece in enumerate(self.pieces):
            tot = self.zero
            for e, a in piece.items():
                if e + 2 == 0:
                    raise ArithmeticError("logarithmic term in outer Newton integral")
                if j == K - 1 and e + 2 >= 0:
                    raise ValueError("density must decay faster than r^-2 at infinity")
                tot += a * (_pw(hi[j], e + 2) - _pw(lo[j], e + 2)) / (e + 2)
            outer.append(tot)
        norm = Fraction(1, n - 2) if isinstance(self.zero, Fraction) else 1.0 / (n - 2)
        new_pieces = []
        A = self.zero
        B_tail = [self.zero] * K
        acc = self.zero
        for j in range(K - 1, -1, -1):
            B_tail[j] = acc
            acc += outer[j]
        for j, piece in enumerate(self.pieces):
            out: dict = {}
            c_far = A
            c_const = B_tail[j]
            for e, a in piece.items():
                c_far -= a * _pw(lo[j], e + n) / (e + n)
                c_const += a * _pw(hi[j], e + 2) / (e + 2)
                out[e + 2] = out.get(e + 2, self.zero) + a * (Fraction(1, e + n) - Fraction(1, e + 2)
                                                             if isinstance(a, Fraction)
                                                             else 1.0 / (e + n) - 1.0 / (e + 2))
            if c_far != 0:
                out[2 - n] = out.get(2 - n, self.zero) + c_far
            if c_const != 0:
                out[0] = out.get(0, self.zero) + c_const
            new_pieces.append({e: v * norm for e, v in out.items() if v != 0})
            A += inner[j]
        return LaurentProfile(list(self.knots), new_pieces, self.zero)

    def scaled_value_log(self, r_log, scale_log: float, order: int):
        """log of scale^order * profile(r / scale)."""
        return order * scale_log + self.value_log(np.asarray(r_log) - scale_log)


def _pw(x, e):
    if x == math.inf:
        return 0
    if x == 0:
        if e > 0:
            return x * 0
        raise ZeroDivisionError("non-positive power of zero")
    return x ** e


def newton_potential_radial(d: RadialDensity, dim: Dimensions) -> LaurentProfile:
    return d.to_laurent().newton(dim.n)


def riesz_potential_radial(d: RadialDensity, order: int, dim: Dimensions) -> LaurentProfile:
    """I_order of a radial density; order must be even with order < n."""
    if order % 2 or not 0 < order < dim.n:
        raise ValueError(f"order {order} must be even and in (0, n={dim.n})")
    prof = d.to_laurent()
    for _ in range(order // 2):
        prof = prof.newton(dim.n)
    return prof


def density_mass(d: RadialDensity, n: int) -> float:
    """Integral of the density over R^n."""
    tot = 0.0
    for (a, b), (va, vb) in zip(zip(d.knots, d.knots[1:]), d.pieces):
        a, b, va, vb = float(a), float(b), float(va), float(vb)
        slope = (vb - va) / (b - a)
        c0 = va - slope * a
        tot += c0 * (b ** n - a ** n) / n + slope * (b ** (n + 1) - a ** (n + 1)) / (n + 1)
    return sphere_area(n) * tot
