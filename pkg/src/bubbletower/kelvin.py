"""Exact radial calculus on the family sum_q c_q (1 + r^2)^(-q).

The family is closed under the radial negative Laplacian in R^n, so bubbles
and all of their iterated Laplacians are represented exactly with rational
coefficients.  A bubble of scale lam is recovered from the unit-scale
combination through the scaling law

    value(r; lam) = lam**scale_exponent * unit_value(r / lam),

with ``scale_exponent = -(n - 2m)/2 - 2s`` after ``s`` Laplacians.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .logmath import NEG_INF, signed_logsumexp, softplus


def double_factorial(k: int) -> int:
    if k <= 0:
        return 1
    return math.prod(range(k, 0, -2))


@dataclass(frozen=True)
class Dimensions:
    """Spatial dimension ``n`` and operator order ``m`` with n >= 2m + 4."""

    n: int
    m: int

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"operator order m must be an integer >= 1, got {self.m}")
        if int(self.n) != self.n or self.n < 2 * self.m + 4:
            raise ValueError(
                f"dimension n={self.n} violates the hypothesis n >= 2m + 4 (m={self.m})")

    @property
    def p(self) -> Fraction:
        """Critical exponent (n + 2m)/(n - 2m)."""
        return Fraction(self.n + 2 * self.m, self.n - 2 * self.m)

    @property
    def beta(self) -> Fraction:
        """Half the bubble decay order, (n - 2m)/2."""
        return Fraction(self.n - 2 * self.m, 2)

    @property
    def c_ratio(self) -> int:
        """(n+2m-2)!!/(n-2m-2)!!, the integer inside the bubble constant."""
        num = double_factorial(self.n + 2 * self.m - 2)
        den = double_factorial(self.n - 2 * self.m - 2)
        assert num % den == 0
        return num // den

    @property
    def c_exponent(self) -> Fraction:
        return Fraction(self.n - 2 * self.m, 4 * self.m)

    @property
    def log_c_nm(self) -> float:
        return float(self.c_exponent) * math.log(self.c_ratio)

    @property
    def c_nm(self) -> float:
        return math.exp(self.log_c_nm)

    @property
    def c_nm_expr(self) -> str:
        return f"{self.c_ratio}^({self.c_exponent})"


@dataclass
class KelvinCombination:
    """prefactor * sum_q terms[q] * (1 + r^2)^(-q) at unit scale.

    ``prefactor`` is the exact algebraic number ``base ** exponent`` with
    rational base and exponent; ``terms`` maps exponent q to a rational.
    """

    terms: dict = field(default_factory=dict)
    prefactor_base: Fraction = Fraction(1)
    prefactor_exp: Fraction = Fraction(1)
    scale_exponent: Fraction = Fraction(0)
    scale_log: float = 0.0

    @property
    def log_prefactor(self) -> float:
        return float(self.prefactor_exp) * math.log(self.prefactor_base)

    def cleaned(self) -> "KelvinCombination":
        terms = {q: c for q, c in self.terms.items() if c != 0}
        return KelvinCombination(dict(sorted(terms.items())), self.prefactor_base,
                                 self.prefactor_exp, self.scale_exponent, self.scale_log)

    def at_scale(self, scale_log: float) -> "KelvinCombination":
        return KelvinCombination(dict(self.terms), self.prefactor_base, self.prefactor_exp,
                                 self.scale_exponent, float(scale_log))

    def to_json(self) -> str:
        return json.dumps({
            "scale_log": self.scale_log,
            "scale_exponent": str(self.scale_exponent),
            "prefactor": f"{self.prefactor_base}^({self.prefactor_exp})",
            "terms": [{"q": str(q), "coeff": str(c)} for q, c in sorted(self.terms.items())],
        })

    @classmethod
    def from_json(cls, text: str) -> "KelvinCombination":
        d = json.loads(text)
        base, exp = d["prefactor"].split("^")
        return cls({Fraction(t["q"]): Fraction(t["coeff"]) for t in d["terms"]},
                   Fraction(base), Fraction(exp.strip("()")),
                   Fraction(d["scale_exponent"]), float(d["scale_log"]))


def build_bubble(dim: Dimensions) -> KelvinCombination:
    """Unit-scale bubble c_nm (1 + r^2)^(-(n-2m)/2)."""
    return KelvinCombination({dim.beta: Fraction(1)}, Fraction(dim.c_ratio), dim.c_exponent,
                             -dim.beta)


def laplace_apply(c: KelvinCombination, dim: Dimensions) -> KelvinCombination:
    """Exact -Delta in R^n of a radial combination."""
    out: dict = {}
    n = dim.n
    for q, a in c.terms.items():
        lead = 2 * q * n - 4 * q * (q + 1)
        out[q + 1] = out.get(q + 1, Fraction(0)) + a * lead
        out[q + 2] = out.get(q + 2, Fraction(0)) + a * 4 * q * (q + 1)
    res = KelvinCombination(out, c.prefactor_base, c.prefactor_exp, c.scale_exponent - 2,
                            c.scale_log)
    return res.cleaned()


def polyharmonic_apply(c: KelvinCombination, s: int, dim: Dimensions) -> KelvinCombination:
    if not 0 <= s <= dim.m:
        raise ValueError(f"power s={s} outside [0, m={dim.m}]")
    for _ in range(s):
        c = laplace_apply(c, dim)
    return c


def bubble_identity_check(dim: Dimensions) -> tuple[bool, Fraction]:
    """Exact check of (-Delta)^m w = w^p on the unit bubble.

    Both sides share the prefactor c_nm; the remaining constant c_nm^(p-1)
    is the integer ``dim.c_ratio``.
    """
    lhs = polyharmonic_apply(build_bubble(dim), dim.m, dim)
    power = dim.c_exponent * (dim.p - 1)
    assert power.denominator == 1
    rhs = {dim.beta * dim.p: Fraction(dim.c_ratio) ** int(power)}
    keys = set(lhs.terms) | set(rhs)
    residual = max(abs(lhs.terms.get(q, Fraction(0)) - rhs.get(q, Fraction(0))) for q in keys)
    return residual == 0, residual


def eval_log(c: KelvinCombination, r_log, scale_log=None):
    """Return ``(sign, log|value|)`` of the combination at radius exp(r_log).

    Works for scales far below double-precision range: nothing but logs is
    ever exponentiated.  ``r_log = -inf`` evaluates at the origin.
    """
    lam = c.scale_log if scale_log is None else scale_log
    r_log = np.asarray(r_log, dtype=float)
    with np.errstate(divide="ignore"):
        log_t2 = 2.0 * (r_log - lam)
    log_1pt2 = softplus(log_t2)
    if not c.terms:
        return np.zeros_like(r_log), np.full_like(r_log, NEG_INF)
    qs = np.array([float(q) for q in c.terms])
    coeffs = [c.terms[q] for q in c.terms]
    logs = np.array([math.log(abs(a)) for a in coeffs])
    signs = np.array([1.0 if a > 0 else -1.0 for a in coeffs])
    term_logs = logs[:, None] - qs[:, None] * np.atleast_1d(log_1pt2)[None, :]
    sgn, val = signed_logsumexp(term_logs, signs[:, None] * np.ones_like(term_logs), axis=0)
    val = val + c.log_prefactor + float(c.scale_exponent) * lam
    if r_log.ndim == 0:
        return float(sgn[0]), float(val[0])
    return sgn, val


def log_bubble(dim: Dimensions, log_d, log_lam):
    """log psi(d, lam) for arrays of log distances and log scales."""
    beta = float(dim.beta)
    log_d = np.asarray(log_d, dtype=float)
    with np.errstate(invalid="ignore"):
        return dim.log_c_nm + beta * log_lam - beta * np.logaddexp(2.0 * log_lam, 2.0 * log_d)


def log_bubble_slope(dim: Dimensions, log_d, log_lam):
    """log |d/ds psi(s, lam)| at s = exp(log_d)."""
    nb = dim.n - 2 * dim.m
    beta = nb / 2.0
    log_d = np.asarray(log_d, dtype=float)
    return (math.log(nb) + dim.log_c_nm + log_d + beta * log_lam
            - (beta + 1.0) * np.logaddexp(2.0 * log_lam, 2.0 * log_d))


def radial_derivative_bound(dim: Dimensions, lam_log: float, rho_log: float) -> float:
    """log of max_{s >= rho} |d/ds psi(s, lam)|.

    The slope peaks at s* = lam / sqrt(n - 2m + 1) and decreases afterwards.
    """
    s_star = lam_log - 0.5 * math.log(dim.n - 2 * dim.m + 1)
    return float(log_bubble_slope(dim, max(rho_log, s_star), lam_log))
