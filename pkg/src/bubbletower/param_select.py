"""Geometric constants, bubble centers and the per-index sequences.

All of k_i, M_i, rho_i, lambda_i are carried through their logarithms; in
particular ``log_s = log(1 - k_i)`` is the search variable, so that k_i
extremely close to 1 never rounds to 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .background import BackgroundK
from .kelvin import Dimensions, log_bubble, radial_derivative_bound
from .logmath import log1m_pow, log1mexp
from .points import Centers
from .riesz import RadialDensity, riesz_potential_radial


def alpha_exponent(m: int) -> Fraction:
    return Fraction(m, 6 * m + 6)


def log_k_from_s(log_s):
    return np.log1p(-np.exp(np.asarray(log_s, dtype=float)))


def log_M_from_s(log_s, dim: Dimensions):
    """log M_i = log k - (4m/(n-2m)) log(1 - k^((n-2m)/(4m)))."""
    e = float(dim.c_exponent)
    log_k = log_k_from_s(log_s)
    return log_k - log1m_pow(log_k, log_s, e) / e


# ----------------------------------------------------------------- geometry

@dataclass(frozen=True)
class Geometry:
    dim: Dimensions
    delta: float
    delta1: float
    delta2: float
    eps: float
    a: float
    b: float
    i0: int

    @property
    def alpha(self) -> Fraction:
        return alpha_exponent(self.dim.m)

    @property
    def log_w0(self) -> float:
        """log w(0) for w = (2b)^(-n/(2m)) psi(., 1)."""
        return self.dim.log_c_nm - self.dim.n / (2 * self.dim.m) * math.log(2 * self.b)

    def log_w(self, r):
        r = np.asarray(r, dtype=float)
        return self.log_w0 - float(self.dim.beta) * np.log1p(r * r)

    def to_dict(self) -> dict:
        return {"n": self.dim.n, "m": self.dim.m, "delta": self.delta, "delta1": self.delta1,
                "delta2": self.delta2, "epsilon": self.eps, "a": self.a, "b": self.b,
                "i0": self.i0, "alpha": str(self.alpha)}


def i0_margin(i: int, dim: Dimensions, a: float) -> float:
    """log-slack of i^(4m/(n-2m)) > 2^((3n+2m)/(n-2m)) / (2a)^((n+2m)/(4m))."""
    n, m = dim.n, dim.m
    lhs = 4 * m / (n - 2 * m) * math.log(i)
    rhs = (3 * n + 2 * m) / (n - 2 * m) * math.log(2) - (n + 2 * m) / (4 * m) * math.log(2 * a)
    return lhs - rhs


def smallest_i0(dim: Dimensions, a: float) -> int:
    """Smallest integer i > 2 passing the polygon-count inequality.

    With 2a = 1 the comparison i^(4m) > 2^(3n+2m) is done in integers.
    """
    n, m = dim.n, dim.m
    i = 3
    if Fraction(2 * a) == 1:
        while i ** (4 * m) <= 2 ** (3 * n + 2 * m):
            i += 1
        return i
    while i0_margin(i, dim, a) <= 0:
        i += 1
    return i


def two_center_margins(delta: float, delta1: float, delta2: float, dim: Dimensions):
    """log-slack of the worst two-center bubble ratio against 2.

    For centers on the delta1-sphere the ratio w_lam(x-x1)/w_lam(x-x2) is
    ((lam^2 + |x-x2|^2)/(lam^2 + |x-x1|^2))^((n-2m)/2), which moves toward 1
    as lam grows, so lam -> 0 is the worst case.  Then |x - x2|/|x - x1| is
    at most (delta1+delta2)/(delta1-delta2) for |x| <= delta2 and
    (delta+delta1)/(delta-delta1) for |x| >= delta.
    """
    e = dim.n - 2 * dim.m
    inner = math.log(2) - e * math.log((delta1 + delta2) / (delta1 - delta2))
    outer = math.log(2) - e * math.log((delta + delta1) / (delta - delta1))
    return inner, outer


def choose_geometry(k: BackgroundK, delta: float, dim: Dimensions, eps: float) -> Geometry:
    """Pick delta1, delta2 certified for the two-center bound, then a, b and i0.

    delta1 starts at delta/8 and is halved until the outer bound holds;
    delta2 is snapped to 0.75 * 2^-j below delta1/4 so that the dyadic centers
    sit in the middle of the shells 2^-t-1 < |x| < 2^-t.
    """
    delta1 = delta / 8
    while two_center_margins(delta, delta1, delta1 / 4, dim)[1] <= 0:
        delta1 /= 2
    j = math.ceil(math.log2(0.75 / (delta1 / 4)))
    delta2 = 0.75 * 2.0 ** -j
    while two_center_margins(delta, delta1, delta2, dim)[0] <= 0:
        delta2 /= 2
    kinf, ksup = k.bounds()
    a, b = kinf / 2, ksup
    return Geometry(dim, delta, delta1, delta2, eps, a, b, smallest_i0(dim, a))


def geometry_margins(g: Geometry) -> dict:
    inner, outer = two_center_margins(g.delta, g.delta1, g.delta2, g.dim)
    return {
        "(2.2) radii chain": math.log(min(g.delta1 / 2 / g.delta2, g.delta / 4 / (g.delta1 / 2))),
        "(2.3) two-center ratio": min(inner, outer),
        "(2.4) curvature bounds": 1e-12 + math.log(g.b / (2 * g.a)),
        "(2.5) polygon count": i0_margin(g.i0, g.dim, g.a),
    }


# ----------------------------------------------------------------- centers

def ring_radius_units(i0: int) -> float:
    """Circumradius of the regular i0-gon with side 4, in units of rho_1."""
    return 2.0 / math.sin(math.pi / i0)


def ring_local_coords(i0: int, n: int) -> np.ndarray:
    """Vertices of the regular i0-gon with side 4 in the (e1, e2)-plane."""
    th = 2 * np.pi * np.arange(i0) / i0
    xi = np.zeros((i0, n))
    xi[:, 0], xi[:, 1] = np.cos(th), np.sin(th)
    return ring_radius_units(i0) * xi


def place_centers(g: Geometry, N: int, log_rho1: float) -> tuple[Centers, np.ndarray]:
    """Ring of i0 centers with side 4 rho_1 on the delta1-sphere, then dyadic centers.

    Returns the centers and the radii r_i.
    """
    n, i0 = g.dim.n, g.i0
    if N < 1:
        raise ValueError("need at least one bubble")
    max_N = i0 + int(math.floor(math.log2(g.delta2 / 1e-290)))
    if N > max_N:
        raise ValueError(f"N={N} too large for the dyadic schedule; max feasible N is {max_N}")
    R_units = ring_radius_units(i0)
    if math.log(4) + log_rho1 > math.log(2 * g.delta1 * math.sin(math.pi / i0)):
        raise ValueError("polygon side 4 rho_1 exceeds the chord available on the delta1-sphere")
    R = R_units * math.exp(log_rho1)
    height = math.sqrt(max(g.delta1 ** 2 - R ** 2, 0.0))
    x = np.zeros((N, n))
    xi = np.zeros((N, n))
    cluster = np.full(N, -1)
    r = np.zeros(N)
    for idx in range(N):
        i = idx + 1
        if i <= i0:
            th = 2 * math.pi * idx / i0
            xi[idx, 0], xi[idx, 1] = R_units * math.cos(th), R_units * math.sin(th)
            x[idx, n - 1] = height
            x[idx, 0], x[idx, 1] = R * math.cos(th), R * math.sin(th)
            cluster[idx] = 0
            r[idx] = g.delta2 / 2
        else:
            x[idx, 0] = g.delta2 * 2.0 ** -(i - i0)
            r[idx] = x[idx, 0] / 8
    return Centers(x, cluster, xi, log_rho1), r


def placement_margins(g: Geometry, centers: Centers, r: np.ndarray) -> dict:
    """Log-slack of the placement conditions on |x_i|, r_i and the 2r-balls."""
    i0, N = g.i0, centers.count
    nrm = centers.norms
    out = {}
    ring = slice(0, min(i0, N))
    out["(2.6) ring on delta1-sphere"] = 1e-12 - float(np.max(np.abs(nrm[ring] / g.delta1 - 1.0)))
    out["(2.7) ring radii delta2/2"] = 1e-12 - float(np.max(np.abs(r[ring] / (g.delta2 / 2) - 1.0)))
    dy = np.arange(N) >= i0
    if np.any(dy):
        outer = np.log(g.delta2 / (nrm[dy] + 4 * r[dy]))
        inner = np.log(nrm[dy] / (4 * r[dy]))
        out["(2.8) 4r-balls inside punctured B_delta2"] = float(min(outer.min(), inner.min()))
        xs, rs = centers.x[dy], r[dy]
        worst = np.inf
        for a_ in range(len(xs)):
            for b_ in range(a_ + 1, len(xs)):
                d = np.linalg.norm(xs[a_] - xs[b_])
                worst = min(worst, math.log(d / (2 * rs[a_] + 2 * rs[b_])))
        out["(2.9) dyadic 2r-balls disjoint"] = float(worst) if np.isfinite(worst) else 1.0
    else:
        out["(2.8) 4r-balls inside punctured B_delta2"] = 1.0
        out["(2.9) dyadic 2r-balls disjoint"] = 1.0
    sep = math.log((g.delta1 - g.delta2) / g.delta2)
    out["(2.10) ring and dyadic 2r-balls disjoint"] = sep
    return out


def separation_margin(g: Geometry, centers: Centers, log_rho: np.ndarray) -> dict:
    """log-slack of dist(B_rho_i(x_i), B_rho_j(x_j)) >= rho_i + rho_j over all pairs.

    Adjacent ring centers are exactly 4 rho_1 apart and rho_i <= rho_1.
    """
    N = centers.count
    worst = np.inf
    i0 = min(g.i0, N)
    if i0 >= 2:
        xi = centers.xi[:i0]
        for i in range(i0):
            for j in range(i + 1, i0):
                d = math.log(np.linalg.norm(xi[i] - xi[j])) + centers.ring_scale_log
                worst = min(worst, d - math.log(2.0) - np.logaddexp(log_rho[i], log_rho[j]))
    for i in range(N):
        for j in range(max(i + 1, i0), N):
            d = np.linalg.norm(centers.x[i] - centers.x[j])
            worst = min(worst, math.log(d) - math.log(2.0) - np.logaddexp(log_rho[i], log_rho[j]))
    # a single ball has no pairs: the condition is vacuous
    return {"(2.21) rho-ball separation": float(worst)}


# ----------------------------------------------------------------- rho, lambda

@lru_cache(maxsize=None)
def unit_ball_potential(n: int, m: int):
    """Exact I_2m of the indicator of B_2 (rho = 1)."""
    return riesz_potential_radial(RadialDensity.ball_indicator(Fraction(2)), 2 * m, Dimensions(n, m))


def _rho_excess(log_rho: float, log_C: float, x_norm: float, g: Geometry) -> float:
    """max_x log(I_2m chi_B(2 rho)(x) / (C w(x))); feasible iff <= 0."""
    n, m = g.dim.n, g.dim.m
    G = unit_ball_potential(n, m)
    far = max(math.log(1e6) - log_rho, math.log(4.0) + 1.0)
    lt = np.concatenate([[-np.inf], np.log(np.linspace(0.05, 4.0, 80)),
                         np.linspace(math.log(4.0), far, 400)[1:]])
    logG = G.value_log(lt)
    d = np.exp(np.minimum(log_rho + lt, 700.0))
    vals = 2 * m * log_rho + logG - g.log_w(x_norm + d)
    lead = float(G.pieces[-1][2 * m - n])
    limit = n * log_rho + math.log(lead) - g.log_w0
    return float(max(vals.max(), limit)) - log_C


def rho_of_index(i: int, log_M: float, x_norm: float, g: Geometry, tol: float = 1e-8) -> float:
    """log rho_i: largest rho with I_2m(chi_{B_2rho(x_i)}) <= w / (2^(i+1) (2w(0))^p M_i).

    The field w is radial and decreasing, so along each distance d from x_i
    the binding point is |x| = |x_i| + d; beyond the last sample both sides
    decay like d^(2m-n) and the exact exterior coefficient gives the limit.
    """
    p = float(g.dim.p)
    log_C = -(i + 1) * math.log(2) - p * (math.log(2) + g.log_w0) - log_M
    G = unit_ball_potential(g.dim.n, g.dim.m)
    guess = (log_C + g.log_w(x_norm) - float(G.value_log(np.array([-np.inf]))[0])) / (2 * g.dim.m)
    lo, hi = guess - 1.0, guess + 1.0
    for _ in range(200):
        if _rho_excess(lo, log_C, x_norm, g) <= 0:
            break
        lo -= 2.0
    else:
        raise RuntimeError(f"rho bracket failure at i={i}: lower end infeasible")
    for _ in range(200):
        if _rho_excess(hi, log_C, x_norm, g) > 0:
            break
        hi += 2.0
    else:
        raise RuntimeError(f"rho bracket failure at i={i}: upper end feasible")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _rho_excess(mid, log_C, x_norm, g) <= 0:
            lo = mid
        else:
            hi = mid
    return lo


def lambda_constant_log(log_eps: float, g: Geometry) -> float:
    """log of eps^(2/(n-2m)) a^(1/(2m)) (2b)^(-n/(m(n-2m)))."""
    n, m = g.dim.n, g.dim.m
    return (2 / (n - 2 * m) * log_eps + math.log(g.a) / (2 * m)
            - n / (m * (n - 2 * m)) * math.log(2 * g.b))


def lambda_of_index(log_eps: float, log_rho: float, x_norm: float, g: Geometry) -> float:
    """log lambda_i, the sup of lambda with w_lam(x - x_i) <= eps_i a^((n-2m)/(4m)) w off B_rho_i.

    The condition reads C (lam^2 + d^2) >= lam (1 + |x|^2) with d = |x - x_i|;
    the worst |x| at distance d is |x_i| + d, and the resulting quadratic in d
    is increasing for d >= rho_i, so the binding case is d = rho_i, giving the
    smaller root lam = 2 C rho^2 / (A + sqrt(A^2 - 4 C^2 rho^2)) with
    A = 1 + (|x_i| + rho)^2.
    """
    log_C = lambda_constant_log(log_eps, g)
    rho = math.exp(log_rho)
    A = 1.0 + (x_norm + rho) ** 2
    disc_log = math.log(4) + 2 * (log_C + log_rho) - 2 * math.log(A)
    root = A * (1.0 + math.sqrt(1.0 - math.exp(disc_log))) if disc_log < 0 else A
    if disc_log >= 0:
        raise ArithmeticError("lambda quadratic has no real root; rho too large")
    log_lam = math.log(2) + log_C + 2 * log_rho - math.log(root)
    log_lam = min(log_lam, log_C)
    # vertex lam |x_i| / (C - lam) of the quadratic in d must lie left of rho
    log_gap = log_C + log1mexp(min(log_lam - log_C, -1e-300))
    if x_norm > 0 and log_lam + math.log(x_norm) - log_gap > log_rho:
        raise ArithmeticError("lambda constraint not binding at d = rho")
    return log_lam


def lambda_excess(log_lam: float, log_eps: float, log_d, x_norm: float, g: Geometry):
    """log(w_lam(d) / (eps a^((n-2m)/(4m)) w(|x_i| + d))) at distances exp(log_d)."""
    beta = float(g.dim.beta)
    bound = log_eps + float(g.dim.c_exponent) * math.log(g.a)
    d = np.exp(np.minimum(np.asarray(log_d, dtype=float), 700.0))
    return log_bubble(g.dim, log_d, log_lam) - bound - g.log_w(x_norm + d)


# ----------------------------------------------------------------- tightening

@dataclass(frozen=True)
class IndexState:
    i: int
    log_s: float
    log_k: float
    log_M: float
    log_rho: float
    log_lam: float
    log_eps: float
    x_norm: float
    r: float


def index_state(i: int, log_s: float, x_norm: float, r: float, g: Geometry) -> IndexState:
    log_eps = -(g.i0 if i <= g.i0 else i) * math.log(2)
    log_M = float(log_M_from_s(log_s, g.dim))
    log_rho = rho_of_index(i, log_M, x_norm, g)
    log_lam = lambda_of_index(log_eps, log_rho, x_norm, g)
    return IndexState(i, log_s, float(log_k_from_s(log_s)), log_M, log_rho, log_lam, log_eps,
                      x_norm, r)


def log_Z(log_z2, log_1mz2, log_z3, dim: Dimensions):
    """log Z(z2, z3) = log(z3 z2^e / (1 - z2^e)), e = (n-2m)/(4m)."""
    e = float(dim.c_exponent)
    return log_z3 + e * np.asarray(log_z2) - log1m_pow(log_z2, log_1mz2, e)


def log_kgamma(st: IndexState, dim: Dimensions):
    """(log z2, log(1 - z2)) for z2 = k^((n+2m)/(4m))."""
    gam = (dim.n + 2 * dim.m) / (4 * dim.m)
    return gam * st.log_k, float(log1m_pow(st.log_k, st.log_s, gam))


def index_margins(st: IndexState, g: Geometry, gauge, eta_max: float) -> dict:
    """Log-slack of every per-index inequality that involves index i alone."""
    dim, i = g.dim, st.i
    n, m = dim.n, dim.m
    beta, e = float(dim.beta), float(dim.c_exponent)
    alpha = float(g.alpha)
    gam = (n + 2 * m) / (4 * m)
    q3 = 3.0 ** -(n - 2 * m)
    z2, z2c = log_kgamma(st, dim)
    out = {
        "(2.19) M_i > 3^i": st.log_M - i * math.log(3),
        "(2.19) rho_i < r_i": math.log(st.r) - st.log_rho,
        "(2.19) lambda_i < delta2": math.log(g.delta2) - st.log_lam,
        "(2.20) k_i power bound": gam * st.log_k - math.log((1 + q3) / (1 + float(dim.p) * q3)),
        "(2.20) M_i^alpha bound": alpha * st.log_M - max(-4 * m / (n - 2 * m) * st.log_eps,
                                                         i * math.log(2)),
        "(2.20) lambda_i^alpha bound": (2 * m / (n - 2 * m) * st.log_eps - i * math.log(2)
                                        - alpha * st.log_lam),
        "(2.24)+ Z with M_j tail": float(log_Z(z2, z2c, -math.log(2) - alpha * e * st.log_M, dim))
        - g.log_w0,
        "(2.31) blow-up at center": (dim.log_c_nm - beta * st.log_lam - math.log(i)
                                     - float(gauge.log_value(st.x_norm))),
    }
    l2r = math.log(2 * st.r)
    far = np.logaddexp(log_bubble(dim, l2r, st.log_lam),
                       radial_derivative_bound(dim, st.log_lam, l2r))
    out["(2.32) u_i + |grad u_i| < 2^-i off B_2r"] = -i * math.log(2) - float(far)
    budget = st.log_s + float(np.logaddexp(0.0, math.log(eta_max) - st.log_rho))
    out["(2.38) C1 budget of k - kappa"] = math.log(g.eps / 4) - budget
    return out


def ring_sampled_margins(ring: list, g: Geometry, eta: np.ndarray) -> dict:
    """Sampled ring conditions on each B_2rho_j(x_j), and diagnostics.

    ``ring`` holds the states of indices 1..min(i0, N); positions are taken
    in ring-local units of rho_1 so that neighbouring centers stay resolved.
    The power-sum ratio sum u_i^p / (sum u_i)^p over i != j must stay below
    k^((n+2m)/(4m)); this is what the neighbour-ratio bound is used for, and
    it is checked directly because the literal neighbour ratio depends on
    lambda_(j+1)/lambda_(j-1), which no choice of k moves.
    """
    dim = g.dim
    i0, count = g.i0, len(ring)
    xi = ring_local_coords(i0, dim.n)[:count]
    lr1 = ring[0].log_rho
    log_rho = np.array([s.log_rho for s in ring])
    log_lam = np.array([s.log_lam for s in ring])
    z2, z2c = log_kgamma(ring[0], dim)
    p = float(dim.p)
    zmin, ratio_min, power_max = np.inf, np.inf, -np.inf
    for j in range(count):
        loc = xi[j] + 2 * math.exp(log_rho[j] - lr1) * eta
        diff = loc[:, None, :] - xi[None, :, :]
        with np.errstate(divide="ignore"):
            log_d = np.log(np.linalg.norm(diff, axis=2)) + lr1
        log_u = log_bubble(dim, log_d, log_lam[None, :])
        if count > 1:
            lsum = np.logaddexp.reduce(np.delete(log_u, j, axis=1), axis=1)
            zmin = min(zmin, float(np.min(log_Z(z2, z2c, lsum, dim))))
            psum = np.logaddexp.reduce(p * np.delete(log_u, j, axis=1), axis=1)
            power_max = max(power_max, float(np.max(psum - p * lsum)))
        if count == i0 and i0 > 2:
            ratio = log_u[:, (j + 1) % i0] - log_u[:, (j - 1) % i0]
            ratio_min = min(ratio_min, float(ratio.min()))
    side = math.log(2 * g.delta1 * math.sin(math.pi / i0)) - (math.log(4) + lr1)
    out = {"(2.6) polygon side fits chord": side}
    out["(2.25) ring Z lower bound"] = zmin - g.log_w0 if np.isfinite(zmin) else 1.0
    out["(2.25)+ power-sum ratio below k^gamma"] = z2 - power_max if np.isfinite(power_max) else 1.0
    diag = {"(2.22) neighbour ratio (literal)": (ratio_min + (dim.n - 2 * dim.m) * math.log(3)
                                                 if np.isfinite(ratio_min) else 1.0)}
    return out, diag


def dyadic_tail_margins(st: IndexState, ring: list, g: Geometry) -> dict:
    """Certified forms of the dyadic tail-domination inequalities.

    Every point of B_2r_j(x_j), j > i0, j != i, is at least 3|x_i|/8 from
    x_i and within delta1 + delta2 of x_1; every point with |x| >= delta2
    sees the ratio u_i/u_l bounded by its value at |x| = delta2.
    """
    dim = g.dim
    beta = float(dim.beta)
    e = float(dim.c_exponent)
    alpha = float(g.alpha)
    share = -(st.i - g.i0) * math.log(2) - math.log(2)
    lam = np.array([s.log_lam for s in ring])
    lam1 = ring[0].log_lam
    r33 = np.max(beta * (st.log_lam - lam)
                 + beta * (np.logaddexp(2 * lam, 2 * math.log(g.delta2 + g.delta1))
                           - 2 * math.log(g.delta2 - st.x_norm)))
    r34 = (log_bubble(dim, math.log(0.375 * st.x_norm), st.log_lam)
           - log_bubble(dim, math.log(g.delta1 + g.delta2), lam1))
    r35 = -alpha * e * st.log_M - log_bubble(dim, math.log(g.delta + g.delta1), lam1)
    return {
        "(2.33) dyadic tail below ring minimum": share - float(r33),
        "(2.34) dyadic tail below u_1/2": share - float(r34),
        "(2.35) M_j power below min u_1": -float(r35),
    }


MAX_HALVINGS = 10 ** 6


def _search(margins_at, label: str):
    """Smallest halving count h >= 1 (1 - k = 2^-(h+1)) at which every margin is positive.

    Gallops on h, then bisects; every tracked margin grows with h, so the
    passing set is an up-ray and the bisection is exact.
    """
    def ok(h):
        res = margins_at(h)
        return min(res[1].values()) > 0, res

    h = 1
    passed, res = ok(h)
    if passed:
        return h, res
    lo = h
    while True:
        h *= 2
        if h > MAX_HALVINGS:
            worst = min(res[1], key=res[1].get)
            raise RuntimeError(f"{label}: no feasible k within {MAX_HALVINGS} halvings; "
                               f"violated: {worst} (margin {res[1][worst]:.3g})")
        passed, res_h = ok(h)
        if passed:
            break
        lo, res = h, res_h
    hi, best = h, res_h
    while hi - lo > 1:
        mid = (lo + hi) // 2
        passed, res_mid = ok(mid)
        if passed:
            hi, best = mid, res_mid
        else:
            lo = mid
    return hi, best


def log_s_of(h: int) -> float:
    return -(h + 1) * math.log(2)


@dataclass
class BubbleFamily:
    geometry: Geometry
    N: int
    centers: Centers
    r: np.ndarray
    log_s: np.ndarray
    log_k: np.ndarray
    log_M: np.ndarray
    log_rho: np.ndarray
    log_lam: np.ndarray
    log_eps: np.ndarray
    halvings: np.ndarray
    margins: dict
    gauge: object = None
    diagnostics: dict = None

    @property
    def dim(self) -> Dimensions:
        return self.geometry.dim

    def state(self, idx: int) -> IndexState:
        return IndexState(idx + 1, float(self.log_s[idx]), float(self.log_k[idx]),
                          float(self.log_M[idx]), float(self.log_rho[idx]),
                          float(self.log_lam[idx]), float(self.log_eps[idx]),
                          float(self.centers.norms[idx]), float(self.r[idx]))

    def records(self) -> list:
        l10 = math.log(10)
        rows = []
        for idx in range(self.N):
            rows.append({
                "i": idx + 1,
                "x": [float(v) for v in self.centers.x[idx]],
                "ring_local": [float(v) for v in self.centers.xi[idx]] if self.centers.cluster[idx] == 0 else None,
                "r": float(self.r[idx]),
                "halvings": int(self.halvings[idx]),
                **{name: {"log10": float(getattr(self, "log_" + name)[idx]) / l10}
                   for name in ("eps", "s", "k", "M", "rho", "lam")},
            })
        return rows


def tighten_sequences(g: Geometry, N: int, gauge, ring_samples: int = 1000, seed: int = 0,
                      eta_max: float | None = None) -> BubbleFamily:
    """Choose k_i (ring in lockstep, then dyadic ascending) until every inequality holds."""
    from .background import ETA_PRIME_MAX
    from .points import ball_samples

    eta_max = ETA_PRIME_MAX if eta_max is None else eta_max
    i0 = g.i0
    eta = ball_samples(g.dim.n, ring_samples, seed)

    n_ring = min(i0, N)

    def ring_at(h):
        ring = [index_state(i, log_s_of(h), g.delta1, g.delta2 / 2, g) for i in range(1, n_ring + 1)]
        marg: dict = {}
        for st in ring:
            for k_, v in index_margins(st, g, gauge, eta_max).items():
                marg[k_] = min(marg.get(k_, np.inf), v)
        marg.update(ring_sampled_margins(ring, g, eta)[0])
        return ring, marg

    h_ring, (ring, ring_marg) = _search(ring_at, "ring group")
    diagnostics = ring_sampled_margins(ring, g, eta)[1]
    states = list(ring)
    per_index = [index_margins(s, g, gauge, eta_max) for s in states]
    halvings = [h_ring] * len(states)
    centers_all, r_all = place_centers(g, max(N, 1), ring[0].log_rho)
    prev_grad = None
    for idx in range(i0, N):
        i = idx + 1
        xn, ri = float(centers_all.norms[idx]), float(r_all[idx])

        def dyadic_at(h, i=i, xn=xn, ri=ri):
            st = index_state(i, log_s_of(h), xn, ri, g)
            marg = index_margins(st, g, gauge, eta_max)
            marg.update(dyadic_tail_margins(st, ring, g))
            if prev_grad is not None:
                marg["(2.38) gradient budget decays"] = prev_grad + math.log(0.9) - (st.log_s - st.log_rho)
            return st, marg

        h, (st, marg) = _search(dyadic_at, f"index {i}")
        states.append(st)
        per_index.append(marg)
        halvings.append(h)
        prev_grad = st.log_s - st.log_rho

    margins: dict = {}
    for marg in per_index + [ring_marg]:
        for k_, v in marg.items():
            margins[k_] = min(margins.get(k_, np.inf), v)
    margins.update(geometry_margins(g))
    margins.update(placement_margins(g, centers_all, r_all))
    margins.update(separation_margin(g, centers_all, np.array([s.log_rho for s in states])))
    arr = lambda name: np.array([getattr(s, name) for s in states])
    return BubbleFamily(g, N, centers_all, r_all, arr("log_s"), arr("log_k"), arr("log_M"),
                        arr("log_rho"), arr("log_lam"), arr("log_eps"), np.array(halvings),
                        margins, gauge, diagnostics)


def verify_sim_ratios(fam: BubbleFamily) -> dict:
    """log10 columns of the three comparability ratios and their spans."""
    n, m = fam.dim.n, fam.dim.m
    i = np.arange(1, fam.N + 1)
    l10 = math.log(10)
    cols = {
        "M(1-k)^(4m/(n-2m))": (fam.log_M + 4 * m / (n - 2 * m) * fam.log_s) / l10,
        "rho^(2m) 2^i M": (2 * m * fam.log_rho + i * math.log(2) + fam.log_M) / l10,
        "lambda/(eps^(2/(n-2m)) rho^2)": (fam.log_lam - 2 / (n - 2 * m) * fam.log_eps
                                          - 2 * fam.log_rho) / l10,
    }
    spans = {k: float(10 ** (v.max() - v.min())) for k, v in cols.items()}
    return {"columns": {k: v.tolist() for k, v in cols.items()}, "spans": spans,
            "ok": all(s < 100 for s in spans.values())}


def family_to_dict(fam: BubbleFamily) -> dict:
    return {"geometry": fam.geometry.to_dict(), "N": fam.N, "records": fam.records(),
            "margins": {k: float(v) for k, v in sorted(fam.margins.items())},
            "diagnostics": {k: float(v) for k, v in sorted((fam.diagnostics or {}).items())}}
