"""Cutoff kappa, the tent density, the super-solution and the nonlinearity H at points."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .background import BackgroundK, eta, eta_prime
from .envelope import Curv, log_H, log_f
from .kelvin import log_bubble, log_bubble_slope
from .logmath import NEG_INF, log_diff
from .param_select import BubbleFamily
from .points import Points, displacements
from .riesz import RadialDensity, riesz_potential_radial


class ConstructionError(RuntimeError):
    """A structural invariant of the construction is violated."""


@dataclass
class Context:
    """Family plus background, with per-call caches of point geometry."""

    fam: BubbleFamily
    k: BackgroundK

    @property
    def dim(self):
        return self.fam.dim

    @property
    def p(self) -> float:
        return float(self.fam.dim.p)


@dataclass
class PointGeometry:
    points: Points
    log_d: np.ndarray
    unit: np.ndarray
    log_norm: np.ndarray

    @classmethod
    def of(cls, ctx: Context, pts: Points, units: bool = True) -> "PointGeometry":
        ld, un = displacements(pts, ctx.fam.centers, ctx.fam.log_rho, units)
        return cls(pts, ld, un, pts.log_norm(ctx.fam.log_rho))

    @property
    def norm(self):
        return np.exp(self.log_norm)


# ----------------------------------------------------------------- kappa

def kappa_curv(ctx: Context, pg: PointGeometry):
    """kappa at the points as a Curv pair, plus the index of the active cutoff (-1 if none)."""
    fam = ctx.fam
    t_log = pg.log_d - fam.log_rho[None, :]
    active = t_log < math.log(1.5)
    count = active.sum(axis=1)
    if np.any(count > 1):
        raise ConstructionError("cutoff supports overlap")
    idx = np.where(count == 1, np.argmax(active, axis=1), -1)
    r = pg.norm
    kx, _ = ctx.k.profile(r)
    cur = Curv.from_values(kx)
    log_k, log_1mk = cur.log_k.copy(), cur.log_1mk.copy()
    sel = np.flatnonzero(idx >= 0)
    if len(sel):
        j = idx[sel]
        t = np.exp(t_log[sel, j])
        et = eta(t)
        with np.errstate(divide="ignore"):
            l_eta = np.log(et)
        flat = r[sel] < ctx.k.flat_radius()
        # inside B_delta: 1 - kappa = s_j eta_j
        l1 = fam.log_s[j] + l_eta
        generic = 1.0 - (kx[sel] * (1 - et) + np.exp(fam.log_k[j]) * et)
        with np.errstate(divide="ignore", invalid="ignore"):
            l1g = np.where(generic > 0, np.log(generic), np.nan)
        l1 = np.where(flat, l1, l1g)
        # eta = 0 at the edge of the support: kappa = 1 exactly
        log_1mk[sel] = np.where(np.isneginf(l1), np.nan, l1)
        with np.errstate(divide="ignore"):
            log_k[sel] = np.where(flat, np.log1p(-np.exp(np.minimum(l1, 0.0))),
                                  np.log(kx[sel] * (1 - et) + np.exp(fam.log_k[j]) * et))
    return Curv(log_k, log_1mk), idx


def eval_kappa(ctx: Context, pts: Points) -> np.ndarray:
    c, _ = kappa_curv(ctx, PointGeometry.of(ctx, pts))
    return np.exp(c.log_k)


def grad_kappa(ctx: Context, pts: Points):
    """(gradient vectors, log of their norms).

    Inside B_delta the gradient is (k_i - 1)/rho_i eta'(|x-x_i|/rho_i) times the
    unit vector; its log-norm stays finite when the vector underflows.
    """
    fam = ctx.fam
    pg = PointGeometry.of(ctx, pts)
    _, idx = kappa_curv(ctx, pg)
    x = pts.global_coords(fam.log_rho)
    g = ctx.k.grad(x)
    with np.errstate(divide="ignore"):
        lg = np.log(np.linalg.norm(g, axis=1))
    sel = np.flatnonzero(idx >= 0)
    if len(sel):
        j = idx[sel]
        t = np.exp(pg.log_d[sel, j] - fam.log_rho[j])
        ep = eta_prime(t)
        with np.errstate(divide="ignore"):
            lmag = fam.log_s[j] - fam.log_rho[j] + np.log(np.abs(ep))
        flat = pg.norm[sel] < ctx.k.flat_radius()
        # k_j - 1 < 0 flips the sign of eta'
        vec = (-np.exp(lmag) * np.sign(ep))[:, None] * pg.unit[sel, j, :]
        # kappa = k + (k_j - k) eta_j: away from B_delta add the product-rule terms
        kx, dk = ctx.k.profile(pg.norm[sel])
        et = eta(t)
        kj = np.exp(fam.log_k[j])
        rhat = np.where(pg.norm[sel, None] > 0, x[sel] / np.maximum(pg.norm[sel], 1e-300)[:, None], 0)
        # the generic branch is only kept where rho_j is resolvable in doubles
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            generic = ((dk * (1 - et))[:, None] * rhat
                       + ((kj - kx) * ep / np.exp(fam.log_rho[j]))[:, None] * pg.unit[sel, j, :])
        g[sel] = np.where(flat[:, None], vec, generic)
        with np.errstate(divide="ignore"):
            lg[sel] = np.where(flat, lmag, np.log(np.linalg.norm(generic, axis=1)))
    return g, lg


# ----------------------------------------------------------------- bubbles

def log_bubbles(ctx: Context, pg: PointGeometry) -> np.ndarray:
    """log u_i at the points, shape (P, N)."""
    return log_bubble(ctx.dim, pg.log_d, ctx.fam.log_lam[None, :])


def log_U_and_sum(log_u: np.ndarray, p: float):
    """log U = log (sum u_i^p)^(1/p), log sum u_i and log(sum u_i - U) >= 0 part."""
    lsum = np.logaddexp.reduce(log_u, axis=1)
    lU = np.logaddexp.reduce(p * log_u, axis=1) / p
    top = np.max(log_u, axis=1)
    rel = log_u - top[:, None]
    # S1 = sum of the other ratios, Sp = sum of their p-th powers
    first = np.argmax(log_u, axis=1)
    mask = np.ones_like(log_u, dtype=bool)
    mask[np.arange(len(first)), first] = False
    with np.errstate(divide="ignore"):
        lS1 = np.logaddexp.reduce(np.where(mask, rel, NEG_INF), axis=1)
        lSp = np.logaddexp.reduce(np.where(mask, p * rel, NEG_INF), axis=1)
        Sp = np.exp(lSp)
        lg = np.where(lSp < -30, lSp - np.log(p), np.log(np.expm1(np.log1p(Sp) / p)))
        lgap = top + log_diff(lS1, lg)
    return lU, lsum, lgap


def log_P(log_v, lgap):
    return np.logaddexp(log_v, lgap)


# ----------------------------------------------------------------- Mbar, vbar

@lru_cache(maxsize=None)
def unit_tent_potential(n: int, m: int):
    from .kelvin import Dimensions
    return riesz_potential_radial(RadialDensity.tent(Fraction(1)), 2 * m, Dimensions(n, m))


def log_Mbar_coeff(ctx: Context) -> np.ndarray:
    """log of the plateau heights (2 w(0))^p M_i."""
    g = ctx.fam.geometry
    return ctx.p * (math.log(2) + g.log_w0) + ctx.fam.log_M


def log_Mbar(ctx: Context, pg: PointGeometry) -> np.ndarray:
    t_log = pg.log_d - ctx.fam.log_rho[None, :]
    t = np.exp(np.minimum(t_log, 5.0))
    with np.errstate(divide="ignore"):
        tent = np.log(np.clip(2.0 - t, 0.0, 1.0))
    vals = log_Mbar_coeff(ctx)[None, :] + tent
    return np.max(vals, axis=1)


def log_IMbar(ctx: Context, pg: PointGeometry) -> np.ndarray:
    """log I_2m Mbar, summed exactly from the unit-tent potential at each center."""
    fam = ctx.fam
    T = unit_tent_potential(fam.dim.n, fam.dim.m)
    t_log = pg.log_d - fam.log_rho[None, :]
    shape = t_log.shape
    vals = T.value_log(t_log.ravel()).reshape(shape)
    vals = vals + (log_Mbar_coeff(ctx) + 2 * fam.dim.m * fam.log_rho)[None, :]
    return np.logaddexp.reduce(vals, axis=1)


def log_w(ctx: Context, pg: PointGeometry) -> np.ndarray:
    return ctx.fam.geometry.log_w(pg.norm)


@dataclass
class SuperSolution:
    """vbar = w/(2b) + I_2m Mbar, both parts kept separately in log form."""

    log_w_part: np.ndarray
    log_potential_part: np.ndarray

    @property
    def log_value(self):
        return np.logaddexp(self.log_w_part, self.log_potential_part)


def build_vbar(ctx: Context, pg: PointGeometry) -> SuperSolution:
    b = ctx.fam.geometry.b
    return SuperSolution(log_w(ctx, pg) - math.log(2 * b), log_IMbar(ctx, pg))


def log_Lm_vbar(ctx: Context, pg: PointGeometry) -> np.ndarray:
    """log (-Delta)^m vbar = log((2b)^((n+2m)/(n-2m)) w^p + Mbar)."""
    b = ctx.fam.geometry.b
    lw = log_w(ctx, pg)
    return np.logaddexp(ctx.p * math.log(2 * b) + ctx.p * lw, log_Mbar(ctx, pg))


# ----------------------------------------------------------------- H

@dataclass
class PointState:
    """Everything H needs at a fixed point set: U, the P-gap, kappa and k."""

    pg: PointGeometry
    log_u: np.ndarray
    log_U: np.ndarray
    log_sum: np.ndarray
    log_gap: np.ndarray
    kappa: Curv
    kcurv: Curv
    active: np.ndarray

    @classmethod
    def of(cls, ctx: Context, pts: Points, units: bool = True) -> "PointState":
        pg = PointGeometry.of(ctx, pts, units)
        lu = log_bubbles(ctx, pg)
        lU, lsum, lgap = log_U_and_sum(lu, ctx.p)
        kap, idx = kappa_curv(ctx, pg)
        kcur = Curv.from_values(ctx.k.profile(pg.norm)[0])
        return cls(pg, lu, lU, lsum, lgap, kap, kcur, idx)


def eval_U_P(ctx: Context, pts: Points, log_v):
    st = PointState.of(ctx, pts)
    return st.log_U, log_P(log_v, st.log_gap)


def eval_H(ctx: Context, st: PointState, log_v, variant: str = "mid") -> np.ndarray:
    """log H(x, v): ``under`` = f(U, kappa, P) (may be negative: returns (sign, log)),
    ``mid`` = F(U, kappa, P), ``over`` = F(U, k, P)."""
    lp = log_P(log_v, st.log_gap)
    if variant == "under":
        return log_f(st.log_U, st.kappa, lp, ctx.dim)
    if variant == "mid":
        return log_H(st.log_U, st.kappa, lp, ctx.dim)
    if variant == "over":
        return log_H(st.log_U, st.kcurv, lp, ctx.dim)
    raise ValueError(f"unknown variant {variant!r}")


def check_supersolution(ctx: Context, pts: Points, levels: int = 16) -> dict:
    """Margin log((-Delta)^m vbar) - log H(x, v) over v in [0, w(x)]."""
    st = PointState.of(ctx, pts)
    rhs = log_Lm_vbar(ctx, st.pg)
    lw = log_w(ctx, st.pg)
    worst, witness = np.inf, None
    fracs = np.linspace(0.0, 1.0, levels)
    with np.errstate(divide="ignore"):
        lf = np.log(fracs)
    for q, l in zip(fracs, lf):
        lh = eval_H(ctx, st, lw + l, "mid")
        marg = rhs - lh
        k = int(np.argmin(marg))
        if marg[k] < worst:
            worst, witness = float(marg[k]), (k, float(q))
    return {"min_margin": worst, "witness_point": witness[0], "witness_fraction": witness[1],
            "count": len(pts) * levels, "ok": worst > 0}
