"""Assembly of u and K, the set S, C^1 control of K, and the theorem checks.

K is close to 1 to within 1e-1000 near the deep bubbles, so it is carried
as a :class:`~bubbletower.envelope.Curv` pair (log K, log(1 - K)), and all
comparisons between K, kappa and k are made on those pairs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .background import BackgroundK, GaugePhi
from .correction import (Context, PointGeometry, PointState, build_vbar, grad_kappa, kappa_curv,
                         log_IMbar, log_P, log_w)
from .envelope import Curv, log_M, log_Z
from .kelvin import build_bubble, log_bubble, log_bubble_slope, polyharmonic_apply
from .logmath import NEG_INF, log1mexp, log_diff, softplus
from .picard import PicardResult, StructuredField
from .points import Points, ball_samples


@dataclass
class SolutionBundle:
    """The family, the solved correction and the original (un-normalized) background."""

    ctx: Context
    field: StructuredField
    k_original: BackgroundK
    picard: PicardResult | None = None

    @property
    def fam(self):
        return self.ctx.fam

    def log_u0(self, pg: PointGeometry) -> np.ndarray:
        return self.field.log_value(pg)


# ----------------------------------------------------------------- u

def eval_u(bundle: SolutionBundle, pts: Points):
    """(log u, log sum u_i) at the points."""
    pg = PointGeometry.of(bundle.ctx, pts, units=False)
    lb = np.logaddexp.reduce(log_bubble(bundle.fam.dim, pg.log_d, bundle.fam.log_lam[None, :]), axis=1)
    return np.logaddexp(bundle.log_u0(pg), lb), lb


def _profile_slope(prof, r_log, scale_log=0.0, h=1e-3):
    """d log Phi / d log r of a grid profile, by a central difference in log r."""
    return (prof.value_log(r_log + h, scale_log) - prof.value_log(r_log - h, scale_log)) / (2 * h)


def _combine(terms, P: int, n: int):
    """Sum vectors given as (log magnitude, unit vectors); returns (unit, log norm)."""
    if not terms:
        return np.zeros((P, n)), np.full(P, NEG_INF)
    L = np.max(np.stack([t[0] for t in terms]), axis=0)
    Ls = np.where(np.isfinite(L), L, 0.0)
    vec = np.zeros((P, n))
    for lm, un in terms:
        with np.errstate(invalid="ignore"):
            vec += np.exp(np.where(np.isfinite(lm), lm - Ls, NEG_INF))[:, None] * un
    nrm = np.linalg.norm(vec, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(nrm[:, None] > 0, vec / nrm[:, None], 0.0), Ls + np.log(nrm)


def eval_gradu(bundle: SolutionBundle, pts: Points):
    """(unit direction, log |grad u|): closed form for the bubbles, profile slopes for u0."""
    fam = bundle.fam
    pg = PointGeometry.of(bundle.ctx, pts)
    P, n = len(pts), fam.dim.n
    terms = []
    for j in range(fam.N):
        lm = log_bubble_slope(fam.dim, pg.log_d[:, j], fam.log_lam[j])
        terms.append((lm, -pg.unit[:, j, :]))
        prof = bundle.field.local[j] if j < len(bundle.field.local) else None
        if prof is not None:
            sl = _profile_slope(prof, pg.log_d[:, j], float(fam.log_rho[j]))
            lv = prof.value_log(pg.log_d[:, j], float(fam.log_rho[j]))
            with np.errstate(divide="ignore"):
                terms.append((lv + np.log(np.abs(sl)) - pg.log_d[:, j], np.sign(sl)[:, None] * pg.unit[:, j, :]))
    bg = bundle.field.background
    if bg is not None:
        x = pts.global_coords(fam.log_rho)
        r = np.linalg.norm(x, axis=1)
        rhat = np.where(r[:, None] > 0, x / np.maximum(r, 1e-300)[:, None], 0.0)
        sl = _profile_slope(bg, pg.log_norm)
        with np.errstate(divide="ignore"):
            terms.append((bg.value_log(pg.log_norm) + np.log(np.abs(sl)) - pg.log_norm, np.sign(sl)[:, None] * rhat))
    return _combine(terms, P, n)


# ----------------------------------------------------------------- K

@dataclass
class KEval:
    K: Curv
    kappa: Curv
    k: Curv
    capped: np.ndarray
    active: np.ndarray
    state: PointState
    log_u0: np.ndarray


def _curv_one_minus(log_1m):
    """Curv of a value given by log(1 - value) (value below one)."""
    with np.errstate(over="ignore", divide="ignore"):
        lk = np.where(log_1m < -30, -np.exp(np.minimum(log_1m, 0.0)), np.log1p(-np.exp(np.minimum(log_1m, 0.0))))
    return lk


def eval_K(bundle: SolutionBundle, pts: Points, units: bool = False) -> KEval:
    """K = (H(x, u0) + sum u_i^p) / u^p.

    Off the capped branch F = f, and f(U, kappa, P) + U^p = kappa (U + P)^p
    with U + P = u, so K = kappa there exactly.  On the capped branch
    K = (M(kappa, P) + U^p) / (U + P)^p, written through r = P/U.
    """
    ctx = bundle.ctx
    st = PointState.of(ctx, pts, units)
    lu0 = bundle.log_u0(st.pg)
    lp = log_P(lu0, st.log_gap)
    kap = st.kappa
    below = kap.below_one
    lz = log_Z(kap, lp, ctx.dim)
    capped = below & (st.log_U > lz)
    log_k, log_1mk = kap.log_k.copy(), kap.log_1mk.copy()
    if np.any(capped):
        p = ctx.p
        lm = log_M(kap, lp, ctx.dim)
        lr = lp - st.log_U
        lA = _log_pow1p_m1(lr, p)             # log((1 + r)^p - 1)
        lB = lm - p * st.log_U                # log(M / U^p)
        den = p * softplus(lr)
        # uncapped entries may hold NaN here; np.where discards them
        with np.errstate(invalid="ignore"):
            lk_c = softplus(lB) - den
            l1_c = np.where(lA > lB, log_diff(lA, lB) - den, np.nan)
        log_k = np.where(capped, lk_c, log_k)
        log_1mk = np.where(capped, l1_c, log_1mk)
        # use the exact 1 - K form where K is within 1e-13 of 1
        fine = capped & (l1_c < -30)
        log_k = np.where(fine, _curv_one_minus(np.nan_to_num(l1_c, nan=0.0)), log_k)
    origin = np.isneginf(st.pg.log_norm)
    log_k = np.where(origin, 0.0, log_k)
    log_1mk = np.where(origin, np.nan, log_1mk)
    kcur = st.kcurv
    return KEval(Curv(log_k, log_1mk), kap, kcur, capped & ~origin, st.active, st, lu0)


def _log_pow1p_m1(lr, p: float):
    """log((1 + r)^p - 1) from log r, exact when r itself underflows."""
    from .logmath import logexpm1
    lr = np.asarray(lr, dtype=float)
    with np.errstate(over="ignore"):
        r = np.exp(np.minimum(lr, 700.0))
    small = math.log(p) + lr + np.log1p((p - 1) / 2 * np.where(lr < -30, r, 0.0))
    y = p * softplus(np.maximum(lr, -30.0))
    return np.where(lr < -30, small, logexpm1(np.maximum(y, 1e-300)))


def curv_difference(a: Curv, b: Curv) -> np.ndarray:
    """a - b as doubles, exact in sign, using 1 - value where both are within 1e-13 of 1."""
    both = a.below_one & b.below_one & ((a.log_1mk < -30) | (b.log_1mk < -30))
    with np.errstate(over="ignore", invalid="ignore"):
        plain = np.exp(a.log_k) - np.exp(b.log_k)
        near = np.exp(np.nan_to_num(b.log_1mk, nan=0.0)) - np.exp(np.nan_to_num(a.log_1mk, nan=0.0))
    return np.where(both, near, plain)


def curv_log_difference(a: Curv, b: Curv):
    """(sign, log|a - b|) on the pairs, so differences of values within 1e-1000 of 1 survive."""
    # a value of exactly one has log(1 - value) = -inf
    la1 = np.where(np.isnan(a.log_1mk) & (a.log_k == 0), NEG_INF, a.log_1mk)
    lb1 = np.where(np.isnan(b.log_1mk) & (b.log_k == 0), NEG_INF, b.log_1mk)
    with np.errstate(invalid="ignore"):
        both = ~np.isnan(la1) & ~np.isnan(lb1) & ((la1 < -30) | (lb1 < -30))
    la1, lb1 = np.nan_to_num(la1, nan=0.0), np.nan_to_num(lb1, nan=0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        near_sign = np.sign(lb1 - la1)
        near = log_diff(np.maximum(la1, lb1), np.minimum(la1, lb1))
        plain_sign = np.sign(a.log_k - b.log_k)
        plain = log_diff(np.maximum(a.log_k, b.log_k), np.minimum(a.log_k, b.log_k))
    return np.where(both, near_sign, plain_sign), np.where(both, near, plain)


def curv_leq(a: Curv, b: Curv) -> np.ndarray:
    """a <= b decided on the pairs."""
    both = a.below_one & b.below_one
    with np.errstate(invalid="ignore"):
        return np.where(both, a.log_1mk >= b.log_1mk, np.where(a.below_one, True,
                        np.where(b.below_one, False, a.log_k <= b.log_k)))


def sandwich(ke: KEval, tol: float) -> dict:
    """kappa <= K <= k within ``tol`` (absolute); also the exact-order counts."""
    lo = curv_difference(ke.K, ke.kappa)
    hi = curv_difference(ke.k, ke.K)
    exact_lo = curv_leq(ke.kappa, ke.K)
    exact_hi = curv_leq(ke.K, ke.k)
    return {"min_K_minus_kappa": float(np.min(lo)) if len(lo) else 0.0,
            "min_k_minus_K": float(np.min(hi)) if len(hi) else 0.0,
            "exact_order_violations": int(np.sum(~exact_lo) + np.sum(~exact_hi)),
            "tol": tol, "ok": bool(np.all(lo >= -tol) and np.all(hi >= -tol))}


# ----------------------------------------------------------------- S

@dataclass
class SSet:
    index: np.ndarray
    ball: np.ndarray
    log_t: np.ndarray
    extents_log: dict
    inside_rho: bool
    inside_2rho: bool


def locate_S(bundle: SolutionBundle, ke: KEval) -> SSet:
    """S = {kappa < K}: exactly the probes on the capped branch of F."""
    fam = bundle.fam
    idx = np.flatnonzero(ke.capped)
    ld = ke.state.pg.log_d[idx]
    t = ld - fam.log_rho[None, :]
    j = np.argmin(t, axis=1) if len(idx) else np.zeros(0, dtype=int)
    tj = t[np.arange(len(idx)), j] if len(idx) else np.zeros(0)
    ext = {}
    for a in np.unique(j):
        sel = j == a
        ext[int(a) + 1] = float(np.max(ld[sel, a]))
    in2 = bool(np.all(tj < math.log(2.0)))
    if not in2:
        from .correction import ConstructionError
        raise ConstructionError("a point of S lies outside every 2 rho-ball")
    return SSet(idx, j, tj, ext, bool(np.all(tj < 0.0)), in2)


def s_floor(bundle: SolutionBundle, ke: KEval, S: SSet) -> dict:
    """On S: u_j > w(0), the implied constant in u_j >= C M_j^((1-alpha)(n-2m)/(4m)),
    and the power-sum ratio test that keeps S inside B_rho."""
    fam, dim = bundle.fam, bundle.fam.dim
    if len(S.index) == 0:
        return {"count": 0, "min_log_uj_minus_log_w0": math.inf, "log_C_floor": math.inf,
                "max_power_ratio_log": -math.inf}
    lu = ke.state.log_u[S.index]
    j = S.ball
    luj = lu[np.arange(len(j)), j]
    alpha = float(fam.geometry.alpha)
    e = (dim.n - 2 * dim.m) / (4 * dim.m)
    floor = luj - (1 - alpha) * e * fam.log_M[j]
    p = float(dim.p)
    mask = np.ones_like(lu, dtype=bool)
    mask[np.arange(len(j)), j] = False
    others = np.where(mask, lu, NEG_INF)
    num = np.logaddexp.reduce(p * others, axis=1)
    den = (dim.n + 2 * dim.m) / (4 * dim.m) * fam.log_k[j] + p * np.logaddexp.reduce(others, axis=1)
    # with a single bubble there are no others and the ratio is 0
    with np.errstate(invalid="ignore"):
        ratio = np.where(np.isneginf(num), -np.inf, num - den)
    return {"count": int(len(j)),
            "min_log_uj_minus_log_w0": float(np.min(luj - fam.geometry.log_w0)),
            "log_C_floor": float(np.min(floor)),
            "max_power_ratio_log": float(np.max(ratio))}


# ----------------------------------------------------------------- grad K

def _shift(pts: Points, k: int, h: float, fam) -> Points:
    """Move each point by h (in its own offset unit, or h |x| if free) along axis k."""
    out = Points(pts.anchor.copy(), pts.y.copy(), pts.eta.copy(),
                 None if pts.log_scale is None else pts.log_scale.copy())
    free = out.anchor < 0
    scale = np.linalg.norm(out.y, axis=1)
    out.y[free, k] += h * scale[free]
    out.eta[~free, k] += h
    return out


def _central(bundle, pts, k, h):
    """(sign, log|K(x + h e_k) - K(x - h e_k)|) in the points' own offset units."""
    a = eval_K(bundle, _shift(pts, k, h, bundle.fam)).K
    b = eval_K(bundle, _shift(pts, k, -h, bundle.fam)).K
    return curv_log_difference(a, b)


def fd_grad_K(bundle: SolutionBundle, pts: Points, h: float = 1e-4) -> np.ndarray:
    """log |grad K| by Richardson-extrapolated central differences on the Curv pairs.

    The step is h times the point's offset unit (rho_j near bubble j) or
    h |x| for free points, and every difference is taken in log form.
    """
    fam = bundle.fam
    n = fam.dim.n
    with np.errstate(divide="ignore"):
        unit_log = np.where(pts.anchor >= 0, pts.scale_log(fam.log_rho), np.log(np.linalg.norm(pts.y, axis=1)))
    comps = []
    for k in range(n):
        s1, l1 = _central(bundle, pts, k, h)
        s2, l2 = _central(bundle, pts, k, h / 2)
        # (4 D(h/2) - D(h)) / 3 with D the difference quotient: 2 d2/h... in log form
        top = np.maximum(l1, l2)
        top = np.where(np.isfinite(top), top, 0.0)
        with np.errstate(invalid="ignore", over="ignore"):
            val = (8 * s2 * np.exp(l2 - top) - s1 * np.exp(l1 - top)) / 3
        with np.errstate(divide="ignore"):
            comps.append(top + np.log(np.abs(val)))
    comps = np.stack(comps)
    with np.errstate(divide="ignore", invalid="ignore"):
        return 0.5 * np.logaddexp.reduce(2 * comps, axis=0) - math.log(2 * h) - unit_log


def grad_K(bundle: SolutionBundle, pts: Points, ke: KEval):
    """log |grad K|: grad kappa off S, finite differences on S."""
    _, lg = grad_kappa(bundle.ctx, pts)
    out = lg.copy()
    if np.any(ke.capped):
        sub = pts.subset(np.flatnonzero(ke.capped))
        out[ke.capped] = fd_grad_K(bundle, sub)
    return out


def shell_trend(log_norm: np.ndarray, log_grad: np.ndarray, t_min: int = 0) -> dict:
    """sup |grad K| on the dyadic shells 2^-t-1 < |x| <= 2^-t and the final decreasing run."""
    t = np.floor(-log_norm / math.log(2)).astype(int)
    ok = np.isfinite(log_norm) & (t >= t_min)
    shells = sorted(set(t[ok].tolist()))
    sup = {s: float(np.max(log_grad[ok & (t == s)])) for s in shells}
    run = 1
    for a, b in zip(shells[::-1][1:], shells[::-1][:-1]):
        if b == a + 1 and sup[b] < sup[a]:
            run += 1
        else:
            break
    return {"shells": shells, "log_sup": [sup[s] for s in shells], "final_run": run,
            "deepest": shells[-1] if shells else None}


def verify_C1(bundle: SolutionBundle, pts: Points, ke: KEval, S: SSet, eps: float,
              envelope_C: float = 1.0) -> dict:
    """Shell trend of sup |grad K|, ||K - k||_C1 < eps, and the envelope on S."""
    fam = bundle.fam
    lg = grad_K(bundle, pts, ke)
    x = pts.global_coords(fam.log_rho)
    kv, _ = bundle.k_original.profile(np.linalg.norm(x, axis=1))
    kc = Curv.from_values(kv)
    c0 = float(np.max(np.abs(curv_difference(ke.K, kc))))
    gk = bundle.k_original.grad(x)
    gvec, _ = grad_kappa(bundle.ctx, pts)
    diff = np.linalg.norm(np.where(ke.capped[:, None], 0.0, gvec) - gk, axis=1)
    diff = diff + np.where(ke.capped, np.exp(np.minimum(lg, 700.0)), 0.0)
    c1 = c0 + float(np.max(diff))
    trend = shell_trend(ke.state.pg.log_norm, lg)
    env = {"count": 0, "min_margin": math.inf}
    if len(S.index):
        m = fam.dim.m
        j = S.ball
        le = np.logaddexp(-(m + 2) / (4 * m * (m + 1)) * fam.log_M[j], fam.log_lam[j] / 8)
        marg = math.log(envelope_C) + le - lg[S.index]
        env = {"count": int(len(j)), "min_margin": float(np.min(marg))}
    return {"log_grad": lg, "trend": trend, "C1_distance": c1, "C0_part": c0,
            "C1_ok": c1 < eps, "envelope": env}


def gradient_dichotomy(bundle: SolutionBundle, pts: Points, ke: KEval, rtol: float = 1e-6) -> dict:
    """Finite-difference grad K against the closed-form grad kappa off S."""
    sel = np.flatnonzero(~ke.capped)
    if len(sel) == 0:
        return {"count": 0, "max_rel_error": 0.0, "ok": True}
    sub = pts.subset(sel)
    fd = fd_grad_K(bundle, sub)
    _, an = grad_kappa(bundle.ctx, sub)
    both = np.isfinite(fd) & np.isfinite(an)
    # where grad kappa vanishes identically the differences must vanish too
    zero_ok = bool(np.all(~np.isfinite(fd[~np.isfinite(an)]) | (fd[~np.isfinite(an)] < -600)))
    rel = np.abs(np.expm1(fd[both] - an[both])) if np.any(both) else np.zeros(0)
    err = float(rel.max()) if len(rel) else 0.0
    return {"count": int(len(sel)), "max_rel_error": err, "ok": err < rtol and zero_ok}


# ----------------------------------------------------------------- conclusions

def blow_up(bundle: SolutionBundle, gauge: GaugePhi) -> dict:
    """log u(x_i) - log(i phi(|x_i|)) for every center."""
    fam = bundle.fam
    pts = Points.concat([Points.around(fam.centers, j, np.zeros((1, fam.dim.n))) for j in range(fam.N)])
    lu, _ = eval_u(bundle, pts)
    i = np.arange(1, fam.N + 1)
    marg = lu - np.log(i) - gauge.log_value(fam.centers.norms)
    return {"margins": marg.tolist(), "min_margin": float(marg.min()), "ok": bool(np.all(marg > 0)),
            "increasing": bool(np.all(np.diff(marg) > 0)),
            "log10_lambda_N": float(fam.log_lam[-1] / math.log(10))}


def decay(bundle: SolutionBundle, pts: Points) -> dict:
    """max over |x| in [10, 100] of |x|^(n-2m) u against sum c_nm lambda_i^((n-2m)/2)."""
    fam = bundle.fam
    lu, _ = eval_u(bundle, pts)
    ln = pts.log_norm(fam.log_rho)
    beta = float(fam.dim.beta)
    coeff = float(np.logaddexp.reduce(fam.dim.log_c_nm + beta * fam.log_lam))
    scaled = lu + 2 * beta * ln
    ratio = float(np.exp(np.max(scaled) - coeff))
    return {"coefficient_log10": coeff / math.log(10), "max_ratio": ratio,
            "min_ratio": float(np.exp(np.min(scaled) - coeff)), "ok": 0.25 <= ratio <= 4.0}


def signs(bundle: SolutionBundle) -> dict:
    """Positivity of every coefficient of (-Delta)^s w for 1 <= s <= m, and H > 0 at the nodes."""
    dim = bundle.fam.dim
    w = build_bubble(dim)
    ok_coeff = all(all(c > 0 for c in polyharmonic_apply(w, s, dim).terms.values())
                   for s in range(1, dim.m + 1))
    dens = bundle.picard.min_log_density if bundle.picard else math.inf
    return {"coefficients_positive": ok_coeff, "min_log_density": float(dens),
            # the density is H >= 0 in log form: -inf (u0 = 0) is allowed, NaN is not
            "ok": ok_coeff and not math.isnan(dens)}


# ----------------------------------------------------------------- sphere

def stereo_inverse(x: np.ndarray) -> np.ndarray:
    """x in R^n to xi on S^n; the origin goes to the south pole -e_(n+1)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    r2 = np.sum(x * x, axis=1)
    return np.concatenate([2 * x, (r2 - 1)[:, None]], axis=1) / (1 + r2)[:, None]


def stereo_forward(xi: np.ndarray) -> np.ndarray:
    """xi on S^n minus the north pole to R^n."""
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    top, last = xi[:, :-1], xi[:, -1]
    # near the north pole 1 - xi_last cancels; |xi'|^2 / (1 + xi_last) does not
    den = np.where(last > 0, np.sum(top * top, axis=1) / (1 + np.abs(last)), 1 - last)
    return top / den[:, None]


def conformal_log_factor(x: np.ndarray, dim) -> np.ndarray:
    """log (2/(1 + |x|^2))^((n-2m)/2)."""
    r2 = np.sum(np.atleast_2d(x) ** 2, axis=1)
    return float(dim.beta) * (math.log(2) - np.log1p(r2))


@dataclass
class SphereSample:
    xi: np.ndarray
    log_v: np.ndarray


def sphere_pullback(bundle: SolutionBundle, pts: Points) -> SphereSample:
    """v(xi) = (2/(1 + |x|^2))^(-(n-2m)/2) u(x) at xi = stereo_inverse(x)."""
    x = pts.global_coords(bundle.fam.log_rho)
    lu, _ = eval_u(bundle, pts)
    return SphereSample(stereo_inverse(x), lu - conformal_log_factor(x, bundle.fam.dim))


# ----------------------------------------------------------------- supporting checks

def tail_envelope(bundle: SolutionBundle, pg: PointGeometry) -> float:
    """min log(eps_i a^e w(x)) - log u_i(x) over probes with |x - x_i| >= rho_i."""
    fam = bundle.fam
    dim = fam.dim
    e = (dim.n - 2 * dim.m) / (4 * dim.m)
    lu = log_bubble(dim, pg.log_d, fam.log_lam[None, :])
    bound = fam.log_eps[None, :] + e * math.log(fam.geometry.a) + log_w(bundle.ctx, pg)[:, None]
    off = pg.log_d >= fam.log_rho[None, :]
    return float(np.min(np.where(off, bound - lu, np.inf)))


def vbar_checks(bundle: SolutionBundle, pg: PointGeometry) -> dict:
    """I_2m Mbar < w/2 and w/(2b) < vbar < w at the probes (log margins)."""
    vb = build_vbar(bundle.ctx, pg)
    lw = log_w(bundle.ctx, pg)
    b = bundle.fam.geometry.b
    return {"IMbar_below_half_w": float(np.min(lw - math.log(2) - log_IMbar(bundle.ctx, pg))),
            "vbar_below_w": float(np.min(lw - vb.log_value)),
            # vbar - w/(2b) = I_2m Mbar > 0: report its log ratio to w/(2b)
            "vbar_above_w_over_2b_log_excess": float(np.min(vb.log_potential_part - (lw - math.log(2 * b))))}


# ----------------------------------------------------------------- probes

def standard_probes(fam, count: int = 10_000, seed: int = 0) -> tuple[Points, dict]:
    """The mandated probe cloud and named index groups into it.

    Centers, balls B_2rho about every center, the cutoff shells rho < d < 3rho/2,
    cores on the lambda scale, dyadic shells about the origin, an origin
    approach, the far field 10 <= |x| <= 100, and a background fill.
    """
    n, N = fam.dim.n, fam.N
    rng = np.random.default_rng(seed)
    groups, parts, at = {}, [], 0

    def add(name, pts):
        nonlocal at
        parts.append(pts)
        groups.setdefault(name, []).extend(range(at, at + len(pts)))
        at += len(pts)

    add("centers", Points.concat([Points.around(fam.centers, j, np.zeros((1, n))) for j in range(N)]))
    per_ball = max(count // (6 * N), 20)
    ball = ball_samples(n, per_ball, seed + 1, radius=2.0)
    dirs = ball_samples(n, per_ball, seed + 2)[2 * n + 1:]
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = np.linspace(1.0, 1.5, 9)[1:-1]
    shell = (radii[:, None, None] * dirs[None]).reshape(-1, n)
    for j in range(N):
        add("balls", Points.around(fam.centers, j, ball))
        add("cutoff_shells", Points.around(fam.centers, j, shell))
        lt = fam.log_lam[j] + np.log(np.geomspace(1e-2, 1e2, 9))
        add("cores", Points.around(fam.centers, j, np.tile(dirs[:1], (len(lt), 1)), lt))
    norms = fam.centers.norms
    t_hi = int(math.floor(-math.log2(norms.min())))
    t_lo = max(int(math.floor(-math.log2(2 * fam.geometry.delta1))) - 1, 0)
    per_shell = max(count // (20 * max(t_hi - t_lo + 1, 1)), 10)
    for t in range(t_lo, t_hi + 1):
        u = rng.random(per_shell)
        r = 2.0 ** (-t - 1) * (1 + u)
        d = rng.standard_normal((per_shell, n))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        add("dyadic_shells", Points.free(r[:, None] * d))
    steps = np.arange(t_lo, t_hi + 1)
    e = np.zeros((len(steps), n))
    e[:, 1] = 1.0
    add("origin_approach", Points.free(2.0 ** (-steps - 0.5)[:, None] * e))
    far_count = max(count // 50, 20)
    d = rng.standard_normal((far_count, n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    add("far_field", Points.free(np.geomspace(10.0, 100.0, far_count)[:, None] * d))
    rest = max(count - at, 2 * n + 2)
    add("background", Points.free(ball_samples(n, rest, seed + 3, radius=3.0)[1:]))
    return Points.concat(parts), {k: np.array(v) for k, v in groups.items()}
