"""Monotone Picard iteration for the correction u0 = I_2m H(., u0).

The iterate is kept in a structured form

    v(x) = Phi_0(|x|) + sum_i Phi_i(|x - x_i|),

where Phi_i is the Riesz potential of the angular average, about x_i, of the
source H(., v) restricted to a local ball B_{R_i}(x_i), and Phi_0 is the
potential of the spherical average, about the origin, of the source
everywhere else.  Local averages use a radial grid in units of rho_i that
resolves lambda_i, rho_i and the cutoff shell; the background average uses
randomized Sobol directions split into groups, and the spread between groups
gives the recorded standard error.

Every node set is fixed across iterations, so the discrete map is
monotone: H is nondecreasing in v and every quadrature weight is positive.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

from .correction import Context, PointGeometry, PointState, build_vbar, eval_H
from .logmath import NEG_INF
from .points import Points
from .radial_grid import GridProfile, geometric_grid, riesz_grid_profile


@dataclass
class PicardConfig:
    tol: float = 1e-4
    max_iter: int = 50
    local_dirs: int = 16
    groups: int = 8
    group_size: int = 64
    per_efold: int = 4
    deep_nodes: int = 400
    seed: int = 0


def sphere_directions(n: int, count: int, seed: int) -> np.ndarray:
    """Unit vectors from Gaussianized scrambled Sobol points."""
    sob = qmc.Sobol(n, scramble=True, seed=seed)
    u = sob.random_base2(int(math.ceil(math.log2(max(count, 2)))))[:count]
    g = ndtri(np.clip(u, 1e-12, 1 - 1e-12))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def local_radius_log(fam, idx: int) -> float:
    """log R_i: half the ring side for ring centers, 2 r_i for dyadic ones."""
    if fam.centers.cluster[idx] == 0:
        return math.log(2.0) + fam.centers.ring_scale_log
    return math.log(2.0 * fam.r[idx])


def local_grid(fam, idx: int, cfg: PicardConfig) -> tuple[np.ndarray, int]:
    """Radial nodes in units of rho_i and the count of deep (t < 1e-2) nodes."""
    log_lo = fam.log_lam[idx] - fam.log_rho[idx] - math.log(1e3)
    log_hi = local_radius_log(fam, idx) - fam.log_rho[idx]
    split = math.log(1e-2)
    # deep part: a power law away from lambda, so a capped node count suffices
    count = int(min(cfg.deep_nodes, max(8, cfg.per_efold * (split - log_lo))))
    deep = np.linspace(log_lo, split, count, endpoint=False)
    lam_log = fam.log_lam[idx] - fam.log_rho[idx]
    fine = lam_log + np.log(np.geomspace(1e-2, 1e2, 33))
    deep = np.union1d(deep, fine[fine < split])
    # near part resolves the cutoff shell; the middle is again a power law
    near_hi = min(log_hi, math.log(50.0))
    near = np.linspace(split, near_hi, max(2, int(math.ceil(cfg.per_efold * (near_hi - split))) + 1))
    near = np.union1d(near, np.log(np.linspace(1.0, 2.0, 21)))
    far_lo = max(near_hi, log_hi - math.log(1e3))
    mid = np.linspace(near_hi, far_lo, int(min(cfg.deep_nodes, max(2, cfg.per_efold * (far_lo - near_hi)))))
    far = np.linspace(far_lo, log_hi, max(2, int(math.ceil(cfg.per_efold * (log_hi - far_lo))) + 1))
    outer = np.union1d(np.union1d(near, mid), far)
    outer = _dedupe(outer[(outer >= split) & (outer <= log_hi + 1e-12)])
    deep = _dedupe(deep)
    return np.concatenate([deep, outer]), len(deep)


def _dedupe(lt: np.ndarray, gap: float = 5e-3) -> np.ndarray:
    """Drop log nodes closer than ``gap`` to the previous kept node."""
    keep = [lt[0]]
    for x in lt[1:]:
        if x - keep[-1] > gap:
            keep.append(x)
    return np.array(keep)


@dataclass
class NodeSet:
    """Fixed quadrature nodes with the v-independent parts of H cached."""

    points: Points
    state: PointState
    weight_shape: tuple
    inside: np.ndarray

    def log_density(self, ctx: Context, log_v: np.ndarray) -> np.ndarray:
        lh = eval_H(ctx, self.state, log_v, "mid")
        return np.where(self.inside, lh, NEG_INF)


def _state(ctx: Context, pts: Points, chunk: int = 20000) -> PointState:
    parts = []
    for a in range(0, len(pts), chunk):
        sub = pts.subset(slice(a, a + chunk))
        parts.append(PointState.of(ctx, sub, units=False))
    if len(parts) == 1:
        return parts[0]
    from .envelope import Curv
    cat = np.concatenate
    pg = PointGeometry(pts, cat([s.pg.log_d for s in parts]), None, cat([s.pg.log_norm for s in parts]))
    return PointState(pg, cat([s.log_u for s in parts]), cat([s.log_U for s in parts]),
                      cat([s.log_sum for s in parts]), cat([s.log_gap for s in parts]),
                      Curv(cat([s.kappa.log_k for s in parts]), cat([s.kappa.log_1mk for s in parts])),
                      Curv(cat([s.kcurv.log_k for s in parts]), cat([s.kcurv.log_1mk for s in parts])),
                      cat([s.active for s in parts]))


def _lmean(x: np.ndarray, axis: int) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.logaddexp.reduce(x, axis=axis) - math.log(x.shape[axis])


@dataclass
class StructuredField:
    """v = Phi_0(|x|) + sum_i Phi_i(|x - x_i|), all parts as log grid profiles."""

    log_rho: np.ndarray
    background: GridProfile | None = None
    local: list = field(default_factory=list)
    group_backgrounds: list = field(default_factory=list)

    def log_value(self, pg: PointGeometry) -> np.ndarray:
        parts = [np.full(len(pg.log_norm), NEG_INF)]
        if self.background is not None:
            parts.append(self.background.value_log(pg.log_norm))
        for j, prof in enumerate(self.local):
            if prof is not None:
                parts.append(prof.value_log(pg.log_d[:, j], float(self.log_rho[j])))
        return np.logaddexp.reduce(np.stack(parts), axis=0)

    def log_std_error(self, pg: PointGeometry) -> np.ndarray:
        """log of the background standard error, from the spread between direction groups."""
        if not self.group_backgrounds:
            return np.full(len(pg.log_norm), NEG_INF)
        lv = np.stack([g.value_log(pg.log_norm) for g in self.group_backgrounds])
        lm = _lmean(lv, 0)
        live = np.isfinite(lm)
        safe = np.where(live, lm, 0.0)
        rel = np.exp(lv - safe[None, :]).std(axis=0, ddof=1) / math.sqrt(len(lv))
        with np.errstate(divide="ignore"):
            return np.where(live, lm + np.log(rel), NEG_INF)


class PicardSolver:
    """Builds the node sets once and iterates v_{k+1} = I_2m H(., v_k)."""

    def __init__(self, ctx: Context, cfg: PicardConfig | None = None):
        self.ctx, self.cfg = ctx, cfg or PicardConfig()
        fam, n = ctx.fam, ctx.dim.n
        rng = np.random.default_rng(self.cfg.seed)
        self.local_nodes, self.local_grids = [], []
        for idx in range(fam.N):
            logt, deep = local_grid(fam, idx, self.cfg)
            dirs = sphere_directions(n, self.cfg.local_dirs, int(rng.integers(2 ** 31)))
            dirs = np.concatenate([dirs, -dirs])
            D = len(dirs)
            eta = np.concatenate([np.tile(dirs[:2], (deep, 1)), np.tile(dirs, (len(logt) - deep, 1))])
            ls = fam.log_rho[idx] + np.concatenate([np.repeat(logt[:deep], 2), np.repeat(logt[deep:], D)])
            pts = Points.around(fam.centers, idx, eta, ls)
            inside = np.ones(len(pts), dtype=bool)
            self.local_nodes.append(NodeSet(pts, _state(ctx, pts), (deep, len(dirs)), inside))
            self.local_grids.append(logt)
        # background: spherical shells about the origin
        lo = float(np.min(fam.centers.norms)) / 16
        bg_t = geometric_grid(lo, 1e4, self.cfg.per_efold)
        self.bg_lt = np.log(bg_t)
        G, S = self.cfg.groups, self.cfg.group_size
        dirs = sphere_directions(n, G * S, int(rng.integers(2 ** 31)))
        y = (bg_t[:, None, None] * dirs[None]).reshape(-1, n)
        pts = Points.free(y)
        st = _state(ctx, pts)
        R = np.array([local_radius_log(fam, j) for j in range(fam.N)])
        inside = ~np.any(st.pg.log_d < R[None, :], axis=1)
        self.bg_nodes = NodeSet(pts, st, (len(bg_t), G, S), inside)

    @property
    def node_count(self) -> int:
        return len(self.bg_nodes.points) + sum(len(s.points) for s in self.local_nodes)

    def apply(self, field_: StructuredField) -> tuple[StructuredField, float]:
        """One Picard step; returns the new field and the minimum log density."""
        ctx, fam = self.ctx, self.ctx.fam
        n, m = ctx.dim.n, ctx.dim.m
        out = StructuredField(fam.log_rho)
        lo = np.inf
        for idx, ns in enumerate(self.local_nodes):
            lg = ns.log_density(ctx, field_.log_value(ns.state.pg))
            lo = min(lo, float(lg.min()))
            deep, D = ns.weight_shape
            avg = np.concatenate([_lmean(lg[:2 * deep].reshape(deep, 2), 1),
                                  _lmean(lg[2 * deep:].reshape(-1, D), 1)])
            logt = self.local_grids[idx]
            # density vanishes past R_i; extend the grid so the exterior is exact
            ext = logt[-1] + np.linspace(0.0, math.log(1e3), 30)[1:]
            g = np.concatenate([avg, np.full(len(ext), NEG_INF)])
            out.local.append(riesz_grid_profile(np.concatenate([logt, ext]), g, n, m))
        ns = self.bg_nodes
        lg = ns.log_density(ctx, field_.log_value(ns.state.pg))
        lo = min(lo, float(lg[ns.inside].min()))
        T, G, S = ns.weight_shape
        lg = lg.reshape(T, G, S)
        out.background = riesz_grid_profile(self.bg_lt, _lmean(lg.reshape(T, G * S), 1), n, m)
        out.group_backgrounds = [riesz_grid_profile(self.bg_lt, _lmean(lg[:, gi, :], 1), n, m)
                                 for gi in range(G)]
        return out, lo


@dataclass
class ProbeField:
    """Scattered probes with log values of u0, the iterate index and log MC standard errors."""

    points: Points
    log_value: np.ndarray
    iterate: int
    log_std_error: np.ndarray
    converged: bool = True
    history: list = field(default_factory=list)

    def to_csv(self, path, log_rho) -> None:
        import csv
        x = self.points.global_coords(log_rho) if len(self.points) else np.zeros((0, 0))
        dim = x.shape[1] if x.size else 0
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow([f"x{i}" for i in range(dim)] + ["anchor", "log10_value", "iterate", "log10_mc_std_error"])
            for k in range(len(self.points)):
                wr.writerow([repr(float(v)) for v in x[k]] + [int(self.points.anchor[k]),
                             repr(float(self.log_value[k] / math.log(10))), self.iterate,
                             repr(float(self.log_std_error[k] / math.log(10)))])


@dataclass
class PicardResult:
    field: StructuredField
    probes: ProbeField
    iterations: int
    converged: bool
    monotone: bool
    below_vbar: bool
    min_log_density: float
    worst_monotone: float
    worst_vbar: float
    history: list


def solve_u0_picard(ctx: Context, probes: Points, cfg: PicardConfig | None = None) -> PicardResult:
    """Iterate from v = 0 until the relative sup change at the probes is below tol."""
    cfg = cfg or PicardConfig()
    solver = PicardSolver(ctx, cfg)
    pg = PointGeometry.of(ctx, probes, units=False)
    log_vbar = build_vbar(ctx, pg).log_value
    cur = StructuredField(ctx.fam.log_rho)
    prev = np.full(len(probes), NEG_INF)
    history, worst_mono, worst_bar, min_dens = [], -np.inf, -np.inf, np.inf
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        cur, lo = solver.apply(cur)
        min_dens = min(min_dens, lo)
        val = cur.log_value(pg)
        lse = cur.log_std_error(pg)
        with np.errstate(invalid="ignore", over="ignore"):
            # a decrease counts only beyond three MC error bars
            drop = np.where(np.isfinite(prev), prev - val, -np.inf)
            rel_bar = np.log1p(3 * np.exp(lse - val))
        worst_mono = max(worst_mono, float(np.max(drop - rel_bar - 1e-12)))
        worst_bar = max(worst_bar, float(np.max(val - log_vbar)))
        with np.errstate(invalid="ignore", over="ignore"):
            same = np.isneginf(prev) & np.isneginf(val)
            step = np.where(np.isfinite(prev), prev - val, -np.inf)
            change = float(np.max(np.where(same, 0.0, np.abs(np.expm1(step)))))
        history.append({"iterate": it, "rel_change": change, "log_min": float(val.min()),
                        "log_max": float(val.max())})
        prev = val
        if change < cfg.tol:
            converged = True
            break
    probes_field = ProbeField(probes, prev, it, cur.log_std_error(pg), converged, history)
    return PicardResult(cur, probes_field, it, converged, worst_mono <= 0, worst_bar < 0,
                        min_dens, worst_mono, worst_bar, history)
