import math

import numpy as np
import pytest

from bubbletower.correction import (Context, PointGeometry, build_vbar, check_supersolution,
                                    grad_kappa, kappa_curv, log_Lm_vbar)
from bubbletower.points import Points


@pytest.fixture(scope="module")
def ctx(flagship_geometry, flagship_family):
    k, _ = flagship_geometry
    return Context(flagship_family, k)


def _shell_etas(n, count, seed, lo=1.05, hi=1.45):
    rng = np.random.default_rng(seed)
    d = rng.standard_normal((count, n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d * rng.uniform(lo, hi, count)[:, None]


@pytest.mark.parametrize("j", [0, 5, 12, 17])
def test_grad_kappa_matches_differences(ctx, j):
    # kappa is within 1e-30 of one here, so differentiate log(1 - kappa) in local units:
    # grad kappa = -(1 - kappa) grad log(1 - kappa) / rho_j
    fam = ctx.fam
    n = fam.dim.n
    eta = _shell_etas(n, 20, seed=j)
    pts = Points.around(fam.centers, j, eta)
    lk = kappa_curv(ctx, PointGeometry.of(ctx, pts))[0].log_1mk
    h = 1e-5
    d = np.zeros_like(eta)
    for a in range(n):
        e = np.zeros(n)
        e[a] = h
        up = kappa_curv(ctx, PointGeometry.of(ctx, Points.around(fam.centers, j, eta + e)))[0].log_1mk
        dn = kappa_curv(ctx, PointGeometry.of(ctx, Points.around(fam.centers, j, eta - e)))[0].log_1mk
        d[:, a] = (up - dn) / (2 * h)
    fd_log_norm = lk + np.log(np.linalg.norm(d, axis=1)) - fam.log_rho[j]
    g, lg = grad_kappa(ctx, pts)
    assert np.allclose(lg, fd_log_norm, rtol=0, atol=1e-6)
    # direction (where the vector itself is representable): antiparallel to grad log(1 - kappa)
    gn = np.linalg.norm(g, axis=1)
    ok = gn > 0
    cos = np.einsum("ij,ij->i", g[ok], d[ok]) / (gn[ok] * np.linalg.norm(d[ok], axis=1))
    assert np.all(cos < -1 + 1e-6)


def test_kappa_is_k_outside_cutoffs(ctx):
    fam = ctx.fam
    pts = Points.around(fam.centers, 0, _shell_etas(fam.dim.n, 50, seed=1, lo=1.6, hi=3.0))
    pg = PointGeometry.of(ctx, pts)
    c, idx = kappa_curv(ctx, pg)
    assert np.all(idx == -1)
    kx, _ = ctx.k.profile(pg.norm)
    assert np.allclose(np.exp(c.log_k), kx, rtol=1e-15)


def test_kappa_at_center_is_k_j(ctx):
    fam = ctx.fam
    for j in (0, 12, 17):
        pts = Points.around(fam.centers, j, np.zeros((1, fam.dim.n)))
        c, idx = kappa_curv(ctx, PointGeometry.of(ctx, pts))
        assert idx[0] == j
        assert math.isclose(float(c.log_1mk[0]), float(fam.log_s[j]), rel_tol=1e-12)


@pytest.mark.parametrize("j", [0, 12, 17])
def test_supersolution_near_bubbles(ctx, j):
    fam = ctx.fam
    eta = np.vstack([_shell_etas(fam.dim.n, 60, seed=10 + j, lo=0.0, hi=2.0),
                     _shell_etas(fam.dim.n, 20, seed=20 + j, lo=2.0, hi=50.0)])
    res = check_supersolution(ctx, Points.around(fam.centers, j, eta))
    assert res["ok"], res


def test_supersolution_far_field(ctx):
    rng = np.random.default_rng(3)
    y = rng.standard_normal((200, ctx.fam.dim.n)) * np.exp(rng.uniform(-1, 4, 200))[:, None]
    assert check_supersolution(ctx, Points.free(y))["ok"]


def test_vbar_parts(ctx):
    # (-Delta)^m vbar dominates both of its pieces
    rng = np.random.default_rng(4)
    pg = PointGeometry.of(ctx, Points.free(rng.standard_normal((30, ctx.fam.dim.n))))
    vb = build_vbar(ctx, pg)
    assert np.all(vb.log_value >= vb.log_w_part) and np.all(vb.log_value >= vb.log_potential_part)
    assert np.all(np.isfinite(log_Lm_vbar(ctx, pg)))
