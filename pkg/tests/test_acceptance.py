"""The fifteen acceptance criteria, one test (or two halves) each.

Every test records a PASS/FAIL line; the lines are collected in the terminal
summary under "acceptance criteria".
"""
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from bubbletower.assembly import (conformal_log_factor, decay, eval_K, locate_S, sandwich,
                                  stereo_forward, stereo_inverse)
from bubbletower.envelope import eval_f, eval_M, eval_Z
from bubbletower.kelvin import Dimensions, bubble_identity_check, build_bubble, polyharmonic_apply
from bubbletower.param_select import smallest_i0
from bubbletower.pipeline import PipelineConfig, report_text, run_pipeline
from bubbletower.points import Points
from bubbletower.riesz import RadialDensity, riesz_potential_radial
from oracles import ball_newton, kernel_quadrature

TRIPLE = [(6, 1), (8, 2), (10, 3)]


def _entry(report, label):
    return next(e for e in report["ledger"] if e["label"] == label)


def _check(report, label, prefix):
    return next(c for c in _entry(report, label)["checks"] if c["name"].startswith(prefix))


def test_01_exact_bubble_identity(record):
    t0 = time.perf_counter()
    res = [bubble_identity_check(Dimensions(*nm)) for nm in TRIPLE]
    dt = time.perf_counter() - t0
    ok = all(a and r == 0 for a, r in res) and dt < 1.0
    assert record(1, ok, f"exact zero residual for {TRIPLE} in {dt:.3f}s")


def test_02_sign_ladder(record):
    worst = []
    for n, m in TRIPLE:
        dim = Dimensions(n, m)
        w = build_bubble(dim)
        for s in range(1, m):
            worst.append(min(polyharmonic_apply(w, s, dim).terms.values()))
    ok = all(c > 0 for c in worst)
    assert record(2, ok, f"{len(worst)} ladders, smallest coefficient {float(min(worst)):.4g}")


def test_03_potential_oracle(record):
    ball_err = 0.0
    for n in (6, 8, 10):
        for R in (Fraction(1, 3), Fraction(1), Fraction(5, 2)):
            prof = riesz_potential_radial(RadialDensity.ball_indicator(R), 2, Dimensions(n, 1))
            r = np.linspace(0.0, 4.0 * float(R), 100)
            exact = ball_newton(r, float(R), n)
            ball_err = max(ball_err, float(np.max(np.abs(prof.value(r) / exact - 1))))
            ball_err = max(ball_err, abs(float(prof.value(0.0)) / (float(R) ** 2 / (2 * (n - 2))) - 1))
    comp_err = 0.0
    for n, m in TRIPLE:
        dens = RadialDensity.tent(Fraction(1))
        prof = riesz_potential_radial(dens, 2 * m, Dimensions(n, m))
        for r in (0.25, 0.8, 1.3, 3.0):
            comp_err = max(comp_err, abs(float(prof.value(r)) / kernel_quadrature(dens, r, n, m) - 1))
    ok = ball_err < 1e-8 and comp_err < 1e-6
    assert record(3, ok, f"ball solve rel err {ball_err:.2e} (< 1e-8), "
                         f"composition vs quadrature {comp_err:.2e} (< 1e-6)")


def test_04a_i0_flagship(record):
    got = smallest_i0(Dimensions(8, 2), 0.5)
    assert record("4a", got == 12, f"(8,2,1/2) -> i0 = {got} (expected 12)")


@pytest.mark.xfail(strict=True, reason="the i0 inequality has exponent 4m/(n-2m) = 1 for (6,1), "
                                       "so i0 > 32 gives 33; the expected 6 squares i0 "
                                       "(see the decisions ledger)")
def test_04b_i0_six_one(record):
    got = smallest_i0(Dimensions(6, 1), 0.5)
    assert record("4b", got == 6, f"(6,1,1/2) -> i0 = {got} (expected 6; the inequality "
                                  f"i0^1 > 2^5 gives 33, see ledger)")


def test_05_comparability_ratios(flagship_run, record):
    fam = flagship_run.bundle.fam
    n, m = fam.dim.n, fam.dim.m
    i = np.arange(1, fam.N + 1)
    cols = [fam.log_M + 4 * m / (n - 2 * m) * fam.log_s,
            2 * m * fam.log_rho + i * math.log(2) + fam.log_M,
            fam.log_lam - 2 / (n - 2 * m) * fam.log_eps - 2 * fam.log_rho]
    spans = [math.exp(c.max() - c.min()) for c in cols]
    ok = fam.N == 18 and all(s < 100 for s in spans)
    assert record(5, ok, "spans " + ", ".join(f"{s:.4f}" for s in spans) + " (each < 100)")


def test_06_envelope_identity(record):
    dim = Dimensions(8, 2)
    rng = np.random.default_rng(2024)
    z2 = rng.uniform(0.01, 0.99, 10_000)
    z3 = np.exp(rng.uniform(-5, 5, 10_000))
    Z = eval_Z(z2, z3, dim)
    err = float(np.max(np.abs(eval_f(Z, z2, z3, dim) / eval_M(z2, z3, dim) - 1)))
    Zw, Mw = float(eval_Z(0.25, 2.0, dim)), float(eval_M(0.25, 2.0, dim))
    ok = err < 1e-10 and math.isclose(Zw, 2.0, rel_tol=1e-14) and math.isclose(Mw, 8.0, rel_tol=1e-14)
    assert record(6, ok, f"max rel err {err:.2e} on 1e4 args; worked instance Z={Zw:.15g}, M={Mw:.15g}")


def test_07_supersolution(flagship_run, record):
    e = _entry(flagship_run.report, "(2.49)")
    pairs = int(e["checks"][0]["name"].split(" on ")[1].split()[0])
    ok = e["status"] == "pass" and pairs >= 10_000 * 16
    assert record(7, ok, f"min log margin {e['margin']:.4g} over {pairs} (probe, level) pairs")


def test_08_picard(flagship_run, record):
    pic = flagship_run.bundle.picard
    secs = flagship_run.report["timings"]["picard"]
    ok = pic.converged and pic.iterations <= 50 and pic.monotone and pic.below_vbar and secs <= 600
    assert record(8, ok, f"{pic.iterations} iterates, final change {pic.history[-1]['rel_change']:.2e}, "
                         f"monotone={pic.monotone}, below vbar={pic.below_vbar}, {secs:.1f}s")


def test_09_sandwich(flagship_run, record):
    ke = flagship_run.kvals
    sw = sandwich(ke, 2 * 1e-4)
    far = _check(flagship_run.report, "(2.56)", "K = k exactly")
    ok = sw["ok"] and far["status"] == "pass"
    assert record(9, ok, f"{len(ke.capped)} probes, min K-kappa {sw['min_K_minus_kappa']:.3g}, "
                         f"min k-K {sw['min_k_minus_K']:.3g}, exact-order violations "
                         f"{sw['exact_order_violations']}; {far['name']}: pass")


def test_10_S_discipline(flagship_run, record):
    S = locate_S(flagship_run.bundle, flagship_run.kvals)
    ok = S.inside_rho and S.inside_2rho
    worst = float(np.max(S.log_t)) if len(S.index) else -math.inf
    assert record(10, ok, f"{len(S.index)} S-probes, max log(d/rho_j) = {worst:.3f} (< 0)")


def _longest_decreasing_tail(vals):
    run = 1
    for a, b in zip(vals[-2::-1], vals[::-1]):
        if a > b:
            run += 1
        else:
            break
    return run


def test_11_C1_trend(flagship_run, record):
    d = flagship_run.report["diagnostics"]
    trend = d["shell trend"]
    vals = [-math.inf if v == "-inf" else v for v in trend["log_sup_grad_K"]]
    run = _longest_decreasing_tail(vals)
    c1 = d["C1 distance"]
    ok = run >= 6 and trend["deepest"] == trend["shells"][-1] and c1 < 0.5
    assert record(11, ok, f"strictly decreasing over the last {run} shells (to shell "
                          f"{trend['deepest']}), ||K - k||_C1 = {c1:.3g} < 0.5")


def test_12_blow_up(flagship_run, exp_run, record):
    bp = flagship_run.report["conclusions"]["blow_up"]
    be = exp_run.report["conclusions"]["blow_up"]
    ok = bp["ok"] and be["ok"] and math.isfinite(be["log10_lambda_N"])
    assert record(12, ok, f"power:4 min margin {bp['min_margin']:.4g}; exp min margin "
                          f"{be['min_margin']:.4g}, log10 lambda_N = {be['log10_lambda_N']:.1f}")


def test_13_decay(flagship_run, record):
    rng = np.random.default_rng(13)
    dirs = rng.standard_normal((500, 8))
    x = dirs / np.linalg.norm(dirs, axis=1, keepdims=True) * np.geomspace(10, 100, 500)[:, None]
    res = decay(flagship_run.bundle, Points.free(x))
    ok = 0.25 <= res["min_ratio"] and res["max_ratio"] <= 4.0
    assert record(13, ok, f"|x|^(n-2m) u / coefficient sum in [{res['min_ratio']:.4f}, "
                          f"{res['max_ratio']:.4f}] (factor 4)")


def test_14_pullback(record):
    dim = Dimensions(8, 2)
    rng = np.random.default_rng(14)
    x = rng.standard_normal((2000, 8)) * np.exp(rng.uniform(-8, 8, 2000))[:, None]
    # v = 1 pulls forward to u = (2/(1+|x|^2))^((n-2m)/2); pulling u back must give 1
    lu = float(dim.beta) * np.log(2 / (1 + np.sum(x * x, axis=1)))
    v_err = float(np.max(np.abs(np.expm1(lu - conformal_log_factor(x, dim)))))
    xi = stereo_inverse(x)
    rt = float(np.max(np.linalg.norm(stereo_forward(xi) - x, axis=1) / np.linalg.norm(x, axis=1)))
    unit = float(np.max(np.abs(np.linalg.norm(xi, axis=1) - 1)))
    ok = v_err <= 1e-12 and rt <= 1e-12 and unit <= 1e-12
    assert record(14, ok, f"v=1 error {v_err:.1e}, round trip rel err {rt:.1e}, | |xi| - 1 | {unit:.1e}")


def test_15_determinism(flagship_run, record):
    again = run_pipeline(PipelineConfig())
    a = report_text(flagship_run.report, timings=False)
    b = report_text(again.report, timings=False)
    assert record(15, a == b, f"two seed-0 flagship reports identical ({len(a.encode())} bytes, "
                              f"timings excluded)")
