import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bubbletower.kelvin import (Dimensions, bubble_identity_check, build_bubble, double_factorial,
                                eval_log, laplace_apply, log_bubble, polyharmonic_apply)
from bubbletower.radial_grid import geometric_grid, riesz_grid_profile
from bubbletower.riesz import RadialDensity, riesz_gamma, riesz_potential_radial
from oracles import ball_newton, kernel_quadrature

TRIPLE = [(6, 1), (8, 2), (10, 3)]


@pytest.mark.parametrize("n, m", TRIPLE)
def test_bubble_identity_exact(n, m):
    ok, residual = bubble_identity_check(Dimensions(n, m))
    assert ok
    assert residual == 0 and isinstance(residual, Fraction)


@pytest.mark.parametrize("n, m", TRIPLE)
def test_sign_ladder(n, m):
    dim = Dimensions(n, m)
    w = build_bubble(dim)
    for s in range(1, m):
        coeffs = polyharmonic_apply(w, s, dim).terms.values()
        assert coeffs and all(c > 0 for c in coeffs)


def test_c_nm_flagship():
    # c_nm^(4m/(n-2m)) = (n+2m-2)!!/(n-2m-2)!!  ->  c_82 = (10!!/2!!)^(1/2) = sqrt(1920)
    dim = Dimensions(8, 2)
    assert double_factorial(10) // double_factorial(2) == 1920
    assert math.isclose(dim.c_nm, math.sqrt(1920), rel_tol=1e-14)


@pytest.mark.parametrize("n, m", [(7, 2), (5, 1), (9, 3)])
def test_rejects_low_dimension(n, m):
    with pytest.raises(ValueError, match="2m"):
        Dimensions(n, m)


def _numeric_laplacian(f, r, n, h=1e-3):
    # radial Laplacian f'' + (n-1)/r f' by central differences
    d2 = (f(r + h) - 2 * f(r) + f(r - h)) / h ** 2
    d1 = (f(r + h) - f(r - h)) / (2 * h)
    return d2 + (n - 1) / r * d1


@pytest.mark.parametrize("n, m", TRIPLE)
def test_laplace_apply_matches_differences(n, m):
    dim = Dimensions(n, m)
    w = build_bubble(dim)
    lw = laplace_apply(w, dim)

    def value(c, r):
        sign, lv = eval_log(c, np.log(r))
        return sign * np.exp(lv)

    r = np.linspace(0.3, 2.0, 7)
    # laplace_apply returns (-Delta) w
    assert np.allclose(value(lw, r), -_numeric_laplacian(lambda t: value(w, t), r, n), rtol=1e-5)


@given(st.floats(-40, 40), st.floats(-30, 30))
def test_log_bubble_scaling(log_d, log_lam):
    # w_lambda(x) = lambda^(-beta) w_1(x / lambda)
    dim = Dimensions(8, 2)
    beta = float(dim.beta)
    lhs = log_bubble(dim, log_d, log_lam)
    rhs = -beta * log_lam + log_bubble(dim, log_d - log_lam, 0.0)
    assert math.isclose(lhs, rhs, rel_tol=1e-12, abs_tol=1e-9)


# --------------------------------------------------------------- potentials

@pytest.mark.parametrize("n", [6, 8, 10])
@pytest.mark.parametrize("R", [Fraction(1, 3), Fraction(1), Fraction(5, 2)])
def test_ball_potential_matches_matched_solve(n, R):
    prof = riesz_potential_radial(RadialDensity.ball_indicator(R), 2, Dimensions(n, 1))
    r = np.linspace(0.0, 4.0 * float(R), 100)
    exact = ball_newton(r, float(R), n)
    assert np.allclose(prof.value(r), exact, rtol=1e-8, atol=0)
    assert math.isclose(float(prof.value(0.0)), float(R) ** 2 / (2 * (n - 2)), rel_tol=1e-14)


@pytest.mark.parametrize("n, m", [(6, 1), (8, 2), (10, 3)])
@pytest.mark.parametrize("kind", ["ball", "tent"])
def test_composition_matches_kernel_quadrature(n, m, kind):
    dim = Dimensions(n, m)
    dens = RadialDensity.ball_indicator(Fraction(1)) if kind == "ball" else RadialDensity.tent(Fraction(1))
    prof = riesz_potential_radial(dens, 2 * m, dim)
    for r in [0.25, 0.8, 1.3, 3.0]:
        ref = kernel_quadrature(dens, r, n, m)
        assert math.isclose(float(prof.value(r)), ref, rel_tol=1e-6), (r, ref)


def test_riesz_gamma_order_two_is_newton():
    # gamma_n1 |x|^(2-n) is the Newton kernel 1/((n-2)|S^(n-1)|) |x|^(2-n)
    for n in (5, 6, 8, 11):
        area = 2 * math.pi ** (n / 2) / math.gamma(n / 2)
        assert math.isclose(riesz_gamma(n, 1), 1 / ((n - 2) * area), rel_tol=1e-14)


@pytest.mark.parametrize("n, m", [(8, 2), (10, 3)])
def test_grid_potential_matches_exact(n, m):
    # the numeric log-grid solver (used for u0) against the exact Laurent composition
    dens = RadialDensity.tent(Fraction(1))
    exact = riesz_potential_radial(dens, 2 * m, Dimensions(n, m))
    r = np.array([0.01, 0.3, 1.0, 1.7, 2.5, 10.0, 50.0])

    def err(per_efold):
        t = geometric_grid(1e-4, 1e3, per_efold=per_efold, kinks=(1.0, 2.0))
        with np.errstate(divide="ignore"):
            lg = np.log(np.asarray(dens.value(t), dtype=float))
        prof = riesz_grid_profile(np.log(t), lg, n, m)
        return np.max(np.abs(np.exp(prof.value_log(np.log(r))) / exact.value(r) - 1))

    coarse, fine = err(10), err(40)
    assert fine < coarse / 8           # second order in the node spacing
    assert err(80) < 5e-4


@settings(max_examples=25, deadline=None)
@given(st.floats(-5, 5))
def test_grid_potential_scaling(log_scale):
    # I_2m[g(./s)](x) = s^(2m) I_2m[g](x/s)
    n, m = 8, 2
    t = geometric_grid(1e-4, 1e3, per_efold=12, kinks=(1.0, 2.0))
    dens = RadialDensity.tent(Fraction(1))
    with np.errstate(divide="ignore"):
        lg = np.log(np.asarray(dens.value(t), dtype=float))
    prof = riesz_grid_profile(np.log(t), lg, n, m)
    r_log = np.log(np.array([0.5, 3.0])) + log_scale
    direct = prof.value_log(r_log, log_scale)
    assert np.allclose(direct, 2 * m * log_scale + prof.value_log(r_log - log_scale), rtol=0, atol=1e-9)
