import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bubbletower.envelope import Curv, eval_F, eval_M, eval_Z, eval_f, log_f, log_H, log_M, log_Z
from bubbletower.kelvin import Dimensions

DIM = Dimensions(8, 2)          # p = 3, e = 1/2


def test_worked_instance():
    assert eval_Z(0.25, 2.0, DIM) == pytest.approx(2.0, rel=1e-15)
    assert eval_M(0.25, 2.0, DIM) == pytest.approx(8.0, rel=1e-15)
    assert eval_f(2.0, 0.25, 2.0, DIM) == pytest.approx(8.0, rel=1e-15)


@pytest.mark.parametrize("nm", [(6, 1), (8, 2), (10, 3), (12, 2)])
def test_envelope_identity_random(nm):
    dim = Dimensions(*nm)
    rng = np.random.default_rng(11)
    z2 = rng.uniform(0.01, 0.99, 10_000)
    z3 = np.exp(rng.uniform(-5, 5, 10_000))
    Z = eval_Z(z2, z3, dim)
    assert np.allclose(eval_f(Z, z2, z3, dim), eval_M(z2, z3, dim), rtol=1e-10, atol=0)


@given(st.floats(0.01, 0.99), st.floats(1e-3, 1e3))
def test_M_is_the_max_of_f(z2, z3):
    # f(., z2, z3) increases up to Z and decreases after it
    Z = float(eval_Z(z2, z3, DIM))
    M = float(eval_M(z2, z3, DIM))
    for t in (0.5, 0.9, 1.1, 2.0):
        assert eval_f(t * Z, z2, z3, DIM) <= M * (1 + 1e-12)


@given(st.floats(0.0, 5.0), st.floats(0.01, 1.5), st.floats(1e-3, 10.0))
def test_F_bounds(z1, z2, z3):
    F = float(eval_F(z1, z2, z3, DIM))
    f = float(eval_f(z1, z2, z3, DIM))
    assert F >= f - 1e-12 * max(1.0, abs(f))
    if z2 >= 1:
        assert math.isclose(F, f, rel_tol=1e-15, abs_tol=1e-300)
    # F is continuous at z1 = Z
    if z2 < 1:
        Z = float(eval_Z(z2, z3, DIM))
        assert math.isclose(float(eval_F(Z, z2, z3, DIM)), float(eval_M(z2, z3, DIM)), rel_tol=1e-9)


def _mp_f(U, k, P, p):
    return k * (U + P) ** p - U ** p


@pytest.mark.parametrize("log_1mk", [-1.0, -40.0, -700.0, -2600.0])
@pytest.mark.parametrize("log_ratio", [-60.0, -3.0, 0.0, 5.0])
def test_log_forms_against_mpmath(log_1mk, log_ratio):
    mp.mp.dps = 1300
    p, e = 3, mp.mpf(1) / 2
    s = mp.exp(log_1mk)
    k = 1 - s
    U = mp.mpf(1)
    P = mp.exp(log_ratio)
    c = Curv(np.array(float(mp.log(k))), np.array(log_1mk))
    got_sign, got = log_f(0.0, c, log_ratio, DIM)
    ref = _mp_f(U, k, P, p)
    assert got_sign == (1.0 if ref > 0 else -1.0)
    assert math.isclose(float(got), float(mp.log(abs(ref))), rel_tol=1e-9, abs_tol=1e-9)
    q = k ** e
    refZ = P * q / (1 - q)
    refM = k * P ** p / (1 - q) ** (1 / e)
    assert math.isclose(float(log_Z(c, log_ratio, DIM)), float(mp.log(refZ)), rel_tol=1e-9, abs_tol=1e-9)
    assert math.isclose(float(log_M(c, log_ratio, DIM)), float(mp.log(refM)), rel_tol=1e-9, abs_tol=1e-9)
    H = refM if U > refZ else ref
    assert math.isclose(float(log_H(0.0, c, log_ratio, DIM)), float(mp.log(H)), rel_tol=1e-9, abs_tol=1e-9)


def test_curv_from_values():
    c = Curv.from_values(np.array([0.5, 1.0, 1.2]))
    assert c.below_one.tolist() == [True, False, False]
    assert math.isclose(float(c.log_1mk[0]), math.log(0.5))
