import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st

from bubbletower.logmath import (CancellationError, log1m_pow, log1mexp, log_diff, logexpm1,
                                 signed_logsumexp)


@given(st.floats(-745, -1e-300))
def test_log1mexp(x):
    ref = float(mp.log(1 - mp.exp(mp.mpf(x))))
    assert math.isclose(float(log1mexp(x)), ref, rel_tol=1e-13, abs_tol=1e-300)


@given(st.floats(1e-300, 1e4))
def test_logexpm1(y):
    ref = float(mp.log(mp.expm1(mp.mpf(y))))
    assert math.isclose(float(logexpm1(y)), ref, rel_tol=1e-12, abs_tol=1e-12)


@given(st.floats(-1e4, 1e4), st.floats(1e-12, 50))
def test_log_diff(a, gap):
    mp.mp.dps = 50
    b = a - gap
    if b == a:
        return
    ref = float(mp.log(mp.exp(mp.mpf(a)) - mp.exp(mp.mpf(b))))
    assert math.isclose(float(log_diff(a, b)), ref, rel_tol=1e-11, abs_tol=1e-11)


def test_log_diff_equal_and_empty():
    assert np.isneginf(log_diff(3.0, 3.0))
    assert float(log_diff(2.0, -np.inf)) == 2.0


@pytest.mark.parametrize("log_1mz", [-1.0, -31.0, -1000.0, -1e5])
@pytest.mark.parametrize("e", [0.25, 0.5, 3.0])
def test_log1m_pow_deep(log_1mz, e):
    mp.mp.dps = 60
    z = 1 - mp.exp(mp.mpf(log_1mz))
    ref = mp.log(1 - z ** e) if log_1mz > -100 else mp.log(e) + log_1mz + mp.log1p((1 - e) * mp.exp(log_1mz) / 2)
    got = log1m_pow(float(mp.log(z)), log_1mz, e)
    assert math.isclose(float(got), float(ref), rel_tol=1e-12)


def test_signed_logsumexp():
    s, v = signed_logsumexp([math.log(3.0), math.log(1.0)], [1, -1])
    assert s == 1 and math.isclose(v, math.log(2.0))
    with pytest.raises(CancellationError):
        signed_logsumexp([0.0, 0.0], [1, -1])
