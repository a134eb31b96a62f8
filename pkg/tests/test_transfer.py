import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from chainflux.rng import RandomStream
from chainflux.transfer import (
    OverflowGuard,
    ScaledMatrixProduct,
    d_direct,
    d_recursion,
    d_recursion_mp,
    step_product,
    transfer_matrix,
    wronskian,
    wronskian_condition,
    wronskian_mp,
)


def masses(n, seed=0, a=0.5):
    return (RandomStream(seed, ("t", n)).uniform(n) - 0.5) * 2 * a


def test_zero_frequency_matrix():
    assert np.array_equal(transfer_matrix(0.0, 0.3), [[2.0, -1.0], [1.0, 0.0]])


def test_matrix_value():
    # 2 - pi^2 * 0.01, evaluated independently to 20 digits
    assert transfer_matrix(0.1, 0.0)[0, 0] == pytest.approx(1.9013039559891064, abs=1e-15)


@given(st.floats(0, 0.6), st.floats(-0.9, 3.0))
def test_matrix_unimodular(w, b):
    assert np.linalg.det(transfer_matrix(w, b)) == pytest.approx(1.0, abs=1e-12)


def test_product_small_case():
    s = ScaledMatrixProduct.identity()
    for _ in range(3):
        step_product(s, transfer_matrix(0.0, 0.0))
    assert np.allclose(s.value(), [[4, -3], [3, -2]], atol=1e-13)
    assert s.steps == 3


def test_product_single_factor():
    A = transfer_matrix(0.13, 0.2)
    s = step_product(ScaledMatrixProduct.identity(), A)
    assert np.allclose(s.value(), A, rtol=1e-14)


def test_product_det_long_chain():
    b = masses(10 ** 4, 4)
    s = ScaledMatrixProduct.identity()
    for bk in b:
        step_product(s, transfer_matrix(0.05, bk))
    assert s.det() == pytest.approx(1.0, rel=1e-8)


def test_product_matches_recursion():
    b = masses(500, 2)
    s = ScaledMatrixProduct.identity()
    for bk in b:
        step_product(s, transfer_matrix(0.1, bk))
    d1, d0 = d_recursion(1.0, 0.0, 0.1, b).value()
    assert s.value()[0, 0] == pytest.approx(d1, rel=1e-10)
    assert s.value()[1, 0] == pytest.approx(d0, rel=1e-10)


def test_overflow_guard_trips():
    s = ScaledMatrixProduct.identity(guard=5.0)
    with pytest.raises(OverflowGuard):
        for _ in range(100):
            step_product(s, transfer_matrix(0.9, 0.5))


def test_e2_first_step():
    assert d_recursion(0.0, 1.0, 0.37, [0.2]).value() == (-1.0, 0.0)


def test_zero_frequency_linear_growth():
    b = masses(50, 1)
    for n in (1, 7, 50):
        assert d_recursion(1.0, 0.0, 0.0, b[:n]).value()[0] == pytest.approx(n + 1, rel=1e-14)


def test_zero_noise_closed_form():
    w = 0.1
    th = 2 / math.pi * math.asin(math.pi * w / 2)
    for n in (1, 5, 40, 333):
        assert d_recursion(1.0, 0.0, w, np.zeros(n)).value()[0] == pytest.approx(
            math.sin(math.pi * th * (n + 1)) / math.sin(math.pi * th), rel=1e-11)


def test_recursion_vs_direct():
    b = masses(300, 5)
    a = d_recursion(0.3, -1.2, 0.07, b).value()
    d = d_direct(0.3, -1.2, 0.07, b)
    assert d.shape == (301,) and d[0] == 0.3
    assert np.allclose(a, [d[-1], d[-2]], rtol=1e-11)


def test_recursion_vs_mp():
    b = masses(2000, 6)
    d, dp = d_recursion_mp(1.0, 0.0, 0.05, b, dps=40)
    assert d_recursion(1.0, 0.0, 0.05, b).value()[0] == pytest.approx(float(d), rel=1e-11)


def test_wronskian_small_cases():
    e1 = d_recursion(1.0, 0.0, 0.1, [0.0])
    e2 = d_recursion(0.0, 1.0, 0.1, [0.0])
    assert wronskian(e1, e2) == pytest.approx(1.0, abs=1e-15)


def test_wronskian_long_chain():
    b = masses(10 ** 4, 8)
    w = 0.05
    assert wronskian(d_recursion(1, 0, w, b), d_recursion(0, 1, w, b)) == pytest.approx(1.0, rel=1e-8)


def test_wronskian_condition_predicts_double_error():
    # the running maximum of |D_k(e1) D_k(e2)|, not the final pair, sets the rounding error
    for seed in range(20):
        b = masses(1000, 40 + seed)
        W = wronskian(d_recursion(1, 0, 0.2, b), d_recursion(0, 1, 0.2, b))
        c = wronskian_condition(0.2, b)
        assert abs(W - 1.0) <= 10 * np.finfo(float).eps * math.exp(c)


def test_wronskian_extended_precision():
    b = masses(3000, 9)
    assert wronskian_condition(0.2, b) > 20
    assert wronskian_mp(0.2, b) == pytest.approx(1.0, rel=1e-12)


@given(st.floats(1e-3, 0.3), st.integers(1, 300), st.integers(0, 1000))
def test_wronskian_property(w, n, seed):
    b = masses(n, seed)
    assert wronskian(d_recursion(1, 0, w, b), d_recursion(0, 1, w, b)) == pytest.approx(1.0, rel=1e-9)


def test_rejects_zero_vector():
    with pytest.raises(ValueError):
        d_recursion(0.0, 0.0, 0.1, [0.1])
