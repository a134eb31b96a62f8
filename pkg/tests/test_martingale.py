import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from chainflux.martingale import (
    IncrementBoundViolation,
    MartingaleSample,
    azuma_bound,
    azuma_tail,
    block_martingale,
    freedman_bound,
    gamma_table,
    gamma_tail_experiment,
    kappa_m,
    mgf_estimate,
    s_martingale,
    tail_check,
    verify_exponential_bound,
)


def test_kappa_values():
    assert kappa_m(0.0, 3.0) == 0.0
    assert kappa_m(1.0, 1.0) == pytest.approx(math.e - 2.0, rel=1e-15)


def test_kappa_needs_positive_m():
    with pytest.raises(ValueError):
        kappa_m(1.0, 0.0)


def test_kappa_series_branch_is_continuous():
    # both sides of the series switch at |m t| = 1e-3
    for x in (0.999e-3, 1.001e-3, -0.999e-3, -1.001e-3):
        exact = (math.exp(x) - 1 - x)
        assert kappa_m(x, 1.0) == pytest.approx(exact, rel=1e-9)


@given(st.floats(1e-6, 5.0), st.floats(0.01, 4.0))
def test_kappa_above_half_square(t, m):
    assert kappa_m(t, m) >= 0.5 * t * t * (1 - 1e-12)


@given(st.floats(-5.0, 5.0), st.floats(0.01, 4.0))
def test_kappa_upper_estimate(t, m):
    assert kappa_m(t, m) <= (0.5 * t * t + m / 6.0 * math.exp(m * abs(t)) * abs(t) ** 3) * (1 + 1e-12) + 1e-300


def test_kappa_scaling_identity():
    t = np.linspace(-3, 3, 121)
    for m in (0.1, 0.5, 2.0, 7.0):
        np.testing.assert_allclose(kappa_m(t, m) * m * m, kappa_m(t * m, 1.0), rtol=1e-12, atol=1e-300)


def test_bounds_at_zero():
    assert freedman_bound(0.0, 0.7, 5.0) == 1.0
    assert azuma_bound(0.0, 0.7, 5) == 1.0
    assert freedman_bound(1.3, 0.7, 0.0) == 1.0


def test_bound_argument_checks():
    with pytest.raises(ValueError):
        freedman_bound(1.0, 1.0, -1.0)
    with pytest.raises(ValueError):
        azuma_bound(1.0, 1.0, 0)
    with pytest.raises(ValueError):
        azuma_tail(0.0, 1.0, 1)


def test_freedman_below_azuma_small_t():
    # kappa_m(t) / (t^2 / 2) = 1 + m t / 3 + ..., so a budget strictly below m^2 n suffices for small t
    m, n = 0.3, 50
    for t in np.linspace(-0.1, 0.1, 21):
        for v in (0.0, 0.5 * m * m * n, 0.9 * m * m * n):
            assert freedman_bound(t, m, v) <= azuma_bound(t, m, n) * (1 + 1e-12)
        if t <= 0:
            assert freedman_bound(t, m, m * m * n) <= azuma_bound(t, m, n) * (1 + 1e-12)
        else:
            assert freedman_bound(t, m, m * m * n) > azuma_bound(t, m, n)


def test_azuma_tail_values():
    m, n = 0.2, 30
    assert azuma_tail(1e-9, m, n) == 1.0
    assert azuma_tail(1e-9, m, n, cap=False) == pytest.approx(2.0)
    assert azuma_tail(m * n, m, n) == pytest.approx(2 * math.exp(-n / 2), rel=1e-13)


def test_mgf_estimate_log_sum_exp():
    v = np.array([0.0, 1000.0])
    lm, _ = mgf_estimate(v, 1.0)
    assert lm == pytest.approx(1000.0 - math.log(2.0))


def test_degenerate_martingale_passes():
    s = MartingaleSample(np.zeros(1000), 0.5, 0.0, 20)
    rep = verify_exponential_bound(s, [-2.0, -0.5, 0.5, 2.0])
    assert rep.passed
    assert all(r["log_mgf"] == 0.0 for r in rep.rows)


def test_drift_is_caught():
    m, n = 0.1, 100
    drift = MartingaleSample(np.full(500, m * n), m, m * m * n, n, max_increment=m)
    rep = verify_exponential_bound(drift, [0.05, 0.1, 0.5])
    assert not rep.passed
    assert not any(r["pass_azuma"] for r in rep.rows)


def test_increment_violation_is_an_error():
    with pytest.raises(IncrementBoundViolation):
        MartingaleSample(np.zeros(3), 0.1, 1.0, 3, max_increment=0.2)
    with pytest.raises(TypeError):
        verify_exponential_bound(np.zeros(3), [1.0])


def test_rademacher_walk_tail():
    # simulated bounded martingale: symmetric +-1 steps
    rng = np.random.default_rng(0)
    n = 64
    vals = (2 * rng.integers(0, 2, size=(20000, n)) - 1).sum(axis=1).astype(float)
    s = MartingaleSample(vals, 1.0, float(n), n, 1.0)
    assert tail_check(s).passed
    assert verify_exponential_bound(s, [-0.3, -0.1, 0.1, 0.3]).passed


@pytest.fixture(scope="module")
def s_sample():
    from chainflux.disorder import MassDisorder
    return s_martingale(0.05, 400, 20000, MassDisorder(), seed=3)


def test_s_martingale_bounds(s_sample):
    m, n = s_sample.m_bound, s_sample.n
    ts = [c / (m * math.sqrt(n)) for c in (-2, -1, -0.5, 0.5, 1, 2)]
    assert verify_exponential_bound(s_sample, ts).passed
    assert tail_check(s_sample).passed
    assert s_sample.max_increment <= s_sample.m_bound


def test_s_martingale_centered(s_sample):
    v = s_sample.values
    assert abs(v.mean()) < 4 * v.std() / math.sqrt(v.size)
    # variance within the conditional-variance budget
    assert v.var() <= s_sample.v_n * 1.05


def test_block_martingale_bounds(uniform):
    w = 0.05
    table = gamma_table(w, uniform, seed=1, grid=64, samples=4000)
    z = block_martingale(w, 20, 20000, uniform, seed=1, table=table)
    m, n = z.m_bound, z.n
    ts = [c / (m * math.sqrt(n)) for c in (-2, -1, -0.5, 0.5, 1, 2)]
    assert verify_exponential_bound(z, ts).passed
    assert tail_check(z).passed


def test_gamma_table_positive_and_periodic(uniform):
    ys, g = gamma_table(0.1, uniform, seed=2, grid=32, samples=4000)
    assert ys[0] == 0.0 and ys.size == 32
    assert np.all(g > 0)
    # one round averages r over the torus: gamma ~ E B^2 * int r = pi^2 / 96
    assert np.mean(g) == pytest.approx(math.pi ** 2 / 96, rel=0.2)


def test_gamma_tail_disordered(uniform):
    rows = gamma_tail_experiment([0.05], [800], 10000, uniform, seed=4)
    assert rows[0]["w2n"] == pytest.approx(2.0)
    assert rows[0]["alpha"] >= 0.1 * math.pi ** 2 / 96


def test_gamma_tail_collapse(uniform):
    rows = gamma_tail_experiment([0.05], [400], 4000, uniform, seed=5) + \
        gamma_tail_experiment([0.025], [1600], 4000, uniform, seed=5)
    a, b = rows[0]["alpha"], rows[1]["alpha"]
    assert max(a, b) / min(a, b) - 1 < 0.25


def test_gamma_tail_zero_disorder():
    rows = gamma_tail_experiment([0.05], [400, 1600, 6400], 16, None)
    inv = np.array([r["inv_gamma"] for r in rows])
    alpha = np.array([r["alpha"] for r in rows])
    w2n = np.array([r["w2n"] for r in rows])
    assert np.all(inv > 0.05)
    assert np.all(np.abs(alpha) <= -math.log(0.05) / w2n)
