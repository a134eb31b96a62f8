import math

import numpy as np
import pytest
from hypothesis import given
from scipy.integrate import trapezoid
from hypothesis import strategies as st

from chainflux.disorder import MassDisorder, density, moment2, sample_b
from chainflux.rng import RandomStream


def test_uniform_support_and_moments(uniform):
    b = uniform.sample(RandomStream(3, ("draws",)), 10 ** 6)
    assert b.min() >= -0.5 and b.max() <= 0.5
    se = b.std() / math.sqrt(b.size)
    assert abs(b.mean()) <= 3 * se
    b2 = b * b
    assert abs(b2.mean() - 1 / 12) <= 3 * b2.std() / math.sqrt(b.size)


def test_moment2_values(uniform):
    assert moment2(uniform) == pytest.approx(0.0833333333333333, rel=1e-14)
    assert MassDisorder("quadratic", 0.5).moment2() == pytest.approx(0.05, rel=1e-14)


def test_degenerate_rejected():
    with pytest.raises(ValueError):
        MassDisorder("uniform", 0.0)
    with pytest.raises(ValueError):
        MassDisorder("uniform", 1.0)
    with pytest.raises(ValueError):
        MassDisorder("cauchy", 0.5)


def test_density_values(uniform):
    assert density(uniform, 0.0) == pytest.approx(1.0)
    assert density(uniform, 0.75) == 0.0


@pytest.mark.parametrize("kind", ["uniform", "quadratic"])
def test_density_normalized(kind):
    d = MassDisorder(kind, 0.5)
    x = np.linspace(d.b_minus, d.b_plus, 10 ** 5)
    assert trapezoid(d.pdf(x), x) == pytest.approx(1.0, abs=1e-8 if kind == "quadratic" else 1e-10)


@pytest.mark.parametrize("kind", ["uniform", "quadratic"])
def test_sample_moment_matches(kind):
    d = MassDisorder(kind, 0.4)
    b = d.sample(RandomStream(9), 400000)
    b2 = b * b
    assert abs(b2.mean() - d.moment2()) <= 4 * b2.std() / math.sqrt(b.size)


@given(st.sampled_from(["uniform", "quadratic"]), st.floats(0.01, 0.99))
def test_moment2_bounded(kind, a):
    d = MassDisorder(kind, a)
    assert 0 <= d.moment2() <= max(d.b_minus ** 2, d.b_plus ** 2)


@given(st.sampled_from(["uniform", "quadratic"]), st.floats(0.01, 0.99), st.floats(0.0, 1.0))
def test_ppf_inside_support(kind, a, u):
    d = MassDisorder(kind, a)
    b = float(d.ppf(np.array([u]))[0])
    assert d.b_minus - 1e-12 <= b <= d.b_plus + 1e-12


def test_dict_round_trip():
    d = MassDisorder("quadratic", 0.3)
    assert MassDisorder.from_dict(d.to_dict()) == d


def test_sample_b_scalar(uniform):
    assert isinstance(sample_b(uniform, RandomStream(1)), float)
