import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from otanneal.numerics import QuadratureError, adaptive_simpson, golden_section


def test_polynomials_exact():
    res = adaptive_simpson(lambda x: 3 * x**2 - x**3, -1.0, 2.0, tol=1e-12)
    assert res.total == pytest.approx((8 - 4) - (-1 - 0.25), abs=1e-12)


def test_vector_integrand_shares_panels():
    res = adaptive_simpson(lambda x: np.stack([np.exp(-x * x), x * x * np.exp(-x * x)]), -10, 10,
                           tol=1e-12)
    assert res.total.shape == (2,)
    assert res.total[0] == pytest.approx(math.sqrt(math.pi), abs=1e-11)
    assert res.total[1] == pytest.approx(math.sqrt(math.pi) / 2, abs=1e-11)


def test_leaves_tile_interval():
    res = adaptive_simpson(lambda x: np.exp(-50 * (x - 0.3) ** 2), -1, 1, tol=1e-11)
    assert res.left[0] == -1 and res.right[-1] == 1
    np.testing.assert_array_equal(res.right[:-1], res.left[1:])


@given(st.floats(0.5, 20.0), st.floats(-2.0, 2.0))
def test_gaussian_mass_property(s, m):
    res = adaptive_simpson(lambda x: np.exp(-0.5 * s * (x - m) ** 2), -30, 30, tol=1e-11)
    assert res.total == pytest.approx(math.sqrt(2 * math.pi / s), abs=1e-9)


def test_budget_exceeded():
    with pytest.raises(QuadratureError):
        adaptive_simpson(lambda x: np.sign(x - 1e-3) * np.abs(x - 1e-3) ** -0.9, -1, 1, tol=1e-14,
                         max_panels=1 << 10)


def test_golden_section():
    assert golden_section(lambda x: (x - 0.7) ** 2, -2, 3, tol=1e-12) == pytest.approx(0.7, abs=1e-9)
