import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import dense_speed, dense_velocity, gibbs_mean, gibbs_split_mass
from otanneal import GaussianCurve, GibbsReference1D, builtin_potential, builtin_schedule
from otanneal.gibbs import TailEvaluationError

QUAD = builtin_potential("quadratic", 1)
SCHED = builtin_schedule("quadratic", (0.25, 25.0))


@pytest.fixture(scope="module")
def gauss_ref():
    return GibbsReference1D(QUAD, SCHED)


@pytest.mark.parametrize("t", [0.0, 0.3, 0.5, 1.0])
def test_gaussian_normalizer(gauss_ref, t):
    beta = SCHED.value(t)
    assert gauss_ref.normalizer(t) == pytest.approx(math.sqrt(2 * math.pi / beta), rel=1e-10)


@pytest.mark.parametrize("t", [0.1, 0.5, 0.9])
def test_gaussian_velocity_closed_form(gauss_ref, t):
    x = np.linspace(-1.5, 1.5, 7)
    want = GaussianCurve(1.0, SCHED).velocity(t, x)
    np.testing.assert_allclose(gauss_ref.velocity(t, x), want, rtol=1e-8, atol=1e-10)


def test_gaussian_velocity_is_covariance_free():
    cov = np.diag([0.5, 3.0])
    x = np.array([[1.0, -2.0]])
    np.testing.assert_allclose(GaussianCurve(cov, SCHED).velocity(0.5, x), -(25 / 13) * x)


def test_exponential_schedule_field():
    s = builtin_schedule("exponential", (2.0, 1.5))
    x = np.array([0.3, -1.0])
    np.testing.assert_allclose(GaussianCurve(1.0, s).velocity(0.4, x), -0.75 * x)


@pytest.mark.parametrize("t", [0.1, 0.5, 0.9])
def test_gaussian_metric_derivative(gauss_ref, t):
    want = GaussianCurve(1.0, SCHED).metric_derivative(t)
    assert gauss_ref.metric_derivative(t) == pytest.approx(want, rel=1e-8)


def test_gaussian_w2_and_unit_speed():
    cov = np.diag([1.0, 2.0, 6.0])
    a = math.sqrt(np.trace(cov))
    s = builtin_schedule("gaussian_unit_speed", (a,), horizon=0.9 * a)
    g = GaussianCurve(cov, s)
    for t in (0.0, 0.3, 1.0, 2.0):
        assert g.metric_derivative(t) == pytest.approx(1.0, rel=1e-12)
    assert g.w2(0.2, 1.7) == pytest.approx(1.5, rel=1e-12)


def test_gaussian_monge_map_pushes_forward():
    g = GaussianCurve(1.0, SCHED)
    x = g.sample(0.2, np.random.default_rng(1), size=200000)
    y = g.monge_map(0.2, 0.8, x)
    assert np.var(y) == pytest.approx(1 / SCHED.value(0.8), rel=0.02)


@pytest.mark.parametrize("t", [0.0, 0.5, 1.0])
def test_double_well_cdf_against_quadpack(dw_reference, double_well, t):
    beta = float(SCHED.value(t))
    for cut in (-2.0, -1.0, 0.0, 0.7, 2.5):
        left, total = gibbs_split_mass(double_well, beta, cut)
        assert float(dw_reference.cdf(t, cut)) == pytest.approx(left / total, abs=1e-10)


@pytest.mark.parametrize("t", [0.0, 0.4, 1.0])
def test_double_well_mean_energy_against_quadpack(dw_reference, double_well, t):
    beta = float(SCHED.value(t))
    want = gibbs_mean(double_well, beta, lambda x: float(double_well.value(np.array([x]))))
    assert dw_reference.mean_potential(t) == pytest.approx(want, rel=1e-9)


@given(st.floats(1e-9, 1 - 1e-9), st.sampled_from([0.0, 0.25, 0.5, 0.75, 1.0]))
def test_quantile_cdf_roundtrip(dw_reference, u, t):
    x = dw_reference.quantile(t, u)
    assert float(dw_reference.cdf(t, x)) == pytest.approx(u, abs=1e-9)


def test_velocity_against_dense_trapezoid(dw_reference, double_well):
    xs = np.array([-2.0, -1.0, -0.3, 0.25, 1.0, 2.0])
    for t in (0.2, 0.5):
        got = dw_reference.velocity(t, xs)
        want = dense_velocity(double_well, SCHED, t, xs)
        np.testing.assert_allclose(got, want, rtol=1e-5)


def test_velocity_tail_sign_and_bound(dw_reference, double_well):
    for t in (0.1, 0.3, 0.5):
        beta_rate = float(SCHED.rate(t))
        for x in (4.0, 4.5, 5.0, -4.0, -4.5, -5.0):
            try:
                v = dw_reference.velocity(t, x)
            except TailEvaluationError:
                continue
            assert np.sign(v) == -np.sign(x)
            assert abs(v) <= abs(beta_rate) * float(double_well.value(np.array([x])))


def test_velocity_zero_rate():
    s = builtin_schedule("linear", (2.0, 0.0))
    ref = GibbsReference1D(QUAD, s)
    assert ref.velocity(0.5, 0.7) == 0.0
    assert ref.metric_derivative(0.5) == 0.0


def test_velocity_outside_truncation(dw_reference):
    with pytest.raises(ValueError):
        dw_reference.velocity(0.5, dw_reference.L + 1.0)


def test_metric_derivative_against_dense_trapezoid(dw_reference, double_well):
    for t in (0.1, 0.4, 0.7):
        assert dw_reference.metric_derivative(t) == pytest.approx(
            dense_speed(double_well, SCHED, t), rel=2e-3
        )


def test_metric_derivative_matches_finite_difference_speed(gauss_ref):
    # on the Gaussian curve the exact speed and W2 difference quotients agree
    g = GaussianCurve(1.0, SCHED)
    for t in (0.2, 0.6):
        fd = g.w2(t, t + 1e-5) / 1e-5
        assert gauss_ref.metric_derivative(t) == pytest.approx(fd, rel=1e-3)


def test_sampling_matches_cdf(dw_reference):
    x = dw_reference.sample(0.3, np.random.default_rng(5), size=20000)
    for cut in (-1.5, -0.5, 0.8):
        assert np.mean(x < cut) == pytest.approx(float(dw_reference.cdf(0.3, cut)), abs=0.015)


def test_truncation_covers_tails(dw_reference):
    assert float(dw_reference.cdf(0.0, -dw_reference.L + 1e-9)) < 1e-10
    assert dw_reference.L > 8.0


def test_pickle_drops_cache(dw_reference):
    import pickle

    dw_reference.slice(0.5)
    clone = pickle.loads(pickle.dumps(dw_reference))
    assert len(clone._cache) == 0
    assert clone.normalizer(0.5) == dw_reference.normalizer(0.5)
