import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from parsmooth.pkf import (FilterElement, combine_filter, filter_element, parallel_filter,
                           parallel_loglik, predictive_moments)
from parsmooth.sequential import GaussianMoment, kalman_filter, stack_moments
from parsmooth.ssm import LGSSM, make_random_lgssm, make_tracking_model, simulate
from parsmooth.verify import element_err, random_filter_element, rel_err, scalar_model

YS = np.array([[1.0], [0.0]])


def scalars(e):
    return [float(np.squeeze(v)) for v in (e.A, e.b, e.C, e.eta, e.J)]


def test_element_k1_hand_values():
    e = filter_element(scalar_model(), YS[0], 1)
    assert_allclose(scalars(e), [0, 2 / 3, 2 / 3, 1 / 3, 1 / 3], atol=1e-15)


def test_element_generic_hand_values():
    e = filter_element(scalar_model(), np.zeros(1), 2)
    assert_allclose(scalars(e), [0.5, 0, 0.5, 0, 0.5], atol=1e-15)


def test_combine_reproduces_two_step_posterior():
    m = scalar_model()
    e = combine_filter(filter_element(m, YS[0], 1), filter_element(m, YS[1], 2))
    A, b, C, _, _ = scalars(e)
    assert_allclose([A, b, C], [0, 1 / 4, 5 / 8], atol=1e-15)


def test_identity_law():
    rng = np.random.default_rng(0)
    e = random_filter_element(rng)
    ident = FilterElement.identity(3)
    assert element_err(combine_filter(e, ident), e) <= 1e-14
    assert element_err(combine_filter(ident, e), e) <= 1e-14


@given(st.integers(0, 2**31))
@settings(max_examples=50, deadline=None)
def test_associativity(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (random_filter_element(rng) for _ in range(3))
    left = combine_filter(combine_filter(a, b), c)
    right = combine_filter(a, combine_filter(b, c))
    assert element_err(left, right) <= 1e-9


def test_parallel_scalar_case():
    res = parallel_filter(scalar_model(), YS)
    means, covs = stack_moments(res.filtered)
    assert_allclose(means[:, 0], [2 / 3, 1 / 4], atol=1e-15)
    assert_allclose(covs[:, 0, 0], [2 / 3, 5 / 8], atol=1e-15)


def test_n1_equals_first_element():
    m = make_tracking_model(n=1)
    y = simulate(m, 0).measurements
    e = filter_element(m, y[0], 1)
    f = parallel_filter(m, y).filtered[0]
    assert_allclose(f.mean, e.b)
    assert_allclose(f.cov, e.C)


@pytest.mark.parametrize("seed", range(3))
def test_tracking_matches_kalman(seed):
    m = make_tracking_model(n=100)
    ys = simulate(m, seed).measurements
    ref = kalman_filter(m, ys).filtered
    got = parallel_filter(m, ys, block=4, workers=2).filtered
    for g, r in zip(got, ref):
        assert rel_err(g.mean, r.mean) <= 1e-8
        assert rel_err(g.cov, r.cov) <= 1e-7


def test_time_varying_matches_kalman():
    m = make_random_lgssm(3, 2, 25, seed=4, time_varying=True)
    ys = simulate(m, 1).measurements
    ref = kalman_filter(m, ys).filtered
    for g, r in zip(parallel_filter(m, ys).filtered, ref):
        assert rel_err(g.mean, r.mean) <= 1e-8


def test_predictive_moments():
    one = np.ones((1, 1))
    got = predictive_moments(scalar_model(), GaussianMoment(np.array([2 / 3]), 2 / 3 * one), 2)
    assert_allclose([got.mean[0], got.cov[0, 0]], [2 / 3, 5 / 3])
    I, Z = np.eye(2), np.zeros((2, 2))
    static = LGSSM(I, np.zeros(2), Z, I, np.zeros(2), I, np.zeros(2), I, 3)
    mom = GaussianMoment(np.array([1.0, -2.0]), np.array([[2.0, 0.5], [0.5, 1.0]]))
    got = predictive_moments(static, mom, 2)
    assert_allclose(got.mean, mom.mean)
    assert_allclose(got.cov, mom.cov)
    m = make_random_lgssm(2, 1, 3, seed=0)
    got = predictive_moments(m, None, 1)
    assert_allclose(got.mean, m.F @ m.m0 + m.u)
    assert_allclose(got.cov, m.F @ m.P0 @ m.F.T + m.Q)


def test_loglik_scalar_n1():
    m = scalar_model(1)
    f = parallel_filter(m, YS[:1]).filtered
    ll = parallel_loglik(m, f, YS[:1])
    assert ll.loglik == pytest.approx(-0.5 * (np.log(6 * np.pi) + 1 / 3), rel=1e-14)


def test_loglik_flat_measurements():
    one = np.ones((1, 1))
    m = LGSSM(one, np.zeros(1), one, one, np.zeros(1), 1e10 * one, np.zeros(1), one, 5)
    ys = np.random.default_rng(0).standard_normal((5, 1))
    ll = parallel_loglik(m, parallel_filter(m, ys).filtered, ys)
    assert np.all(np.isfinite(ll.prefix))
    assert np.all(np.diff(ll.prefix) < 0)


def test_loglik_matches_sequential_per_prefix():
    m = make_tracking_model(n=100)
    ys = simulate(m, 2).measurements
    ll = parallel_loglik(m, parallel_filter(m, ys).filtered, ys)
    assert_allclose(ll.prefix, kalman_filter(m, ys).loglik_prefix, rtol=0, atol=1e-8)


def test_rejects_wrong_measurement_shape():
    with pytest.raises(ValueError):
        parallel_filter(make_tracking_model(n=4), np.zeros((5, 2)))
