import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from parsmooth.hmm_par import (HmmFilterElement, HmmSmoothElement, combine_hmm_filter,
                               combine_hmm_smooth, hmm_filter_element, hmm_smooth_element,
                               parallel_hmm_filter, parallel_hmm_smoother)
from parsmooth.sequential import brute_force_posterior, hmm_backward_smooth, hmm_forward
from parsmooth.ssm import HmmModel, make_random_hmm
from parsmooth.verify import random_hmm_filter_element, random_hmm_smooth_element

PI = np.array([[0.6, 0.3, 0.1], [0.2, 0.5, 0.3], [0.25, 0.25, 0.5]])


def test_uninformative_element():
    model = HmmModel(PI, np.full((3, 3), 0.4), np.full(3, 1 / 3))
    e = hmm_filter_element(model, 2)
    assert_allclose(e.f, PI, rtol=1e-15)
    assert_allclose(e.log_g, np.log(0.4), rtol=1e-15)


def test_point_mass_element():
    lik = np.zeros((2, 3))
    lik[:, 2] = 0.7
    e = hmm_filter_element(HmmModel(PI, lik, np.full(3, 1 / 3)), 2)
    assert_allclose(e.f, np.tile([0, 0, 1.0], (3, 1)))
    assert_allclose(np.exp(e.log_g), PI[:, 2] * 0.7, rtol=1e-14)


def test_zero_normaliser_raises():
    P = np.array([[1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(ValueError):
        hmm_filter_element(HmmModel(P, np.array([[1.0, 1.0], [1.0, 0.0]]), np.array([0.5, 0.5])), 2)


def test_filter_identity_law():
    e = random_hmm_filter_element(np.random.default_rng(1))
    ident = HmmFilterElement.identity(3)
    for got in (combine_hmm_filter(e, ident), combine_hmm_filter(ident, e)):
        assert_allclose(got.f, e.f, atol=1e-15)
        assert_allclose(got.log_g, e.log_g, atol=1e-15)


def test_smooth_identity_and_boundary():
    e = random_hmm_smooth_element(np.random.default_rng(2))
    assert_allclose(combine_hmm_smooth(e, HmmSmoothElement.identity(3)).m, e.m)
    alpha = np.array([0.2, 0.5, 0.3])
    model = HmmModel(PI, np.ones((4, 3)), np.full(3, 1 / 3))
    assert_allclose(hmm_smooth_element(model, alpha, 4).m, np.tile(alpha, (3, 1)))
    uniform = HmmModel(np.full((3, 3), 1 / 3), np.ones((4, 3)), np.full(3, 1 / 3))
    assert_allclose(hmm_smooth_element(uniform, alpha, 2).m, np.tile(alpha, (3, 1)))


@given(st.integers(0, 2**31))
@settings(max_examples=50, deadline=None)
def test_combines_are_associative_and_stochastic(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (random_hmm_filter_element(rng) for _ in range(3))
    l = combine_hmm_filter(combine_hmm_filter(a, b), c)
    r = combine_hmm_filter(a, combine_hmm_filter(b, c))
    assert_allclose(l.f, r.f, atol=1e-12)
    assert_allclose(l.log_g, r.log_g, atol=1e-12)
    assert_allclose(l.f.sum(axis=1), 1.0, atol=1e-12)
    s = [random_hmm_smooth_element(rng) for _ in range(3)]
    l = combine_hmm_smooth(combine_hmm_smooth(s[0], s[1]), s[2])
    r = combine_hmm_smooth(s[0], combine_hmm_smooth(s[1], s[2]))
    assert_allclose(l.m, r.m, atol=1e-12)
    assert_allclose(l.m.sum(axis=1), 1.0, atol=1e-12)


@pytest.mark.parametrize("seed", range(6))
def test_parallel_matches_enumeration(seed):
    model, _ = make_random_hmm(3, 6, seed)
    post = brute_force_posterior(model)
    filt = parallel_hmm_filter(model)
    assert_allclose(filt.marginals, post.filtered, atol=1e-12)
    assert_allclose(filt.loglik_prefix, post.loglik_prefix, rtol=1e-12)
    smooth = parallel_hmm_smoother(model, filt.marginals, block=2)
    assert_allclose(smooth.marginals, post.smoothed, atol=1e-12)


def test_single_step_is_bayes():
    p0 = np.array([0.5, 0.3, 0.2])
    lik = np.array([[0.1, 0.6, 0.3]])
    model = HmmModel(PI, lik, p0)
    prior = p0 @ PI
    expect = prior * lik[0] / (prior @ lik[0])
    assert_allclose(parallel_hmm_filter(model).marginals[0], expect, rtol=1e-14)
    assert_allclose(parallel_hmm_smoother(model, expect[None]).marginals[0], expect, rtol=1e-14)


def test_uniform_everything():
    lik = np.array([[0.2, 0.4, 0.6], [0.1, 0.1, 0.4], [0.3, 0.9, 0.3]])
    model = HmmModel(np.full((3, 3), 1 / 3), lik, np.full(3, 1 / 3))
    filt = parallel_hmm_filter(model)
    assert filt.loglik == pytest.approx(np.sum(np.log(lik.mean(axis=1))), rel=1e-14)


def test_long_sequence_agrees_with_sequential():
    model, _ = make_random_hmm(3, 10_000, seed=0)
    fw = hmm_forward(model)
    filt = parallel_hmm_filter(model, block=16)
    assert_allclose(filt.marginals, fw.filtered, atol=1e-10)
    assert filt.loglik == pytest.approx(fw.loglik, rel=1e-12)
    smooth = parallel_hmm_smoother(model, filt.marginals, block=16)
    assert_allclose(smooth.marginals, hmm_backward_smooth(model, fw), atol=1e-10)
