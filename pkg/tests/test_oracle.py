import itertools
import math

import numpy as np
import pytest

from simulcp.likelihood import LikelihoodSpec, SegmentData
from simulcp.model import log_joint
from simulcp.oracle import (EnumerationTooLarge, _enumerate, enumerate_posterior,
                            log_evidence_direct)
from simulcp.prior import ChangepointPrior

from conftest import random_data, random_prior, random_spec


def test_two_term_structure():
    spec = LikelihoodSpec("normal-mean", (0, 1, 1))
    m = ChangepointPrior.point_masses([0.5], [1.0]).moments(1)
    X = np.array([[0.4, -1.3]])
    d = SegmentData(X, "normal-mean")
    w0 = 0.5 * math.exp(d.log_marginal(spec, 0, 0, 2))
    w1 = 0.5 * math.exp(d.log_marginal(spec, 0, 0, 1) + d.log_marginal(spec, 0, 1, 2))
    res = enumerate_posterior(X, m, spec)
    assert res.marginal[0, 1] == pytest.approx(w1 / (w0 + w1), rel=1e-12)
    assert res.log_evidence == pytest.approx(math.log(w0 + w1), rel=1e-12)


def test_flat_likelihood_marginals_are_prior_mean(rng):
    # zero row tables: the posterior is the prior, so every marginal is E[q]
    J, T = 3, 4
    prior = random_prior(rng, J, beta=True)
    m = prior.moments(J)
    with np.errstate(invalid="ignore"):
        log_eq = m.log_h - m.log_f
    rows = np.zeros((J, 1 << (T - 1)))
    best, codes, ev, marg, eq = _enumerate(rows, J, T, m.log_f, log_eq)
    mean_q = sum(w * (a.q if hasattr(a, "q") else a.a / (a.a + a.b))
                 for a, w in zip(prior.atoms, prior.weights))
    assert np.allclose((marg / ev)[:, 1:], mean_q, atol=1e-12)
    assert np.allclose((eq / ev)[1:], mean_q, atol=1e-12)
    assert best + math.log(ev) == pytest.approx(0.0, abs=1e-12)


def test_identical_rows_share_marginals(rng):
    X = np.tile(random_data(rng, "normal-mean", 1, 4), (3, 1))
    res = enumerate_posterior(X, random_prior(rng, 3).moments(3), random_spec(rng))
    assert np.allclose(res.marginal, res.marginal[0], atol=1e-12)


def test_point_mass_rows_independent():
    # under a point mass the rows are independent: change odds q / (1 - q) times
    # the likelihood ratio
    q = 0.3
    m = ChangepointPrior.point_masses([q], [1.0]).moments(2)
    spec = LikelihoodSpec("normal-mean", (0, 1, 1))
    X = np.array([[0.2, 0.9], [-0.5, 0.1]])
    d = SegmentData(X, "normal-mean")
    res = enumerate_posterior(X, m, spec)
    for j in range(2):
        lr = d.log_marginal(spec, j, 0, 1) + d.log_marginal(spec, j, 1, 2) - \
            d.log_marginal(spec, j, 0, 2)
        odds = q / (1 - q) * math.exp(lr)
        assert res.marginal[j, 1] == pytest.approx(odds / (1 + odds), rel=1e-12)


def test_row_permutation_invariance(rng):
    spec = random_spec(rng)
    X = random_data(rng, "normal-mean", 3, 4)
    m = random_prior(rng, 3).moments(3)
    a = enumerate_posterior(X, m, spec).log_evidence
    b = enumerate_posterior(X[[2, 0, 1]], m, spec).log_evidence
    assert a == pytest.approx(b, abs=1e-12)


@pytest.mark.parametrize("family", ["normal-mean", "poisson", "bernoulli", "laplace-scale"])
def test_evidence_two_routes(family, rng):
    for J, T in [(1, 6), (2, 5), (3, 4), (4, 3)]:
        spec = random_spec(rng, family)
        X = random_data(rng, family, J, T)
        m = random_prior(rng, J, beta=True).moments(J)
        res = enumerate_posterior(X, m, spec)
        assert res.log_evidence == pytest.approx(log_evidence_direct(X, m, spec), abs=1e-10)


def test_map_attains_max_and_marginals_bounded(rng):
    spec = random_spec(rng)
    X = random_data(rng, "normal-mean", 2, 4)
    m = random_prior(rng, 2).moments(2)
    res = enumerate_posterior(X, m, spec)
    assert log_joint(X, res.map_Z, spec, m) == pytest.approx(res.map_log_joint, abs=1e-12)
    assert np.all((res.marginal >= 0) & (res.marginal <= 1))
    assert np.all(res.marginal[:, 0] == 0)
    assert np.isnan(res.q_mean[0]) and np.all((res.q_mean[1:] >= 0) & (res.q_mean[1:] <= 1))


def test_q_mean_by_direct_sum(rng):
    spec = random_spec(rng)
    X = random_data(rng, "normal-mean", 2, 3)
    m = random_prior(rng, 2).moments(2)
    res = enumerate_posterior(X, m, spec)
    num = np.zeros(3)
    den = 0.0
    for bits in itertools.product((0, 1), repeat=4):
        Z = np.zeros((2, 3), np.int8)
        Z[:, 1:] = np.array(bits).reshape(2, 2)
        w = math.exp(log_joint(X, Z, spec, m))
        den += w
        num[1:] += w * m.q_given_count(Z[:, 1:].sum(axis=0))
    assert np.allclose(res.q_mean[1:], num[1:] / den, rtol=1e-10)


def test_cap_refused():
    spec = LikelihoodSpec("normal-mean", (0, 1, 1))
    m = ChangepointPrior.point_masses([0.1], [1.0]).moments(3)
    with pytest.raises(EnumerationTooLarge, match="22"):
        enumerate_posterior(np.zeros((3, 9)), m, spec)
