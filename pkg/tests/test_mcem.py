import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from simulcp.likelihood import LikelihoodSpec, SegmentData
from simulcp.mcem import (MCEMSchedule, MCEMWarning, collect_statistics, eta_objective,
                          init_eta, kl_divergence, mcem_step, update_eta, update_weights,
                          weight_iterations)
from simulcp.model import generate_synthetic
from simulcp.prior import ChangepointPrior, PointMass, PriorError, log_binom

from conftest import random_Z, random_data


def data_of(X):
    return SegmentData(np.asarray(X, float), "normal-mean")


# --- statistics -----------------------------------------------------------

def test_all_zero_samples():
    d = data_of(np.zeros((3, 6)))
    s = collect_statistics([np.zeros((3, 6), np.int8)] * 4, d)
    assert list(s.mu_bar) == [1, 0, 0, 0]
    assert s.seg_weight.tolist() == [4, 4, 4]


def test_counting_example():
    Z = np.zeros((3, 5), np.int8)
    Z[0, 2] = Z[2, 2] = 1
    s = collect_statistics([Z], data_of(np.zeros((3, 5))))
    assert s.counts[0].tolist() == [3, 0, 1, 0]
    assert s.mu_bar == pytest.approx([0.75, 0, 0.25, 0])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_statistics_invariants(seed):
    rng = np.random.default_rng(seed)
    J, T = int(rng.integers(1, 6)), int(rng.integers(2, 20))
    X = random_data(rng, "normal-mean", J, T)
    samples = [random_Z(rng, J, T) for _ in range(int(rng.integers(1, 6)))]
    s = collect_statistics(samples, data_of(X))
    assert np.all(s.counts.sum(axis=1) == T - 1)
    assert s.mu_bar.sum() == pytest.approx(1.0, abs=1e-12)
    assert s.seg_weight.sum() == sum(J + Z.sum() for Z in samples)
    # deduplicated statistics reproduce the per-sample objective
    spec = LikelihoodSpec("normal-mean", (0.1, 0.8, 1.2))
    from simulcp.model import log_likelihood_Z
    d = data_of(X)
    want = sum(log_likelihood_Z(d, Z, spec) for Z in samples)
    assert eta_objective(spec, s) == pytest.approx(want, rel=1e-10, abs=1e-9)


# --- weights --------------------------------------------------------------

def mixture_mu(prior, J):
    return np.exp(log_binom(J)) * prior.moments(J).f


def test_single_atom_fixed():
    p = ChangepointPrior.point_masses([0.2], [1.0])
    assert update_weights(np.array([0.5, 0.3, 0.2]), p).weights.tolist() == [1.0]


def test_zero_support_start_rejected():
    p = ChangepointPrior.point_masses([0, 0.2], [1.0, 0.0])
    with pytest.raises(PriorError):
        update_weights(np.array([0.5, 0.3, 0.2]), p)


def test_recovers_realizable_mixture():
    J = 9
    atoms = [PointMass(k / J) for k in range(4)]
    truth = ChangepointPrior(atoms, [0.6, 0.1, 0.25, 0.05])
    mu = mixture_mu(truth, J)
    start = ChangepointPrior(atoms, [0.25] * 4)
    got = update_weights(mu, start, tol=1e-14, max_iter=100_000)
    assert kl_divergence(mu, got) < 1e-10
    assert np.max(np.abs(mixture_mu(got, J) - mu)) < 1e-6


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_kl_monotone_and_simplex(seed):
    rng = np.random.default_rng(seed)
    J = int(rng.integers(2, 15))
    K = int(rng.integers(1, 6))
    prior = ChangepointPrior.normalized([PointMass(float(q)) for q in rng.uniform(0, 1, K)],
                                        rng.dirichlet(np.ones(K)))
    mu = rng.dirichlet(np.ones(J + 1))
    prev = kl_divergence(mu, prior)
    for w in weight_iterations(mu, prior, max_iter=200):
        assert np.all(w >= 0) and abs(w.sum() - 1) < 1e-12
        cur = kl_divergence(mu, prior.with_weights(w / w.sum()))
        assert cur <= prev + 1e-12
        prev = cur


def test_weights_depend_only_on_counts():
    # same column counts, different rows: identical weight update
    J, T = 3, 6
    a = np.zeros((J, T), np.int8)
    b = np.zeros((J, T), np.int8)
    a[0, 2] = a[1, 4] = 1
    b[2, 2] = b[0, 4] = 1
    d = data_of(np.random.default_rng(0).normal(size=(J, T)))
    prior = ChangepointPrior.point_masses([0, 1 / 3], [0.5, 0.5])
    spec = LikelihoodSpec("normal-mean", (0, 1, 1))
    ra = mcem_step(prior, spec, [a], d, fix_eta=("mu0", "lam", "sigma2"))
    rb = mcem_step(prior, spec, [b], d, fix_eta=("mu0", "lam", "sigma2"))
    assert np.array_equal(ra.prior.weights, rb.prior.weights)


# --- eta ------------------------------------------------------------------

def test_mu0_symmetry():
    d = data_of(np.zeros((1, 4)))
    s = collect_statistics([np.zeros((1, 4), np.int8)], d)
    new = update_eta(s, LikelihoodSpec("normal-mean", (0.7, 1, 1)), fixed=("lam", "sigma2"))
    assert abs(new.params["mu0"]) < 1e-3
    assert new.params["lam"] == 1 and new.params["sigma2"] == 1


@pytest.mark.parametrize("family", ["normal-mean", "normal-var", "normal-meanvar", "poisson",
                                    "bernoulli", "laplace-scale"])
def test_eta_never_worsens(family):
    rng = np.random.default_rng(1)
    X = random_data(rng, family, 3, 40)
    d = SegmentData(X, family)
    samples = [random_Z(rng, 3, 40, 0.05) for _ in range(3)]
    s = collect_statistics(samples, d)
    start = init_eta(X, family) if family != "normal-mean" else \
        LikelihoodSpec(family, (2, 5, 0.1))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MCEMWarning)
        new = update_eta(s, start)
    assert eta_objective(new, s) >= eta_objective(start, s)


def test_sigma2_recovered():
    spec = LikelihoodSpec("normal-mean", (0, 1, 1))
    prior = ChangepointPrior.point_masses([0, 2 / 9], [0.9, 0.1])
    for seed in range(20):
        syn = generate_synthetic(9, 100, prior, spec, seed)
        s = collect_statistics([syn.Z], data_of(syn.X))
        new = update_eta(s, LikelihoodSpec("normal-mean", (1, 3, 3)))
        assert new.params["sigma2"] == pytest.approx(1.0, rel=0.25)


def test_fixing_unknown_parameter_fails():
    d = data_of(np.zeros((1, 4)))
    s = collect_statistics([np.zeros((1, 4), np.int8)], d)
    with pytest.raises(ValueError):
        update_eta(s, LikelihoodSpec("normal-mean", (0, 1, 1)), fixed=("alpha",))


# --- initialization -------------------------------------------------------

def test_init_constant_data():
    with pytest.warns(MCEMWarning):
        spec = init_eta(np.full((2, 250), 3.5), "normal-mean")
    mu0, lam, s2 = spec.eta
    assert mu0 == 3.5 and s2 == 1e-12 and lam == 1e6


def test_init_single_block_clamps():
    X = np.random.default_rng(0).normal(size=(1, 60))
    with pytest.warns(MCEMWarning):
        spec = init_eta(X, "normal-mean")
    assert spec.params["lam"] == 1e6


def test_init_within_factor_three():
    # long segments (rare changes), as the block moment matching assumes
    spec = LikelihoodSpec("normal-mean", (0, 1, 1))
    prior = ChangepointPrior.point_masses([0, 2 / 9], [0.99, 0.01])
    for seed in range(20):
        got = init_eta(generate_synthetic(9, 2000, prior, spec, seed).X, "normal-mean")
        assert 1 / 3 <= got.params["lam"] <= 3
        assert 1 / 3 <= got.params["sigma2"] <= 3
        assert abs(got.params["mu0"]) < 1.0


@pytest.mark.parametrize("family", ["normal-var", "normal-meanvar", "poisson", "bernoulli",
                                    "laplace-scale"])
def test_init_other_families_valid(family):
    rng = np.random.default_rng(2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MCEMWarning)
        spec = init_eta(random_data(rng, family, 4, 300), family)
    assert spec.family == family


# --- schedule and full step ----------------------------------------------

def test_schedules():
    assert MCEMSchedule.for_burnin(50).update_at == (5, 10, 20, 30, 50)
    assert MCEMSchedule.for_burnin(100).update_at == (10, 20, 40, 60, 100)
    assert MCEMSchedule.for_burnin(30).update_at == (10, 20)
    with pytest.raises(ValueError):
        MCEMSchedule((5, 5))
    with pytest.raises(ValueError):
        MCEMSchedule((5, 60)).validate(50)


def test_zero_samples_concentrate_on_zero_atom():
    J, T = 4, 30
    d = data_of(np.random.default_rng(0).normal(size=(J, T)))
    prior = ChangepointPrior.point_masses([0, 0.25, 0.5], [0.4, 0.3, 0.3])
    res = mcem_step(prior, LikelihoodSpec("normal-mean", (0, 1, 1)),
                    [np.zeros((J, T), np.int8)] * 3, d)
    assert res.prior.weights[0] > 0.999


def test_idempotent_at_fixed_point():
    rng = np.random.default_rng(4)
    J, T = 5, 60
    X = random_data(rng, "normal-mean", J, T)
    d = data_of(X)
    samples = [random_Z(rng, J, T, 0.1) for _ in range(4)]
    prior = ChangepointPrior.point_masses([0, 0.2, 0.4], [0.5, 0.3, 0.2])
    spec = LikelihoodSpec("normal-mean", (0, 1, 1))
    first = mcem_step(prior, spec, samples, d)
    second = mcem_step(first.prior, first.spec, samples, d)
    assert np.allclose(second.prior.weights, first.prior.weights, atol=1e-6)
    assert np.allclose(second.spec.eta, first.spec.eta, rtol=1e-3, atol=1e-4)
    assert second.eta_objective >= first.eta_objective - 1e-9
