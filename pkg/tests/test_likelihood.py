import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from simulcp.likelihood import (FAMILIES, LikelihoodError, LikelihoodSpec, SegmentAccumulator,
                                SegmentData, posterior_mean_theta, segment_log_marginal,
                                validate_data)

from conftest import random_data, random_spec


def lm(spec, values):
    return segment_log_marginal(spec, SegmentAccumulator.from_values(spec.family, values))


def quadrature_log_marginal(spec, x):
    """log of the integral of prod p(x|theta) against the conjugate prior, by quadrature."""
    p = spec.params
    x = np.asarray(x, float)
    fam = spec.family
    if fam == "normal-mean":
        sd = math.sqrt(p["sigma2"] / p["lam"])
        f = lambda m: np.prod(stats.norm.pdf(x, m, math.sqrt(p["sigma2"]))) * \
            stats.norm.pdf(m, p["mu0"], sd)
        c = p["mu0"] if len(x) == 0 else x.mean()
        val = integrate.quad(f, c - 40 * sd, c + 40 * sd, points=[c], limit=200)[0]
    elif fam == "normal-var":
        f = lambda v: np.prod(stats.norm.pdf(x, p["mu0"], math.sqrt(v))) * \
            stats.invgamma.pdf(v, p["alpha"], scale=p["beta"])
        val = integrate.quad(f, 0, np.inf, limit=200)[0]
    elif fam == "normal-meanvar":
        def f(m, v):  # noqa: E306
            return np.prod(stats.norm.pdf(x, m, math.sqrt(v))) * \
                stats.norm.pdf(m, p["mu0"], math.sqrt(v / p["lam"])) * \
                stats.invgamma.pdf(v, p["alpha"], scale=p["beta"])
        c = x.mean()
        inner = lambda v: integrate.quad(f, -np.inf, np.inf, args=(v,), points=None,
                                         epsabs=0, epsrel=1e-11)[0]
        val = integrate.quad(inner, 0, np.inf, epsabs=0, epsrel=1e-10, limit=200)[0]
    elif fam == "poisson":
        f = lambda r: np.prod(stats.poisson.pmf(x, r)) * \
            stats.gamma.pdf(r, p["alpha"], scale=1 / p["beta"])
        val = integrate.quad(f, 0, np.inf, limit=200)[0]
    elif fam == "bernoulli":
        f = lambda q: np.prod(q ** x * (1 - q) ** (1 - x)) * stats.beta.pdf(q, p["alpha"], p["beta"])
        val = integrate.quad(f, 0, 1, limit=200)[0]
    else:
        f = lambda b: np.prod(stats.laplace.pdf(x, 0, b)) * \
            stats.invgamma.pdf(b, p["alpha"], scale=p["beta"])
        val = integrate.quad(f, 0, np.inf, limit=200)[0]
    return math.log(val)


# --- closed-form examples -------------------------------------------------

def test_normal_mean_single_zero():
    spec = LikelihoodSpec("normal-mean", (0.0, 1.0, 1.0))
    assert lm(spec, [0.0]) == pytest.approx(math.log(1 / math.sqrt(4 * math.pi)), abs=1e-12)
    assert lm(spec, [0.0]) == pytest.approx(-1.26551, abs=1e-5)


def test_bernoulli_uniform_prior():
    assert lm(LikelihoodSpec("bernoulli", (1.0, 1.0)), [1.0]) == pytest.approx(math.log(0.5))


def test_poisson_geometric_predictive():
    assert lm(LikelihoodSpec("poisson", (1.0, 1.0)), [0.0]) == pytest.approx(math.log(0.5))


def test_laplace_single_zero():
    assert lm(LikelihoodSpec("laplace-scale", (1.0, 1.0)), [0.0]) == pytest.approx(math.log(0.5))


@pytest.mark.parametrize("family", FAMILIES)
def test_empty_segment_is_zero(family):
    rng = np.random.default_rng(0)
    assert lm(random_spec(rng, family), []) == 0.0


# --- quadrature oracle ----------------------------------------------------

@pytest.mark.parametrize("family", FAMILIES)
def test_matches_quadrature(family):
    rng = np.random.default_rng(FAMILIES.index(family))
    for _ in range(3 if family == "normal-meanvar" else 8):
        spec = random_spec(rng, family)
        n = int(rng.integers(1, 6))
        x = random_data(rng, family, 1, n)[0]
        if family == "normal-meanvar":
            x = x * 0.5
        assert lm(spec, x) == pytest.approx(quadrature_log_marginal(spec, x), abs=1e-6)


# --- accumulator ----------------------------------------------------------

def test_accumulator_basic():
    acc = SegmentAccumulator("normal-mean").reset().extend_right(1.5)
    assert acc.n == 1 and acc.sum_x == 1.5 and acc.sum_x2 == pytest.approx(2.25)


def test_extend_left_right_commute():
    a = SegmentAccumulator("normal-mean").extend_right(1.0).extend_left(2.0)
    b = SegmentAccumulator("normal-mean").extend_left(2.0).extend_right(1.0)
    assert (a.n, a.sum_x, a.sum_x2) == pytest.approx((b.n, b.sum_x, b.sum_x2))


@pytest.mark.parametrize("family", FAMILIES)
def test_thousand_extends_match_batch(family):
    rng = np.random.default_rng(7)
    x = random_data(rng, family, 1, 1000)[0]
    acc = SegmentAccumulator(family)
    for i, v in enumerate(x):
        (acc.extend_left if i % 3 == 0 else acc.extend_right)(v)
    assert acc.n == 1000
    assert acc.sum_x == pytest.approx(x.sum() if family != "laplace-scale" else np.abs(x).sum(),
                                      rel=1e-9)
    if family.startswith("normal"):
        assert acc.sum_x2 == pytest.approx(np.sum(x * x), rel=1e-9)
    if family == "poisson":
        assert acc.sum_log_factorial == pytest.approx(sum(math.lgamma(v + 1) for v in x), rel=1e-9)


def test_accumulator_rejects_out_of_support():
    with pytest.raises(LikelihoodError):
        SegmentAccumulator("poisson").extend_right(-1)
    with pytest.raises(LikelihoodError):
        SegmentAccumulator("bernoulli").extend_right(2)


def test_long_low_variance_segment_is_accurate():
    # large offset, tiny spread: naive sum of squares would lose all digits
    x = 1e8 + np.random.default_rng(1).normal(0, 1e-3, 10_000)
    acc = SegmentAccumulator.from_values("normal-mean", x)
    assert acc.centered_ss == pytest.approx(np.sum((x - x.mean()) ** 2), rel=1e-6)


# --- posterior means ------------------------------------------------------

def test_posterior_mean_examples():
    acc = lambda fam, v: SegmentAccumulator.from_values(fam, v)
    assert posterior_mean_theta(LikelihoodSpec("normal-mean", (0, 1, 1)),
                                acc("normal-mean", [2, 2])) == pytest.approx(4 / 3)
    assert posterior_mean_theta(LikelihoodSpec("bernoulli", (1, 1)),
                                acc("bernoulli", [1, 1, 1])) == pytest.approx(4 / 5)
    assert posterior_mean_theta(LikelihoodSpec("laplace-scale", (2, 1)),
                                acc("laplace-scale", [-1, 1])) == pytest.approx(1.0)
    assert posterior_mean_theta(LikelihoodSpec("poisson", (2, 1)),
                                acc("poisson", [3, 1])) == pytest.approx(6 / 3)
    # normal-var: (beta + ss/2) / (alpha + n/2 - 1)
    assert posterior_mean_theta(LikelihoodSpec("normal-var", (1, 3, 2)),
                                acc("normal-var", [0, 3])) == pytest.approx((2 + 2.5) / 3)


def test_posterior_mean_undefined_names_family():
    # alpha + n/2 <= 1 is reachable for the variance family only
    with pytest.raises(LikelihoodError, match="normal-var"):
        posterior_mean_theta(LikelihoodSpec("normal-var", (0.0, 0.3, 1.0)),
                             SegmentAccumulator.from_values("normal-var", [0.3]))


# --- spec validation ------------------------------------------------------

def test_spec_validation():
    with pytest.raises(LikelihoodError):
        LikelihoodSpec("normal-mean", (0, -1, 1))
    with pytest.raises(LikelihoodError):
        LikelihoodSpec("normal-mean", (0, 1))
    with pytest.raises(LikelihoodError):
        LikelihoodSpec("gamma", (1, 1))
    assert LikelihoodSpec.from_params("poisson", alpha=1, beta=2).eta == (1.0, 2.0)


def test_validate_data_names_position():
    with pytest.raises(LikelihoodError, match="bernoulli"):
        validate_data(np.array([[0, 1, 2.0]]), "bernoulli")
    with pytest.raises(LikelihoodError):
        validate_data(np.array([[0.5]]), "poisson")


# --- prefix-sum segment table agrees with the accumulator -----------------

@pytest.mark.parametrize("family", FAMILIES)
def test_segment_table_agrees(family):
    rng = np.random.default_rng(3)
    spec = random_spec(rng, family)
    X = random_data(rng, family, 2, 30)
    data = SegmentData(X, family)
    for _ in range(20):
        a, b = sorted(rng.choice(31, 2, replace=False))
        assert data.log_marginal(spec, 1, a, b) == pytest.approx(lm(spec, X[1, a:b]), abs=1e-9)


# --- properties -----------------------------------------------------------

finite = st.floats(-50, 50, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(st.lists(finite, min_size=1, max_size=30), finite, st.floats(-100, 100))
def test_translation_equivariance(xs, mu0, c):
    s1 = LikelihoodSpec("normal-mean", (mu0, 0.7, 1.3))
    s2 = LikelihoodSpec("normal-mean", (mu0 + c, 0.7, 1.3))
    assert lm(s2, np.array(xs) + c) == pytest.approx(lm(s1, xs), abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-20, 20), min_size=1, max_size=30), st.floats(0.01, 100))
def test_laplace_scale_equivariance(xs, c):
    s1 = LikelihoodSpec("laplace-scale", (2.0, 1.5))
    s2 = LikelihoodSpec("laplace-scale", (2.0, 1.5 * c))
    want = lm(s1, xs) - len(xs) * math.log(c)
    assert lm(s2, np.array(xs) * c) == pytest.approx(want, abs=1e-9, rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(FAMILIES), st.integers(0, 10_000), st.integers(2, 40))
def test_split_marginals_finite(family, seed, n):
    rng = np.random.default_rng(seed)
    spec = random_spec(rng, family)
    x = random_data(rng, family, 1, n)[0]
    k = int(rng.integers(1, n))
    vals = [lm(spec, x), lm(spec, x[:k]), lm(spec, x[k:])]
    assert all(math.isfinite(v) for v in vals)
