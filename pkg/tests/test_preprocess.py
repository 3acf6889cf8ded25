import numpy as np
from hypothesis import given, settings, strategies as st

from simulcp.preprocess import mad_sigma, median_center, preprocess, replace_outliers


def test_constant_row_unchanged():
    X = np.full((2, 12), 4.25)
    assert np.array_equal(replace_outliers(X), X)
    assert np.array_equal(preprocess(X, center=False), X)
    assert np.all(preprocess(X) == 0)


def test_spike_replaced_by_window_median():
    rng = np.random.default_rng(0)
    row = rng.normal(0, 1, 200)
    sigma = mad_sigma(row)
    t = 80
    row[t] = row.max() + 10 * sigma
    out = replace_outliers(row[None, :])[0]
    assert out[t] < row[t] - 5 * sigma
    window = row[t - 3:t + 4]
    assert abs(out[t]) <= np.max(np.abs(np.delete(window, 3)))


def test_spike_rule_first_pass_value():
    row = np.array([0.0, 0.1, -0.1, 0.05, 10.0, -0.05, 0.0, 0.1, -0.1])
    out = replace_outliers(row[None, :])[0]
    assert out[4] == np.median(row[1:8])
    assert np.array_equal(np.delete(out, 4), np.delete(row, 4))


def test_step_not_touched():
    # a level shift is not an isolated extreme
    row = np.r_[np.zeros(20), np.full(20, 5.0)] + np.tile([0.01, -0.01], 20)
    assert np.array_equal(replace_outliers(row[None, :]), row[None, :])


def test_centered_median_zero():
    X = np.random.default_rng(1).normal(3, 2, size=(4, 33))
    assert np.allclose(np.median(median_center(X), axis=1), 0, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000), st.integers(1, 4), st.integers(1, 60))
def test_idempotent(seed, J, T):
    rng = np.random.default_rng(seed)
    X = rng.standard_t(2, size=(J, T))
    once = preprocess(X)
    # even-length medians average two values, so re-centering can move by rounding
    assert np.allclose(preprocess(once), once, rtol=0, atol=1e-12)
    assert np.array_equal(replace_outliers(replace_outliers(X)), replace_outliers(X))
