"""Shared brute-force helpers for the test suite."""

import itertools

import numpy as np
import pytest

from simulcp.likelihood import LikelihoodSpec
from simulcp.model import log_joint
from simulcp.prior import BetaAtom, ChangepointPrior, PointMass


def random_prior(rng, J, n_atoms=None, beta=False):
    """Random mixture with atom 0 always present so all counts stay possible."""
    K = n_atoms or int(rng.integers(1, 4))
    atoms = [PointMass(0.0)]
    for _ in range(K):
        if beta and rng.random() < 0.5:
            atoms.append(BetaAtom(float(rng.uniform(0.5, 3)), float(rng.uniform(0.5, 3))))
        else:
            atoms.append(PointMass(float(rng.uniform(0.05, 0.7))))
    w = rng.dirichlet(np.ones(len(atoms)))
    return ChangepointPrior.normalized(atoms, w)


def random_spec(rng, family="normal-mean"):
    u = lambda lo, hi: float(rng.uniform(lo, hi))
    eta = {
        "normal-mean": (u(-1, 1), u(0.2, 3), u(0.3, 2)),
        "normal-var": (u(-1, 1), u(1.5, 4), u(0.5, 3)),
        "normal-meanvar": (u(-1, 1), u(0.2, 3), u(1.5, 4), u(0.5, 3)),
        "poisson": (u(0.5, 4), u(0.3, 2)),
        "bernoulli": (u(0.5, 3), u(0.5, 3)),
        "laplace-scale": (u(1.5, 4), u(0.5, 3)),
    }[family]
    return LikelihoodSpec(family, eta)


def random_data(rng, family, J, T):
    if family == "poisson":
        return rng.poisson(2.0, size=(J, T)).astype(float)
    if family == "bernoulli":
        return (rng.random((J, T)) < 0.4).astype(float)
    X = rng.normal(0, 1.0, size=(J, T))
    X[:, T // 2:] += rng.normal(0, 2.0, size=(J, 1))
    return X


def all_rows(T):
    """Every row with position 0 fixed at zero."""
    for bits in itertools.product((0, 1), repeat=T - 1):
        yield np.array((0,) + bits, dtype=np.int8)


def all_columns(J):
    for bits in itertools.product((0, 1), repeat=J):
        yield np.array(bits, dtype=np.int8)


def row_conditional(X, Z, j, spec, moments):
    """Exact conditional distribution of row j: (rows, normalized probs)."""
    rows, lj = [], []
    for r in all_rows(X.shape[1]):
        Zc = Z.copy()
        Zc[j] = r
        rows.append(r)
        lj.append(log_joint(X, Zc, spec, moments))
    lj = np.array(lj)
    p = np.exp(lj - lj.max())
    return rows, p / p.sum(), lj


def column_conditional(X, Z, t, spec, moments):
    cols, lj = [], []
    for c in all_columns(X.shape[0]):
        Zc = Z.copy()
        Zc[:, t] = c
        cols.append(c)
        lj.append(log_joint(X, Zc, spec, moments))
    lj = np.array(lj)
    p = np.exp(lj - lj.max())
    return cols, p / p.sum(), lj


def random_Z(rng, J, T, p=0.3):
    Z = (rng.random((J, T)) < p).astype(np.int8)
    Z[:, 0] = 0
    return Z


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[2])):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
