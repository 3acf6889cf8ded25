"""Changepoint frequency prior: a weighted dictionary of atoms on [0, 1].

The prior enters inference only through the moment tables

    f(k) = E[q^k (1 - q)^(J - k)],        k = 0..J
    g(k) = E[q^(k - 1) (1 - q)^(J - k)],  k = 1..J

which are stored in log space.  Point masses and Beta atoms both have closed
forms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import betaln, gammaln, logsumexp, xlogy


class PriorError(ValueError):
    pass


@dataclass(frozen=True)
class PointMass:
    q: float

    def __post_init__(self):
        if not 0.0 <= self.q <= 1.0:
            raise PriorError(f"point mass location must lie in [0, 1], got {self.q}")

    def log_moment(self, a, b):
        """log E[q^a (1-q)^b] for non-negative integer arrays ``a``, ``b``."""
        with np.errstate(divide="ignore"):
            return xlogy(a, self.q) + xlogy(b, 1.0 - self.q)

    def sample(self, rng, size):
        return np.full(size, self.q)

    def to_dict(self):
        return {"type": "point", "q": self.q}


@dataclass(frozen=True)
class BetaAtom:
    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise PriorError(f"Beta atom needs positive shapes, got ({self.a}, {self.b})")

    def log_moment(self, a, b):
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        return betaln(self.a + a, self.b + b) - betaln(self.a, self.b)

    def sample(self, rng, size):
        return rng.beta(self.a, self.b, size=size)

    def to_dict(self):
        return {"type": "beta", "a": self.a, "b": self.b}


def atom_from_dict(d):
    kind = d.get("type")
    if kind == "point":
        return PointMass(float(d["q"]))
    if kind == "beta":
        return BetaAtom(float(d["a"]), float(d["b"]))
    raise PriorError(f"unknown atom type {kind!r}")


@dataclass(frozen=True)
class PriorMoments:
    """Log moment tables of a prior for a fixed sequence count ``J``.

    ``log_f[k]`` for k = 0..J and ``log_g[k]`` for k = 1..J (``log_g[0]`` is
    unused and set to nan).  ``log_h[k] = log E[q^(k+1) (1-q)^(J-k)]`` feeds
    the posterior mean of q given a column count.
    """

    J: int
    log_f: np.ndarray
    log_g: np.ndarray
    log_h: np.ndarray

    @property
    def f(self):
        return np.exp(self.log_f)

    @property
    def g(self):
        out = np.exp(self.log_g)
        out[0] = np.nan
        return out

    def change_prob(self, n_others):
        """Prior probability of a change in one row given ``n_others`` changes
        among the other J - 1 rows: ``f(n+1) / g(n+1)``."""
        n = np.asarray(n_others)
        lg = self.log_g[n + 1]
        with np.errstate(invalid="ignore"):
            out = np.exp(self.log_f[n + 1] - lg)
        return np.where(np.isneginf(lg), 0.0, out)

    def q_given_count(self, n):
        """E[q | n of the J rows changed] = h(n) / f(n)."""
        n = np.asarray(n)
        lf = self.log_f[n]
        if np.any(np.isneginf(lf)):
            raise PriorError("column count has zero prior probability")
        return np.exp(self.log_h[n] - lf)


class ChangepointPrior:
    """Mixture ``sum_k w_k nu_k`` over a fixed dictionary of atoms."""

    def __init__(self, atoms, weights):
        atoms = tuple(atoms)
        w = np.asarray(weights, dtype=np.float64)
        if len(atoms) == 0 or w.shape != (len(atoms),):
            raise PriorError("need one weight per dictionary atom")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise PriorError("weights must be non-negative and finite")
        if abs(w.sum() - 1.0) > 1e-12:
            raise PriorError(f"weights must sum to 1 (within 1e-12), got {w.sum()!r}")
        self.atoms = atoms
        self.weights = w
        self.weights.setflags(write=False)

    @classmethod
    def point_masses(cls, locations, weights):
        return cls([PointMass(float(q)) for q in locations], weights)

    @classmethod
    def normalized(cls, atoms, weights):
        w = np.asarray(weights, dtype=np.float64)
        return cls(atoms, w / w.sum())

    def with_weights(self, weights):
        return ChangepointPrior(self.atoms, weights)

    def __repr__(self):
        parts = ", ".join(
            f"{w:.4g}*{'d' + format(a.q, '.4g') if isinstance(a, PointMass) else f'Beta({a.a:g},{a.b:g})'}"
            for a, w in zip(self.atoms, self.weights)
        )
        return f"ChangepointPrior({parts})"

    def __eq__(self, other):
        return (isinstance(other, ChangepointPrior) and self.atoms == other.atoms
                and np.array_equal(self.weights, other.weights))

    def to_dict(self):
        return {"atoms": [a.to_dict() for a in self.atoms],
                "weights": [float(w) for w in self.weights]}

    @classmethod
    def from_dict(cls, d):
        return cls([atom_from_dict(a) for a in d["atoms"]], d["weights"])

    def atom_log_moments(self, J: int) -> np.ndarray:
        """K x (J+1) table of log E_{nu_k}[q^l (1-q)^(J-l)]."""
        l = np.arange(J + 1)
        return np.stack([a.log_moment(l, J - l) for a in self.atoms])

    def dictionary_moment(self, k: int, l: int, J: int) -> float:
        if not 0 <= l <= J:
            raise PriorError(f"exponent {l} outside 0..{J}")
        return float(np.exp(self.atoms[k].log_moment(l, J - l)))

    def _mix(self, a, b):
        logw = np.log(self.weights, where=self.weights > 0,
                      out=np.full(self.weights.shape, -np.inf))
        terms = np.stack([lw + atom.log_moment(a, b) for lw, atom in zip(logw, self.atoms)])
        with np.errstate(invalid="ignore"):
            return logsumexp(terms, axis=0)

    def moments(self, J: int) -> PriorMoments:
        """Build the f/g/h tables for ``J`` sequences."""
        if J < 1:
            raise PriorError("J must be at least 1")
        k = np.arange(J + 1)
        log_f = self._mix(k, J - k)
        log_g = np.full(J + 1, np.nan)
        log_g[1:] = self._mix(k[1:] - 1, J - k[1:])
        log_h = self._mix(k + 1, J - k)
        return PriorMoments(J, log_f, log_g, log_h)

    def sample_q(self, rng, size):
        idx = rng.choice(len(self.atoms), size=size, p=self.weights)
        q = np.empty(size)
        for k, atom in enumerate(self.atoms):
            sel = idx == k
            if sel.any():
                q[sel] = atom.sample(rng, int(sel.sum()))
        return q


def build_moment_tables(prior: ChangepointPrior, J: int) -> PriorMoments:
    return prior.moments(J)


def default_dictionary(J: int):
    """Point masses on the grid k/J, k = 0..floor(J/2) - 1 (at least the atom 0)."""
    K = max(J // 2, 1)
    return [PointMass(k / J) for k in range(K)]


def init_weights(J: int, zero_weight: float = 0.9) -> ChangepointPrior:
    """Default starting prior: ``zero_weight`` at q = 0, the rest spread evenly."""
    atoms = default_dictionary(J)
    if len(atoms) == 1:
        return ChangepointPrior(atoms, [1.0])
    rest = (1.0 - zero_weight) / (len(atoms) - 1)
    w = np.full(len(atoms), rest)
    w[0] = zero_weight
    w /= w.sum()
    return ChangepointPrior(atoms, w)


def log_binom(J: int) -> np.ndarray:
    k = np.arange(J + 1)
    return gammaln(J + 1) - gammaln(k + 1) - gammaln(J - k + 1)


def column_counts(Z) -> np.ndarray:
    """N_t for t = 1..T-1 (column 0 is never a changepoint)."""
    Z = np.asarray(Z)
    return Z[:, 1:].sum(axis=0).astype(np.int64)


def log_prior_Z(Z, moments: PriorMoments) -> float:
    """log P(Z) = sum over t >= 1 of log f(N_t); -inf when the prior forbids Z."""
    Z = np.asarray(Z)
    if Z.shape[0] != moments.J:
        raise PriorError(f"Z has {Z.shape[0]} rows, moments built for J={moments.J}")
    return float(np.sum(moments.log_f[column_counts(Z)]))

