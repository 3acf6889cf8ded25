"""Conjugate observation models and segment marginal likelihoods.

Each family integrates the piecewise-constant parameter out against its
conjugate prior, so the log marginal of a segment depends only on a few
sufficient statistics: the length ``n`` and two running sums ``s1``/``s2``.

=================  ==========================  ============================
family             s1                          s2
=================  ==========================  ============================
normal-mean        sum(x - shift)              sum((x - shift)**2)
normal-var         sum(x - shift)              sum((x - shift)**2)
normal-meanvar     sum(x - shift)              sum((x - shift)**2)
poisson            sum(x)                      sum(log x!)
bernoulli          sum(x)                      unused
laplace-scale      sum(|x|)                    unused
=================  ==========================  ============================

The hot loops of the sampler and the maximizer read segment statistics from
per-row prefix sums (:class:`SegmentData`), which makes every segment
marginal an O(1) lookup.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.special import gammaln

FAMILIES = (
    "normal-mean",
    "normal-var",
    "normal-meanvar",
    "poisson",
    "bernoulli",
    "laplace-scale",
)

FAMILY_PARAMS = {
    "normal-mean": ("mu0", "lam", "sigma2"),
    "normal-var": ("mu0", "alpha", "beta"),
    "normal-meanvar": ("mu0", "lam", "alpha", "beta"),
    "poisson": ("alpha", "beta"),
    "bernoulli": ("alpha", "beta"),
    "laplace-scale": ("alpha", "beta"),
}

# indices of eta entries that must be strictly positive
POSITIVE_PARAMS = {
    "normal-mean": (1, 2),
    "normal-var": (1, 2),
    "normal-meanvar": (1, 2, 3),
    "poisson": (0, 1),
    "bernoulli": (0, 1),
    "laplace-scale": (0, 1),
}

NORMAL_MEAN, NORMAL_VAR, NORMAL_MEANVAR, POISSON, BERNOULLI, LAPLACE = range(6)

_LOG_2PI = math.log(2.0 * math.pi)
_LOG_2 = math.log(2.0)


class LikelihoodError(ValueError):
    """Invalid hyperparameters or data outside a family's support."""


@dataclass(frozen=True)
class LikelihoodSpec:
    """A likelihood family together with its prior hyperparameters ``eta``.

    >>> spec = LikelihoodSpec("normal-mean", (0.0, 1.0, 1.0))
    >>> spec.params
    {'mu0': 0.0, 'lam': 1.0, 'sigma2': 1.0}
    """

    family: str
    eta: tuple[float, ...]

    def __post_init__(self):
        if self.family not in FAMILY_PARAMS:
            raise LikelihoodError(
                f"unknown family {self.family!r}; expected one of {', '.join(FAMILIES)}"
            )
        eta = tuple(float(v) for v in self.eta)
        names = FAMILY_PARAMS[self.family]
        if len(eta) != len(names):
            raise LikelihoodError(
                f"{self.family} takes {len(names)} hyperparameters {names}, got {len(eta)}"
            )
        for i, v in enumerate(eta):
            if not math.isfinite(v):
                raise LikelihoodError(f"{self.family}: {names[i]} must be finite, got {v}")
        for i in POSITIVE_PARAMS[self.family]:
            if not eta[i] > 0:
                raise LikelihoodError(
                    f"{self.family}: {names[i]} must be positive, got {eta[i]}"
                )
        object.__setattr__(self, "eta", eta)

    @classmethod
    def from_params(cls, family: str, **params: float) -> "LikelihoodSpec":
        names = FAMILY_PARAMS.get(family)
        if names is None:
            raise LikelihoodError(f"unknown family {family!r}")
        missing = [n for n in names if n not in params]
        extra = [n for n in params if n not in names]
        if missing or extra:
            raise LikelihoodError(
                f"{family} expects parameters {names}; missing {missing}, unexpected {extra}"
            )
        return cls(family, tuple(params[n] for n in names))

    @property
    def code(self) -> int:
        return FAMILIES.index(self.family)

    @property
    def params(self) -> dict[str, float]:
        return dict(zip(FAMILY_PARAMS[self.family], self.eta))

    def with_eta(self, eta) -> "LikelihoodSpec":
        return LikelihoodSpec(self.family, tuple(eta))

    def eta_array(self) -> np.ndarray:
        return np.asarray(self.eta, dtype=np.float64)


def validate_data(X, family: str) -> np.ndarray:
    """Return ``X`` as a float J x T array after checking the family's support."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise LikelihoodError(f"data must be a non-empty J x T matrix, got shape {X.shape}")
    bad = ~np.isfinite(X)
    if family == "poisson":
        bad |= (X < 0) | (X != np.round(X))
    elif family == "bernoulli":
        bad |= (X != 0) & (X != 1)
    if bad.any():
        j, t = np.argwhere(bad)[0]
        raise LikelihoodError(
            f"value {X[j, t]!r} at row {j}, column {t} is outside the support of {family}"
        )
    return X


# --------------------------------------------------------------------------
# scalar kernels

@njit(cache=True)
def _n_const(fam, eta, n):
    """Part of the segment log marginal that depends on n and eta only."""
    if n == 0:
        return 0.0
    if fam == NORMAL_MEAN:
        lam, sig2 = eta[1], eta[2]
        return -0.5 * n * (_LOG_2PI + math.log(sig2)) + 0.5 * math.log(lam / (lam + n))
    if fam == NORMAL_VAR:
        a, b = eta[1], eta[2]
        return (-0.5 * n * _LOG_2PI + a * math.log(b) - math.lgamma(a)
                + math.lgamma(a + 0.5 * n))
    if fam == NORMAL_MEANVAR:
        lam, a, b = eta[1], eta[2], eta[3]
        return (0.5 * math.log(lam / (lam + n)) - 0.5 * n * _LOG_2PI
                + a * math.log(b) - math.lgamma(a) + math.lgamma(a + 0.5 * n))
    if fam == POISSON:
        a, b = eta[0], eta[1]
        return a * math.log(b) - math.lgamma(a)
    if fam == BERNOULLI:
        a, b = eta[0], eta[1]
        return (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                - math.lgamma(a + b + n))
    # laplace-scale
    a, b = eta[0], eta[1]
    return -n * _LOG_2 + a * math.log(b) - math.lgamma(a) + math.lgamma(a + n)


@njit(cache=True)
def _lm(fam, eta, nconst, n, s1, s2, shift):
    """Segment log marginal from sufficient statistics; ``nconst = _n_const(...)``."""
    if n == 0:
        return 0.0
    if fam <= NORMAL_MEANVAR:
        m = s1 / n
        m2 = s2 - s1 * m
        if m2 < 0.0:
            m2 = 0.0
        d = m - (eta[0] - shift)
        if fam == NORMAL_MEAN:
            lam = eta[1]
            q = m2 + lam * n / (lam + n) * d * d
            return nconst - q / (2.0 * eta[2])
        if fam == NORMAL_VAR:
            ss = m2 + n * d * d
            return nconst - (eta[1] + 0.5 * n) * math.log(eta[2] + 0.5 * ss)
        lam = eta[1]
        q = m2 + lam * n / (lam + n) * d * d
        return nconst - (eta[2] + 0.5 * n) * math.log(eta[3] + 0.5 * q)
    if fam == POISSON:
        a, b = eta[0], eta[1]
        return nconst - s2 + math.lgamma(a + s1) - (a + s1) * math.log(b + n)
    if fam == BERNOULLI:
        return nconst + math.lgamma(eta[0] + s1) + math.lgamma(eta[1] + n - s1)
    return nconst - (eta[0] + n) * math.log(eta[1] + s1)


@njit(cache=True)
def _lm_direct(fam, eta, n, s1, s2, shift):
    return _lm(fam, eta, _n_const(fam, eta, n), n, s1, s2, shift)


@njit(cache=True)
def _n_table(fam, eta, T):
    out = np.empty(T + 1)
    for n in range(T + 1):
        out[n] = _n_const(fam, eta, n)
    return out


@njit(cache=True, _nrt=False)
def seg_lm(ctx, j, a, b):
    """Log marginal of row ``j`` over positions ``a..b-1`` (0-based, half-open)."""
    fam, eta, ntab, P1, P2, shift = ctx
    n = b - a
    if n <= 0:
        return 0.0
    return _lm(fam, eta, ntab[n], n, P1[j, b] - P1[j, a], P2[j, b] - P2[j, a], shift[j])


@njit(cache=True)
def _many_lm(fam, eta, n, s1, s2, shift, weight):
    total = 0.0
    for i in range(n.shape[0]):
        total += weight[i] * _lm_direct(fam, eta, n[i], s1[i], s2[i], shift[i])
    return total


# --------------------------------------------------------------------------
# prefix-sum view of a data matrix

@dataclass
class SegmentData:
    """Per-row prefix sums of the sufficient statistics of ``X``.

    For the normal families the data are centered at a per-row shift (the row
    mean) before accumulation; the marginals are translation invariant once
    ``mu0`` is shifted by the same amount, which keeps the second moment free
    of catastrophic cancellation on long, low-variance rows.
    """

    X: np.ndarray
    family: str
    P1: np.ndarray = field(init=False, repr=False)
    P2: np.ndarray = field(init=False, repr=False)
    shift: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        X = validate_data(self.X, self.family)
        self.X = X
        J, T = X.shape
        code = FAMILIES.index(self.family)
        if code <= NORMAL_MEANVAR:
            self.shift = X.mean(axis=1)
            Y = X - self.shift[:, None]
            a, b = Y, Y * Y
        elif code == POISSON:
            self.shift = np.zeros(J)
            a, b = X, gammaln(X + 1.0)
        elif code == BERNOULLI:
            self.shift = np.zeros(J)
            a, b = X, np.zeros_like(X)
        else:
            self.shift = np.zeros(J)
            a, b = np.abs(X), np.zeros_like(X)
        self.P1 = np.zeros((J, T + 1))
        self.P2 = np.zeros((J, T + 1))
        np.cumsum(a, axis=1, out=self.P1[:, 1:])
        np.cumsum(b, axis=1, out=self.P2[:, 1:])

    @property
    def shape(self) -> tuple[int, int]:
        return self.X.shape

    def ctx(self, spec: LikelihoodSpec):
        """Kernel argument tuple for ``spec``; rebuild whenever eta changes."""
        if spec.family != self.family:
            raise LikelihoodError(
                f"data prepared for {self.family}, got spec for {spec.family}"
            )
        eta = spec.eta_array()
        ntab = _n_table(spec.code, eta, self.X.shape[1])
        return (spec.code, eta, ntab, self.P1, self.P2, self.shift)

    def segment_stats(self, j, a, b):
        """(n, s1, s2) for row ``j`` over ``a..b-1`` in the shifted frame."""
        return (b - a, self.P1[j, b] - self.P1[j, a], self.P2[j, b] - self.P2[j, a])

    def log_marginal(self, spec: LikelihoodSpec, j: int, a: int, b: int) -> float:
        return float(seg_lm(self.ctx(spec), j, a, b))


def segments_of_row(row) -> list[tuple[int, int]]:
    """Half-open segments ``[a, b)`` induced by a 0/1 changepoint row."""
    row = np.asarray(row)
    cps = np.flatnonzero(row[1:]) + 1
    bounds = np.concatenate(([0], cps, [row.shape[0]]))
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]


# --------------------------------------------------------------------------
# incremental accumulator

class SegmentAccumulator:
    """Running sufficient statistics of one segment.

    Normal families keep a running mean and centered second moment (Welford's
    update), so ``sum_x2`` stays accurate for long segments with small spread.
    The update is symmetric, which is why ``extend_left`` and ``extend_right``
    share it.
    """

    __slots__ = ("family", "n", "_mean", "_m2", "_s1", "_s2")

    def __init__(self, family: str):
        if family not in FAMILY_PARAMS:
            raise LikelihoodError(f"unknown family {family!r}")
        self.family = family
        self.reset()

    def reset(self) -> "SegmentAccumulator":
        self.n = 0
        self._mean = 0.0
        self._m2 = 0.0
        self._s1 = 0.0
        self._s2 = 0.0
        return self

    def _check(self, x: float) -> float:
        x = float(x)
        if not math.isfinite(x):
            raise LikelihoodError(f"non-finite observation {x!r}")
        if self.family == "poisson" and (x < 0 or x != round(x)):
            raise LikelihoodError(f"poisson observations must be non-negative integers, got {x!r}")
        if self.family == "bernoulli" and x not in (0.0, 1.0):
            raise LikelihoodError(f"bernoulli observations must be 0 or 1, got {x!r}")
        return x

    def _add(self, x: float) -> "SegmentAccumulator":
        x = self._check(x)
        self.n += 1
        if self.family.startswith("normal"):
            delta = x - self._mean
            self._mean += delta / self.n
            self._m2 += delta * (x - self._mean)
        elif self.family == "poisson":
            self._s1 += x
            self._s2 += math.lgamma(x + 1.0)
        elif self.family == "bernoulli":
            self._s1 += x
        else:
            self._s1 += abs(x)
        return self

    def extend_right(self, x: float) -> "SegmentAccumulator":
        return self._add(x)

    def extend_left(self, x: float) -> "SegmentAccumulator":
        return self._add(x)

    @classmethod
    def from_values(cls, family: str, values) -> "SegmentAccumulator":
        acc = cls(family)
        for x in np.ravel(values):
            acc._add(x)
        return acc

    @property
    def mean(self) -> float:
        if self.family.startswith("normal"):
            return self._mean
        return self._s1 / self.n if self.n else 0.0

    @property
    def sum_x(self) -> float:
        if self.family.startswith("normal"):
            return self._mean * self.n
        return self._s1

    @property
    def sum_x2(self) -> float:
        if self.family.startswith("normal"):
            return self._m2 + self.n * self._mean * self._mean
        raise AttributeError(f"{self.family} does not track a second moment")

    @property
    def centered_ss(self) -> float:
        """Sum of squared deviations from the segment mean (normal families)."""
        return self._m2

    @property
    def sum_abs(self) -> float:
        if self.family != "laplace-scale":
            raise AttributeError(f"{self.family} does not track sum(|x|)")
        return self._s1

    @property
    def sum_log_factorial(self) -> float:
        if self.family != "poisson":
            raise AttributeError(f"{self.family} does not track sum(log x!)")
        return self._s2

    def kernel_stats(self) -> tuple[int, float, float, float]:
        """(n, s1, s2, shift) in the layout the scalar kernel expects."""
        if self.family.startswith("normal"):
            # shift to the segment mean: s1 = 0, s2 = centered sum of squares
            return self.n, 0.0, self._m2, self._mean
        return self.n, self._s1, self._s2, 0.0


def segment_log_marginal(spec: LikelihoodSpec, acc: SegmentAccumulator) -> float:
    """Log marginal likelihood of the accumulated segment; 0 for an empty one."""
    if acc.family != spec.family:
        raise LikelihoodError(f"accumulator is {acc.family}, spec is {spec.family}")
    n, s1, s2, shift = acc.kernel_stats()
    return float(_lm_direct(spec.code, spec.eta_array(), n, s1, s2, shift))


def posterior_mean_theta(spec: LikelihoodSpec, acc: SegmentAccumulator) -> float:
    """Conjugate posterior mean of the segment parameter.

    For ``normal-meanvar`` only the mean component is returned.
    """
    n = acc.n
    if n < 1:
        raise LikelihoodError("posterior mean needs a non-empty segment")
    p = spec.params
    fam = spec.family
    if fam in ("normal-mean", "normal-meanvar"):
        return (p["lam"] * p["mu0"] + acc.sum_x) / (p["lam"] + n)
    if fam == "normal-var":
        a = p["alpha"] + 0.5 * n
        if a <= 1.0:
            raise LikelihoodError(
                f"normal-var: posterior mean of the variance needs alpha + n/2 > 1 (got {a})"
            )
        ss = acc.centered_ss + n * (acc.mean - p["mu0"]) ** 2
        return (p["beta"] + 0.5 * ss) / (a - 1.0)
    if fam == "poisson":
        return (p["alpha"] + acc.sum_x) / (p["beta"] + n)
    if fam == "bernoulli":
        return (p["alpha"] + acc.sum_x) / (p["alpha"] + p["beta"] + n)
    a = p["alpha"] + n
    if a <= 1.0:
        raise LikelihoodError(
            f"laplace-scale: posterior mean of the scale needs alpha + n > 1 (got {a})"
        )
    return (p["beta"] + acc.sum_abs) / (a - 1.0)


def log_marginal_sum(spec: LikelihoodSpec, n, s1, s2, shift, weight=None) -> float:
    """Weighted sum of segment log marginals over arrays of statistics."""
    n = np.asarray(n, dtype=np.int64)
    if weight is None:
        weight = np.ones(n.shape[0])
    return float(_many_lm(spec.code, spec.eta_array(), n,
                          np.asarray(s1, dtype=np.float64),
                          np.asarray(s2, dtype=np.float64),
                          np.asarray(shift, dtype=np.float64),
                          np.asarray(weight, dtype=np.float64)))
