"""Check the sampler against brute-force enumeration.

With two sequences of five points there are only 2^8 changepoint matrices,
so the posterior can be summed exactly.  The blocked Gibbs sampler's
marginals should agree to Monte Carlo accuracy, and the MAP search should
find the enumerated optimum.
"""

import numpy as np

from simulcp.likelihood import LikelihoodSpec
from simulcp.maximize import map_estimate, round_marginals
from simulcp.oracle import enumerate_posterior
from simulcp.pipeline import RunConfig, run
from simulcp.prior import ChangepointPrior

X = np.array([[0.1, -0.4, 0.2, 2.3, 1.8],
              [-0.2, 0.3, 0.1, 2.0, 2.4]])
spec = LikelihoodSpec("normal-mean", (0.0, 0.2, 1.0))
prior = ChangepointPrior.point_masses([0.0, 0.5], [0.7, 0.3])
moments = prior.moments(2)

exact = enumerate_posterior(X, moments, spec)
print("exact marginal change probabilities:")
print(np.round(exact.marginal, 4))
print(f"log evidence {exact.log_evidence:.6f}")

for n in (500, 5000, 50000):
    s = run(X, RunConfig(eta=spec.eta, prior=prior, burnin=100, samples=n, schedule=(),
                         seed=0, run_map=False))
    print(f"{n:>6} samples: max error {np.max(np.abs(s.marginal - exact.marginal)):.4f}")

Z = map_estimate(round_marginals(exact.marginal), X, moments, spec)
print("MAP search agrees with enumeration:", np.array_equal(Z, exact.map_Z))
