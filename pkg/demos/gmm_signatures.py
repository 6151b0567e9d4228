"""
Mixture signatures and the variational KL
=========================================

An item's features are fitted with a diagonal GMM. The mixture can be
collapsed to one Gaussian by moment matching, or compared directly with
the variational KL approximation.
"""

import numpy as np

from geomret import fit_gmm, kl_variational, kl_variational_symmetric, moment_match

rng = np.random.default_rng(2)

# two blobs in 2-D
x = np.vstack([rng.normal([-3, 0], 0.5, (400, 2)), rng.normal([3, 1], 1.0, (600, 2))])
gmm = fit_gmm(x, 2, seed=0)
print("weights  ", np.round(gmm.weights, 3))
print("means\n", np.round(gmm.means, 3))

# moment matching recovers the overall mean and covariance of the mixture
sig = moment_match(gmm)
print("matched mean", np.round(sig.mean, 3), " data mean", np.round(x.mean(0), 3))
print("matched cov\n", np.round(sig.cov, 3))
print("data cov\n", np.round(np.cov(x, rowvar=False, bias=True), 3))

# variational KL: zero against itself, positive against a shifted copy
y = x + np.array([0.5, -0.5])
other = fit_gmm(y, 2, seed=0)
print("KL(g||g)         ", kl_variational(gmm, gmm))
print("KL(g||shifted)   ", round(kl_variational(gmm, other), 4))
sym = kl_variational_symmetric(gmm, other)
print("symmetric        ", round(sym.value, 4), " raw", round(sym.diagnostics["raw"], 4))
