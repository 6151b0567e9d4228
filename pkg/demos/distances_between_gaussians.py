"""
Distances between Gaussian signatures
=====================================

Two Gaussians can be compared in several ways. This script builds a few
pairs with known answers and prints every measure next to them.
"""

import numpy as np

from geomret import GaussianSignature, euclidean_mean, kl_symmetric, riemannian, wasserstein2

# same covariance, shifted means: W2^2 is just the squared mean offset
cov = np.array([[2.0, 0.3], [0.3, 1.0]])
a = GaussianSignature([0.0, 0.0], cov)
b = GaussianSignature([3.0, 4.0], cov)
print("shifted means")
print("  W2^2        ", wasserstein2(a, b).value, "(expected 25)")
print("  euclidean   ", euclidean_mean(a, b).value, "(expected 5)")
print("  riemannian  ", riemannian(a, b).value, "(means are ignored)")

# same mean, scaled covariance: the Riemannian distance is sqrt(d) |log c|
d = 4
for c in (0.1, 2.0, 10.0):
    i = GaussianSignature(np.zeros(d), np.eye(d))
    ci = GaussianSignature(np.zeros(d), c * np.eye(d))
    print(f"I vs {c:>4}I   riemannian {riemannian(i, ci).value:.6f}   sqrt(d)|log c| {np.sqrt(d) * abs(np.log(c)):.6f}")

# the Riemannian distance does not change under a common congruence M S M^T
rng = np.random.default_rng(0)
sa = np.cov(rng.standard_normal((50, 6)), rowvar=False)
sb = np.cov(rng.standard_normal((50, 6)), rowvar=False)
m = rng.standard_normal((6, 6))
z = np.zeros(6)
d0 = riemannian(GaussianSignature(z, sa), GaussianSignature(z, sb)).value
d1 = riemannian(GaussianSignature(z, m @ sa @ m.T), GaussianSignature(z, m @ sb @ m.T)).value
print(f"congruence   before {d0:.10f}  after {d1:.10f}")

# symmetric KL reports the worst condition number it saw
res = kl_symmetric(GaussianSignature(z, sa), GaussianSignature(z, sb))
print(f"symmetric KL {res.value:.4f}   condition {res.diagnostics['condition']:.1f}")
