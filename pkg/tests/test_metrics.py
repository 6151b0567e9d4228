import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geomret.errors import DimMismatch, IncompatibleMetric
from geomret.metrics import (
    MetricKind,
    distance,
    euclidean_mean,
    kl_gaussian,
    kl_symmetric,
    kl_variational,
    kl_variational_symmetric,
    riemannian,
    wasserstein2,
)
from geomret.signature import GaussianSignature, GmmModel

from conftest import random_gmm, random_signature, random_spd


def g1(mu, var):
    return GaussianSignature([mu], [[var]])


def kl_quadrature(mu_p, var_p, mu_q, var_q, lo=-40.0, hi=40.0, step=1e-3):
    """Trapezoidal integral of p log(p/q) for 1-D Gaussians."""
    x = np.arange(lo, hi + step / 2, step)
    logp = -0.5 * np.log(2 * np.pi * var_p) - (x - mu_p) ** 2 / (2 * var_p)
    logq = -0.5 * np.log(2 * np.pi * var_q) - (x - mu_q) ** 2 / (2 * var_q)
    return np.trapezoid(np.exp(logp) * (logp - logq), x)


def w2_sorted_samples(mu_a, sd_a, mu_b, sd_b, n, seed):
    """1-D optimal transport between empirical samples: match sorted draws."""
    r = np.random.default_rng(seed)
    xa = np.sort(mu_a + sd_a * r.standard_normal(n))
    xb = np.sort(mu_b + sd_b * r.standard_normal(n))
    return np.mean((xa - xb) ** 2)


def kl_dense(mu_a, cov_a, mu_b, cov_b):
    """Textbook dense formula with explicit inverse and determinants."""
    inv_b = np.linalg.inv(cov_b)
    d = mu_b - mu_a
    return 0.5 * (
        np.log(np.linalg.det(cov_b) / np.linalg.det(cov_a)) - len(mu_a) + np.trace(inv_b @ cov_a) + d @ inv_b @ d
    )


def kl_variational_bruteforce(a: GmmModel, b: GmmModel):
    """Unstabilized double loop over component pairs."""
    total = 0.0
    for i in range(a.k):
        ci = (a.means[i], np.diag(a.variances[i]))
        num = sum(a.weights[j] * np.exp(-kl_dense(*ci, a.means[j], np.diag(a.variances[j]))) for j in range(a.k))
        den = sum(b.weights[j] * np.exp(-kl_dense(*ci, b.means[j], np.diag(b.variances[j]))) for j in range(b.k))
        total += a.weights[i] * np.log(num / den)
    return total


class TestKlGaussian:
    def test_identity(self, rng):
        a = random_signature(rng, 5)
        assert kl_gaussian(a, a) <= 1e-10

    def test_unit_shift(self):
        assert kl_gaussian(g1(0, 1), g1(1, 1)) == pytest.approx(0.5, abs=1e-14)

    def test_quadrature(self):
        ref = kl_quadrature(0.0, 4.0, 1.0, 9.0)
        assert kl_gaussian(g1(0, 4), g1(1, 9)) == pytest.approx(ref, abs=1e-6)

    def test_quadrature_random(self):
        r = np.random.default_rng(2)
        for _ in range(20):
            va = r.uniform(0.5, 3.0)
            vb = va * np.exp(r.uniform(np.log(0.1), np.log(10)))
            ma, mb = r.uniform(-5, 5, 2)
            ref = kl_quadrature(ma, va, mb, vb)
            assert kl_gaussian(g1(ma, va), g1(mb, vb)) == pytest.approx(ref, rel=1e-6)

    def test_dense_formula(self, rng):
        a, b = random_signature(rng, 6), random_signature(rng, 6)
        assert kl_gaussian(a, b) == pytest.approx(kl_dense(a.mean, a.cov, b.mean, b.cov), rel=1e-10)

    def test_dim_mismatch(self, rng):
        with pytest.raises(DimMismatch):
            kl_gaussian(random_signature(rng, 2), random_signature(rng, 3))

    def test_singular_covariance_is_repaired(self):
        a = GaussianSignature([0.0, 0.0], np.diag([1.0, 0.0]))
        b = GaussianSignature([0.0, 0.0], np.eye(2))
        assert np.isfinite(kl_gaussian(b, a))


class TestKlSymmetric:
    def test_symmetry_bitwise(self, rng):
        a, b = random_signature(rng, 7), random_signature(rng, 7)
        assert kl_symmetric(a, b).value == kl_symmetric(b, a).value

    def test_identity(self, rng):
        a = random_signature(rng, 4)
        assert kl_symmetric(a, a).value == 0.0

    def test_quadrature(self):
        a, b = g1(0, 1), g1(0, 4)
        ref = 0.5 * kl_quadrature(0, 1, 0, 4) + 0.5 * kl_quadrature(0, 4, 0, 1)
        assert kl_symmetric(a, b).value == pytest.approx(ref, abs=1e-6)


class TestKlVariational:
    def test_identical(self, rng):
        g = random_gmm(rng, 4, 3)
        assert abs(kl_variational(g, g)) <= 1e-10

    def test_single_component_reduction(self, rng):
        a, b = random_gmm(rng, 1, 4), random_gmm(rng, 1, 4)
        ref = kl_gaussian(
            GaussianSignature(a.means[0], np.diag(a.variances[0])),
            GaussianSignature(b.means[0], np.diag(b.variances[0])),
        )
        assert kl_variational(a, b) == pytest.approx(ref, abs=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_bruteforce(self, seed):
        r = np.random.default_rng(seed)
        a, b = random_gmm(r, 3, 2), random_gmm(r, 3, 2)
        assert kl_variational(a, b) == pytest.approx(kl_variational_bruteforce(a, b), abs=1e-9)

    def test_symmetric_average(self, rng):
        a, b = random_gmm(rng, 3, 2), random_gmm(rng, 3, 2)
        d = kl_variational_symmetric(a, b)
        ref = 0.5 * kl_variational_bruteforce(a, b) + 0.5 * kl_variational_bruteforce(b, a)
        assert d.diagnostics["raw"] == pytest.approx(ref, abs=1e-9)
        assert d.value == max(d.diagnostics["raw"], 0.0)
        assert d.value == kl_variational_symmetric(b, a).value

    def test_negative_raw_floored(self):
        # found by random search over 1-D three-component pairs
        a = GmmModel([0.259815, 0.289601, 0.450584], [[-1.007768], [-0.085115], [-1.046080]],
                     [[0.590467], [0.920918], [1.805459]])
        b = GmmModel([0.698895, 0.110249, 0.190856], [[-0.983143], [0.776828], [-0.333498]],
                     [[1.159910], [1.512973], [0.516294]])
        d = kl_variational_symmetric(a, b)
        ref = 0.5 * kl_variational_bruteforce(a, b) + 0.5 * kl_variational_bruteforce(b, a)
        assert ref < 0
        assert d.diagnostics["raw"] == pytest.approx(ref, abs=1e-12)
        assert d.value == 0.0

    def test_zero_weight_component(self, rng):
        a = GmmModel([0.0, 1.0], [[0.0], [1.0]], [[1.0], [1.0]])
        b = GmmModel([1.0], [[1.0]], [[1.0]])
        assert abs(kl_variational(a, b)) <= 1e-12

    def test_dim_mismatch(self, rng):
        with pytest.raises(DimMismatch):
            kl_variational(random_gmm(rng, 2, 2), random_gmm(rng, 2, 3))


class TestWasserstein:
    def test_identity(self, rng):
        a = random_signature(rng, 8)
        assert wasserstein2(a, a).value <= 1e-9

    def test_equal_covariance(self, rng):
        c = random_spd(rng, 5)
        mu = rng.standard_normal(5)
        d = wasserstein2(GaussianSignature(np.zeros(5), c), GaussianSignature(mu, c)).value
        assert d == pytest.approx(mu @ mu, abs=1e-10)

    def test_commuting_diagonal(self, rng):
        la, lb = rng.uniform(0.1, 5, 6), rng.uniform(0.1, 5, 6)
        d = wasserstein2(GaussianSignature(np.zeros(6), np.diag(la)), GaussianSignature(np.zeros(6), np.diag(lb)))
        assert d.value == pytest.approx(np.sum((np.sqrt(la) - np.sqrt(lb)) ** 2), abs=1e-8)

    def test_one_dim_monte_carlo(self):
        ref = w2_sorted_samples(0.0, 2.0, 3.0, 1.0, 10**5, seed=1)
        assert wasserstein2(g1(0, 4), g1(3, 1)).value == pytest.approx(ref, rel=0.01)

    def test_singular_covariance(self):
        a = GaussianSignature([0.0, 0.0], np.diag([1.0, 0.0]))
        b = GaussianSignature([0.0, 0.0], np.diag([4.0, 0.0]))
        assert wasserstein2(a, b).value == pytest.approx(1.0, abs=1e-12)

    def test_matches_bures_formula(self, rng):
        from scipy.linalg import sqrtm

        a, b = random_signature(rng, 5), random_signature(rng, 5)
        ra = sqrtm(a.cov).real
        cross = sqrtm(ra @ b.cov @ ra).real
        ref = np.sum((a.mean - b.mean) ** 2) + np.trace(a.cov + b.cov - 2 * cross)
        assert wasserstein2(a, b).value == pytest.approx(ref, rel=1e-9)


class TestRiemannian:
    def test_identity(self, rng):
        a = random_signature(rng, 6)
        assert riemannian(a, a).value <= 1e-9

    @pytest.mark.parametrize("c", [0.1, 2.0, 10.0])
    def test_scaled_identity(self, c):
        d = 5
        v = riemannian(GaussianSignature(np.zeros(d), np.eye(d)), GaussianSignature(np.zeros(d), c * np.eye(d))).value
        assert v == pytest.approx(np.sqrt(d) * abs(np.log(c)), abs=1e-10)

    def test_affine_invariance(self, rng):
        sa, sb = random_spd(rng, 6), random_spd(rng, 6)
        m = rng.standard_normal((6, 6))
        z = np.zeros(6)
        d0 = riemannian(GaussianSignature(z, sa), GaussianSignature(z, sb)).value
        d1 = riemannian(GaussianSignature(z, m @ sa @ m.T), GaussianSignature(z, m @ sb @ m.T)).value
        assert d1 == pytest.approx(d0, rel=1e-6)

    def test_matches_matrix_log(self, rng):
        from geomret.symlinalg import spd_inv_sqrt, spd_log

        sa, sb = random_spd(rng, 5), random_spd(rng, 5)
        w = spd_inv_sqrt(sa)
        ref = np.linalg.norm(spd_log(w @ sb @ w))
        z = np.zeros(5)
        assert riemannian(GaussianSignature(z, sa), GaussianSignature(z, sb)).value == pytest.approx(ref, rel=1e-9)

    def test_inverse_symmetry(self, rng):
        sa, sb = random_spd(rng, 5), random_spd(rng, 5)
        z = np.zeros(5)
        d = riemannian(GaussianSignature(z, sa), GaussianSignature(z, sb)).value
        di = riemannian(GaussianSignature(z, np.linalg.inv(sa)), GaussianSignature(z, np.linalg.inv(sb))).value
        assert di == pytest.approx(d, abs=1e-8)

    def test_means_ignored_unless_requested(self, rng):
        c = random_spd(rng, 3)
        a, b = GaussianSignature(np.zeros(3), c), GaussianSignature([3.0, 4.0, 0.0], c)
        assert riemannian(a, b).value <= 1e-9
        assert riemannian(a, b, include_mean=True).value == pytest.approx(5.0, abs=1e-9)


class TestEuclidean:
    def test_values(self, rng):
        a = GaussianSignature([0.0, 0.0], np.eye(2))
        b = GaussianSignature([3.0, 4.0], np.eye(2))
        assert euclidean_mean(a, a).value == 0.0
        assert euclidean_mean(a, b).value == 5.0

    def test_loop_oracle(self, rng):
        a, b = random_signature(rng, 9), random_signature(rng, 9)
        ref = sum((a.mean[i] - b.mean[i]) ** 2 for i in range(9)) ** 0.5
        assert euclidean_mean(a, b).value == pytest.approx(ref, abs=1e-12)


SYMMETRIC = [kl_symmetric, wasserstein2, riemannian, euclidean_mean]


class TestProperties:
    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 12), st.integers(0, 2**31))
    def test_symmetry_and_identity(self, d, seed):
        r = np.random.default_rng(seed)
        a, b = random_signature(r, d), random_signature(r, d)
        for f in SYMMETRIC:
            assert abs(f(a, b).value - f(b, a).value) <= 1e-12
            assert f(a, a).value <= 1e-9
            assert f(a, b).value >= 0

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 8), st.integers(0, 2**31))
    def test_triangle_inequality(self, d, seed):
        r = np.random.default_rng(seed)
        a, b, c = (random_signature(r, d) for _ in range(3))
        w = lambda x, y: np.sqrt(wasserstein2(x, y).value)
        assert w(a, c) <= w(a, b) + w(b, c) + 1e-8
        rd = lambda x, y: riemannian(x, y).value
        assert rd(a, c) <= rd(a, b) + rd(b, c) + 1e-8

    def test_global_rescaling(self, rng):
        sigs = [random_signature(rng, 4) for _ in range(20)]
        k = 3.7
        scaled = [GaussianSignature(k * s.mean, k * k * s.cov) for s in sigs]
        q, qs = sigs[0], scaled[0]
        for i in range(1, 20):
            assert riemannian(qs, scaled[i]).value == pytest.approx(riemannian(q, sigs[i]).value, abs=1e-8)
            assert wasserstein2(qs, scaled[i]).value == pytest.approx(k * k * wasserstein2(q, sigs[i]).value, rel=1e-9)
        for f in (riemannian, wasserstein2):
            base = sorted(range(1, 20), key=lambda i: f(q, sigs[i]).value)
            after = sorted(range(1, 20), key=lambda i: f(qs, scaled[i]).value)
            assert base == after


class TestDispatch:
    def test_names(self):
        assert MetricKind.parse("wasserstein") is MetricKind.WASSERSTEIN
        with pytest.raises(ValueError):
            MetricKind.parse("cosine")

    def test_variational_needs_gmm(self, rng):
        a = random_signature(rng, 2)
        with pytest.raises(IncompatibleMetric):
            distance("variational-kl", a, a)

    def test_dispatch_matches_direct(self, rng):
        a, b = random_signature(rng, 3), random_signature(rng, 3)
        assert distance("riemannian", a, b).value == riemannian(a, b).value
        assert distance(MetricKind.GAUSSIAN_KL, a, b).value == kl_symmetric(a, b).value
