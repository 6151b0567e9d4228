import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from geomret.errors import NotPositiveDefinite
from geomret.symlinalg import (
    as_sym,
    cholesky,
    default_eps,
    eigh,
    log_det,
    spd_inv_sqrt,
    spd_log,
    spd_repair,
    spd_sqrt,
)

from conftest import random_spd


def rel_fro(a, b):
    return np.linalg.norm(a - b) / max(1.0, np.linalg.norm(b))


class TestEigh:
    def test_identity(self):
        w, q = eigh(np.eye(3))
        np.testing.assert_array_equal(w, [1, 1, 1])
        np.testing.assert_allclose(q.T @ q, np.eye(3), atol=1e-12)

    def test_diagonal_order_and_sign(self):
        w, q = eigh(np.diag([1.0, 4.0]))
        np.testing.assert_array_equal(w, [4.0, 1.0])
        np.testing.assert_allclose(np.abs(q), [[0, 1], [1, 0]], atol=1e-15)
        # largest-magnitude entry of each column is positive
        assert np.all(q[np.argmax(np.abs(q), axis=0), [0, 1]] > 0)

    def test_random_reconstruction(self, rng):
        a = as_sym(rng.standard_normal((5, 5)))
        w, q = eigh(a, check=True)
        assert rel_fro((q * w) @ q.T, a) <= 1e-8
        assert np.max(np.abs(q.T @ q - np.eye(5))) <= 1e-10
        assert np.all(np.diff(w) <= 0)

    def test_deterministic(self, rng):
        a = rng.standard_normal((7, 7))
        w1, q1 = eigh(a)
        w2, q2 = eigh(a.copy())
        assert w1.tobytes() == w2.tobytes() and q1.tobytes() == q2.tobytes()

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(1, 12), st.integers(1, 12)).filter(lambda s: s[0] == s[1]),
                  elements=st.floats(-1e3, 1e3)))
    def test_reconstruction_property(self, m):
        a = as_sym(m)
        w, q = eigh(a)
        assert rel_fro((q * w) @ q.T, a) <= 1e-8


class TestRoots:
    def test_sqrt_diag(self):
        np.testing.assert_allclose(spd_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]), atol=1e-14)
        np.testing.assert_allclose(spd_sqrt(np.eye(4)), np.eye(4), atol=1e-15)

    def test_inv_sqrt_diag(self):
        np.testing.assert_allclose(spd_inv_sqrt(np.array([[4.0]])), [[0.5]])
        np.testing.assert_allclose(spd_inv_sqrt(np.eye(3)), np.eye(3), atol=1e-15)

    def test_squaring_oracle(self, rng):
        a = random_spd(rng, 6)
        r = spd_sqrt(a)
        assert rel_fro(r @ r, a) <= 1e-8

    def test_whitening_oracle(self, rng):
        a = random_spd(rng, 6)
        w = spd_inv_sqrt(a)
        np.testing.assert_allclose(w @ a @ w, np.eye(6), atol=1e-8)

    @pytest.mark.parametrize("cond", [10.0, 1e4, 1e8])
    def test_sqrt_inverse_pair(self, rng, cond):
        a = random_spd(rng, 8, cond)
        r, ri = spd_sqrt(a, eps=0.0), spd_inv_sqrt(a, eps=1e-300)
        assert rel_fro(r @ r, a) <= 1e-8
        assert rel_fro(ri, np.linalg.inv(r)) <= 1e-8

    def test_clamp_count_reported(self):
        info = {}
        spd_sqrt(np.diag([1.0, -2.0, 0.0]), eps=1e-6, info=info)
        assert info["clamped"] == 2

    def test_log_matches_scipy(self, rng):
        from scipy.linalg import logm

        a = random_spd(rng, 5)
        np.testing.assert_allclose(spd_log(a), logm(a).real, atol=1e-10)


class TestCholesky:
    def test_identity(self):
        np.testing.assert_array_equal(cholesky(np.eye(2)), np.eye(2))

    def test_known_factor(self):
        m = np.array([[4.0, 2.0], [2.0, 3.0]])
        lo = cholesky(m)
        np.testing.assert_allclose(lo, [[2.0, 0.0], [1.0, np.sqrt(2.0)]], atol=1e-15)
        np.testing.assert_allclose(lo @ lo.T, m, rtol=1e-10)

    def test_indefinite_pivot(self):
        with pytest.raises(NotPositiveDefinite) as err:
            cholesky([[1.0, 2.0], [2.0, 1.0]])
        assert err.value.pivot == 1

    def test_log_det(self, rng):
        assert log_det(np.eye(4)) == 0.0
        assert log_det(np.diag([np.e, np.e])) == pytest.approx(2.0, abs=1e-15)
        a = random_spd(rng, 4)
        assert log_det(a) == pytest.approx(np.sum(np.log(eigh(a).eigenvalues)), abs=1e-9)

    def test_log_det_of_square(self, rng):
        a = random_spd(rng, 6)
        assert log_det(a @ a) == pytest.approx(2 * log_det(a), abs=1e-8)


class TestRepair:
    def test_idempotent_on_spd(self, rng):
        a = random_spd(rng, 5)
        np.testing.assert_allclose(spd_repair(a, 1e-8), a, atol=1e-12)

    def test_rank_deficient(self):
        np.testing.assert_allclose(spd_repair(np.diag([1.0, 0.0]), 1e-8), np.diag([1.0, 1e-8]), atol=1e-15)

    def test_indefinite(self, rng):
        m = as_sym(rng.standard_normal((6, 6)))
        eps = 1e-3
        out = spd_repair(m, eps)
        assert eigh(out).eigenvalues.min() >= eps * (1 - 1e-10)

    def test_default_eps_relative(self):
        assert default_eps(np.diag([2.0, 4.0])) == pytest.approx(3e-8)
        assert default_eps(np.diag([200.0, 400.0])) == pytest.approx(3e-6)
