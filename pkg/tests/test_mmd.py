import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import central_difference, naive_inner, naive_mmd_sq
from relalign.errors import ConfigError
from relalign.mmd import (
    KernelConfig,
    VectorSet,
    kernel_eval,
    mean_embedding_inner,
    mmd_sq,
    mmd_sq_subsampled,
    mmd_sq_with_grad,
)

K = KernelConfig()


class TestKernel:
    def test_self(self):
        assert kernel_eval(K, [1.0, -2.0], [1.0, -2.0]) == 1.0

    def test_distance_two(self):
        assert kernel_eval(K, [1.0, 1.0], [0.0, 0.0]) == pytest.approx(0.36787944117144233, rel=1e-12)

    def test_three_four_five(self):
        assert kernel_eval(K, [0.0, 0.0], [3.0, 4.0]) == pytest.approx(3.726653172078671e-06, rel=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            kernel_eval(K, [0.0], [0.0, 1.0])

    def test_bad_gamma(self):
        with pytest.raises(ConfigError):
            KernelConfig(gamma=0.0)


class TestInner:
    def test_single_vector(self):
        assert mean_embedding_inner([[1.0, 2.0]], [[1.0, 2.0]], K) == 1.0

    def test_singletons(self):
        x, y = [0.3, -1.0], [2.0, 0.5]
        assert mean_embedding_inner([x], [y], K) == pytest.approx(kernel_eval(K, x, y), rel=1e-14)

    def test_against_loops(self):
        rng = np.random.default_rng(0)
        X, Y = rng.standard_normal((7, 3)), rng.standard_normal((5, 3))
        assert abs(mean_embedding_inner(X, Y, K) - naive_inner(X.tolist(), Y.tolist())) < 1e-12

    def test_vectorset_accepted(self):
        X = VectorSet(np.ones((2, 3)), tag=(1, "U"))
        assert mean_embedding_inner(X, X, K) == 1.0


class TestMmd:
    def test_identical_is_zero(self):
        X = np.random.default_rng(1).standard_normal((20, 4))
        assert abs(mmd_sq(X, X, K)) < 1e-12

    def test_singletons(self):
        x, y = np.array([[0.0, 1.0]]), np.array([[1.5, -0.5]])
        assert mmd_sq(x, y, K) == pytest.approx(2 - 2 * kernel_eval(K, x[0], y[0]), rel=1e-12)

    def test_gaussian_clouds(self):
        rng = np.random.default_rng(2)
        X = rng.standard_normal((50, 2))
        Y = rng.standard_normal((50, 2)) + 5.0
        assert abs(mmd_sq(X, Y, K) - naive_mmd_sq(X, Y)) < 1e-10

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            mmd_sq(np.ones((2, 2)), np.ones((2, 3)), K)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 12), st.integers(1, 12), st.integers(1, 5), st.integers(0, 2**31 - 1), st.floats(0.05, 3.0))
    def test_nonnegative_symmetric(self, n, m, k, seed, gamma):
        rng = np.random.default_rng(seed)
        X, Y = rng.standard_normal((n, k)), rng.standard_normal((m, k)) * 1.5
        kc = KernelConfig(gamma=gamma)
        a, b = mmd_sq(X, Y, kc), mmd_sq(Y, X, kc)
        assert a >= 0
        assert a == pytest.approx(b, abs=1e-13)

    def test_rigid_motion_invariance(self):
        rng = np.random.default_rng(3)
        X, Y = rng.standard_normal((30, 6)), rng.standard_normal((25, 6)) + 0.5
        Q, _ = np.linalg.qr(rng.standard_normal((6, 6)))
        assert abs(mmd_sq(X @ Q.T, Y @ Q.T, K) - mmd_sq(X, Y, K)) < 1e-9

    def test_gradient_finite_differences(self):
        rng = np.random.default_rng(4)
        X, Y = rng.standard_normal((6, 3)), rng.standard_normal((5, 3)) * 0.8 + 0.3
        _, gX, gY = mmd_sq_with_grad(X, Y, K)
        nX = central_difference(lambda Z: mmd_sq_with_grad(Z, Y, K)[0], X)
        nY = central_difference(lambda Z: mmd_sq_with_grad(X, Z, K)[0], Y)
        for g, n in ((gX, nX), (gY, nY)):
            mask = np.abs(n) > 1e-6
            assert np.max(np.abs(g[mask] - n[mask]) / np.abs(n[mask])) < 1e-5


class TestSubsampled:
    def test_full_sample_is_exact(self):
        rng = np.random.default_rng(5)
        X, Y = rng.standard_normal((30, 3)), rng.standard_normal((40, 3))
        assert mmd_sq_subsampled(X, Y, K, sample_size=40, seed=1) == mmd_sq(X, Y, K)

    def test_seeded(self):
        rng = np.random.default_rng(6)
        X, Y = rng.standard_normal((300, 3)), rng.standard_normal((300, 3)) + 0.2
        assert mmd_sq_subsampled(X, Y, K, 32, seed=9) == mmd_sq_subsampled(X, Y, K, 32, seed=9)

    def test_sample_size_guard(self):
        with pytest.raises(ValueError):
            mmd_sq_subsampled(np.ones((3, 2)), np.ones((3, 2)), K, sample_size=1)

    @staticmethod
    def clouds():
        rng = np.random.default_rng(7)
        return rng.standard_normal((1000, 2)), rng.standard_normal((1000, 2)) * 1.3 + 0.4

    @staticmethod
    def expected_subsampled(X, Y, s):
        """Exact mean of the subsampled V-statistic over all size-s subsets (no replacement)."""

        def self_term(Z):
            n = Z.shape[0]
            G = np.exp(-0.5 * ((Z[:, None, :] - Z[None, :, :]) ** 2).sum(-1))
            off = (G.sum() - np.trace(G)) / (n * (n - 1))
            return (s * np.trace(G) / n + s * (s - 1) * off) / s**2

        cross = np.exp(-0.5 * ((X[:, None, :] - Y[None, :, :]) ** 2).sum(-1)).mean()
        return self_term(X) + self_term(Y) - 2 * cross

    def test_monte_carlo_consistency(self):
        X, Y = self.clouds()
        draws = np.array([mmd_sq_subsampled(X, Y, K, 64, seed=s) for s in range(200)])
        se = draws.std(ddof=1) / math.sqrt(draws.size)
        assert abs(draws.mean() - self.expected_subsampled(X, Y, 64)) < 3 * se

    @pytest.mark.xfail(strict=True, reason="the V-statistic on 64 rows carries a +O(1/64) self-pair bias")
    def test_monte_carlo_mean_equals_full_value(self):
        X, Y = self.clouds()
        exact = mmd_sq(X, Y, K)
        draws = np.array([mmd_sq_subsampled(X, Y, K, 64, seed=s) for s in range(200)])
        se = draws.std(ddof=1) / math.sqrt(draws.size)
        assert abs(draws.mean() - exact) < 3 * se
