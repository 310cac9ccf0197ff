import numpy as np
import pytest

from courtgrid.tensor_ops import (
    align_factors,
    cp_als,
    cp_reconstruct,
    rebalance_factors,
)


def random_cp_tensor(shape, rank, seed):
    rng = np.random.default_rng(seed)
    factors = [rng.standard_normal((s, rank)) for s in shape]
    return cp_reconstruct(factors), factors


class TestReconstruct:
    def test_zero_factors(self):
        factors = [np.zeros((3, 2)), np.zeros((4, 2)), np.zeros((5, 2))]
        assert not cp_reconstruct(factors).any()

    def test_unit_basis_single_entry(self):
        a = np.zeros((3, 1)); a[1, 0] = 1.0
        b = np.zeros((4, 1)); b[2, 0] = 1.0
        c = np.zeros((5, 1)); c[0, 0] = 1.0
        W = cp_reconstruct([a, b, c])
        expected = np.zeros((3, 4, 5))
        expected[1, 2, 0] = 1.0
        assert np.array_equal(W, expected)

    def test_matches_explicit_sum(self):
        W, factors = random_cp_tensor((3, 4, 5), 2, seed=0)
        brute = np.zeros((3, 4, 5))
        for i in range(3):
            for j in range(4):
                for k in range(5):
                    brute[i, j, k] = sum(
                        factors[0][i, r] * factors[1][j, r] * factors[2][k, r]
                        for r in range(2)
                    )
        assert np.allclose(W, brute, atol=1e-12)

    def test_multilinear_scaling(self):
        W, factors = random_cp_tensor((3, 4, 5), 1, seed=1)
        scaled = [factors[0] * 2.5, factors[1], factors[2]]
        assert np.allclose(cp_reconstruct(scaled), 2.5 * W, atol=1e-12)

    def test_four_modes(self):
        W, factors = random_cp_tensor((2, 3, 4, 5), 2, seed=2)
        assert W.shape == (2, 3, 4, 5)
        assert np.allclose(cp_reconstruct(factors), W)


class TestCpAls:
    def test_exact_rank_one(self):
        rng = np.random.default_rng(3)
        a, b, c = rng.standard_normal(4), rng.standard_normal(5), rng.standard_normal(6)
        W = np.einsum("i,j,k->ijk", a, b, c)
        factors = cp_als(W, rank=1, seed=0)
        err = np.linalg.norm(W - cp_reconstruct(factors)) / np.linalg.norm(W)
        assert err < 1e-6

    def test_overcomplete_small_tensor(self):
        rng = np.random.default_rng(4)
        W = rng.standard_normal((2, 2, 2))
        factors = cp_als(W, rank=8, max_iters=500, seed=0)
        err = np.linalg.norm(W - cp_reconstruct(factors)) / np.linalg.norm(W)
        assert err < 1e-6

    def test_planted_rank3_recovery(self):
        W, _ = random_cp_tensor((4, 5, 6), 3, seed=5)
        factors, errors = cp_als(W, rank=3, max_iters=500, tol=0.0, seed=0, return_errors=True)
        assert errors[-1] < 1e-4
        assert len(errors) <= 500

    def test_error_monotone_nonincreasing(self):
        W, _ = random_cp_tensor((6, 7, 8), 4, seed=6)
        _, errors = cp_als(W, rank=3, max_iters=60, tol=0.0, seed=1, return_errors=True)
        for prev, cur in zip(errors, errors[1:]):
            assert cur <= prev + 1e-10

    def test_deterministic_for_seed(self):
        W, _ = random_cp_tensor((4, 4, 4), 2, seed=7)
        f1 = cp_als(W, rank=2, max_iters=30, seed=42)
        f2 = cp_als(W, rank=2, max_iters=30, seed=42)
        for a, b in zip(f1, f2):
            assert np.array_equal(a, b)

    def test_four_mode_decomposition(self):
        W, _ = random_cp_tensor((3, 4, 5, 6), 2, seed=8)
        factors, errors = cp_als(W, rank=2, max_iters=400, tol=0.0, seed=0, return_errors=True)
        assert len(factors) == 4
        assert errors[-1] < 1e-4

    def test_bad_rank_rejected(self):
        with pytest.raises(ValueError):
            cp_als(np.zeros((2, 2, 2)), rank=0)

    def test_zero_tensor_ok(self):
        factors = cp_als(np.zeros((3, 3, 3)), rank=2, max_iters=5, seed=0)
        err = np.linalg.norm(cp_reconstruct(factors))
        assert err < 1e-6


class TestRebalance:
    def test_reconstruction_unchanged(self):
        W, factors = random_cp_tensor((3, 4, 5), 3, seed=9)
        skewed = [factors[0] * 1000.0, factors[1] / 30.0, factors[2]]
        balanced = rebalance_factors(skewed)
        assert np.allclose(cp_reconstruct(balanced), cp_reconstruct(skewed), rtol=1e-12)

    def test_column_norms_equalized(self):
        rng = np.random.default_rng(10)
        factors = [rng.standard_normal((4, 2)) * 100, rng.standard_normal((5, 2)) * 0.01]
        balanced = rebalance_factors(factors)
        n0 = np.linalg.norm(balanced[0], axis=0)
        n1 = np.linalg.norm(balanced[1], axis=0)
        assert np.allclose(n0, n1, rtol=1e-9)

    def test_zero_column_passthrough(self):
        factors = [np.zeros((3, 1)), np.ones((4, 1))]
        balanced = rebalance_factors(factors)
        assert not balanced[0].any()


class TestAlignFactors:
    def test_identity_alignment(self):
        _, truth = random_cp_tensor((5, 6, 7), 3, seed=11)
        perm, signs, cosine = align_factors(truth, truth)
        assert perm.tolist() == [0, 1, 2]
        assert (signs == 1.0).all()
        assert cosine == pytest.approx(1.0)

    def test_permuted_and_negated_recovered(self):
        _, truth = random_cp_tensor((5, 6, 7), 3, seed=12)
        order = [2, 0, 1]
        est = [f[:, order].copy() for f in truth]
        est[1][:, 0] *= -1  # negate one column of one mode
        perm, signs, cosine = align_factors(est, truth)
        # est column perm[k] should match truth column k
        assert perm.tolist() == [1, 2, 0]
        assert cosine == pytest.approx(1.0)
        assert signs[1, 2] == -1.0  # truth col 2 matches the negated est column

    def test_noisy_copy_high_cosine(self):
        rng = np.random.default_rng(13)
        _, truth = random_cp_tensor((8, 9, 10), 3, seed=13)
        truth = [f / np.linalg.norm(f, axis=0) for f in truth]
        est = [f + 0.01 * rng.standard_normal(f.shape) for f in truth]
        _, _, cosine = align_factors(est, truth)
        assert cosine > 0.99

    def test_zero_norm_column_scores_zero(self):
        truth = [np.eye(3), np.eye(3)]
        est = [np.eye(3), np.eye(3)]
        est[0][:, 1] = 0.0
        _, _, cosine = align_factors(est, truth)
        # zero column contributes cosine 0 in its mode: mean of {1,0,1,1,1,1}
        assert cosine == pytest.approx(5.0 / 6.0, abs=1e-9)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            align_factors([np.zeros((3, 2))], [np.zeros((4, 2))])
