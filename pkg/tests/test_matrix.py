import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qkp_glasso.matrix import (
    KroneckerShape,
    NotPositiveDefinite,
    as_symmetric,
    block_index,
    cholesky_logdet,
    from_blocks,
    read_matrix,
    sample_covariance,
    sample_gaussian,
    to_blocks,
    write_matrix,
)

from oracles import logdet_by_eigenvalues, random_spd


class TestBlockIndex:
    @pytest.mark.parametrize(
        "shape, jkil, expected",
        [
            ((2, 2), (1, 2, 2, 1), (2, 3)),
            ((5, 7), (1, 1, 1, 1), (1, 1)),
            ((3, 4), (2, 3, 4, 1), (8, 9)),
        ],
    )
    def test_examples(self, shape, jkil, expected):
        assert block_index(KroneckerShape(*shape), *jkil) == expected

    @pytest.mark.parametrize("jkil", [(0, 1, 1, 1), (1, 4, 1, 1), (1, 1, 5, 1), (1, 1, 1, 0)])
    def test_out_of_range(self, jkil):
        with pytest.raises(IndexError):
            block_index(KroneckerShape(3, 4), *jkil)

    @pytest.mark.parametrize("m1, m2", [(1, 1), (2, 3), (3, 2), (4, 4)])
    def test_bijection(self, m1, m2):
        shape = KroneckerShape(m1, m2)
        seen = {
            shape.block_index(j, k, i, l)
            for j, k in itertools.product(range(1, m1 + 1), repeat=2)
            for i, l in itertools.product(range(1, m2 + 1), repeat=2)
        }
        m = m1 * m2
        assert seen == set(itertools.product(range(1, m + 1), repeat=2))

    def test_to_blocks_matches_block_index(self):
        shape = KroneckerShape(3, 4)
        S = np.arange(144.0).reshape(12, 12)
        B = to_blocks(S, shape)
        for j, k, i, l in itertools.product(range(3), range(3), range(4), range(4)):
            r, c = shape.block_index(j + 1, k + 1, i + 1, l + 1)
            assert B[j, k, i, l] == S[r - 1, c - 1]
        np.testing.assert_array_equal(from_blocks(B), S)

    def test_kron_matches_block_product(self):
        rng = np.random.default_rng(0)
        A, C = rng.random((2, 2)), rng.random((3, 3))
        B = to_blocks(np.kron(A, C), KroneckerShape(2, 3))
        np.testing.assert_allclose(B, np.einsum("jk,il->jkil", A, C))

    def test_transpose_symmetry_in_block_coordinates(self):
        rng = np.random.default_rng(1)
        S = random_spd(rng, 6)
        B = to_blocks(S, KroneckerShape(2, 3))
        np.testing.assert_array_equal(B, B.transpose(1, 0, 3, 2))


class TestSampleCovariance:
    def test_single_sample(self):
        np.testing.assert_array_equal(sample_covariance([[1.0, 0.0]]), [[1, 0], [0, 0]])

    def test_identical_outer_products(self):
        np.testing.assert_array_equal(sample_covariance([[1.0, 1.0], [-1.0, -1.0]]), np.ones((2, 2)))

    def test_no_centering(self):
        C = sample_covariance([[2.0], [2.0]])
        assert C[0, 0] == 4.0

    def test_exactly_symmetric(self):
        X = np.random.default_rng(3).standard_normal((17, 5))
        C = sample_covariance(X)
        np.testing.assert_array_equal(C, C.T)

    def test_concentration_n1000(self):
        # fraction of draws with some entry off by more than 0.15 stays below 1%
        bad = 0
        for seed in range(300):
            X = sample_gaussian(np.eye(2), 1000, seed)
            bad += np.abs(sample_covariance(X) - np.eye(2)).max() > 0.15
        assert bad / 300 < 0.01

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            sample_covariance(np.zeros((0, 3)))


class TestCholeskyLogdet:
    def test_identity(self):
        assert cholesky_logdet(np.eye(3))[1] == 0.0

    def test_diagonal(self):
        assert cholesky_logdet(np.diag([2.0, 2.0]))[1] == pytest.approx(1.3862943611198906, rel=1e-15)

    def test_indefinite(self):
        assert cholesky_logdet(np.array([[1.0, 2.0], [2.0, 1.0]])) is None

    @settings(max_examples=60, deadline=None)
    @given(m=st.integers(1, 10), seed=st.integers(0, 2**31))
    def test_matches_eigenvalues(self, m, seed):
        S = random_spd(np.random.default_rng(seed), m)
        L, ld = cholesky_logdet(S)
        np.testing.assert_allclose(L @ L.T, S, atol=1e-12)
        assert ld == pytest.approx(logdet_by_eigenvalues(S), rel=1e-10, abs=1e-12)


class TestSampleGaussian:
    def test_identity_covariance(self):
        X = sample_gaussian(np.eye(3), 100_000, 11)
        assert np.abs(sample_covariance(X) - np.eye(3)).max() < 0.05

    def test_covariance_is_inverse_concentration(self):
        rng = np.random.default_rng(5)
        S = random_spd(rng, 4, ridge=0.5)
        X = sample_gaussian(S, 200_000, 12)
        np.testing.assert_allclose(sample_covariance(X), np.linalg.inv(S), atol=0.05)

    def test_deterministic(self):
        S = np.diag([1.0, 2.0])
        np.testing.assert_array_equal(sample_gaussian(S, 10, 3), sample_gaussian(S, 10, 3))
        assert not np.array_equal(sample_gaussian(S, 10, 3), sample_gaussian(S, 10, 4))

    def test_rejects_zero_samples(self):
        with pytest.raises(ValueError):
            sample_gaussian(np.eye(2), 0, 0)

    def test_rejects_indefinite(self):
        with pytest.raises(NotPositiveDefinite):
            sample_gaussian(np.array([[1.0, 2.0], [2.0, 1.0]]), 5, 0)


def test_as_symmetric():
    A = np.array([[1.0, 2.0], [2.0 + 1e-14, 1.0]])
    B = as_symmetric(A)
    np.testing.assert_array_equal(B, B.T)
    with pytest.raises(ValueError):
        as_symmetric([[1.0, 2.0], [3.0, 1.0]])
    with pytest.raises(ValueError):
        as_symmetric([[np.nan]])


def test_csv_roundtrip(tmp_path):
    A = np.random.default_rng(0).standard_normal((4, 3))
    write_matrix(tmp_path / "a.csv", A)
    text = (tmp_path / "a.csv").read_bytes()
    assert b"\r" not in text and text.count(b"\n") == 4
    np.testing.assert_array_equal(read_matrix(tmp_path / "a.csv"), A)
    write_matrix(tmp_path / "s.csv", [[2.5]])
    assert read_matrix(tmp_path / "s.csv").shape == (1, 1)
