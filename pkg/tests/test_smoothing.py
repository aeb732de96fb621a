import math

import numpy as np
import pytest

from tagclust import (
    SparseBinaryMatrix,
    document_similarity,
    keyword_similarity,
    sinkhorn_knopp,
    smooth_binary_matrix,
    smooth_matrix,
)
from tagclust.core import InvalidInputError

from conftest import random_binary_matrix


class TestDocumentSimilarity:
    def test_hand_example(self):
        m = SparseBinaryMatrix(2, 3, [(0, 0), (0, 1), (1, 0), (1, 2)])
        s = document_similarity(m)
        assert s[0, 1] == pytest.approx(1.0 / 3.0, abs=1e-12)
        assert s[0, 0] == 1.0 and s[1, 1] == 1.0

    def test_identical_rows(self):
        m = SparseBinaryMatrix(3, 3, [(0, 0), (0, 1), (1, 0), (1, 1), (2, 2)])
        s = document_similarity(m)
        assert s[0, 1] == pytest.approx(1.0, abs=1e-12)

    def test_disjoint_rows(self):
        m = SparseBinaryMatrix(2, 4, [(0, 0), (0, 1), (1, 2), (1, 3)])
        assert document_similarity(m)[0, 1] == 0.0

    def test_symmetric_and_bounded(self, rng):
        m = random_binary_matrix(rng, 12, 9)
        s = document_similarity(m)
        np.testing.assert_allclose(s, s.T, atol=1e-12)
        assert s.min() >= 0.0 and s.max() <= 1.0 + 1e-12

    def test_zero_column_guard(self):
        m = SparseBinaryMatrix(2, 2, [(0, 0), (1, 0)])
        with pytest.raises(InvalidInputError):
            document_similarity(m)


class TestKeywordSimilarity:
    def test_hand_example(self):
        m = SparseBinaryMatrix(2, 2, [(0, 0), (0, 1), (1, 0)])
        s = keyword_similarity(m)
        assert s[0, 1] == pytest.approx(1.0 / math.sqrt(3.0), abs=1e-12)
        assert s[0, 0] == 1.0

    def test_never_cooccurring(self):
        m = SparseBinaryMatrix(2, 2, [(0, 0), (1, 1)])
        assert keyword_similarity(m)[0, 1] == 0.0

    def test_zero_row_guard(self):
        m = SparseBinaryMatrix(2, 2, [(0, 0), (0, 1)])
        with pytest.raises(InvalidInputError):
            keyword_similarity(m)


class TestSinkhornKnopp:
    def test_flat_matrix(self):
        res = sinkhorn_knopp(np.ones((2, 2)))
        np.testing.assert_allclose(res.transition, [[0.5, 0.5], [0.5, 0.5]], atol=1e-12)

    def test_two_by_two_fixed_point(self):
        res = sinkhorn_knopp(np.array([[2.0, 1.0], [1.0, 2.0]]), tol=1e-12)
        np.testing.assert_allclose(
            res.transition, [[2 / 3, 1 / 3], [1 / 3, 2 / 3]], atol=1e-12
        )

    def test_identity(self):
        res = sinkhorn_knopp(np.eye(4))
        np.testing.assert_allclose(res.transition, np.eye(4), atol=1e-12)
        assert res.converged

    def test_random_similarity_residuals(self, rng):
        for _ in range(10):
            m = random_binary_matrix(rng, 10, 8)
            res = sinkhorn_knopp(document_similarity(m), tol=1e-8)
            assert res.converged
            assert res.max_residual <= 1e-8
            t = res.transition
            np.testing.assert_allclose(t.sum(axis=0), 1.0, atol=1e-7)
            np.testing.assert_allclose(t.sum(axis=1), 1.0, atol=1e-7)
            np.testing.assert_allclose(t, t.T, atol=1e-9)

    def test_non_square(self):
        with pytest.raises(InvalidInputError):
            sinkhorn_knopp(np.ones((2, 3)))

    def test_non_convergence_is_reported_not_raised(self, rng):
        m = random_binary_matrix(rng, 8, 8)
        res = sinkhorn_knopp(document_similarity(m), tol=1e-14, max_iters=2)
        assert not res.converged
        assert res.max_residual > 1e-14
        assert res.iterations == 2


class TestSmoothMatrix:
    def test_identity_transitions(self, rng):
        m = random_binary_matrix(rng, 6, 5)
        out = smooth_matrix(m, np.eye(6), np.eye(5))
        np.testing.assert_allclose(out, m.to_dense(), atol=1e-12)

    def test_mass_preserved(self, rng):
        for _ in range(10):
            m = random_binary_matrix(rng, 9, 7)
            smoothed, _, _ = smooth_binary_matrix(m)
            assert abs(smoothed.sum() - m.nnz) / m.nnz <= 1e-6
            assert smoothed.min() >= 0.0

    def test_quadruple_sum_expansion(self, rng):
        # product form vs the explicit all-pairs transition sum
        m = random_binary_matrix(rng, 8, 8)
        smoothed, sk_docs, sk_keys = smooth_binary_matrix(m)
        t_x, t_y = sk_docs.transition, sk_keys.transition
        dense = m.to_dense()
        n, mm = dense.shape
        expected = np.zeros((n, mm))
        for i in range(n):
            for j in range(mm):
                acc = 0.0
                for k in range(n):
                    for ell in range(mm):
                        acc += t_x[i, k] * t_y[ell, j] * dense[k, ell]
                expected[i, j] = acc
        np.testing.assert_allclose(smoothed, expected, atol=1e-12)

    def test_dimension_mismatch(self, rng):
        m = random_binary_matrix(rng, 4, 3)
        with pytest.raises(InvalidInputError):
            smooth_matrix(m, np.eye(3), np.eye(3))
        with pytest.raises(InvalidInputError):
            smooth_matrix(m, np.eye(4), np.eye(4))

    def test_empty_tiles_gain_mass(self):
        # an unfilled tile inside an otherwise filled block structure ends
        # up with strictly positive smoothed mass
        from tagclust import CheckerboardSpec, generate_checkerboard

        spec = CheckerboardSpec(
            n_rows=60, n_cols=60, k_rows=4, k_cols=4, alpha=0.5, beta=0.5, seed=3
        )
        ds = generate_checkerboard(spec)
        filtered, kept_r, kept_c = ds.matrix.drop_empty()
        smoothed, _, _ = smooth_binary_matrix(filtered)
        row_lab = ds.row_labels[kept_r]
        col_lab = ds.col_labels[kept_c]
        empty_tiles = np.argwhere(ds.tile_rates == 0.0)
        checked = 0
        for a, b in empty_tiles:
            rows = np.flatnonzero(row_lab == a)
            cols = np.flatnonzero(col_lab == b)
            if rows.size == 0 or cols.size == 0:
                continue
            assert smoothed[np.ix_(rows, cols)].sum() > 0.0
            checked += 1
        assert checked > 0
