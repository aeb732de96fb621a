import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_positive_matrix(rng, n, m, zero_fraction=0.0):
    """Random nonnegative matrix with strictly positive marginals."""
    mat = rng.uniform(0.05, 1.05, size=(n, m))
    if zero_fraction:
        mat[rng.random(mat.shape) < zero_fraction] = 0.0
        mat[mat.sum(axis=1) == 0, 0] = 0.5
        mat[0, mat.sum(axis=0) == 0] = 0.5
    return mat


def random_binary_matrix(rng, n, m, density=0.3):
    """Random binary matrix without empty rows or columns."""
    from tagclust import SparseBinaryMatrix

    while True:
        dense = (rng.random((n, m)) < density).astype(int)
        if dense.sum(axis=1).min() > 0 and dense.sum(axis=0).min() > 0:
            rows, cols = np.nonzero(dense)
            return SparseBinaryMatrix(n, m, np.column_stack([rows, cols]))
