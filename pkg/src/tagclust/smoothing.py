"""Context-enhancing transform of the binary documents-keywords matrix.

Three stages: frequency-weighted cosine similarities between documents and
between keywords, bistochastic rescaling of each similarity matrix into a
symmetric Markov transition matrix, and a two-sided product that
redistributes mass while preserving the global total.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .core import InvalidInputError, SparseBinaryMatrix

logger = logging.getLogger(__name__)

SINKHORN_TOL = 1e-8
SINKHORN_MAX_ITERS = 10000

# smoothed values below this are treated as exact zeros downstream
MASS_CLAMP = 1e-15


@dataclass
class SinkhornResult:
    """Bistochastic transition matrix with its scaling vectors."""

    transition: np.ndarray
    row_scaling: np.ndarray
    col_scaling: np.ndarray
    iterations: int
    max_residual: float
    converged: bool


def _weighted_cosine(m: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Cosine similarity between the rows of a binary matrix, with one
    positive weight per column. Output is exactly symmetric with unit
    diagonal."""
    weighted = m * weights[None, :]
    numer = m @ weighted.T
    margins = weighted.sum(axis=1)
    sim = numer / np.sqrt(np.outer(margins, margins))
    sim = (sim + sim.T) / 2.0
    np.fill_diagonal(sim, 1.0)
    return sim


def document_similarity(m: SparseBinaryMatrix) -> np.ndarray:
    """Pairwise document similarity, keywords down-weighted by frequency.

    Each keyword k counts with weight ``1 / col_sum(k)`` so that frequent
    keywords contribute less than rare ones, as in inverse document
    frequency scoring. Values lie in [0, 1] with unit diagonal.
    """
    if np.any(m.col_sums == 0):
        raise InvalidInputError("zero-sum column; drop empty columns before smoothing")
    return _weighted_cosine(m.to_dense(), 1.0 / m.col_sums)


def keyword_similarity(m: SparseBinaryMatrix) -> np.ndarray:
    """Pairwise keyword similarity over documents, normalised by document length.

    The sums run over documents, each weighted by ``1 / row_sum``, the
    inverse of the number of keywords describing the document.
    """
    if np.any(m.row_sums == 0):
        raise InvalidInputError("zero-sum row; drop empty rows before smoothing")
    return _weighted_cosine(m.to_dense().T, 1.0 / m.row_sums)


def sinkhorn_knopp(
    s: np.ndarray,
    tol: float = SINKHORN_TOL,
    max_iters: int = SINKHORN_MAX_ITERS,
) -> SinkhornResult:
    """Scale a nonnegative matrix to doubly stochastic form.

    Alternates ``c = 1 / (S r)`` and ``r = 1 / (S^T c)`` until every row
    and column sum of ``D(r) S D(c)`` is within ``tol`` of 1. A strictly
    positive diagonal (similarity matrices have one) guarantees total
    support, hence convergence. Failing to reach ``tol`` in ``max_iters``
    is reported through the result, not raised.

    For symmetric input the returned transition matrix is explicitly
    symmetrised to cancel round-off.
    """
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise InvalidInputError(f"expected a square matrix, got {s.shape}")
    if np.any(s < 0.0):
        raise InvalidInputError("similarity matrix must be nonnegative")
    n = s.shape[0]
    r = np.ones(n)
    c = np.ones(n)
    max_residual = np.inf
    iterations = 0
    for iterations in range(1, max_iters + 1):
        c = 1.0 / (s @ r)
        r = 1.0 / (s.T @ c)
        row_sums = r * (s @ c)
        col_sums = c * (s.T @ r)
        max_residual = float(
            max(np.abs(row_sums - 1.0).max(), np.abs(col_sums - 1.0).max())
        )
        if max_residual <= tol:
            break
    converged = max_residual <= tol
    if not converged:
        logger.warning(
            "sinkhorn_knopp stopped after %d iterations with residual %.3e > %.1e",
            iterations, max_residual, tol,
        )
    t = r[:, None] * s * c[None, :]
    if np.allclose(s, s.T, rtol=0.0, atol=1e-12):
        t = (t + t.T) / 2.0
    return SinkhornResult(t, r, c, iterations, max_residual, converged)


def smooth_matrix(
    m: SparseBinaryMatrix, t_docs: np.ndarray, t_keys: np.ndarray
) -> np.ndarray:
    """Redistribute matrix mass through both transition matrices.

    Computes ``T_docs @ M @ T_keys``; each entry gathers the mass of every
    original (document, keyword) pair, weighted by the probability of
    transitioning from it. Only the global mass is preserved. Values below
    ``MASS_CLAMP`` are clamped to exact zeros.
    """
    if t_docs.shape != (m.n_rows, m.n_rows):
        raise InvalidInputError(
            f"document transitions {t_docs.shape} do not match {m.n_rows} rows"
        )
    if t_keys.shape != (m.n_cols, m.n_cols):
        raise InvalidInputError(
            f"keyword transitions {t_keys.shape} do not match {m.n_cols} columns"
        )
    smoothed = t_docs @ m.to_dense() @ t_keys
    smoothed[smoothed < MASS_CLAMP] = 0.0
    return smoothed


def smooth_binary_matrix(
    m: SparseBinaryMatrix,
    tol: float = SINKHORN_TOL,
    max_iters: int = SINKHORN_MAX_ITERS,
) -> tuple[np.ndarray, SinkhornResult, SinkhornResult]:
    """Full smoothing chain: similarities, bistochastisation, smoothing.

    Returns the smoothed matrix together with both Sinkhorn results so
    callers can report residuals and iteration counts.
    """
    sk_docs = sinkhorn_knopp(document_similarity(m), tol, max_iters)
    sk_keys = sinkhorn_knopp(keyword_similarity(m), tol, max_iters)
    smoothed = smooth_matrix(m, sk_docs.transition, sk_keys.transition)
    return smoothed, sk_docs, sk_keys
