"""Spectral co-clustering baseline.

Normalises the binary matrix by its row and column sums, takes its
singular vectors, stacks the scaled row and column embeddings into one
point cloud and clusters it jointly with k-means. Rows and columns
therefore share cluster ids. The target cluster count must be supplied.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .core import InvalidInputError, Partition, SparseBinaryMatrix, TagclustError

logger = logging.getLogger(__name__)


class NumericalFailureError(TagclustError, RuntimeError):
    """SVD did not converge."""


@dataclass
class SpectralConfig:
    """Target cluster count and k-means settings."""

    k: int
    kmeans_restarts: int = 10
    kmeans_max_iters: int = 300
    seed: int = 0

    def __post_init__(self) -> None:
        if self.k < 2:
            raise InvalidInputError("k must be >= 2")
        if self.kmeans_restarts < 1 or self.kmeans_max_iters < 1:
            raise InvalidInputError("restarts and max_iters must be >= 1")


@dataclass
class SpectralResult:
    """Joint row/column partitions plus run metadata."""

    rows: Partition
    cols: Partition
    used_dimensions: list[int]  # 0-based singular vector columns fed to k-means
    inertia: float


def embedding_dimension(k: int) -> int:
    """Number of singular-vector dimensions used for ``k`` target clusters."""
    return math.ceil(math.log2(k))


def _kmeans_pp_init(z: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = z.shape[0]
    centers = np.empty((k, z.shape[1]))
    centers[0] = z[rng.integers(n)]
    d2 = ((z - centers[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            centers[i:] = z[rng.integers(n, size=k - i)]
            break
        centers[i] = z[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, ((z - centers[i]) ** 2).sum(axis=1))
    return centers


def _lloyd(z: np.ndarray, centers: np.ndarray, max_iters: int):
    labels = np.full(z.shape[0], -1)
    for _ in range(max_iters):
        d2 = ((z[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = d2.argmin(axis=1)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(centers.shape[0]):
            members = z[labels == c]
            if members.shape[0]:
                centers[c] = members.mean(axis=0)
            # empty clusters keep their center and may stay empty
    inertia = float(((z - centers[labels]) ** 2).sum())
    return labels, inertia


def _kmeans(z: np.ndarray, k: int, restarts: int, max_iters: int, seed: int):
    rng = np.random.default_rng(seed)
    best_labels = None
    best_inertia = np.inf
    for _ in range(restarts):
        centers = _kmeans_pp_init(z, k, rng)
        labels, inertia = _lloyd(z, centers, max_iters)
        if inertia < best_inertia:
            best_inertia = inertia
            best_labels = labels
    return best_labels, best_inertia


def spectral_cocluster(m: SparseBinaryMatrix, cfg: SpectralConfig) -> SpectralResult:
    """Partition rows and columns jointly from the normalised spectrum.

    The k-means input uses the leading singular-vector dimensions beyond
    the first (the first pair is the trivial one): with
    ``l = ceil(log2 k)`` dimensions, columns 1..l of the scaled singular
    vectors. The choice is recorded in the result metadata. Output
    partitions carry the k-means labels, so fewer than ``k`` clusters can
    come back if some end up empty.
    """
    if np.any(m.row_sums == 0) or np.any(m.col_sums == 0):
        raise InvalidInputError("zero-sum row or column; drop empty lines first")
    dim = embedding_dimension(cfg.k)
    if dim + 1 > min(m.n_rows, m.n_cols):
        raise InvalidInputError(
            f"need {dim + 1} singular vectors but the matrix only has "
            f"{min(m.n_rows, m.n_cols)}"
        )
    d1_inv_sqrt = 1.0 / np.sqrt(m.row_sums)
    d2_inv_sqrt = 1.0 / np.sqrt(m.col_sums)
    normalized = d1_inv_sqrt[:, None] * m.to_dense() * d2_inv_sqrt[None, :]
    try:
        u, _, vt = scipy.linalg.svd(normalized, full_matrices=False)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - rare
        raise NumericalFailureError(f"SVD failed: {exc}") from exc
    used = list(range(1, dim + 1))
    z = np.vstack([
        d1_inv_sqrt[:, None] * u[:, used],
        d2_inv_sqrt[:, None] * vt.T[:, used],
    ])
    labels, inertia = _kmeans(
        z, cfg.k, cfg.kmeans_restarts, cfg.kmeans_max_iters, cfg.seed
    )
    row_labels = labels[: m.n_rows]
    col_labels = labels[m.n_rows:]
    return SpectralResult(
        rows=Partition.from_assignment(row_labels),
        cols=Partition.from_assignment(col_labels),
        used_dimensions=used,
        inertia=inertia,
    )
