"""Synthetic checkerboard datasets with known row and column clusters.

Rows and columns are split into contiguous blocks of near-equal size; each
(row block, column block) tile is independently selected for filling with
probability ``alpha``, a selected tile draws its own fill rate uniformly
from ``[0, beta]``, and its cells are set independently at that rate. The
expected overall density is ``alpha * beta / 2``.

Randomness comes from counter-based SplitMix64 streams so datasets are
bit-reproducible across platforms and implementations. Stream discipline:
one stream (seeded with ``seed``) draws the tile-selection coins in
row-major tile order; a second stream (seeded with ``seed XOR
TILE_SEED_SALT``) supplies one sub-seed per tile, again row-major; each
selected tile's own stream draws its fill rate first and then its cell
coins in row-major cell order.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .core import InvalidInputError, SparseBinaryMatrix

logger = logging.getLogger(__name__)

_MASK64 = (1 << 64) - 1
_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

TILE_SEED_SALT = 0x94D049BB133111EB


class SplitMix64:
    """Counter-based SplitMix64 stream producing uint64 words or uniforms."""

    def __init__(self, seed: int) -> None:
        self._seed = np.uint64(seed & _MASK64)
        self._consumed = 0

    @staticmethod
    def _mix(z: np.ndarray) -> np.ndarray:
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))

    def integers(self, count: int) -> np.ndarray:
        start = self._consumed + 1
        self._consumed += count
        idx = np.arange(start, start + count, dtype=np.uint64)
        return self._mix(self._seed + _GAMMA * idx)

    def uniforms(self, count: int) -> np.ndarray:
        """``count`` doubles in [0, 1) with 53 significant bits."""
        return (self.integers(count) >> np.uint64(11)) * 2.0 ** -53


def _block_sizes(n: int, k: int) -> np.ndarray:
    # first n % k blocks get the +1
    sizes = np.full(k, n // k, dtype=np.int64)
    sizes[: n % k] += 1
    return sizes


def _block_labels(n: int, k: int) -> np.ndarray:
    return np.repeat(np.arange(k, dtype=np.int64), _block_sizes(n, k))


@dataclass(frozen=True)
class CheckerboardSpec:
    """Shape, cluster counts, fill rates and seed of one dataset."""

    n_rows: int
    n_cols: int
    k_rows: int
    k_cols: int
    alpha: float
    beta: float
    seed: int

    def __post_init__(self) -> None:
        if self.n_rows < 1 or self.n_cols < 1:
            raise InvalidInputError("matrix dimensions must be positive")
        if not (1 <= self.k_rows <= self.n_rows and 1 <= self.k_cols <= self.n_cols):
            raise InvalidInputError("cluster counts must lie in [1, n]")
        if not (0.0 <= self.alpha <= 1.0 and 0.0 <= self.beta <= 1.0):
            raise InvalidInputError("fill rates must lie in [0, 1]")

    def as_dict(self) -> dict:
        return {
            "n_rows": self.n_rows,
            "n_cols": self.n_cols,
            "k_rows": self.k_rows,
            "k_cols": self.k_cols,
            "alpha": self.alpha,
            "beta": self.beta,
            "seed": self.seed,
        }


@dataclass
class LabeledDataset:
    """Generated matrix with its ground-truth block labels.

    ``tile_rates[a, b]`` is the realised fill rate of tile (a, b), zero for
    tiles that were not selected. Rows or columns left all-zero by chance
    are reported through the matrix (see ``empty_rows``/``empty_cols``),
    never silently dropped here.
    """

    matrix: SparseBinaryMatrix
    row_labels: np.ndarray
    col_labels: np.ndarray
    tile_rates: np.ndarray


def generate_checkerboard(
    spec: CheckerboardSpec, *, force_tile_rate: float | None = None
) -> LabeledDataset:
    """Draw one labeled checkerboard dataset.

    ``force_tile_rate`` is a test hook overriding every selected tile's
    fill rate (bypassing the uniform draw, not the selection coin).
    """
    row_sizes = _block_sizes(spec.n_rows, spec.k_rows)
    col_sizes = _block_sizes(spec.n_cols, spec.k_cols)
    row_starts = np.concatenate([[0], np.cumsum(row_sizes)])
    col_starts = np.concatenate([[0], np.cumsum(col_sizes)])

    n_tiles = spec.k_rows * spec.k_cols
    selection = SplitMix64(spec.seed).uniforms(n_tiles) < spec.alpha
    tile_seeds = SplitMix64(spec.seed ^ TILE_SEED_SALT).integers(n_tiles)

    tile_rates = np.zeros((spec.k_rows, spec.k_cols))
    entry_rows: list[np.ndarray] = []
    entry_cols: list[np.ndarray] = []
    for a in range(spec.k_rows):
        for b in range(spec.k_cols):
            t = a * spec.k_cols + b
            if not selection[t]:
                continue
            h = int(row_sizes[a])
            w = int(col_sizes[b])
            stream = SplitMix64(int(tile_seeds[t]))
            draws = stream.uniforms(1 + h * w)
            rate = force_tile_rate if force_tile_rate is not None else spec.beta * draws[0]
            tile_rates[a, b] = rate
            cells = draws[1:].reshape(h, w) < rate
            ii, jj = np.nonzero(cells)
            entry_rows.append(ii + row_starts[a])
            entry_cols.append(jj + col_starts[b])

    if entry_rows:
        rows = np.concatenate(entry_rows)
        cols = np.concatenate(entry_cols)
    else:
        rows = np.empty(0, dtype=np.int64)
        cols = np.empty(0, dtype=np.int64)
    matrix = SparseBinaryMatrix(
        spec.n_rows, spec.n_cols, np.column_stack([rows, cols])
    )
    n_empty_r = matrix.empty_rows().size
    n_empty_c = matrix.empty_cols().size
    if n_empty_r or n_empty_c:
        logger.info(
            "checkerboard seed %d left %d empty rows and %d empty columns",
            spec.seed, n_empty_r, n_empty_c,
        )
    return LabeledDataset(
        matrix=matrix,
        row_labels=_block_labels(spec.n_rows, spec.k_rows),
        col_labels=_block_labels(spec.n_cols, spec.k_cols),
        tile_rates=tile_rates,
    )
