"""Shared data types: matrices, partitions and merge histories.

Everything here is either an immutable value or owned by a single engine
instance; operations are pure functions of their inputs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)


class TagclustError(Exception):
    """Base class for all package errors."""


class InvalidInputError(TagclustError, ValueError):
    """Malformed or out-of-contract input."""


class InvalidMergeError(TagclustError, ValueError):
    """Merge of equal, retired or unknown cluster ids."""


class DegenerateClusterError(TagclustError, ValueError):
    """A cluster with zero mass cannot be normalised into a distribution."""


class UndefinedEntropyError(TagclustError, ValueError):
    """Relative partition entropy needs at least two clusters."""


class SizeCostUndefinedError(TagclustError, ValueError):
    """The size-based merge cost is undefined below three clusters."""


class ParseError(TagclustError, ValueError):
    """Malformed input file; the message carries the line number."""


class PipelineStageError(TagclustError, RuntimeError):
    """A pipeline stage failed; the message carries the stage name."""


class EngineConsistencyError(TagclustError, RuntimeError):
    """Incrementally maintained state drifted from a direct recomputation."""


class SparseBinaryMatrix:
    """Documents-keywords incidence matrix stored in coordinate form.

    Rows are documents, columns are keywords; a stored coordinate means the
    keyword occurs in the document. Duplicate or out-of-range coordinates
    are rejected. Empty rows/columns are allowed at construction (generated
    data may contain them); callers that need strictly positive marginals
    use :meth:`drop_empty` first.
    """

    def __init__(self, n_rows: int, n_cols: int, entries) -> None:
        if n_rows < 1 or n_cols < 1:
            raise InvalidInputError(f"matrix shape {n_rows}x{n_cols} is empty")
        entries = np.asarray(entries, dtype=np.int64)
        if entries.size == 0:
            entries = entries.reshape(0, 2)
        if entries.ndim != 2 or entries.shape[1] != 2:
            raise InvalidInputError("entries must be (row, col) pairs")
        rows, cols = entries[:, 0], entries[:, 1]
        if rows.size and (rows.min() < 0 or rows.max() >= n_rows):
            raise InvalidInputError("row index out of range")
        if cols.size and (cols.min() < 0 or cols.max() >= n_cols):
            raise InvalidInputError("column index out of range")
        # canonical order, duplicates collapsed
        codes = np.unique(rows * np.int64(n_cols) + cols)
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self.rows = codes // n_cols
        self.cols = codes % n_cols
        self.row_sums = np.bincount(self.rows, minlength=n_rows)
        self.col_sums = np.bincount(self.cols, minlength=n_cols)

    @property
    def nnz(self) -> int:
        return int(self.rows.size)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    def density(self) -> float:
        return self.nnz / (self.n_rows * self.n_cols)

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((self.n_rows, self.n_cols))
        dense[self.rows, self.cols] = 1.0
        return dense

    def empty_rows(self) -> np.ndarray:
        return np.flatnonzero(self.row_sums == 0)

    def empty_cols(self) -> np.ndarray:
        return np.flatnonzero(self.col_sums == 0)

    def drop_empty(self) -> tuple["SparseBinaryMatrix", np.ndarray, np.ndarray]:
        """Remove all-zero rows and columns.

        Returns the filtered matrix together with the kept row and column
        indices (positions in the original matrix), so labels or id maps
        can be filtered alongside.
        """
        keep_r = np.flatnonzero(self.row_sums > 0)
        keep_c = np.flatnonzero(self.col_sums > 0)
        if keep_r.size == self.n_rows and keep_c.size == self.n_cols:
            return self, keep_r, keep_c
        logger.warning(
            "dropping %d empty rows and %d empty columns",
            self.n_rows - keep_r.size, self.n_cols - keep_c.size,
        )
        if keep_r.size == 0 or keep_c.size == 0:
            raise InvalidInputError("matrix is entirely empty")
        rmap = -np.ones(self.n_rows, dtype=np.int64)
        rmap[keep_r] = np.arange(keep_r.size)
        cmap = -np.ones(self.n_cols, dtype=np.int64)
        cmap[keep_c] = np.arange(keep_c.size)
        entries = np.column_stack([rmap[self.rows], cmap[self.cols]])
        out = SparseBinaryMatrix(keep_r.size, keep_c.size, entries)
        return out, keep_r, keep_c

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseBinaryMatrix):
            return NotImplemented
        return (
            self.shape == other.shape
            and self.rows.shape == other.rows.shape
            and bool(np.all(self.rows == other.rows))
            and bool(np.all(self.cols == other.cols))
        )

    def __repr__(self) -> str:
        return f"SparseBinaryMatrix({self.n_rows}x{self.n_cols}, nnz={self.nnz})"


@dataclass
class Partition:
    """Hard assignment of items to clusters.

    Ids follow the linkage convention: original items own ids
    ``0..n_items-1`` and every merge mints the next id in sequence, so a
    merge history exports without remapping.
    """

    n_items: int
    assignment: np.ndarray
    cluster_sizes: dict[int, int]
    next_id: int

    @classmethod
    def from_assignment(cls, labels) -> "Partition":
        labels = np.asarray(labels, dtype=np.int64)
        ids, counts = np.unique(labels, return_counts=True)
        sizes = {int(i): int(c) for i, c in zip(ids, counts)}
        next_id = max(int(ids.max()) + 1, labels.size)
        return cls(labels.size, labels.copy(), sizes, next_id)

    @property
    def n_clusters(self) -> int:
        return len(self.cluster_sizes)

    def live_ids(self) -> list[int]:
        return sorted(self.cluster_sizes)

    def sizes_in_id_order(self) -> np.ndarray:
        return np.array([self.cluster_sizes[i] for i in self.live_ids()], dtype=np.int64)

    def probabilities(self) -> np.ndarray:
        """Size-based cluster probabilities, in live-id order."""
        return self.sizes_in_id_order() / self.n_items

    def validate(self) -> None:
        if sum(self.cluster_sizes.values()) != self.n_items:
            raise InvalidInputError("cluster sizes do not sum to n_items")
        ids, counts = np.unique(self.assignment, return_counts=True)
        observed = {int(i): int(c) for i, c in zip(ids, counts)}
        if observed != self.cluster_sizes:
            raise InvalidInputError("assignment inconsistent with cluster_sizes")


def new_singleton_partition(n_items: int) -> Partition:
    """Initial partition with every item alone in its own cluster."""
    if n_items < 2:
        raise InvalidInputError(f"need at least 2 items, got {n_items}")
    assignment = np.arange(n_items, dtype=np.int64)
    sizes = {i: 1 for i in range(n_items)}
    return Partition(n_items, assignment, sizes, n_items)


def apply_merge(p: Partition, a: int, b: int) -> Partition:
    """Merge clusters ``a`` and ``b`` into a freshly numbered cluster."""
    if a == b:
        raise InvalidMergeError(f"cannot merge cluster {a} with itself")
    if a not in p.cluster_sizes or b not in p.cluster_sizes:
        raise InvalidMergeError(f"cluster id {a if a not in p.cluster_sizes else b} is not live")
    new_id = p.next_id
    assignment = p.assignment.copy()
    assignment[(assignment == a) | (assignment == b)] = new_id
    sizes = dict(p.cluster_sizes)
    new_size = sizes.pop(a) + sizes.pop(b)
    sizes[new_id] = new_size
    return Partition(p.n_items, assignment, sizes, new_id + 1)


@dataclass
class AggregatedMassMatrix:
    """Per-(row-cluster, column-cluster) mass sums of the smoothed matrix.

    ``values[a, b]`` holds the total smoothed mass falling in the
    intersection of row cluster ``row_ids[a]`` and column cluster
    ``col_ids[b]``. The total mass is invariant under merges.
    """

    values: np.ndarray
    row_ids: list[int]
    col_ids: list[int]
    row_totals: np.ndarray = field(init=False)
    col_totals: np.ndarray = field(init=False)
    total_mass: float = field(init=False)

    def __post_init__(self) -> None:
        self.row_totals = self.values.sum(axis=1)
        self.col_totals = self.values.sum(axis=0)
        self.total_mass = float(self.values.sum())

    def row_position(self, cluster_id: int) -> int:
        try:
            return self.row_ids.index(cluster_id)
        except ValueError:
            raise InvalidInputError(f"row cluster {cluster_id} is not live") from None

    def col_position(self, cluster_id: int) -> int:
        try:
            return self.col_ids.index(cluster_id)
        except ValueError:
            raise InvalidInputError(f"column cluster {cluster_id} is not live") from None


def build_aggregate(m_star: np.ndarray, rows: Partition, cols: Partition) -> AggregatedMassMatrix:
    """Aggregate a smoothed matrix over a row and a column partition.

    With singleton partitions the result equals ``m_star`` itself.
    """
    m_star = np.asarray(m_star, dtype=np.float64)
    if m_star.ndim != 2:
        raise InvalidInputError("m_star must be 2-dimensional")
    if m_star.shape != (rows.n_items, cols.n_items):
        raise InvalidInputError(
            f"shape {m_star.shape} does not match partitions "
            f"({rows.n_items}x{cols.n_items})"
        )
    row_ids = rows.live_ids()
    col_ids = cols.live_ids()
    rpos = {cid: i for i, cid in enumerate(row_ids)}
    cpos = {cid: i for i, cid in enumerate(col_ids)}
    row_group = np.array([rpos[int(c)] for c in rows.assignment], dtype=np.int64)
    col_group = np.array([cpos[int(c)] for c in cols.assignment], dtype=np.int64)
    by_row = np.zeros((len(row_ids), cols.n_items))
    np.add.at(by_row, row_group, m_star)
    g = np.zeros((len(row_ids), len(col_ids)))
    np.add.at(g.T, col_group, by_row.T)
    return AggregatedMassMatrix(g, row_ids, col_ids)


@dataclass
class MergeRecord:
    """One agglomeration step on one axis."""

    step: int
    axis: str  # "row" or "col"
    left_id: int
    right_id: int
    new_id: int
    kl_cost: float
    merge_cost: float
    composite_cost: float
    new_size: int


@dataclass
class StepTrace:
    """Per-step monitoring metrics recorded after the step's merge."""

    step: int
    k_rows: int
    k_cols: int
    h_rel_rows: float
    h_rel_cols: float
    mutual_info: float
    criterion_rows: float
    criterion_cols: float


@dataclass
class Dendrogram:
    """Ordered merge history of a full or partial agglomeration run."""

    n_rows: int
    n_cols: int
    row_merges: list[MergeRecord]
    col_merges: list[MergeRecord]
    trace: list[StepTrace]
    config: dict

    def initial_count(self, axis: str) -> int:
        return self.n_rows if axis == "row" else self.n_cols

    def merges_for(self, axis: str) -> list[MergeRecord]:
        return self.row_merges if axis == "row" else self.col_merges

    def merges_in_step_order(self) -> list[MergeRecord]:
        return sorted(self.row_merges + self.col_merges, key=lambda m: m.step)

    def assignments_at(self, axis: str, k: int) -> np.ndarray:
        """Flat cluster assignment with ``k`` live clusters on ``axis``.

        Replays the axis's merges in step order until only ``k`` clusters
        remain; ids follow the linkage numbering.
        """
        n = self.initial_count(axis)
        if not 1 <= k <= n:
            raise InvalidInputError(f"cut level {k} outside [1, {n}]")
        assignment = np.arange(n, dtype=np.int64)
        live = n
        for rec in self.merges_for(axis):
            if live == k:
                break
            mask = (assignment == rec.left_id) | (assignment == rec.right_id)
            assignment[mask] = rec.new_id
            live -= 1
        if live != k:
            raise InvalidInputError(f"dendrogram too short to cut axis {axis} at {k}")
        return assignment
