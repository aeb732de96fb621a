"""Entropy-based evaluation: partition entropies, V-measure family, mutual information.

All logarithms are base 2, so every quantity is expressed in bits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    AggregatedMassMatrix,
    Dendrogram,
    InvalidInputError,
    Partition,
    UndefinedEntropyError,
)

PROB_TOL = 1e-9


def xlog2x(p: np.ndarray) -> np.ndarray:
    """Elementwise ``p * log2(p)`` with the convention ``0 * log 0 = 0``."""
    p = np.asarray(p, dtype=np.float64)
    out = np.zeros_like(p)
    mask = p > 0.0
    out[mask] = p[mask] * np.log2(p[mask])
    return out


def shannon_entropy(p) -> float:
    """Entropy of a discrete distribution, in bits.

    Uniform over k values gives the maximum, ``log2 k``.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise InvalidInputError("expected a non-empty probability vector")
    if np.any(p < 0.0):
        raise InvalidInputError("negative probability")
    if abs(p.sum() - 1.0) > PROB_TOL:
        raise InvalidInputError(f"probabilities sum to {p.sum()}, not 1")
    return float(-xlog2x(p).sum())


def _entropy_from_sizes(sizes: np.ndarray, n_items: int) -> float:
    return float(-xlog2x(sizes / n_items).sum())


def relative_partition_entropy(p: Partition) -> float:
    """Size-based partition entropy normalised by its maximum ``log2 k``.

    Lies in [0, 1]; equals 1 exactly when all clusters have the same size,
    in particular for the all-singletons partition.
    """
    if p.n_clusters < 2:
        raise UndefinedEntropyError("relative entropy needs at least 2 clusters")
    sizes = p.sizes_in_id_order()
    return _entropy_from_sizes(sizes, p.n_items) / np.log2(p.n_clusters)


def restricted_entropy_from_sizes(sizes: np.ndarray, n_items: int, r: int) -> float:
    """Restricted relative partition entropy from a raw size vector.

    Clusters of size ``<= r`` are treated as outliers and contribute
    nothing to the numerator; the normaliser still counts every cluster.
    Returns 0 for fewer than two clusters (the engine's trace convention).
    """
    sizes = np.asarray(sizes)
    k = sizes.size
    if k < 2:
        return 0.0
    kept = sizes[sizes > r]
    if kept.size == 0:
        return 0.0
    return float(-xlog2x(kept / n_items).sum() / np.log2(k))


def restricted_partition_entropy(p: Partition, r: int) -> float:
    """Relative partition entropy with clusters of size ``<= r`` discarded.

    With ``r = 0`` this reduces to :func:`relative_partition_entropy`; at
    the all-singletons start it is 0 for any ``r >= 1``.
    """
    if p.n_clusters < 2:
        raise UndefinedEntropyError("restricted entropy needs at least 2 clusters")
    return restricted_entropy_from_sizes(p.sizes_in_id_order(), p.n_items, r)


@dataclass
class LabeledPartitionPair:
    """True labels and predicted clusters over the same items."""

    true_labels: np.ndarray
    predicted: np.ndarray
    contingency: np.ndarray

    @classmethod
    def from_labels(cls, true_labels, predicted) -> "LabeledPartitionPair":
        true_labels = np.asarray(true_labels)
        predicted = np.asarray(predicted)
        if true_labels.ndim != 1 or predicted.ndim != 1:
            raise InvalidInputError("label sequences must be 1-dimensional")
        if true_labels.size != predicted.size or true_labels.size == 0:
            raise InvalidInputError(
                f"label lengths differ: {true_labels.size} vs {predicted.size}"
            )
        _, li = np.unique(true_labels, return_inverse=True)
        _, ki = np.unique(predicted, return_inverse=True)
        table = np.zeros((li.max() + 1, ki.max() + 1))
        np.add.at(table, (li, ki), 1.0)
        return cls(true_labels, predicted, table)


def _conditional_entropy(contingency: np.ndarray) -> tuple[float, float, float, float]:
    """(H(L), H(K), H(L|K), H(K|L)) from a joint count table."""
    n = contingency.sum()
    joint = contingency / n
    p_l = joint.sum(axis=1)
    p_k = joint.sum(axis=0)
    h_l = float(-xlog2x(p_l).sum())
    h_k = float(-xlog2x(p_k).sum())
    h_joint = float(-xlog2x(joint).sum())
    return h_l, h_k, h_joint - h_k, h_joint - h_l


def homogeneity(pair: LabeledPartitionPair) -> float:
    """1 when every predicted cluster holds items of a single class."""
    h_l, _, h_l_given_k, _ = _conditional_entropy(pair.contingency)
    if h_l == 0.0:
        return 1.0
    return 1.0 - h_l_given_k / h_l


def completeness(pair: LabeledPartitionPair) -> float:
    """1 when every class is gathered inside a single predicted cluster."""
    _, h_k, _, h_k_given_l = _conditional_entropy(pair.contingency)
    if h_k == 0.0:
        return 1.0
    return 1.0 - h_k_given_l / h_k


def v_measure(pair: LabeledPartitionPair, beta: float = 1.0) -> float:
    """Weighted combination of homogeneity and completeness.

    ``beta = 0`` reduces to homogeneity, large ``beta`` tends to
    completeness. The random-guess limit (h = c = 0) is defined as 0.
    """
    if beta < 0:
        raise InvalidInputError("beta must be >= 0")
    h = homogeneity(pair)
    c = completeness(pair)
    denom = beta * h + c
    if denom == 0.0:
        return 0.0
    return (1.0 + beta) * h * c / denom


def homogeneity_completeness_v(true_labels, predicted, beta: float = 1.0):
    """Convenience wrapper returning (homogeneity, completeness, V)."""
    pair = LabeledPartitionPair.from_labels(true_labels, predicted)
    return homogeneity(pair), completeness(pair), v_measure(pair, beta)


def mutual_information_from_mass(joint_mass: np.ndarray) -> float:
    """Mutual information of the joint distribution ``joint_mass / sum``.

    Bounded by 0 (independence) and ``min(H(X), H(Y))``; tiny negative
    round-off is clamped to 0.
    """
    joint_mass = np.asarray(joint_mass, dtype=np.float64)
    total = joint_mass.sum()
    if total <= 0.0:
        raise InvalidInputError("joint mass must be positive")
    joint = joint_mass / total
    h_x = float(-xlog2x(joint.sum(axis=1)).sum())
    h_y = float(-xlog2x(joint.sum(axis=0)).sum())
    h_xy = float(-xlog2x(joint).sum())
    return max(h_x + h_y - h_xy, 0.0)


def mutual_information(g: AggregatedMassMatrix) -> float:
    """Information shared between the row and column partitions of ``g``."""
    return mutual_information_from_mass(g.values)


def v_measure_curve(
    d: Dendrogram, axis: str, true_labels, beta: float = 1.0
) -> list[tuple[int, float]]:
    """V-measure against the true labels at every cluster count of one axis.

    Replays the axis's merges from the all-singletons start; the returned
    list pairs each live cluster count (n down to 1) with its V-measure.
    """
    n = d.initial_count(axis)
    true_labels = np.asarray(true_labels)
    if true_labels.size != n:
        raise InvalidInputError(
            f"{true_labels.size} labels for {n} items on the {axis} axis"
        )
    assignment = np.arange(n, dtype=np.int64)
    curve = [(n, v_measure(LabeledPartitionPair.from_labels(true_labels, assignment), beta))]
    k = n
    for rec in d.merges_for(axis):
        mask = (assignment == rec.left_id) | (assignment == rec.right_id)
        assignment[mask] = rec.new_id
        k -= 1
        pair = LabeledPartitionPair.from_labels(true_labels, assignment)
        curve.append((k, v_measure(pair, beta)))
    return curve
