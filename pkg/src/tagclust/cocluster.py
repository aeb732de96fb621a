"""Hierarchical agglomerative co-clustering engine.

Rows and columns of the smoothed matrix are agglomerated jointly: every
round scores all same-axis cluster pairs on both axes with the product of
a content divergence (J-symmetrised KL between cluster conditional
distributions) and a size cost (the entropy a merge removes from the
partition), merges the globally cheapest pair, and maintains the two
directed divergence matrices incrementally instead of recomputing them.

The directed matrix convention is ``kl[a, b] = KL(dist_a || dist_b)`` with
a zero diagonal, rows and columns ordered by ascending live cluster id.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .core import (
    Dendrogram,
    DegenerateClusterError,
    EngineConsistencyError,
    InvalidInputError,
    MergeRecord,
    SizeCostUndefinedError,
    StepTrace,
    apply_merge,
    new_singleton_partition,
)
from .metrics import (
    mutual_information_from_mass,
    restricted_entropy_from_sizes,
    xlog2x,
)

logger = logging.getLogger(__name__)

# support mismatches contribute a_i * log2(a_i / KL_EPS) instead of infinity
KL_EPS = 1e-12

# small-k size costs can go slightly negative; flooring keeps the argmin sane
MERGE_COST_FLOOR = 1e-12

COST_MODES = ("composite", "kl_only")
COUPLINGS = ("cocluster", "independent")


def _safe_log2(p: np.ndarray, eps: float) -> np.ndarray:
    return np.log2(np.where(p > 0.0, p, eps))


def kl_divergence(a, b, eps: float = KL_EPS) -> float:
    """Directed Kullback-Leibler divergence in bits.

    Conventions: ``0 * log(0/x) = 0`` and, where ``b`` lacks support that
    ``a`` has, the term is ``a_i * log2(a_i / eps)`` so the result stays
    finite while heavily penalising the mismatch.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise InvalidInputError(f"distribution shapes differ: {a.shape} vs {b.shape}")
    for v in (a, b):
        if np.any(v < 0.0) or abs(v.sum() - 1.0) > 1e-9:
            raise InvalidInputError("input is not a probability distribution")
    return float(xlog2x(a).sum() - a @ _safe_log2(b, eps))


def kl_j_symmetrized(a, b, alpha: float = 0.5, eps: float = KL_EPS) -> float:
    """Balanced blend of the two directed divergences.

    ``(1 - alpha) * KL(A||B) + alpha * KL(B||A)``; symmetric in its
    arguments exactly when ``alpha = 0.5``.
    """
    if not 0.0 <= alpha <= 1.0:
        raise InvalidInputError(f"alpha must lie in [0, 1], got {alpha}")
    return (1.0 - alpha) * kl_divergence(a, b, eps) + alpha * kl_divergence(b, a, eps)


def merge_size_cost(p_i: float, p_j: float, k: int) -> float:
    """Relative partition entropy removed by merging two clusters.

    ``p_i`` and ``p_j`` are size-based cluster probabilities and ``k`` the
    live cluster count before the merge. Balanced merges of large clusters
    cost most; the value is floored at ``MERGE_COST_FLOOR`` because the
    sign argument behind the formula only holds for large ``k``.
    """
    if k < 3:
        raise SizeCostUndefinedError(f"size cost needs k >= 3, got {k}")
    if not (0.0 < p_i <= 1.0 and 0.0 < p_j <= 1.0 and p_i + p_j <= 1.0 + 1e-12):
        raise InvalidInputError(f"invalid cluster probabilities ({p_i}, {p_j})")
    drop = (p_i * np.log2(p_i) + p_j * np.log2(p_j)) / np.log2(k) \
        - (p_i + p_j) * np.log2(p_i + p_j) / np.log2(k - 1)
    return float(max(-drop, MERGE_COST_FLOOR))


def composite_cost(kl_j: float, merge: float) -> float:
    """Product of the content divergence and the size cost."""
    if kl_j < 0.0 or merge < 0.0:
        raise InvalidInputError("cost terms must be nonnegative")
    return kl_j * merge


def pairwise_directed_kl(dists: np.ndarray, eps: float = KL_EPS) -> np.ndarray:
    """All directed divergences between the rows of a distribution matrix."""
    d = np.asarray(dists, dtype=np.float64)
    self_terms = xlog2x(d).sum(axis=1)
    cross = d @ _safe_log2(d, eps).T
    kl = self_terms[:, None] - cross
    np.fill_diagonal(kl, 0.0)
    return kl


def _pair_term_matrix(x: np.ndarray, eps: float) -> np.ndarray:
    # T[a, b] = x_a * log2(x_a / x_b~), 0 where x_a == 0
    return xlog2x(x)[:, None] - x[:, None] * _safe_log2(x, eps)[None, :]


def incremental_kl_update(
    kl: np.ndarray, dists: np.ndarray, i: int, j: int, eps: float = KL_EPS
) -> np.ndarray:
    """Update a directed divergence matrix after two coordinates collapse.

    ``dists`` holds the distributions (one per row) *before* the merge of
    feature coordinates ``i`` and ``j``; merging opposite-axis clusters
    replaces the two coordinates by their sum without renormalising. Each
    entry changes by the difference between the merged coordinate's term
    and the two original terms, so the result equals recomputing every
    divergence from the post-merge distributions.
    """
    dists = np.asarray(dists, dtype=np.float64)
    kl = np.asarray(kl, dtype=np.float64)
    if dists.ndim != 2 or kl.shape != (dists.shape[0], dists.shape[0]):
        raise InvalidInputError("kl matrix does not match the distribution matrix")
    f = dists.shape[1]
    if i == j or not (0 <= i < f and 0 <= j < f):
        raise InvalidInputError(f"invalid coordinate pair ({i}, {j})")
    x = dists[:, i]
    y = dists[:, j]
    delta = (
        _pair_term_matrix(x + y, eps)
        - _pair_term_matrix(x, eps)
        - _pair_term_matrix(y, eps)
    )
    out = kl + delta
    np.fill_diagonal(out, 0.0)
    return out


@dataclass
class CoclusterConfig:
    """Engine options.

    ``cost_mode`` selects the composite (divergence x size) or plain
    divergence objective; ``coupling`` switches between true co-clustering
    and the ablation where each axis is clustered against the opposite
    axis's untouched singletons. ``restricted_r`` is the outlier size bound
    used by the trace entropies, ``trace_stride`` thins the trace for large
    inputs, and ``validate_state`` cross-checks the incremental divergence
    matrices against a direct recomputation after every step.
    """

    cost_mode: str = "composite"
    coupling: str = "cocluster"
    alpha: float = 0.5
    restricted_r: int = 1
    trace_metrics: bool = True
    trace_stride: int = 1
    validate_state: bool = False

    def __post_init__(self) -> None:
        if self.cost_mode not in COST_MODES:
            raise InvalidInputError(f"cost_mode must be one of {COST_MODES}")
        if self.coupling not in COUPLINGS:
            raise InvalidInputError(f"coupling must be one of {COUPLINGS}")
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidInputError("alpha must lie in [0, 1]")
        if self.restricted_r < 0:
            raise InvalidInputError("restricted_r must be >= 0")
        if self.trace_stride < 1:
            raise InvalidInputError("trace_stride must be >= 1")

    def as_dict(self) -> dict:
        return {
            "cost_mode": self.cost_mode,
            "coupling": self.coupling,
            "alpha": self.alpha,
            "restricted_r": self.restricted_r,
            "trace_stride": self.trace_stride,
        }


class CoclusterEngine:
    """Mutable agglomeration state; one instance drives one run.

    Maintains the aggregated mass matrix, both partitions and one directed
    divergence matrix per axis. After a merge on one axis, that axis's
    matrix only needs the merged cluster's row and column recomputed, while
    the opposite axis's matrix is patched coordinate-wise through
    :func:`incremental_kl_update`'s delta.
    """

    def __init__(self, m_star: np.ndarray, config: CoclusterConfig | None = None):
        self.config = config or CoclusterConfig()
        m_star = np.ascontiguousarray(m_star, dtype=np.float64)
        if m_star.ndim != 2:
            raise InvalidInputError("m_star must be 2-dimensional")
        n, m = m_star.shape
        if n < 2 or m < 2:
            raise InvalidInputError(f"need at least a 2x2 matrix, got {n}x{m}")
        if not np.all(np.isfinite(m_star)) or np.any(m_star < 0.0):
            raise InvalidInputError("m_star must be finite and nonnegative")
        if m_star.sum() <= 0.0:
            raise InvalidInputError("m_star has zero total mass")
        if np.any(m_star.sum(axis=1) <= 0.0) or np.any(m_star.sum(axis=0) <= 0.0):
            raise DegenerateClusterError(
                "zero-mass row or column; drop empty lines before clustering"
            )
        self.rows = new_singleton_partition(n)
        self.cols = new_singleton_partition(m)
        self.G = m_star.copy()
        self.total_mass = float(self.G.sum())
        self._ids = {"row": list(range(n)), "col": list(range(m))}
        self._sizes = {
            "row": np.ones(n, dtype=np.float64),
            "col": np.ones(m, dtype=np.float64),
        }
        if self.config.coupling == "independent":
            self._ind = {"row": m_star.copy(), "col": m_star.T.copy()}
        else:
            self._ind = None
        self.kl = {
            "row": pairwise_directed_kl(self._dists("row")),
            "col": pairwise_directed_kl(self._dists("col")),
        }
        self.row_merges: list[MergeRecord] = []
        self.col_merges: list[MergeRecord] = []
        self.trace: list[StepTrace] = []
        self._step = 0
        self._floor_events = 0

    # -- state access ------------------------------------------------

    def k(self, axis: str) -> int:
        return len(self._ids[axis])

    def n_items(self, axis: str) -> int:
        return self.rows.n_items if axis == "row" else self.cols.n_items

    def partition(self, axis: str):
        return self.rows if axis == "row" else self.cols

    def _axis_view(self, axis: str) -> np.ndarray:
        return self.G if axis == "row" else self.G.T

    def _dists(self, axis: str) -> np.ndarray:
        source = self._ind[axis] if self._ind is not None else self._axis_view(axis)
        return source / source.sum(axis=1, keepdims=True)

    # -- one agglomeration round --------------------------------------

    def _merge_cost_matrix(self, axis: str) -> np.ndarray:
        k = self.k(axis)
        if k == 2:
            return np.ones((2, 2))
        p = self._sizes[axis] / self.n_items(axis)
        f = xlog2x(p)
        merge = xlog2x(p[:, None] + p[None, :]) / np.log2(k - 1) \
            - (f[:, None] + f[None, :]) / np.log2(k)
        iu = np.triu_indices(k, 1)
        self._floor_events += int(np.count_nonzero(merge[iu] < MERGE_COST_FLOOR))
        return np.maximum(merge, MERGE_COST_FLOOR)

    def _best_pair(self, axis: str):
        k = self.k(axis)
        kl = self.kl[axis]
        alpha = self.config.alpha
        klj = (1.0 - alpha) * kl + alpha * kl.T
        merge = self._merge_cost_matrix(axis)
        key = klj * merge if self.config.cost_mode == "composite" else klj
        masked = np.where(np.triu(np.ones((k, k), dtype=bool), 1), key, np.inf)
        flat = int(np.argmin(masked))
        a, b = divmod(flat, k)
        return float(masked[a, b]), a, b, float(klj[a, b]), float(merge[a, b])

    def step(self) -> MergeRecord:
        """Select and apply the globally cheapest merge."""
        best = None
        best_axis = None
        for axis in ("row", "col"):
            if self.k(axis) < 2:
                continue
            cand = self._best_pair(axis)
            if best is None or cand[0] < best[0]:
                best = cand
                best_axis = axis
        if best is None:
            raise InvalidInputError("agglomeration already complete")
        _, a, b, klj_val, merge_val = best
        record = self._merge(best_axis, a, b, klj_val, merge_val)
        is_last = self.k("row") + self.k("col") == 2
        if self.config.trace_metrics and (
            self._step % self.config.trace_stride == 0 or is_last
        ):
            self._record_trace()
        if self.config.validate_state:
            self._validate()
        self._step += 1
        return record

    def _merge(self, axis: str, a: int, b: int, klj_val: float, merge_val: float) -> MergeRecord:
        other = "col" if axis == "row" else "row"
        ids = self._ids[axis]
        left_id, right_id = ids[a], ids[b]
        part = apply_merge(self.partition(axis), left_id, right_id)
        if axis == "row":
            self.rows = part
        else:
            self.cols = part
        new_id = part.next_id - 1
        gv = self._axis_view(axis)
        keep = [p for p in range(len(ids)) if p != a and p != b]
        x = y = None
        if self._ind is None:
            # coordinates the opposite axis's distributions are about to lose
            opp_totals = gv.sum(axis=0)
            x = gv[a, :] / opp_totals
            y = gv[b, :] / opp_totals
        merged_line = gv[a] + gv[b]
        gv_new = np.vstack([gv[keep], merged_line[None, :]])
        self.G = gv_new if axis == "row" else gv_new.T.copy()
        if self._ind is not None:
            s = self._ind[axis]
            self._ind[axis] = np.vstack([s[keep], (s[a] + s[b])[None, :]])
        sizes = self._sizes[axis]
        new_size = float(sizes[a] + sizes[b])
        self._sizes[axis] = np.append(sizes[keep], new_size)
        self._ids[axis] = [ids[p] for p in keep] + [new_id]

        # merged axis: keep untouched pairs, recompute the new cluster's line
        kl_kept = self.kl[axis][np.ix_(keep, keep)]
        dists = self._dists(axis)
        u = dists[-1]
        others = dists[:-1]
        k_new = len(keep) + 1
        kl_next = np.zeros((k_new, k_new))
        kl_next[:-1, :-1] = kl_kept
        if others.shape[0]:
            kl_next[-1, :-1] = float(xlog2x(u).sum()) - _safe_log2(others, KL_EPS) @ u
            kl_next[:-1, -1] = xlog2x(others).sum(axis=1) - others @ _safe_log2(u, KL_EPS)
        self.kl[axis] = kl_next

        # opposite axis: every distribution lost coordinates a and b
        if self._ind is None and self.k(other) >= 1:
            delta = (
                _pair_term_matrix(x + y, KL_EPS)
                - _pair_term_matrix(x, KL_EPS)
                - _pair_term_matrix(y, KL_EPS)
            )
            kl_opp = self.kl[other] + delta
            np.fill_diagonal(kl_opp, 0.0)
            self.kl[other] = kl_opp

        record = MergeRecord(
            step=self._step,
            axis=axis,
            left_id=left_id,
            right_id=right_id,
            new_id=new_id,
            kl_cost=klj_val,
            merge_cost=merge_val,
            composite_cost=klj_val * merge_val,
            new_size=int(new_size),
        )
        (self.row_merges if axis == "row" else self.col_merges).append(record)
        return record

    def _record_trace(self) -> None:
        r = self.config.restricted_r
        h_rows = restricted_entropy_from_sizes(
            self._sizes["row"], self.n_items("row"), r
        )
        h_cols = restricted_entropy_from_sizes(
            self._sizes["col"], self.n_items("col"), r
        )
        mi = mutual_information_from_mass(self.G)
        self.trace.append(
            StepTrace(
                step=self._step,
                k_rows=self.k("row"),
                k_cols=self.k("col"),
                h_rel_rows=h_rows,
                h_rel_cols=h_cols,
                mutual_info=mi,
                criterion_rows=h_rows * mi,
                criterion_cols=h_cols * mi,
            )
        )

    def _validate(self) -> None:
        for axis in ("row", "col"):
            if self.k(axis) < 2:
                continue
            ref = pairwise_directed_kl(self._dists(axis))
            err = float(np.abs(ref - self.kl[axis]).max())
            if err > 1e-9:
                raise EngineConsistencyError(
                    f"{axis} divergence matrix drifted by {err:.3e} at step {self._step}"
                )
        mass_err = abs(self.G.sum() - self.total_mass) / self.total_mass
        if mass_err > 1e-9:
            raise EngineConsistencyError(f"mass drifted by {mass_err:.3e}")

    def run(self, step_callback=None) -> Dendrogram:
        """Agglomerate both axes down to a single cluster each."""
        while self.k("row") + self.k("col") > 2:
            self.step()
            if step_callback is not None:
                step_callback(self)
        assert len(self.row_merges) == self.rows.n_items - 1
        assert len(self.col_merges) == self.cols.n_items - 1
        if self._floor_events:
            logger.debug(
                "size cost floored on %d candidate pairs", self._floor_events
            )
        return Dendrogram(
            n_rows=self.rows.n_items,
            n_cols=self.cols.n_items,
            row_merges=self.row_merges,
            col_merges=self.col_merges,
            trace=self.trace,
            config=self.config.as_dict(),
        )


def agglomerate(
    m_star: np.ndarray,
    config: CoclusterConfig | None = None,
    *,
    step_callback=None,
) -> Dendrogram:
    """Run the full agglomeration on a smoothed matrix.

    Deterministic: identical inputs and config produce identical
    dendrograms. Ties are broken in favour of the row axis, then of the
    lexicographically smallest (smaller id, larger id) pair.
    """
    return CoclusterEngine(m_star, config).run(step_callback=step_callback)


@dataclass
class CriterionPoint:
    """One trace sample of the stopping criterion for a single axis."""

    step: int
    k: int
    value: float


@dataclass
class StoppingEstimate:
    """Estimated cluster counts with the full criterion curves."""

    k_star_rows: int
    k_star_cols: int
    best_step_rows: int
    best_step_cols: int
    curve_rows: list[CriterionPoint] = field(repr=False)
    curve_cols: list[CriterionPoint] = field(repr=False)


def _pick_best(curve: list[CriterionPoint], axis: str) -> CriterionPoint:
    eligible = [p for p in curve if p.k >= 2]
    if not eligible:
        raise InvalidInputError(f"no traced step with >= 2 clusters on {axis} axis")
    best = eligible[0]
    for p in eligible[1:]:
        if p.value > best.value:
            best = p
    if best.value <= 0.0:
        logger.warning(
            "stopping criterion identically zero on %s axis; "
            "falling back to the earliest traced step", axis,
        )
        best = eligible[0]
    return best


def stopping_criterion(d: Dendrogram, r: int = 1) -> StoppingEstimate:
    """Per-axis cluster count maximising restricted entropy x mutual information.

    Replays the merge history to recover cluster sizes at every traced
    step, evaluates the restricted relative partition entropy at outlier
    bound ``r`` and multiplies it by the traced mutual information. The two
    axes peak independently: the best row partitioning need not be
    simultaneous with the best column partitioning.
    """
    if not d.trace:
        raise InvalidInputError("dendrogram carries no metric trace")
    if r < 0:
        raise InvalidInputError("r must be >= 0")
    trace_by_step = {t.step: t for t in d.trace}
    live_sizes = {
        "row": {i: 1 for i in range(d.n_rows)},
        "col": {i: 1 for i in range(d.n_cols)},
    }
    curves: dict[str, list[CriterionPoint]] = {"row": [], "col": []}
    for rec in d.merges_in_step_order():
        sizes = live_sizes[rec.axis]
        sizes[rec.new_id] = sizes.pop(rec.left_id) + sizes.pop(rec.right_id)
        tr = trace_by_step.get(rec.step)
        if tr is None:
            continue
        for axis in ("row", "col"):
            sz = np.fromiter(live_sizes[axis].values(), dtype=np.float64)
            h = restricted_entropy_from_sizes(sz, d.initial_count(axis), r)
            curves[axis].append(
                CriterionPoint(rec.step, sz.size, h * tr.mutual_info)
            )
    best_r = _pick_best(curves["row"], "row")
    best_c = _pick_best(curves["col"], "col")
    return StoppingEstimate(
        k_star_rows=best_r.k,
        k_star_cols=best_c.k,
        best_step_rows=best_r.step,
        best_step_cols=best_c.step,
        curve_rows=curves["row"],
        curve_cols=curves["col"],
    )
