"""File formats: Matrix Market, label TSV, doc-tag ingestion, exports.

Every artifact embeds the run configuration as a structured header so two
runs with different configs never produce identical files. All writers are
byte-deterministic for identical inputs.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse

from .core import (
    Dendrogram,
    InvalidInputError,
    MergeRecord,
    ParseError,
    SparseBinaryMatrix,
    StepTrace,
)

logger = logging.getLogger(__name__)

DEFAULT_MIN_TAG_COUNT = 5


def _header_lines(config: dict) -> list[str]:
    return [f"{key} = {value}" for key, value in config.items()]


def _jsonable(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


# -- Matrix Market ----------------------------------------------------


def write_binary_matrix(path, m: SparseBinaryMatrix, config: dict) -> None:
    """Coordinate-format Matrix Market file with the config as comments."""
    coo = scipy.sparse.coo_matrix(
        (np.ones(m.nnz, dtype=np.int64), (m.rows, m.cols)),
        shape=(m.n_rows, m.n_cols),
    )
    with open(path, "wb") as fh:
        scipy.io.mmwrite(
            fh, coo,
            comment="\n".join(_header_lines(config)),
            field="integer", symmetry="general",
        )


def read_binary_matrix(path) -> SparseBinaryMatrix:
    loaded = scipy.io.mmread(path)
    if isinstance(loaded, np.ndarray):
        rows, cols = np.nonzero(loaded)
        values = loaded[rows, cols]
    else:
        coo = loaded.tocoo()
        rows, cols, values = coo.row, coo.col, coo.data
        loaded = coo
    if not np.all(np.isin(values, (0, 1))):
        raise InvalidInputError(f"{path}: matrix is not binary")
    keep = values != 0
    return SparseBinaryMatrix(
        loaded.shape[0], loaded.shape[1], np.column_stack([rows[keep], cols[keep]])
    )


def write_real_matrix(path, values: np.ndarray, config: dict) -> None:
    """Array-format Matrix Market file; precision 17 round-trips float64."""
    with open(path, "wb") as fh:
        scipy.io.mmwrite(
            fh, np.asarray(values, dtype=np.float64),
            comment="\n".join(_header_lines(config)), precision=17,
        )


def read_real_matrix(path) -> np.ndarray:
    loaded = scipy.io.mmread(path)
    if not isinstance(loaded, np.ndarray):
        loaded = loaded.toarray()
    return np.asarray(loaded, dtype=np.float64)


# -- label files ------------------------------------------------------


def write_labels(path, labels, config: dict) -> None:
    """Two-column TSV (item index, cluster id) with a comment header."""
    labels = np.asarray(labels)
    lines = [f"# {line}" for line in _header_lines(config)]
    lines += [f"{i}\t{int(lab)}" for i, lab in enumerate(labels)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_labels(path) -> np.ndarray:
    items: list[tuple[int, int]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError(f"{path}:{lineno}: expected 2 tab-separated fields")
            try:
                items.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-integer field") from None
    if not items:
        raise InvalidInputError(f"{path}: no labels found")
    items.sort()
    indices = [i for i, _ in items]
    if indices != list(range(len(items))):
        raise ParseError(f"{path}: item indices are not contiguous from 0")
    return np.array([lab for _, lab in items], dtype=np.int64)


# -- doc-tag ingestion ------------------------------------------------


@dataclass
class IngestResult:
    """Interned incidence matrix with its id maps and filter counters."""

    matrix: SparseBinaryMatrix
    doc_ids: list[str]
    tag_names: list[str]
    n_docs_dropped: int
    n_tags_dropped: int


def ingest_doc_tag_pairs(path, min_tag_count: int = DEFAULT_MIN_TAG_COUNT) -> IngestResult:
    """Load a ``document_id<TAB>tag`` pair file into an incidence matrix.

    Ids are interned in first-appearance order and duplicate pairs are
    collapsed. Tags occurring in fewer than ``min_tag_count`` documents are
    discarded, then documents left without tags are dropped; both counts
    are logged and reported.
    """
    doc_index: dict[str, int] = {}
    tag_index: dict[str, int] = {}
    pairs: set[tuple[int, int]] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise ParseError(
                    f"{path}:{lineno}: expected 'document<TAB>tag', got {line!r}"
                )
            doc, tag = parts
            d = doc_index.setdefault(doc, len(doc_index))
            t = tag_index.setdefault(tag, len(tag_index))
            pairs.add((d, t))
    if not pairs:
        raise InvalidInputError(f"{path}: no document-tag pairs found")

    tag_counts = np.zeros(len(tag_index), dtype=np.int64)
    for _, t in pairs:
        tag_counts[t] += 1
    keep_tag = tag_counts >= min_tag_count
    kept_pairs = [(d, t) for d, t in pairs if keep_tag[t]]
    n_tags_dropped = int(np.count_nonzero(~keep_tag))
    if not kept_pairs:
        raise InvalidInputError(
            f"{path}: no tags survive the min-count filter ({min_tag_count})"
        )
    surviving_docs = {d for d, _ in kept_pairs}
    n_docs_dropped = len(doc_index) - len(surviving_docs)
    if n_tags_dropped or n_docs_dropped:
        logger.warning(
            "ingest dropped %d tags below %d occurrences and %d now-tagless documents",
            n_tags_dropped, min_tag_count, n_docs_dropped,
        )

    docs_sorted = sorted(doc_index.items(), key=lambda kv: kv[1])
    tags_sorted = sorted(tag_index.items(), key=lambda kv: kv[1])
    doc_ids = [name for name, old in docs_sorted if old in surviving_docs]
    tag_names = [name for name, old in tags_sorted if keep_tag[old]]
    doc_remap = {old: new for new, (name, old) in enumerate(
        (kv for kv in docs_sorted if kv[1] in surviving_docs)
    )}
    tag_remap = {old: new for new, (name, old) in enumerate(
        (kv for kv in tags_sorted if keep_tag[kv[1]])
    )}
    entries = [(doc_remap[d], tag_remap[t]) for d, t in kept_pairs]
    matrix = SparseBinaryMatrix(len(doc_ids), len(tag_names), entries)
    return IngestResult(matrix, doc_ids, tag_names, n_docs_dropped, n_tags_dropped)


# -- dendrogram / trace exports ---------------------------------------


def _merge_to_json(rec: MergeRecord) -> dict:
    return {
        "step": rec.step,
        "left": rec.left_id,
        "right": rec.right_id,
        "new": rec.new_id,
        "kl_cost": rec.kl_cost,
        "merge_cost": rec.merge_cost,
        "composite_cost": rec.composite_cost,
        "new_size": rec.new_size,
    }


def _trace_to_json(tr: StepTrace) -> dict:
    return {
        "step": tr.step,
        "k_rows": tr.k_rows,
        "k_cols": tr.k_cols,
        "h_rel_rows": tr.h_rel_rows,
        "h_rel_cols": tr.h_rel_cols,
        "mutual_info": tr.mutual_info,
        "criterion_rows": tr.criterion_rows,
        "criterion_cols": tr.criterion_cols,
    }


def export_dendrogram(d: Dendrogram, path, config: dict | None = None) -> None:
    """Dendrogram as JSON: one merges block per axis plus the shared trace."""
    obj = {
        "config": _jsonable(config if config is not None else d.config),
        "n_rows": d.n_rows,
        "n_cols": d.n_cols,
        "row": {"axis": "row", "merges": [_merge_to_json(m) for m in d.row_merges]},
        "col": {"axis": "col", "merges": [_merge_to_json(m) for m in d.col_merges]},
        "trace": [_trace_to_json(t) for t in d.trace],
    }
    Path(path).write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def load_dendrogram(path) -> tuple[Dendrogram, dict]:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    try:
        def merges(axis):
            return [
                MergeRecord(
                    step=m["step"], axis=axis, left_id=m["left"], right_id=m["right"],
                    new_id=m["new"], kl_cost=m["kl_cost"], merge_cost=m["merge_cost"],
                    composite_cost=m["composite_cost"], new_size=m["new_size"],
                )
                for m in obj[axis]["merges"]
            ]

        trace = [
            StepTrace(
                step=t["step"], k_rows=t["k_rows"], k_cols=t["k_cols"],
                h_rel_rows=t["h_rel_rows"], h_rel_cols=t["h_rel_cols"],
                mutual_info=t["mutual_info"],
                criterion_rows=t["criterion_rows"],
                criterion_cols=t["criterion_cols"],
            )
            for t in obj["trace"]
        ]
        d = Dendrogram(
            n_rows=obj["n_rows"], n_cols=obj["n_cols"],
            row_merges=merges("row"), col_merges=merges("col"),
            trace=trace, config=obj.get("config", {}),
        )
    except KeyError as exc:
        raise ParseError(f"{path}: missing dendrogram field {exc}") from None
    return d, obj.get("config", {})


TRACE_COLUMNS = (
    "step", "k_rows", "k_cols", "h_rel_rows", "h_rel_cols",
    "mutual_info", "criterion_rows", "criterion_cols",
)


def export_trace(d: Dendrogram, path, config: dict | None = None) -> None:
    """Trace as CSV, one row per traced step, config in comment lines."""
    cfg = config if config is not None else d.config
    lines = [f"# {line}" for line in _header_lines(cfg)]
    lines.append(",".join(TRACE_COLUMNS))
    for t in d.trace:
        lines.append(
            f"{t.step},{t.k_rows},{t.k_cols},{t.h_rel_rows!r},{t.h_rel_cols!r},"
            f"{t.mutual_info!r},{t.criterion_rows!r},{t.criterion_cols!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def export_cut(
    d: Dendrogram,
    axis: str,
    k: int,
    path,
    config: dict,
    item_weights=None,
    item_names=None,
    top_n: int = 3,
) -> np.ndarray:
    """Flat assignment TSV at ``k`` live clusters on one axis.

    When ``item_weights`` is given (typically the item's total count in
    the binary matrix), each cluster's ``top_n`` most frequent members are
    listed in the header, by name when ``item_names`` is supplied.
    """
    assignment = d.assignments_at(axis, k)
    lines = [f"# {line}" for line in _header_lines(config)]
    if item_weights is not None:
        weights = np.asarray(item_weights, dtype=np.float64)
        for cid in sorted(set(assignment.tolist())):
            members = np.flatnonzero(assignment == cid)
            ranked = members[np.lexsort((members, -weights[members]))][:top_n]
            names = [
                str(item_names[i]) if item_names is not None else str(i)
                for i in ranked
            ]
            lines.append(f"# cluster {cid} top: {', '.join(names)}")
    lines += [f"{i}\t{int(c)}" for i, c in enumerate(assignment)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return assignment


def write_metrics_summary(path, summary: dict) -> None:
    Path(path).write_text(
        json.dumps(_jsonable(summary), indent=2) + "\n", encoding="utf-8"
    )


def read_config_header(path) -> list[str]:
    """Comment-header lines of a TSV/CSV/MatrixMarket artifact."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("%%"):
                continue
            if line.startswith("#") or line.startswith("%"):
                out.append(line[1:].strip())
            else:
                break
    return out
