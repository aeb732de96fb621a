"""Command-line pipelines: generate, smooth, cocluster, spectral, evaluate.

Every subcommand validates its config up front, echoes it verbatim into
the header of each artifact it writes, and returns exit code 0 on
success. A failing stage leaves a ``FAILED`` marker file naming the stage
next to any partial outputs. ``TAGCLUST_THREADS`` caps the worker threads
used by the numerical kernels.
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import io as tio
from .cocluster import CoclusterConfig, agglomerate, stopping_criterion
from .core import PipelineStageError, TagclustError
from .metrics import (
    homogeneity_completeness_v,
    restricted_entropy_from_sizes,
    v_measure_curve,
)
from .smoothing import SINKHORN_MAX_ITERS, SINKHORN_TOL, smooth_binary_matrix
from .spectral import SpectralConfig, spectral_cocluster
from .synthgen import CheckerboardSpec, generate_checkerboard

logger = logging.getLogger(__name__)


def _stage(out_dir: Path, name: str, fn, *args, **kwargs):
    """Run one pipeline stage; on failure drop a marker file and re-raise."""
    try:
        return fn(*args, **kwargs)
    except Exception as exc:
        try:
            (out_dir / "FAILED").write_text(f"{name}: {exc}\n", encoding="utf-8")
        except OSError:
            pass
        raise PipelineStageError(f"stage {name} failed: {exc}") from exc


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _echo(subcommand: str, args, keys: list[str]) -> dict:
    cfg = {"subcommand": subcommand}
    for key in keys:
        cfg[key] = getattr(args, key.replace("-", "_"))
    return cfg


def _engine_config(args) -> CoclusterConfig:
    return CoclusterConfig(
        cost_mode=args.cost_mode.replace("-", "_"),
        coupling=args.coupling,
        alpha=args.alpha_balance,
        restricted_r=args.restricted_r,
        trace_stride=args.trace_stride,
    )


# -- generate ----------------------------------------------------------


def cmd_generate(args) -> int:
    out = _out_dir(args)
    cfg = _echo("generate", args, [
        "n-rows", "n-cols", "k-rows", "k-cols", "alpha", "beta", "seed",
    ])
    spec = CheckerboardSpec(
        n_rows=args.n_rows, n_cols=args.n_cols,
        k_rows=args.k_rows, k_cols=args.k_cols,
        alpha=args.alpha, beta=args.beta, seed=args.seed,
    )
    dataset = _stage(out, "generate", generate_checkerboard, spec)
    tio.write_binary_matrix(out / "matrix.mtx", dataset.matrix, cfg)
    tio.write_labels(out / "row_labels.tsv", dataset.row_labels, cfg)
    tio.write_labels(out / "col_labels.tsv", dataset.col_labels, cfg)
    logger.info(
        "wrote %s (%d nonzeros, density %.4f)",
        out / "matrix.mtx", dataset.matrix.nnz, dataset.matrix.density(),
    )
    return 0


# -- smooth ------------------------------------------------------------


def cmd_smooth(args) -> int:
    out = _out_dir(args)
    cfg = _echo("smooth", args, ["matrix", "doc-tags", "min-tag-count", "tol", "max-iters"])
    if (args.matrix is None) == (args.doc_tags is None):
        raise TagclustError("exactly one of --matrix / --doc-tags is required")
    if args.doc_tags is not None:
        ingest = _stage(out, "ingest", tio.ingest_doc_tag_pairs,
                        args.doc_tags, args.min_tag_count)
        matrix = ingest.matrix
        tio.write_binary_matrix(out / "matrix.mtx", matrix, cfg)
        tio.write_labels(out / "doc_ids.tsv",
                         np.arange(len(ingest.doc_ids)), cfg)
        (out / "doc_names.tsv").write_text(
            "".join(f"{i}\t{name}\n" for i, name in enumerate(ingest.doc_ids)),
            encoding="utf-8")
        (out / "tag_names.tsv").write_text(
            "".join(f"{i}\t{name}\n" for i, name in enumerate(ingest.tag_names)),
            encoding="utf-8")
    else:
        matrix = _stage(out, "ingest", tio.read_binary_matrix, args.matrix)
    filtered, kept_rows, kept_cols = _stage(out, "filter", matrix.drop_empty)
    if filtered is not matrix:
        tio.write_labels(out / "kept_rows.tsv", kept_rows, cfg)
        tio.write_labels(out / "kept_cols.tsv", kept_cols, cfg)
    smoothed, sk_docs, sk_keys = _stage(
        out, "smooth", smooth_binary_matrix, filtered, args.tol, args.max_iters
    )
    header = dict(cfg)
    header["sinkhorn_doc_iterations"] = sk_docs.iterations
    header["sinkhorn_doc_residual"] = sk_docs.max_residual
    header["sinkhorn_key_iterations"] = sk_keys.iterations
    header["sinkhorn_key_residual"] = sk_keys.max_residual
    tio.write_real_matrix(out / "smoothed.mtx", smoothed, header)
    logger.info("wrote %s", out / "smoothed.mtx")
    return 0


# -- cocluster ----------------------------------------------------------


def _export_run(out: Path, cfg: dict, dendrogram, cut, weights=None,
                row_names=None, col_names=None) -> None:
    tio.export_dendrogram(dendrogram, out / "dendrogram.json", cfg)
    tio.export_trace(dendrogram, out / "trace.csv", cfg)
    if cut is not None:
        row_w, col_w = weights if weights is not None else (None, None)
        tio.export_cut(dendrogram, "row", cut, out / "cut_rows.tsv", cfg,
                       item_weights=row_w, item_names=row_names)
        tio.export_cut(dendrogram, "col", cut, out / "cut_cols.tsv", cfg,
                       item_weights=col_w, item_names=col_names)


def cmd_cocluster(args) -> int:
    out = _out_dir(args)
    cfg = _echo("cocluster", args, [
        "matrix", "cost-mode", "coupling", "alpha-balance",
        "restricted-r", "trace-stride", "cut",
    ])
    m_star = _stage(out, "load", tio.read_real_matrix, args.matrix)
    dendrogram = _stage(out, "cocluster", agglomerate, m_star, _engine_config(args))
    weights = (m_star.sum(axis=1), m_star.sum(axis=0))
    _export_run(out, cfg, dendrogram, args.cut, weights)
    logger.info("wrote %s", out / "dendrogram.json")
    return 0


# -- spectral ------------------------------------------------------------


def cmd_spectral(args) -> int:
    out = _out_dir(args)
    cfg = _echo("spectral", args, ["matrix", "k", "restarts", "max-iters", "seed"])
    matrix = _stage(out, "load", tio.read_binary_matrix, args.matrix)
    filtered, kept_rows, kept_cols = _stage(out, "filter", matrix.drop_empty)
    if filtered is not matrix:
        tio.write_labels(out / "kept_rows.tsv", kept_rows, cfg)
        tio.write_labels(out / "kept_cols.tsv", kept_cols, cfg)
    result = _stage(out, "spectral", spectral_cocluster, filtered, SpectralConfig(
        k=args.k, kmeans_restarts=args.restarts,
        kmeans_max_iters=args.max_iters, seed=args.seed,
    ))
    tio.write_labels(out / "spectral_rows.tsv", result.rows.assignment, cfg)
    tio.write_labels(out / "spectral_cols.tsv", result.cols.assignment, cfg)
    tio.write_metrics_summary(out / "spectral_meta.json", {
        "config": cfg,
        "used_dimensions": result.used_dimensions,
        "inertia": result.inertia,
        "n_row_clusters": result.rows.n_clusters,
        "n_col_clusters": result.cols.n_clusters,
    })
    logger.info("wrote %s", out / "spectral_rows.tsv")
    return 0


# -- evaluate ------------------------------------------------------------


def _axis_summary(dendrogram, axis: str, labels, est, r: int) -> dict:
    k_star = est.k_star_rows if axis == "row" else est.k_star_cols
    best_step = est.best_step_rows if axis == "row" else est.best_step_cols
    assignment = dendrogram.assignments_at(axis, k_star)
    _, sizes = np.unique(assignment, return_counts=True)
    mi = next(t.mutual_info for t in dendrogram.trace if t.step == best_step)
    block = {
        "k_star": k_star,
        "h_rel_restricted": restricted_entropy_from_sizes(
            sizes, dendrogram.initial_count(axis), r
        ),
        "mutual_info": mi,
        "v": None, "h": None, "c": None,
        "max_v": None, "k_at_max_v": None,
    }
    if labels is not None:
        h, c, v = homogeneity_completeness_v(labels, assignment)
        curve = v_measure_curve(dendrogram, axis, labels)
        k_best, v_best = max(curve, key=lambda kv: kv[1])
        block.update(v=v, h=h, c=c, max_v=v_best, k_at_max_v=k_best)
    return block


def _evaluate(dendrogram, row_labels, col_labels, r: int, cfg: dict) -> dict:
    est = stopping_criterion(dendrogram, r)
    return {
        "config": cfg,
        "rows": _axis_summary(dendrogram, "row", row_labels, est, r),
        "cols": _axis_summary(dendrogram, "col", col_labels, est, r),
    }


def cmd_evaluate(args) -> int:
    out = _out_dir(args)
    cfg = _echo("evaluate", args, [
        "dendrogram", "row-labels", "col-labels", "restricted-r",
    ])
    dendrogram, _ = _stage(out, "load", tio.load_dendrogram, args.dendrogram)
    row_labels = tio.read_labels(args.row_labels) if args.row_labels else None
    col_labels = tio.read_labels(args.col_labels) if args.col_labels else None
    summary = _stage(out, "evaluate", _evaluate,
                     dendrogram, row_labels, col_labels, args.restricted_r, cfg)
    tio.write_metrics_summary(out / "metrics.json", summary)
    logger.info("wrote %s", out / "metrics.json")
    return 0


# -- pipeline ------------------------------------------------------------


def cmd_pipeline(args) -> int:
    out = _out_dir(args)
    cfg = _echo("pipeline", args, [
        "doc-tags", "n-rows", "n-cols", "k-rows", "k-cols", "alpha", "beta",
        "seed", "min-tag-count", "cost-mode", "coupling", "alpha-balance",
        "restricted-r", "trace-stride", "cut", "tol", "max-iters",
    ])
    row_names = col_names = None
    if args.doc_tags is not None:
        ingest = _stage(out, "ingest", tio.ingest_doc_tag_pairs,
                        args.doc_tags, args.min_tag_count)
        matrix = ingest.matrix
        row_labels = col_labels = None
        row_names = ingest.doc_ids
        col_names = ingest.tag_names
    else:
        for field in ("n_rows", "n_cols", "k_rows", "k_cols"):
            if getattr(args, field) is None:
                raise TagclustError(
                    "either --doc-tags or the full checkerboard spec is required"
                )
        spec = CheckerboardSpec(
            n_rows=args.n_rows, n_cols=args.n_cols,
            k_rows=args.k_rows, k_cols=args.k_cols,
            alpha=args.alpha, beta=args.beta, seed=args.seed,
        )
        dataset = _stage(out, "generate", generate_checkerboard, spec)
        matrix = dataset.matrix
        row_labels = dataset.row_labels
        col_labels = dataset.col_labels
    tio.write_binary_matrix(out / "matrix.mtx", matrix, cfg)
    if row_labels is not None:
        tio.write_labels(out / "row_labels.tsv", row_labels, cfg)
        tio.write_labels(out / "col_labels.tsv", col_labels, cfg)

    filtered, kept_rows, kept_cols = _stage(out, "filter", matrix.drop_empty)
    if filtered is not matrix:
        tio.write_labels(out / "kept_rows.tsv", kept_rows, cfg)
        tio.write_labels(out / "kept_cols.tsv", kept_cols, cfg)
        if row_labels is not None:
            row_labels = row_labels[kept_rows]
            col_labels = col_labels[kept_cols]
        if row_names is not None:
            row_names = [row_names[i] for i in kept_rows]
            col_names = [col_names[i] for i in kept_cols]

    smoothed, sk_docs, sk_keys = _stage(
        out, "smooth", smooth_binary_matrix, filtered, args.tol, args.max_iters
    )
    header = dict(cfg)
    header["sinkhorn_doc_iterations"] = sk_docs.iterations
    header["sinkhorn_doc_residual"] = sk_docs.max_residual
    header["sinkhorn_key_iterations"] = sk_keys.iterations
    header["sinkhorn_key_residual"] = sk_keys.max_residual
    tio.write_real_matrix(out / "smoothed.mtx", smoothed, header)

    dendrogram = _stage(out, "cocluster", agglomerate, smoothed, _engine_config(args))
    weights = (filtered.row_sums.astype(float), filtered.col_sums.astype(float))
    _export_run(out, cfg, dendrogram, args.cut, weights, row_names, col_names)

    summary = _stage(out, "evaluate", _evaluate,
                     dendrogram, row_labels, col_labels, args.restricted_r, cfg)
    tio.write_metrics_summary(out / "metrics.json", summary)
    logger.info("pipeline complete: %s", out)
    return 0


# -- parser ---------------------------------------------------------------


def _add_generation_args(p, required: bool) -> None:
    p.add_argument("--n-rows", type=int, required=required)
    p.add_argument("--n-cols", type=int, required=required)
    p.add_argument("--k-rows", type=int, required=required)
    p.add_argument("--k-cols", type=int, required=required)
    p.add_argument("--alpha", type=float, default=0.2,
                   help="tile selection probability")
    p.add_argument("--beta", type=float, default=0.2,
                   help="upper bound of the per-tile fill rate")


def _add_engine_args(p) -> None:
    p.add_argument("--cost-mode", choices=["composite", "kl-only"],
                   default="composite")
    p.add_argument("--coupling", choices=["cocluster", "independent"],
                   default="cocluster")
    p.add_argument("--alpha-balance", type=float, default=0.5,
                   help="weight of the reversed divergence in the blend")
    p.add_argument("--restricted-r", type=int, default=1,
                   help="clusters of size <= r are outliers for the trace entropy")
    p.add_argument("--trace-stride", type=int, default=1)
    p.add_argument("--cut", type=int, default=None,
                   help="also export flat assignments at this cluster count")


def _add_smoothing_args(p) -> None:
    p.add_argument("--tol", type=float, default=SINKHORN_TOL)
    p.add_argument("--max-iters", type=int, default=SINKHORN_MAX_ITERS)
    p.add_argument("--min-tag-count", type=int, default=tio.DEFAULT_MIN_TAG_COUNT)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tagclust",
        description="Smoothing and agglomerative co-clustering of document-tag matrices",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("generate", help="draw a labeled checkerboard dataset")
    _add_generation_args(p, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("smooth", help="similarities, bistochastisation, smoothing")
    p.add_argument("--matrix", help="binary Matrix Market input")
    p.add_argument("--doc-tags", help="document<TAB>tag pair file")
    _add_smoothing_args(p)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_smooth)

    p = sub.add_parser("cocluster", help="agglomerate a smoothed matrix")
    p.add_argument("--matrix", required=True, help="real-valued Matrix Market input")
    _add_engine_args(p)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_cocluster)

    p = sub.add_parser("spectral", help="spectral co-clustering baseline")
    p.add_argument("--matrix", required=True, help="binary Matrix Market input")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--max-iters", type=int, default=300)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_spectral)

    p = sub.add_parser("evaluate", help="stopping criterion and metric summary")
    p.add_argument("--dendrogram", required=True)
    p.add_argument("--row-labels")
    p.add_argument("--col-labels")
    p.add_argument("--restricted-r", type=int, default=1)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("pipeline", help="generate/ingest, smooth, cocluster, evaluate")
    p.add_argument("--doc-tags")
    _add_generation_args(p, required=False)
    p.add_argument("--seed", type=int, required=True)
    _add_smoothing_args(p)
    _add_engine_args(p)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    if not logging.getLogger().handlers:
        logging.basicConfig(
            level=logging.INFO,
            format="%(levelname)s %(name)s: %(message)s",
            stream=sys.stderr,
        )
    args = build_parser().parse_args(argv)
    limit = os.environ.get("TAGCLUST_THREADS")
    if limit:
        from threadpoolctl import threadpool_limits
        ctx = threadpool_limits(limits=int(limit))
    else:
        ctx = contextlib.nullcontext()
    try:
        with ctx:
            return args.func(args)
    except TagclustError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
