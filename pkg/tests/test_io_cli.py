import json

import numpy as np
import pytest

from tagclust import (
    CheckerboardSpec,
    agglomerate,
    generate_checkerboard,
    homogeneity_completeness_v,
    stopping_criterion,
    v_measure_curve,
)
from tagclust import io as tio
from tagclust.cli import main
from tagclust.core import InvalidInputError, ParseError

from conftest import random_positive_matrix


class TestMatrixMarketRoundTrip:
    def test_binary(self, tmp_path):
        ds = generate_checkerboard(CheckerboardSpec(
            n_rows=25, n_cols=18, k_rows=3, k_cols=2, alpha=0.8, beta=0.6, seed=1
        ))
        path = tmp_path / "m.mtx"
        tio.write_binary_matrix(path, ds.matrix, {"seed": 1, "alpha": 0.8})
        back = tio.read_binary_matrix(path)
        assert back == ds.matrix
        header = tio.read_config_header(path)
        assert "seed = 1" in header

    def test_real_exact(self, tmp_path, rng):
        values = rng.random((7, 5))
        path = tmp_path / "r.mtx"
        tio.write_real_matrix(path, values, {"stage": "smooth"})
        back = tio.read_real_matrix(path)
        np.testing.assert_array_equal(back, values)

    def test_write_deterministic(self, tmp_path):
        ds = generate_checkerboard(CheckerboardSpec(
            n_rows=12, n_cols=12, k_rows=2, k_cols=2, alpha=1.0, beta=0.7, seed=3
        ))
        p1, p2 = tmp_path / "a.mtx", tmp_path / "b.mtx"
        tio.write_binary_matrix(p1, ds.matrix, {"seed": 3})
        tio.write_binary_matrix(p2, ds.matrix, {"seed": 3})
        assert p1.read_bytes() == p2.read_bytes()


class TestLabels:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "labels.tsv"
        tio.write_labels(path, [0, 0, 1, 2], {"k": 3})
        np.testing.assert_array_equal(tio.read_labels(path), [0, 0, 1, 2])

    def test_malformed(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("0\t1\nnope\n")
        with pytest.raises(ParseError, match="2"):
            tio.read_labels(path)

    def test_empty(self, tmp_path):
        path = tmp_path / "empty.tsv"
        path.write_text("# only comments\n")
        with pytest.raises(InvalidInputError):
            tio.read_labels(path)


class TestIngest:
    def write(self, tmp_path, text):
        path = tmp_path / "pairs.tsv"
        path.write_text(text, encoding="utf-8")
        return path

    def test_small_corpus(self, tmp_path):
        path = self.write(tmp_path, "\n".join([
            "# comment",
            "docA\tred", "docA\tblue", "docA\tred",  # duplicate collapses
            "docB\tred", "docB\tgreen",
        ]) + "\n")
        res = tio.ingest_doc_tag_pairs(path, min_tag_count=1)
        assert res.matrix.shape == (2, 3)
        assert res.matrix.nnz == 4
        assert res.doc_ids == ["docA", "docB"]
        assert res.tag_names == ["red", "blue", "green"]

    def test_min_count_drops_tag(self, tmp_path):
        lines = [f"doc{i}\tcommon" for i in range(5)]
        lines += [f"doc{i}\trare" for i in range(4)]
        path = self.write(tmp_path, "\n".join(lines) + "\n")
        res = tio.ingest_doc_tag_pairs(path, min_tag_count=5)
        assert res.tag_names == ["common"]
        assert res.n_tags_dropped == 1
        assert res.matrix.shape == (5, 1)

    def test_doc_dropped_when_tagless(self, tmp_path):
        lines = [f"doc{i}\tcommon" for i in range(5)]
        lines += ["lonely\trare"]
        path = self.write(tmp_path, "\n".join(lines) + "\n")
        res = tio.ingest_doc_tag_pairs(path, min_tag_count=5)
        assert res.n_docs_dropped == 1
        assert "lonely" not in res.doc_ids

    def test_malformed_line_number(self, tmp_path):
        path = self.write(tmp_path, "a\tb\nbroken line\n")
        with pytest.raises(ParseError, match=":2:"):
            tio.ingest_doc_tag_pairs(path)

    def test_empty_file(self, tmp_path):
        path = self.write(tmp_path, "# nothing\n")
        with pytest.raises(InvalidInputError):
            tio.ingest_doc_tag_pairs(path)


class TestDendrogramExport:
    def test_json_round_trip(self, tmp_path, rng):
        d = agglomerate(random_positive_matrix(rng, 6, 5))
        path = tmp_path / "dendro.json"
        tio.export_dendrogram(d, path, {"run": "test"})
        loaded, cfg = tio.load_dendrogram(path)
        assert cfg == {"run": "test"}
        assert loaded.n_rows == 6 and loaded.n_cols == 5
        assert len(loaded.row_merges) == len(d.row_merges)
        for a, b in zip(loaded.merges_in_step_order(), d.merges_in_step_order()):
            assert (a.step, a.axis, a.left_id, a.right_id, a.new_id) == \
                (b.step, b.axis, b.left_id, b.right_id, b.new_id)
            assert a.composite_cost == b.composite_cost
        np.testing.assert_array_equal(
            loaded.assignments_at("row", 3), d.assignments_at("row", 3)
        )

    def test_row_merge_count_in_json(self, tmp_path, rng):
        d = agglomerate(random_positive_matrix(rng, 4, 4))
        path = tmp_path / "dendro.json"
        tio.export_dendrogram(d, path)
        obj = json.loads(path.read_text())
        assert len(obj["row"]["merges"]) == 3
        assert obj["row"]["axis"] == "row"

    def test_trace_csv_rows(self, tmp_path, rng):
        d = agglomerate(random_positive_matrix(rng, 6, 6))
        path = tmp_path / "trace.csv"
        tio.export_trace(d, path, {"run": "t"})
        lines = path.read_text().strip().split("\n")
        data = [l for l in lines if not l.startswith("#")]
        assert data[0].startswith("step,k_rows,k_cols,")
        assert len(data) - 1 == 10  # one per merge
        assert any(l.startswith("# run = t") for l in lines)

    def test_cut_matches_trace_v(self, tmp_path):
        ds = generate_checkerboard(CheckerboardSpec(
            n_rows=40, n_cols=40, k_rows=4, k_cols=4, alpha=1.0, beta=0.8, seed=9
        ))
        from tagclust import smooth_binary_matrix

        filtered, kept_r, _ = ds.matrix.drop_empty()
        smoothed, _, _ = smooth_binary_matrix(filtered)
        d = agglomerate(smoothed)
        est = stopping_criterion(d, 1)
        labels = ds.row_labels[kept_r]
        path = tmp_path / "cut.tsv"
        assignment = tio.export_cut(
            d, "row", est.k_star_rows, path, {"k": est.k_star_rows},
            item_weights=filtered.row_sums,
        )
        v_cut = homogeneity_completeness_v(labels, assignment)[2]
        curve = dict(v_measure_curve(d, "row", labels))
        assert v_cut == pytest.approx(curve[est.k_star_rows], abs=1e-12)
        content = path.read_text()
        assert "cluster" in content and "top:" in content
        back = tio.read_labels(path)
        np.testing.assert_array_equal(back, assignment)


class TestCli:
    def run_pipeline(self, tmp_path, name="run", **overrides):
        out = tmp_path / name
        args = {
            "--n-rows": "24", "--n-cols": "20", "--k-rows": "3", "--k-cols": "3",
            "--alpha": "0.9", "--beta": "0.7", "--seed": "13",
            "--out-dir": str(out),
        }
        args.update(overrides)
        argv = ["pipeline"]
        for key, value in args.items():
            argv += [key, value]
        assert main(argv) == 0
        return out

    def test_pipeline_artifacts(self, tmp_path):
        out = self.run_pipeline(tmp_path, **{"--cut": "3"})
        for name in [
            "matrix.mtx", "row_labels.tsv", "col_labels.tsv", "smoothed.mtx",
            "dendrogram.json", "trace.csv", "metrics.json",
            "cut_rows.tsv", "cut_cols.tsv",
        ]:
            assert (out / name).exists(), name
        assert not (out / "FAILED").exists()
        summary = json.loads((out / "metrics.json").read_text())
        assert summary["config"]["subcommand"] == "pipeline"
        assert summary["rows"]["k_star"] >= 2
        assert 0.0 <= summary["rows"]["max_v"] <= 1.0

    def test_stage_chain_matches_pipeline(self, tmp_path):
        out = self.run_pipeline(tmp_path)
        gen = tmp_path / "gen"
        assert main([
            "generate", "--n-rows", "24", "--n-cols", "20", "--k-rows", "3",
            "--k-cols", "3", "--alpha", "0.9", "--beta", "0.7",
            "--seed", "13", "--out-dir", str(gen),
        ]) == 0
        sm = tmp_path / "sm"
        assert main([
            "smooth", "--matrix", str(gen / "matrix.mtx"), "--out-dir", str(sm),
        ]) == 0
        cc = tmp_path / "cc"
        assert main([
            "cocluster", "--matrix", str(sm / "smoothed.mtx"), "--out-dir", str(cc),
        ]) == 0
        d_pipeline, _ = tio.load_dendrogram(out / "dendrogram.json")
        d_stages, _ = tio.load_dendrogram(cc / "dendrogram.json")
        assert [
            (r.step, r.axis, r.left_id, r.right_id)
            for r in d_pipeline.merges_in_step_order()
        ] == [
            (r.step, r.axis, r.left_id, r.right_id)
            for r in d_stages.merges_in_step_order()
        ]
        ev = tmp_path / "ev"
        assert main([
            "evaluate", "--dendrogram", str(cc / "dendrogram.json"),
            "--row-labels", str(gen / "row_labels.tsv"),
            "--col-labels", str(gen / "col_labels.tsv"),
            "--out-dir", str(ev),
        ]) == 0
        assert (ev / "metrics.json").exists()

    def test_spectral_subcommand(self, tmp_path):
        gen = tmp_path / "gen"
        assert main([
            "generate", "--n-rows", "30", "--n-cols", "30", "--k-rows", "2",
            "--k-cols", "2", "--alpha", "1.0", "--beta", "0.8",
            "--seed", "21", "--out-dir", str(gen),
        ]) == 0
        sp = tmp_path / "sp"
        assert main([
            "spectral", "--matrix", str(gen / "matrix.mtx"), "--k", "2",
            "--seed", "0", "--out-dir", str(sp),
        ]) == 0
        meta = json.loads((sp / "spectral_meta.json").read_text())
        assert meta["used_dimensions"] == [1]
        labels = tio.read_labels(sp / "spectral_rows.tsv")
        assert labels.size > 0

    def test_doc_tag_pipeline(self, tmp_path):
        pairs = tmp_path / "pairs.tsv"
        lines = []
        for d in range(8):
            lines.append(f"doc{d}\ttag{d % 3}")
            lines.append(f"doc{d}\ttag{(d + 1) % 3}")
        pairs.write_text("\n".join(lines) + "\n")
        out = tmp_path / "real"
        assert main([
            "pipeline", "--doc-tags", str(pairs), "--min-tag-count", "1",
            "--seed", "0", "--out-dir", str(out),
        ]) == 0
        summary = json.loads((out / "metrics.json").read_text())
        assert summary["rows"]["v"] is None  # no labels for real data

    def test_failure_marker(self, tmp_path):
        out = tmp_path / "fails"
        rc = main([
            "cocluster", "--matrix", str(tmp_path / "missing.mtx"),
            "--out-dir", str(out),
        ])
        assert rc == 1
        marker = (out / "FAILED").read_text()
        assert marker.startswith("load:")

    def test_round_trip_generated_dataset(self, tmp_path):
        gen = tmp_path / "gen"
        assert main([
            "generate", "--n-rows", "18", "--n-cols", "14", "--k-rows", "3",
            "--k-cols", "2", "--alpha", "0.6", "--beta", "0.5",
            "--seed", "77", "--out-dir", str(gen),
        ]) == 0
        ds = generate_checkerboard(CheckerboardSpec(
            n_rows=18, n_cols=14, k_rows=3, k_cols=2,
            alpha=0.6, beta=0.5, seed=77,
        ))
        assert tio.read_binary_matrix(gen / "matrix.mtx") == ds.matrix
        np.testing.assert_array_equal(
            tio.read_labels(gen / "row_labels.tsv"), ds.row_labels
        )

    def test_headers_differ_across_configs(self, tmp_path):
        a = self.run_pipeline(tmp_path, "a")
        b = self.run_pipeline(tmp_path, "b", **{"--seed": "14"})
        ha = tio.read_config_header(a / "trace.csv")
        hb = tio.read_config_header(b / "trace.csv")
        assert ha != hb
