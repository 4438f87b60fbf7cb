"""Command-line surface: exit codes, config layering, sidecar metadata, and
whole-pipeline smoke runs on a small bilingual corpus.
"""

import json

import pytest

import clirkit.cli as cli
from clirkit.corpus import write_corpus, write_qrels, write_queries
from clirkit.evaluation import load_run

from .conftest import build_bilingual_fixture


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Bilingual corpus, per-pair query/qrels files, doc+query embeddings."""
    root = tmp_path_factory.mktemp("cli")
    fx = build_bilingual_fixture()
    paths = {"root": root, "corpus": root / "corpus.jsonl"}
    write_corpus(fx.corpus, paths["corpus"])
    for pair_label, queries in fx.queries.items():
        slug = pair_label.replace("->", "_")
        paths[f"queries_{slug}"] = root / f"queries_{slug}.jsonl"
        write_queries(queries, paths[f"queries_{slug}"])
        paths[f"qrels_{slug}"] = root / f"qrels_{slug}.txt"
        write_qrels(fx.judgments[pair_label], paths[f"qrels_{slug}"])
    paths["queries_all"] = root / "queries_all.jsonl"
    write_queries(fx.all_queries(), paths["queries_all"])
    paths["qrels_all"] = root / "qrels_all.txt"
    write_qrels(fx.all_judgments(), paths["qrels_all"])

    assert cli.main(
        [
            "toy-embed",
            "--corpus",
            str(paths["corpus"]),
            "--field",
            "translated",
            "--dim",
            "64",
            "--out",
            str(root / "docs.clre"),
        ]
    ) == 0
    paths["docs.clre"] = root / "docs.clre"
    for name in ("en_zh", "all"):
        out = root / f"q_{name}.clre"
        assert cli.main(
            [
                "toy-embed",
                "--queries",
                str(paths[f"queries_{name}"]),
                "--dim",
                "64",
                "--out",
                str(out),
            ]
        ) == 0
        paths[f"q_{name}.clre"] = out
    return paths


def _meta(path):
    return json.loads((path.parent / (path.name + ".meta.json")).read_text())


class TestParsing:
    def test_no_command_is_usage_error(self):
        assert cli.main([]) == 1

    def test_unknown_command_is_usage_error(self):
        assert cli.main(["frobnicate"]) == 1

    def test_unknown_flag_is_usage_error(self):
        assert cli.main(["index-bm25", "--corpus", "x", "--out", "y", "--bogus"]) == 1

    def test_missing_required_flag_is_usage_error(self):
        assert cli.main(["index-bm25", "--corpus", "x"]) == 1

    def test_help_exits_zero(self, capsys):
        assert cli.main(["--help"]) == 0
        assert "clirkit" in capsys.readouterr().out


class TestExitCodes:
    def test_missing_input_file_is_usage_error(self, tmp_path):
        code = cli.main(
            [
                "index-bm25",
                "--corpus",
                str(tmp_path / "absent.jsonl"),
                "--out",
                str(tmp_path / "o"),
            ]
        )
        assert code == 1

    def test_malformed_data_is_data_error(self, tmp_path):
        bad = tmp_path / "corpus.jsonl"
        bad.write_text("{not json\n")
        code = cli.main(
            ["index-bm25", "--corpus", str(bad), "--out", str(tmp_path / "o")]
        )
        assert code == 2

    def test_unexpected_exception_is_internal_error(self, monkeypatch, tmp_path):
        def explode(opts):
            raise RuntimeError("wires crossed")

        monkeypatch.setitem(cli._RUNNERS, "index-bm25", explode)
        code = cli.main(
            ["index-bm25", "--corpus", str(tmp_path / "x"), "--out", str(tmp_path / "o")]
        )
        assert code == 3


class TestMetaSidecar:
    def test_records_command_format_seed_and_nothing_else(self, workdir):
        meta = _meta(workdir["docs.clre"])
        assert set(meta) == {"command", "format", "seed"}  # no timestamps on purpose
        assert meta["command"] == "toy-embed"
        assert meta["seed"] == 0
        assert "CLRE" in meta["format"]

    def test_rerun_byte_identical(self, workdir, tmp_path):
        args = [
            "toy-embed",
            "--corpus",
            str(workdir["corpus"]),
            "--field",
            "translated",
            "--dim",
            "64",
        ]
        a, b = tmp_path / "a.clre", tmp_path / "b.clre"
        assert cli.main(args + ["--out", str(a)]) == 0
        assert cli.main(args + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()
        assert (
            a.with_name("a.clre.ids").read_bytes()
            == b.with_name("b.clre.ids").read_bytes()
        )
        assert a.read_bytes() == workdir["docs.clre"].read_bytes()


class TestConfigLayering:
    def test_config_supplies_defaults_flags_win(self, workdir, tmp_path, capsys):
        config = tmp_path / "config.yaml"
        config.write_text("k: 3\ntag: from-config\n")
        index = tmp_path / "bm25.clxi"
        assert cli.main(
            ["index-bm25", "--corpus", str(workdir["corpus"]), "--out", str(index)]
        ) == 0
        out1 = tmp_path / "r1.txt"
        assert cli.main(
            [
                "retrieve",
                "--method",
                "bm25",
                "--queries",
                str(workdir["queries_en_en"]),
                "--index",
                str(index),
                "--config",
                str(config),
                "--out",
                str(out1),
            ]
        ) == 0
        run = load_run(out1)
        assert run.tag == "from-config"
        assert max(len(r) for r in run.results.values()) <= 3

        out2 = tmp_path / "r2.txt"
        assert cli.main(
            [
                "retrieve",
                "--method",
                "bm25",
                "--queries",
                str(workdir["queries_en_en"]),
                "--index",
                str(index),
                "--config",
                str(config),
                "--k",
                "2",
                "--out",
                str(out2),
            ]
        ) == 0
        assert max(len(r) for r in load_run(out2).results.values()) <= 2

    def test_key_for_another_command_ignored(self, workdir, tmp_path):
        config = tmp_path / "config.yaml"
        config.write_text("depth: 7\n")  # belongs to make-candidates, not toy-embed
        assert cli.main(
            [
                "toy-embed",
                "--queries",
                str(workdir["queries_en_en"]),
                "--config",
                str(config),
                "--out",
                str(tmp_path / "q.clre"),
            ]
        ) == 0

    def test_unknown_everywhere_key_rejected(self, workdir, tmp_path):
        config = tmp_path / "config.yaml"
        config.write_text("mystery_knob: 1\n")
        assert cli.main(
            [
                "toy-embed",
                "--queries",
                str(workdir["queries_en_en"]),
                "--config",
                str(config),
                "--out",
                str(tmp_path / "q.clre"),
            ]
        ) == 1


class TestIngest:
    def test_validates_and_rewrites(self, workdir, tmp_path):
        out = tmp_path / "corpus.jsonl"
        code = cli.main(
            [
                "ingest",
                "--corpus",
                str(workdir["corpus"]),
                "--out-corpus",
                str(out),
                "--languages",
                "en,zh",
            ]
        )
        assert code == 0
        assert out.read_bytes() == workdir["corpus"].read_bytes()
        assert _meta(out)["command"] == "ingest"

    def test_language_violation_is_data_error(self, workdir, tmp_path):
        code = cli.main(
            [
                "ingest",
                "--corpus",
                str(workdir["corpus"]),
                "--out-corpus",
                str(tmp_path / "c.jsonl"),
                "--languages",
                "en",
            ]
        )
        assert code == 2


class TestRetrieveAndEvaluate:
    def test_bm25_same_language_pipeline(self, workdir, tmp_path, capsys):
        index = tmp_path / "bm25.clxi"
        assert cli.main(
            ["index-bm25", "--corpus", str(workdir["corpus"]), "--out", str(index)]
        ) == 0
        run_path = tmp_path / "run.txt"
        assert cli.main(
            [
                "retrieve",
                "--method",
                "bm25",
                "--queries",
                str(workdir["queries_en_en"]),
                "--index",
                str(index),
                "--out",
                str(run_path),
            ]
        ) == 0
        assert load_run(run_path).tag == "bm25"  # tag defaults to the method
        report_path = tmp_path / "report.jsonl"
        code = cli.main(
            [
                "evaluate",
                "--run",
                str(run_path),
                "--qrels",
                str(workdir["qrels_en_en"]),
                "--queries",
                str(workdir["queries_en_en"]),
                "--doc-lang",
                "en",
                "--out",
                str(report_path),
            ]
        )
        assert code == 0
        stdout = capsys.readouterr().out
        assert "en->en" in stdout and "macro" in stdout
        header = json.loads(report_path.read_text().splitlines()[0])
        assert header["record"] == "header"

    def test_dense_and_ann_agree_at_full_beam(self, workdir, tmp_path):
        dense_run = tmp_path / "dense.txt"
        assert cli.main(
            [
                "retrieve",
                "--method",
                "dense",
                "--embeddings",
                str(workdir["docs.clre"]),
                "--query-embeddings",
                str(workdir["q_en_zh.clre"]),
                "--k",
                "10",
                "--tag",
                "shared",
                "--out",
                str(dense_run),
            ]
        ) == 0
        graph = tmp_path / "graph.clrh"
        assert cli.main(
            ["index-hnsw", "--embeddings", str(workdir["docs.clre"]), "--out", str(graph)]
        ) == 0
        ann_run = tmp_path / "ann.txt"
        assert cli.main(
            [
                "retrieve",
                "--method",
                "ann",
                "--query-embeddings",
                str(workdir["q_en_zh.clre"]),
                "--index",
                str(graph),
                "--k",
                "10",
                "--ef",
                "24",
                "--tag",
                "shared",
                "--out",
                str(ann_run),
            ]
        ) == 0
        # beam covers the whole corpus, so the files must match byte for byte
        assert dense_run.read_bytes() == ann_run.read_bytes()

    def test_evaluate_coverage_mismatch_is_data_error(self, workdir, tmp_path):
        index = tmp_path / "bm25.clxi"
        assert cli.main(
            ["index-bm25", "--corpus", str(workdir["corpus"]), "--out", str(index)]
        ) == 0
        run_path = tmp_path / "run.txt"
        assert cli.main(
            [
                "retrieve",
                "--method",
                "bm25",
                "--queries",
                str(workdir["queries_en_en"]),
                "--index",
                str(index),
                "--out",
                str(run_path),
            ]
        ) == 0
        code = cli.main(
            [
                "evaluate",
                "--run",
                str(run_path),
                "--qrels",
                str(workdir["qrels_zh_zh"]),
                "--queries",
                str(workdir["queries_en_en"]),
                "--doc-lang",
                "zh",
                "--out",
                str(tmp_path / "rep.jsonl"),
            ]
        )
        assert code == 2


class TestRerankPipeline:
    def test_candidates_scores_apply(self, workdir, tmp_path):
        dense_run = tmp_path / "dense.txt"
        assert cli.main(
            [
                "retrieve",
                "--method",
                "dense",
                "--embeddings",
                str(workdir["docs.clre"]),
                "--query-embeddings",
                str(workdir["q_en_zh.clre"]),
                "--out",
                str(dense_run),
            ]
        ) == 0
        cands = tmp_path / "cands.jsonl"
        reqs = tmp_path / "reqs.jsonl"
        assert cli.main(
            [
                "make-candidates",
                "--run",
                str(dense_run),
                "--qrels",
                str(workdir["qrels_en_zh"]),
                "--depth",
                "10",
                "--out-candidates",
                str(cands),
                "--out-requests",
                str(reqs),
                "--queries",
                str(workdir["queries_en_zh"]),
                "--corpus",
                str(workdir["corpus"]),
            ]
        ) == 0
        requests = [json.loads(l) for l in reqs.read_text().splitlines()]
        assert {"query_id", "doc_id", "query_text", "doc_text"} == set(requests[0])

        # stand-in scorer: +1 for Han documents, 0 otherwise
        scores = tmp_path / "scores.jsonl"
        with open(scores, "w") as handle:
            for record in requests:
                value = 1.0 if record["doc_id"].startswith("dzh") else 0.0
                handle.write(
                    json.dumps(
                        {
                            "query_id": record["query_id"],
                            "doc_id": record["doc_id"],
                            "score": value,
                        }
                    )
                    + "\n"
                )
        reranked = tmp_path / "rerank.txt"
        assert cli.main(
            [
                "apply-scores",
                "--candidates",
                str(cands),
                "--scores",
                str(scores),
                "--out",
                str(reranked),
            ]
        ) == 0
        run = load_run(reranked)
        assert run.tag == "rerank"
        for ranking in run.results.values():
            assert ranking[0][0].startswith("dzh")

    def test_export_negatives_modes(self, workdir, tmp_path):
        easy = tmp_path / "easy.jsonl"
        assert cli.main(
            [
                "export-negatives",
                "--queries",
                str(workdir["queries_en_zh"]),
                "--qrels",
                str(workdir["qrels_en_zh"]),
                "--corpus",
                str(workdir["corpus"]),
                "--mode",
                "easy",
                "--m",
                "3",
                "--out",
                str(easy),
            ]
        ) == 0
        records = [json.loads(l) for l in easy.read_text(encoding="utf-8").splitlines()]
        labels = {r["label"] for r in records}
        assert labels == {0, 1}
        per_query = sum(1 for r in records if r["query_id"] == records[0]["query_id"])
        assert per_query == 4  # one positive plus three negatives

        no_pos = tmp_path / "nopos.jsonl"
        assert cli.main(
            [
                "export-negatives",
                "--queries",
                str(workdir["queries_en_zh"]),
                "--qrels",
                str(workdir["qrels_en_zh"]),
                "--corpus",
                str(workdir["corpus"]),
                "--mode",
                "easy",
                "--m",
                "2",
                "--no-positives",
                "--out",
                str(no_pos),
            ]
        ) == 0
        assert all(
            json.loads(l)["label"] == 0
            for l in no_pos.read_text(encoding="utf-8").splitlines()
        )


class TestAnalysisCommands:
    def test_bias_report(self, workdir, tmp_path):
        run_path = tmp_path / "dense_all.txt"
        assert cli.main(
            [
                "retrieve",
                "--method",
                "dense",
                "--embeddings",
                str(workdir["docs.clre"]),
                "--query-embeddings",
                str(workdir["q_all.clre"]),
                "--out",
                str(run_path),
            ]
        ) == 0
        out = tmp_path / "bias.json"
        code = cli.main(
            [
                "analyze-bias",
                "--run",
                str(run_path),
                "--queries",
                str(workdir["queries_all"]),
                "--corpus",
                str(workdir["corpus"]),
                "--qrels",
                str(workdir["qrels_all"]),
                "--out",
                str(out),
            ]
        )
        assert code == 0
        payload = json.loads(out.read_text())
        assert set(payload["retrieval_shares"]) == {"en", "zh"}
        assert sum(payload["retrieval_shares"].values()) == pytest.approx(1.0)

    def test_lingsim(self, tmp_path, capsys):
        from clirkit.evaluation import MetricReport, PairMetrics, write_report

        pairs = [
            PairMetrics("en->de", 2, {100: 0.9}, {10: 0.8}),
            PairMetrics("en->fr", 2, {100: 0.7}, {10: 0.6}),
            PairMetrics("en->zh", 2, {100: 0.2}, {10: 0.1}),
            PairMetrics("en->en", 2, {100: 1.0}, {10: 1.0}),
        ]
        report = MetricReport(
            tag="demo",
            per_pair=pairs,
            macro_recall={100: 0.7},
            macro_ndcg={10: 0.625},
            micro_recall={100: 0.7},
            micro_ndcg={10: 0.625},
            query_count=8,
        )
        report_path = tmp_path / "report.jsonl"
        write_report(report, report_path)
        typology = tmp_path / "typology.tsv"
        typology.write_text(
            "en\tsyntax\t1.0\t0.0\n"
            "de\tsyntax\t1.0\t0.2\n"
            "fr\tsyntax\t1.0\t1.0\n"
            "zh\tsyntax\t0.1\t1.0\n"
        )
        out = tmp_path / "lingsim.jsonl"
        code = cli.main(
            [
                "analyze-lingsim",
                "--report",
                str(report_path),
                "--typology",
                str(typology),
                "--feature-sets",
                "syntax",
                "--label",
                "demo",
                "--out",
                str(out),
            ]
        )
        assert code == 0
        record = json.loads(out.read_text().splitlines()[0])
        assert record["feature_set"] == "syntax"
        assert record["rho"] == pytest.approx(1.0)
        assert record["pairs_excluded_same_language"] == 1
        assert "syntax" in capsys.readouterr().out


class TestBenchCommand:
    def test_latency_run(self, workdir, tmp_path, capsys):
        out = tmp_path / "latency.jsonl"
        code = cli.main(
            [
                "bench-latency",
                "--embeddings",
                str(workdir["docs.clre"]),
                "--query-embeddings",
                str(workdir["q_en_zh.clre"]),
                "--pairs",
                "en:zh,zh:en",
                "--k",
                "5",
                "--preset",
                "clirmatrix",
                "--qrels",
                str(workdir["qrels_en_zh"]),
                "--out",
                str(out),
            ]
        )
        assert code == 0
        records = [json.loads(l) for l in out.read_text().splitlines()]
        assert records[0]["record"] == "summary"
        assert records[0]["pair_count"] == 56
        assert len(records) == 1 + 4  # summary + one call record per timed call
        stdout = capsys.readouterr().out
        assert "recall@5" in stdout
