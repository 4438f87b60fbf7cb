"""Corpus, query, and judgment containers plus their file formats."""

import pytest
from hypothesis import given
from hypothesis import strategies as st

from clirkit.corpus import (
    Corpus,
    CorpusManifest,
    Document,
    Judgment,
    Judgments,
    LanguagePair,
    Query,
    QuerySet,
    _derive_seed,
    canonical_text,
    dedupe_and_rebalance,
    ingest_corpus,
    ingest_queries,
    load_manifest,
    load_qrels,
    sample_queries,
    truncate_corpus,
    write_corpus,
    write_manifest,
    write_qrels,
    write_queries,
)
from clirkit.errors import DataError, UsageError


def _docs(n=3, lang="en"):
    return [Document(f"d{i}", lang, f"text number {i}") for i in range(n)]


class TestCorpusContainer:
    def test_order_and_lookup(self):
        corpus = Corpus(_docs())
        assert corpus.doc_ids == ["d0", "d1", "d2"]
        assert corpus.row_of("d1") == 1
        assert corpus.get("d2").text == "text number 2"
        assert "d0" in corpus and "dX" not in corpus

    def test_duplicate_doc_id_rejected(self):
        with pytest.raises(DataError, match="duplicate doc_id"):
            Corpus([Document("d0", "en", "a"), Document("d0", "en", "b")])

    def test_empty_text_rejected(self):
        with pytest.raises(DataError, match="empty text"):
            Corpus([Document("d0", "en", "   ")])

    def test_bad_language_code_rejected(self):
        with pytest.raises(DataError, match="invalid language code"):
            Corpus([Document("d0", "English!", "a")])

    def test_language_allowlist_enforced(self):
        with pytest.raises(DataError, match="not in the configured set"):
            Corpus([Document("d0", "fr", "a")], languages={"en", "zh"})

    def test_language_counts(self):
        corpus = Corpus(_docs(2, "en") + [Document("z0", "zh", "微小")])
        assert corpus.language_counts() == {"en": 2, "zh": 1}
        assert corpus.languages() == ["en", "zh"]

    def test_unknown_ids_raise(self):
        corpus = Corpus(_docs(1))
        with pytest.raises(DataError):
            corpus.get("nope")
        with pytest.raises(DataError):
            corpus.row_of("nope")


class TestQuerySetContainer:
    def test_duplicate_query_id_rejected(self):
        with pytest.raises(DataError, match="duplicate query_id"):
            QuerySet([Query("q0", "en", "a"), Query("q0", "en", "b")])

    def test_lookup(self):
        qs = QuerySet([Query("q0", "en", "alpha"), Query("q1", "zh", "贝塔")])
        assert qs.query_ids == ["q0", "q1"]
        assert qs.get("q1").lang == "zh"
        with pytest.raises(DataError):
            qs.get("q9")


class TestJudgments:
    def test_grade_defaults_to_zero_for_unjudged(self):
        js = Judgments([Judgment("q0", "d0", 2)])
        assert js.grade("q0", "d0") == 2
        assert js.grade("q0", "other") == 0
        assert js.is_judged("q0", "d0")
        assert not js.is_judged("q0", "other")

    def test_duplicate_pair_rejected(self):
        with pytest.raises(DataError, match="duplicate judgment"):
            Judgments([Judgment("q0", "d0", 1), Judgment("q0", "d0", 2)])

    def test_negative_grade_rejected(self):
        with pytest.raises(DataError, match="non-negative"):
            Judgments([Judgment("q0", "d0", -1), Judgment("q0", "d1", 1)])

    def test_query_without_positive_grade_rejected(self):
        with pytest.raises(DataError, match="no judgment with grade > 0"):
            Judgments([Judgment("q0", "d0", 0), Judgment("q0", "d1", 0)])

    def test_gold_ids_best_grade_first_ties_by_id(self):
        js = Judgments(
            [
                Judgment("q0", "db", 1),
                Judgment("q0", "dz", 2),
                Judgment("q0", "da", 1),
                Judgment("q0", "d0", 0),
            ]
        )
        assert js.gold_ids("q0") == ["dz", "da", "db"]

    def test_grades_for_is_a_copy(self):
        js = Judgments([Judgment("q0", "d0", 1)])
        js.grades_for("q0")["d0"] = 99
        assert js.grade("q0", "d0") == 1

    def test_has_query(self):
        js = Judgments([Judgment("q0", "d0", 1)])
        assert js.has_query("q0") and not js.has_query("q1")


class TestRoundTrips:
    def test_corpus_jsonl(self, tmp_path):
        docs = [
            Document("d0", "en", "plain text"),
            Document("d1", "zh", "冰川研究", translated_text="glacier study"),
        ]
        path = tmp_path / "corpus.jsonl"
        write_corpus(Corpus(docs), path)
        back = ingest_corpus(path)
        assert [d for d in back] == docs
        # non-ASCII must survive as readable characters, not escapes
        assert "冰川" in path.read_text(encoding="utf-8")

    def test_queries_jsonl(self, tmp_path):
        qs = QuerySet([Query("q0", "en", "a query"), Query("q1", "zh", "查询")])
        path = tmp_path / "queries.jsonl"
        write_queries(qs, path)
        assert list(ingest_queries(path)) == list(qs)

    def test_qrels_trec(self, tmp_path):
        js = Judgments([Judgment("q0", "d0", 2), Judgment("q0", "d1", 0)])
        path = tmp_path / "qrels.txt"
        write_qrels(js, path)
        back = load_qrels(path)
        assert back.grade("q0", "d0") == 2
        assert back.grade("q0", "d1") == 0
        assert len(back) == 2

    def test_manifest(self, tmp_path):
        m = CorpusManifest("toy", 100, {"en": 2, "zh": 1}, 512)
        path = tmp_path / "manifest.json"
        write_manifest(m, path)
        assert load_manifest(path) == m

    def test_malformed_jsonl_names_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"doc_id": "d0", "lang": "en", "text": "ok"}\n{broken\n')
        with pytest.raises(DataError, match=r"bad\.jsonl:2"):
            ingest_corpus(path)

    def test_missing_field_rejected(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"doc_id": "d0", "lang": "en"}\n')
        with pytest.raises(DataError, match="text"):
            ingest_corpus(path)

    def test_qrels_wrong_field_count(self, tmp_path):
        path = tmp_path / "qrels.txt"
        path.write_text("q0 0 d0\n")
        with pytest.raises(DataError, match="4 whitespace-separated"):
            load_qrels(path)

    def test_qrels_non_integer_grade(self, tmp_path):
        path = tmp_path / "qrels.txt"
        path.write_text("q0 0 d0 high\n")
        with pytest.raises(DataError, match="non-integer grade"):
            load_qrels(path)

    def test_manifest_validate(self):
        m = CorpusManifest("toy", 0, {"en": 1}, 512)
        with pytest.raises(DataError, match="retrieval depth"):
            m.validate(1)
        m2 = CorpusManifest("toy", 10, {"en": 1}, 512)
        with pytest.raises(DataError, match="sum to 1"):
            m2.validate(5)


class TestTransforms:
    def test_canonical_text_collapses_whitespace(self):
        assert canonical_text("  a \t b\n c ") == "a b c"

    def test_canonical_text_nfc(self):
        assert canonical_text("Café") == "Café"

    def test_dedupe_keeps_first_occurrence(self):
        corpus = Corpus(
            [
                Document("d0", "en", "same  text"),
                Document("d1", "en", "same text"),
                Document("d2", "en", "other"),
            ]
        )
        out = dedupe_and_rebalance(corpus, ["en", "de"], seed=7)
        assert out.doc_ids == ["d0", "d2"]

    def test_rebalance_counts_within_one(self):
        corpus = Corpus([Document(f"d{i}", "en", f"unique {i}") for i in range(11)])
        out = dedupe_and_rebalance(corpus, ["en", "fr", "de"], seed=1)
        counts = sorted(out.language_counts().values())
        assert sum(counts) == 11
        assert counts[-1] - counts[0] <= 1

    def test_rebalance_deterministic(self):
        corpus = Corpus([Document(f"d{i}", "en", f"unique {i}") for i in range(9)])
        a = dedupe_and_rebalance(corpus, ["en", "fr"], seed=3)
        b = dedupe_and_rebalance(corpus, ["en", "fr"], seed=3)
        assert [(d.doc_id, d.lang) for d in a] == [(d.doc_id, d.lang) for d in b]

    def test_rebalance_errors(self):
        with pytest.raises(DataError):
            dedupe_and_rebalance(Corpus(_docs(2)), [], seed=0)
        with pytest.raises(DataError, match="unique documents"):
            dedupe_and_rebalance(
                Corpus([Document("d0", "en", "x")]), ["en", "fr"], seed=0
            )

    def test_sample_queries_deterministic_and_distinct(self):
        pool = QuerySet([Query(f"q{i}", "en", f"query {i}") for i in range(20)])
        pair = LanguagePair("en", "zh")
        a = sample_queries(pool, pair, 5, seed=11)
        b = sample_queries(pool, pair, 5, seed=11)
        assert a.query_ids == b.query_ids
        assert len(set(a.query_ids)) == 5

    def test_sample_queries_bounds(self):
        pool = QuerySet([Query("q0", "en", "one")])
        pair = LanguagePair("en", "en")
        with pytest.raises(UsageError):
            sample_queries(pool, pair, -1, seed=0)
        with pytest.raises(DataError, match="exceeds pool size"):
            sample_queries(pool, pair, 2, seed=0)

    def test_truncate_corpus_hits_both_fields(self):
        corpus = Corpus(
            [Document("d0", "en", "one two three four", translated_text="a b c d")]
        )
        out = truncate_corpus(corpus, 2)
        assert out.get("d0").text == "one two"
        assert out.get("d0").translated_text == "a b"

    def test_derived_seed_stable_and_part_sensitive(self):
        assert _derive_seed(1, "x") == _derive_seed(1, "x")
        assert _derive_seed(1, "x") != _derive_seed(1, "y")
        assert _derive_seed(1, "x") != _derive_seed(2, "x")


def test_language_pair_renders_arrow():
    assert str(LanguagePair("en", "zh")) == "en->zh"


@given(st.text(max_size=80))
def test_canonical_text_idempotent(text):
    once = canonical_text(text)
    assert canonical_text(once) == once


@given(
    st.lists(
        st.tuples(
            st.integers(min_value=0, max_value=30),
            st.integers(min_value=0, max_value=4),
        ),
        min_size=1,
        max_size=40,
        unique_by=lambda t: t[0],
    )
)
def test_qrels_roundtrip_property(tmp_path_factory, pairs):
    # at least one positive grade per query set or the container rejects it
    judgments = [Judgment("q0", f"d{i}", g) for i, g in pairs]
    judgments.append(Judgment("q0", "dgold", 1))
    js = Judgments(judgments)
    path = tmp_path_factory.mktemp("qrels") / "qrels.txt"
    write_qrels(js, path)
    back = load_qrels(path)
    assert {(j.query_id, j.doc_id, j.grade) for j in back} == {
        (j.query_id, j.doc_id, j.grade) for j in js
    }
