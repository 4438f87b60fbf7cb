"""Graph-based approximate search: exact-equivalence at full beam width,
determinism, degree bounds, and index persistence.
"""

import numpy as np
import pytest

from clirkit.ann import (
    HnswParams,
    HnswRetriever,
    ann_search,
    build_hnsw,
    ef_for_k,
    load_index,
    persist_index,
    reachable_nodes,
)
from clirkit.dense import EmbeddingMatrix, exact_topk
from clirkit.errors import DataError, UsageError

from .conftest import unit_rows


def _build(n=300, dim=16, seed=0, **kw):
    rng = np.random.default_rng(seed + 1000)
    docs = unit_rows(rng, n, dim)
    ids = [f"d{i}" for i in range(n)]
    return docs, ids, build_hnsw(docs, ids=ids, seed=seed, **kw)


class TestBuild:
    def test_defaults(self):
        p = HnswParams()
        assert p.m == 16 and p.ef_construction == 200
        assert p.level_multiplier == pytest.approx(1.0 / np.log(16))

    def test_ef_for_k_floor_at_50(self):
        assert ef_for_k(10) == 50
        assert ef_for_k(25) == 50
        assert ef_for_k(100) == 200

    def test_all_nodes_reachable(self):
        _, _, index = _build(n=400)
        assert reachable_nodes(index) == set(range(400))

    def test_degree_bounds_hold(self):
        docs, ids, index = _build(n=400)
        m = index.params.m
        for node in range(len(index)):
            assert len(index.neighbors(node, 0)) <= 2 * m
            for layer in range(1, int(index.levels[node]) + 1):
                assert len(index.neighbors(node, layer)) <= m

    def test_seed_reproducible(self, tmp_path):
        docs, ids, a = _build(seed=7)
        _, _, b = _build(seed=7)
        pa, pb = tmp_path / "a.clrh", tmp_path / "b.clrh"
        persist_index(a, pa)
        persist_index(b, pb)
        assert pa.read_bytes() == pb.read_bytes()

    def test_seed_changes_graph(self):
        _, _, a = _build(seed=1)
        _, _, b = _build(seed=2)
        assert not np.array_equal(a.levels, b.levels)

    def test_some_nodes_promoted_above_layer_zero(self):
        _, _, index = _build(n=500)
        assert index.max_level >= 1
        assert index.levels[index.entry_point] == index.max_level

    def test_non_unit_vectors_rejected(self):
        bad = np.ones((4, 8), np.float32)
        with pytest.raises(DataError):
            build_hnsw(bad, ids=list("abcd"))


class TestSearch:
    def test_full_beam_equals_exact(self):
        # beam as wide as the corpus must reproduce brute force bit for bit
        docs, ids, index = _build(n=200)
        rng = np.random.default_rng(42)
        queries = unit_rows(rng, 10, 16)
        for q in queries:
            expected = exact_topk(q[None, :], docs, ids, k=10)[0]
            got = ann_search(index, q, k=10, ef=len(ids))
            assert got == expected  # ids AND float scores, exact equality

    def test_default_ef_high_overlap(self):
        docs, ids, index = _build(n=1500, dim=24)
        rng = np.random.default_rng(7)
        queries = unit_rows(rng, 30, 24)
        overlaps = []
        for q in queries:
            exact = {d for d, _ in exact_topk(q[None, :], docs, ids, k=10)[0]}
            approx = {d for d, _ in ann_search(index, q, k=10)}
            overlaps.append(len(exact & approx) / 10)
        assert float(np.mean(overlaps)) >= 0.9

    def test_scores_descending_ties_by_row(self):
        docs, ids, index = _build(n=100)
        q = docs[3]
        result = ann_search(index, q, k=20, ef=100)
        scores = [s for _, s in result]
        assert scores == sorted(scores, reverse=True)
        rows = [ids.index(d) for d, _ in result]
        for (r1, s1), (r2, s2) in zip(zip(rows, scores), zip(rows[1:], scores[1:])):
            if s1 == s2:
                assert r1 < r2

    def test_ef_below_k_rejected(self):
        _, _, index = _build(n=50)
        with pytest.raises(UsageError, match="ef"):
            ann_search(index, index.vectors[0], k=10, ef=5)

    def test_k_clamped_to_corpus(self):
        docs, ids, index = _build(n=30)
        assert len(ann_search(index, docs[0], k=100, ef=100)) == 30


class TestPersistence:
    def test_roundtrip_identical_results(self, tmp_path):
        docs, ids, index = _build(n=250, seed=3, metadata="doc-embeddings v1")
        path = tmp_path / "graph.clrh"
        persist_index(index, path)
        back = load_index(path)
        assert back.metadata == "doc-embeddings v1"
        assert back.ids == ids
        assert back.params == index.params
        assert back.seed == index.seed
        rng = np.random.default_rng(11)
        for q in unit_rows(rng, 5, 16):
            assert ann_search(back, q, k=10) == ann_search(index, q, k=10)

    def test_checksum_detects_corruption(self, tmp_path):
        _, _, index = _build(n=60)
        path = tmp_path / "graph.clrh"
        persist_index(index, path)
        blob = bytearray(path.read_bytes())
        blob[len(blob) // 2] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(DataError, match="(?i)checksum|crc"):
            load_index(path)

    def test_truncated_file_rejected(self, tmp_path):
        _, _, index = _build(n=60)
        path = tmp_path / "graph.clrh"
        persist_index(index, path)
        path.write_bytes(path.read_bytes()[:40])
        with pytest.raises(DataError):
            load_index(path)


class TestRetrieverEstimator:
    def test_params(self):
        r = HnswRetriever(m=8, ef_construction=50, seed=5)
        params = r.get_params()
        assert params["m"] == 8 and params["ef_construction"] == 50 and params["seed"] == 5

    def test_fit_search_matches_function_path(self):
        rng = np.random.default_rng(0)
        docs = unit_rows(rng, 120, 16)
        ids = [f"d{i}" for i in range(120)]
        emb = EmbeddingMatrix(docs, ids)
        r = HnswRetriever(seed=0).fit(emb)
        direct = build_hnsw(docs, ids=ids, seed=0)
        q = docs[5]
        assert r.search(q, k=7, ef=60) == ann_search(direct, q, k=7, ef=60)
