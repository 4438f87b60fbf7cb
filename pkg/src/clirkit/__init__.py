"""Cross-lingual retrieval experimentation engine.

Lexical (BM25) and dense retrieval over a shared corpus model, a from-scratch
graph ANN index with bit-identical score parity against exact search, the
re-ranking candidate pipeline, per-pair evaluation, linguistic analyses, and
an interleaved latency benchmark.  The `clirkit` CLI binds the modules into a
file-based pipeline.
"""

from .ann import HnswIndex, HnswParams, HnswRetriever, ann_search, build_hnsw, ef_for_k
from .corpus import (
    Corpus,
    CorpusManifest,
    Document,
    Judgment,
    Judgments,
    LanguagePair,
    Query,
    QuerySet,
)
from .dense import (
    EmbeddingMatrix,
    ExactDenseRetriever,
    HashedTextEmbedder,
    cosine_scores,
    exact_topk,
    toy_embed,
)
from .errors import DataError, EngineError, UsageError
from .evaluation import MetricReport, RunList, evaluate_run, ndcg_at_k, recall_at_k
from .lexical import Bm25Params, Bm25Retriever, InvertedIndex, bm25_search, build_index
from .rerank import CandidateSet, TrainingPair, apply_external_scores, make_candidates, sample_negatives
from .tokenization import tokenize, truncate_text

__version__ = "0.1.0"

__all__ = [
    "Bm25Params",
    "Bm25Retriever",
    "CandidateSet",
    "Corpus",
    "CorpusManifest",
    "DataError",
    "Document",
    "EmbeddingMatrix",
    "EngineError",
    "ExactDenseRetriever",
    "HashedTextEmbedder",
    "HnswIndex",
    "HnswParams",
    "HnswRetriever",
    "InvertedIndex",
    "Judgment",
    "Judgments",
    "LanguagePair",
    "MetricReport",
    "Query",
    "QuerySet",
    "RunList",
    "TrainingPair",
    "UsageError",
    "ann_search",
    "apply_external_scores",
    "bm25_search",
    "build_hnsw",
    "build_index",
    "cosine_scores",
    "ef_for_k",
    "evaluate_run",
    "exact_topk",
    "make_candidates",
    "ndcg_at_k",
    "recall_at_k",
    "sample_negatives",
    "tokenize",
    "toy_embed",
    "truncate_text",
    "__version__",
]
