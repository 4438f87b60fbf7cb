"""BM25 inverted index: construction, top-k search, binary persistence.

Scoring uses the non-negative IDF variant ln(1 + (N - df + 0.5)/(df + 0.5)),
k1 = 1.2 and b = 0.75 by default. Ties are broken by document row ascending,
and zero-score documents are omitted from results.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .corpus import Corpus
from .errors import DataError, UsageError
from .tokenization import tokenize

INDEX_MAGIC = b"CLXI"
INDEX_VERSION = 1

FIELD_ORIGINAL = "original"
FIELD_TRANSLATED = "translated"
_FIELD_TAGS = {FIELD_ORIGINAL: 0, FIELD_TRANSLATED: 1}
_TAG_FIELDS = {v: k for k, v in _FIELD_TAGS.items()}


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 1.2
    b: float = 0.75

    def __post_init__(self):
        if not (self.k1 >= 0):
            raise UsageError(f"k1 must be >= 0, got {self.k1}")
        if not (0.0 <= self.b <= 1.0):
            raise UsageError(f"b must be in [0, 1], got {self.b}")


class InvertedIndex:
    """Postings plus the per-document statistics BM25 needs.

    postings: term -> (doc rows ascending, term frequencies), both int32.
    """

    def __init__(
        self,
        postings: dict[str, tuple[np.ndarray, np.ndarray]],
        doc_lengths: np.ndarray,
        doc_ids: list[str],
        params: Bm25Params,
        field: str,
    ):
        self.postings = postings
        self.doc_lengths = np.asarray(doc_lengths, dtype=np.int32)
        self.doc_ids = list(doc_ids)
        self.params = params
        self.field = field
        self.doc_count = len(doc_ids)
        total = int(self.doc_lengths.sum())
        self.avg_doc_length = total / self.doc_count if self.doc_count else 0.0

    def idf(self, term: str) -> float:
        entry = self.postings.get(term)
        df = len(entry[0]) if entry is not None else 0
        n = self.doc_count
        return math.log(1.0 + (n - df + 0.5) / (df + 0.5))


def field_text(doc, field: str) -> str:
    if field == FIELD_ORIGINAL:
        return doc.text
    if field == FIELD_TRANSLATED:
        if doc.translated_text is None:
            raise DataError(
                f"document {doc.doc_id!r} has no translated_text but the "
                f"translated field was requested"
            )
        return doc.translated_text
    raise UsageError(f"unknown field selector {field!r}")


def build_index(
    corpus: Corpus, params: Bm25Params | None = None, field: str = FIELD_ORIGINAL
) -> InvertedIndex:
    """Tokenize the selected field of every document and build postings."""
    if len(corpus) == 0:
        raise DataError("cannot index an empty corpus")
    if field not in _FIELD_TAGS:
        raise UsageError(f"unknown field selector {field!r}")
    params = params or Bm25Params()
    raw: dict[str, list[tuple[int, int]]] = {}
    lengths = np.zeros(len(corpus), dtype=np.int32)
    for row, doc in enumerate(corpus):
        tokens = tokenize(field_text(doc, field))
        lengths[row] = len(tokens)
        counts: dict[str, int] = {}
        for tok in tokens:
            counts[tok] = counts.get(tok, 0) + 1
        for term, tf in counts.items():
            raw.setdefault(term, []).append((row, tf))
    postings = {
        term: (
            np.array([r for r, _ in entries], dtype=np.int32),
            np.array([tf for _, tf in entries], dtype=np.int32),
        )
        for term, entries in raw.items()
    }
    return InvertedIndex(postings, lengths, corpus.doc_ids, params, field)


def bm25_scores(index: InvertedIndex, query_text: str) -> np.ndarray:
    """Accumulated BM25 scores for every document row (float64).

    Repeated query tokens contribute once per occurrence.
    """
    k1 = index.params.k1
    b = index.params.b
    scores = np.zeros(index.doc_count, dtype=np.float64)
    if index.avg_doc_length == 0.0:
        return scores
    norm_len = index.doc_lengths.astype(np.float64) / index.avg_doc_length
    for term in tokenize(query_text):
        entry = index.postings.get(term)
        if entry is None:
            continue
        rows, tfs = entry
        tf = tfs.astype(np.float64)
        idf = index.idf(term)
        contrib = idf * (tf * (k1 + 1.0)) / (tf + k1 * (1.0 - b + b * norm_len[rows]))
        scores[rows] += contrib
    return scores


def bm25_search(index: InvertedIndex, query_text: str, k: int) -> list[tuple[str, float]]:
    """Top-k (doc_id, score) by score descending, ties by doc row ascending.

    Documents matching no query term are omitted; an empty query yields an
    empty result.
    """
    if k < 1:
        raise UsageError(f"k must be >= 1, got {k}")
    scores = bm25_scores(index, query_text)
    rows = np.flatnonzero(scores > 0.0)
    if rows.size == 0:
        return []
    order = np.argsort(-scores[rows], kind="stable")[:k]
    return [(index.doc_ids[rows[i]], float(scores[rows[i]])) for i in order]


class Bm25Retriever(BaseEstimator):
    """Estimator wrapper: fit builds the inverted index, search answers queries."""

    def __init__(self, k1: float = 1.2, b: float = 0.75, field: str = FIELD_ORIGINAL):
        self.k1 = k1
        self.b = b
        self.field = field

    def fit(self, corpus: Corpus, y=None):
        self.index_ = build_index(corpus, Bm25Params(self.k1, self.b), self.field)
        return self

    def search(self, query_text: str, k: int = 100) -> list[tuple[str, float]]:
        check_is_fitted(self, "index_")
        return bm25_search(self.index_, query_text, k)


# ---------------------------------------------------------------------------
# Binary persistence (format documented in FORMATS.md)
# ---------------------------------------------------------------------------


def save_index(index: InvertedIndex, path: str | Path) -> None:
    """Write the index to a single binary file; terms in sorted order so that
    identical indices always serialize byte-identically."""
    ids_blob = "\n".join(index.doc_ids).encode("utf-8")
    out = bytearray()
    out += struct.pack("<4sI", INDEX_MAGIC, INDEX_VERSION)
    out += struct.pack("<B", _FIELD_TAGS[index.field])
    out += struct.pack("<dd", index.params.k1, index.params.b)
    out += struct.pack("<Qd", index.doc_count, index.avg_doc_length)
    out += index.doc_lengths.astype("<i4").tobytes()
    out += struct.pack("<Q", len(ids_blob))
    out += ids_blob
    out += struct.pack("<Q", len(index.postings))
    for term in sorted(index.postings):
        rows, tfs = index.postings[term]
        term_bytes = term.encode("utf-8")
        out += struct.pack("<H", len(term_bytes))
        out += term_bytes
        out += struct.pack("<I", len(rows))
        out += rows.astype("<i4").tobytes()
        out += tfs.astype("<i4").tobytes()
    Path(path).write_bytes(bytes(out))


class _Reader:
    def __init__(self, blob: bytes, path):
        self.blob = blob
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise DataError(f"{self.path}: truncated index file")
        chunk = self.blob[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_index(path: str | Path) -> InvertedIndex:
    reader = _Reader(Path(path).read_bytes(), path)
    magic, version = reader.unpack("<4sI")
    if magic != INDEX_MAGIC:
        raise DataError(f"{path}: not a lexical index file (bad magic {magic!r})")
    if version != INDEX_VERSION:
        raise DataError(f"{path}: unsupported index version {version}")
    (field_tag,) = reader.unpack("<B")
    if field_tag not in _TAG_FIELDS:
        raise DataError(f"{path}: unknown field tag {field_tag}")
    k1, b = reader.unpack("<dd")
    doc_count, avg_len = reader.unpack("<Qd")
    lengths = np.frombuffer(reader.take(4 * doc_count), dtype="<i4").astype(np.int32)
    (ids_nbytes,) = reader.unpack("<Q")
    doc_ids = reader.take(ids_nbytes).decode("utf-8").split("\n") if ids_nbytes else []
    if len(doc_ids) != doc_count:
        raise DataError(
            f"{path}: id table has {len(doc_ids)} entries for {doc_count} documents"
        )
    (term_count,) = reader.unpack("<Q")
    postings: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    for _ in range(term_count):
        (term_len,) = reader.unpack("<H")
        term = reader.take(term_len).decode("utf-8")
        (df,) = reader.unpack("<I")
        rows = np.frombuffer(reader.take(4 * df), dtype="<i4").astype(np.int32)
        tfs = np.frombuffer(reader.take(4 * df), dtype="<i4").astype(np.int32)
        postings[term] = (rows, tfs)
    if reader.pos != len(reader.blob):
        raise DataError(f"{path}: {len(reader.blob) - reader.pos} trailing bytes")
    index = InvertedIndex(postings, lengths, doc_ids, Bm25Params(k1, b), _TAG_FIELDS[field_tag])
    # Trust the stored average so scoring is bit-identical after a round trip.
    index.avg_doc_length = avg_len
    return index
