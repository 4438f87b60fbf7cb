"""Dense retrieval: embedding-file IO, exact cosine top-k, hashed toy embedder.

Embedding matrices are float32 with unit-norm rows. Cosine similarity over
unit vectors is the plain dot product; all reported scores flow through one
float64 kernel whose per-row result does not depend on which other rows are
scored, so exact and graph-based retrieval agree bit-for-bit on shared rows.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .errors import DataError, UsageError

EMBEDDING_MAGIC = b"CLRE"
EMBEDDING_VERSION = 1
DTYPE_FLOAT32_LE = 1
_HEADER = struct.Struct("<4sIQIB11x")  # magic, version, rows, dim, dtype, pad to 32

# |row norm - 1| <= STRICT: accepted as-is; <= LOOSE: re-normalized; else rejected.
NORM_TOLERANCE_STRICT = 1e-4
NORM_TOLERANCE_LOOSE = 1e-2

MIN_TOY_DIM = 8
DEFAULT_BLOCK_SIZE = 256


@dataclass
class EmbeddingMatrix:
    """Unit-norm float32 matrix with a row-aligned doc_id map."""

    matrix: np.ndarray
    ids: list[str]
    renormalized_rows: list[int] = field(default_factory=list)

    def __post_init__(self):
        if self.matrix.ndim != 2:
            raise DataError(f"embedding matrix must be 2-D, got {self.matrix.ndim}-D")
        if self.matrix.dtype != np.float32:
            raise DataError(f"embedding matrix must be float32, got {self.matrix.dtype}")
        if len(self.ids) != self.matrix.shape[0]:
            raise DataError(
                f"id map has {len(self.ids)} entries for {self.matrix.shape[0]} rows"
            )
        if len(set(self.ids)) != len(self.ids):
            raise DataError("id map contains duplicate ids")

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1])

    def __len__(self) -> int:
        return int(self.matrix.shape[0])


def cosine_scores(doc_rows: np.ndarray, query_vec: np.ndarray) -> np.ndarray:
    """Float64 dot product of each doc row with the query.

    Elementwise product then a per-row sum: float32 inputs widen exactly to
    float64 and the row reduction is independent of the number of rows passed,
    which is what makes subset scoring bit-identical to full scoring.
    """
    docs64 = doc_rows.astype(np.float64, copy=False)
    q64 = query_vec.astype(np.float64, copy=False)
    return (docs64 * q64).sum(axis=1)


# ---------------------------------------------------------------------------
# Embedding file IO (format documented in FORMATS.md)
# ---------------------------------------------------------------------------


def save_embeddings(matrix: np.ndarray, ids: list[str], matrix_path, ids_path) -> None:
    matrix = np.ascontiguousarray(matrix, dtype=np.float32)
    if matrix.ndim != 2:
        raise DataError(f"embedding matrix must be 2-D, got {matrix.ndim}-D")
    if len(ids) != matrix.shape[0]:
        raise DataError(f"{len(ids)} ids for {matrix.shape[0]} rows")
    rows, dim = matrix.shape
    header = _HEADER.pack(EMBEDDING_MAGIC, EMBEDDING_VERSION, rows, dim, DTYPE_FLOAT32_LE)
    with open(matrix_path, "wb") as fh:
        fh.write(header)
        fh.write(matrix.astype("<f4", copy=False).tobytes())
    with open(ids_path, "w", encoding="utf-8") as fh:
        for doc_id in ids:
            fh.write(doc_id + "\n")


def load_embeddings(matrix_path, ids_path) -> EmbeddingMatrix:
    """Load and validate an embedding file plus its row-aligned ids file.

    Rows whose norm deviates from 1 by more than 1e-4 but at most 1e-2 are
    re-normalized (recorded in renormalized_rows); larger deviations reject
    the file. Non-finite values reject the file.
    """
    blob = Path(matrix_path).read_bytes()
    if len(blob) < _HEADER.size:
        raise DataError(f"{matrix_path}: file shorter than the 32-byte header")
    magic, version, rows, dim, dtype_tag = _HEADER.unpack_from(blob)
    if magic != EMBEDDING_MAGIC:
        raise DataError(f"{matrix_path}: not an embedding file (bad magic {magic!r})")
    if version != EMBEDDING_VERSION:
        raise DataError(f"{matrix_path}: unsupported version {version}")
    if dtype_tag != DTYPE_FLOAT32_LE:
        raise DataError(f"{matrix_path}: unsupported dtype tag {dtype_tag}")
    if dim < 1:
        raise DataError(f"{matrix_path}: dimension must be >= 1, got {dim}")
    expected = rows * dim * 4
    payload = blob[_HEADER.size :]
    if len(payload) != expected:
        raise DataError(
            f"{matrix_path}: header promises {rows} x {dim} float32 "
            f"({expected} bytes) but payload has {len(payload)} bytes"
        )
    matrix = np.frombuffer(payload, dtype="<f4").reshape(rows, dim).astype(np.float32)
    with open(ids_path, encoding="utf-8") as fh:
        ids = [line.rstrip("\n") for line in fh]
    while ids and ids[-1] == "":
        ids.pop()
    if len(ids) != rows:
        raise DataError(
            f"{ids_path}: {len(ids)} ids for {rows} embedding rows"
        )
    if not np.isfinite(matrix).all():
        bad = int(np.argwhere(~np.isfinite(matrix).all(axis=1))[0][0])
        raise DataError(f"{matrix_path}: non-finite values in row {bad}")
    norms = np.sqrt((matrix.astype(np.float64) ** 2).sum(axis=1))
    deviation = np.abs(norms - 1.0)
    worst = int(deviation.argmax()) if rows else 0
    if rows and deviation[worst] > NORM_TOLERANCE_LOOSE:
        raise DataError(
            f"{matrix_path}: row {worst} has norm {norms[worst]:.6f}, outside "
            f"the {NORM_TOLERANCE_LOOSE} re-normalization tolerance"
        )
    renorm = np.flatnonzero(deviation > NORM_TOLERANCE_STRICT)
    for row in renorm:
        matrix[row] = (matrix[row].astype(np.float64) / norms[row]).astype(np.float32)
    return EmbeddingMatrix(matrix, ids, renormalized_rows=[int(r) for r in renorm])


# ---------------------------------------------------------------------------
# Exact top-k retrieval
# ---------------------------------------------------------------------------


def exact_topk(
    query_matrix: np.ndarray,
    doc_matrix: np.ndarray,
    doc_ids: list[str],
    k: int,
    block_size: int = DEFAULT_BLOCK_SIZE,
) -> list[list[tuple[str, float]]]:
    """Per query: top-k (doc_id, cosine) descending, ties by doc row ascending.

    Queries are processed in blocks to bound memory.
    """
    if k < 1:
        raise UsageError(f"k must be >= 1, got {k}")
    if block_size < 1:
        raise UsageError(f"block size must be >= 1, got {block_size}")
    if query_matrix.ndim != 2 or doc_matrix.ndim != 2:
        raise DataError("query and doc matrices must be 2-D")
    if query_matrix.shape[1] != doc_matrix.shape[1]:
        raise DataError(
            f"dimension mismatch: queries d={query_matrix.shape[1]}, "
            f"docs d={doc_matrix.shape[1]}"
        )
    if len(doc_ids) != doc_matrix.shape[0]:
        raise DataError(f"{len(doc_ids)} ids for {doc_matrix.shape[0]} doc rows")
    n_docs = doc_matrix.shape[0]
    k = min(k, n_docs)
    results: list[list[tuple[str, float]]] = []
    for start in range(0, query_matrix.shape[0], block_size):
        for q in query_matrix[start : start + block_size]:
            scores = cosine_scores(doc_matrix, q)
            order = np.argsort(-scores, kind="stable")[:k]
            results.append([(doc_ids[i], float(scores[i])) for i in order])
    return results


class ExactDenseRetriever(BaseEstimator):
    """Estimator wrapped around exact_topk; fit stores the doc matrix."""

    def __init__(self, block_size: int = DEFAULT_BLOCK_SIZE):
        self.block_size = block_size

    def fit(self, embeddings: EmbeddingMatrix, y=None):
        self.doc_matrix_ = embeddings.matrix
        self.doc_ids_ = list(embeddings.ids)
        return self

    def search(self, query_matrix: np.ndarray, k: int = 100) -> list[list[tuple[str, float]]]:
        check_is_fitted(self, "doc_matrix_")
        return exact_topk(query_matrix, self.doc_matrix_, self.doc_ids_, k, self.block_size)


# ---------------------------------------------------------------------------
# Toy embedder: deterministic hashed bag of words
# ---------------------------------------------------------------------------


def _token_slot(token: str, dim: int, seed: int) -> tuple[int, float]:
    digest = hashlib.blake2b(f"{seed}|{token}".encode("utf-8"), digest_size=8).digest()
    index = int.from_bytes(digest[:4], "big") % dim
    sign = 1.0 if digest[4] & 1 else -1.0
    return index, sign


def toy_embed(texts: list[str], dim: int = 256, seed: int = 0) -> np.ndarray:
    """Signed-hash bag-of-words embeddings, L2-normalized float32.

    Identical texts map to identical rows; texts sharing no tokens land on
    (nearly) orthogonal rows. Texts with no tokens (or a fully cancelled sum)
    get a deterministic unit fallback vector.
    """
    from .tokenization import tokenize

    if dim < MIN_TOY_DIM:
        raise UsageError(f"toy embedding dim must be >= {MIN_TOY_DIM}, got {dim}")
    fallback_slot, _ = _token_slot("\x00fallback", dim, seed)
    out = np.zeros((len(texts), dim), dtype=np.float64)
    for row, text in enumerate(texts):
        for token in tokenize(text):
            index, sign = _token_slot(token, dim, seed)
            out[row, index] += sign
        norm = float(np.sqrt((out[row] ** 2).sum()))
        if norm == 0.0:
            out[row, fallback_slot] = 1.0
        else:
            out[row] /= norm
    return out.astype(np.float32)


class HashedTextEmbedder(BaseEstimator, TransformerMixin):
    """Stateless transformer form of toy_embed for pipeline composition."""

    def __init__(self, dim: int = 256, seed: int = 0):
        self.dim = dim
        self.seed = seed

    def fit(self, X, y=None):
        if self.dim < MIN_TOY_DIM:
            raise UsageError(f"toy embedding dim must be >= {MIN_TOY_DIM}, got {self.dim}")
        self.n_features_out_ = self.dim
        return self

    def transform(self, X: list[str]) -> np.ndarray:
        return toy_embed(list(X), self.dim, self.seed)
