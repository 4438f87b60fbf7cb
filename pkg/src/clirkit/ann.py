"""From-scratch HNSW graph index over cosine distance.

Multi-layer proximity graph: node levels are drawn from the geometric
distribution floor(-ln(u) * mL) with mL = 1/ln(M); search descends greedily
through the upper layers and runs a best-first beam of width ef at layer 0.
Neighbor selection is the simple distance-ordered rule (closest M), degree is
capped at 2M on layer 0 and M above. Indices are immutable once built;
there are no deletions, rebuilding is the only update path.

Internal navigation uses float32 distances (1 - dot); reported similarities
come from the shared float64 kernel in dense.cosine_scores, so a search with
ef = corpus size reproduces exact retrieval bit-for-bit.
"""

from __future__ import annotations

import heapq
import math
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .dense import (
    EmbeddingMatrix,
    NORM_TOLERANCE_LOOSE,
    NORM_TOLERANCE_STRICT,
    cosine_scores,
)
from .errors import DataError, UsageError

HNSW_MAGIC = b"CLRH"
HNSW_VERSION = 1

DEFAULT_M = 16
DEFAULT_EF_CONSTRUCTION = 200
DEFAULT_EF_FLOOR = 50


@dataclass(frozen=True)
class HnswParams:
    m: int = DEFAULT_M
    ef_construction: int = DEFAULT_EF_CONSTRUCTION

    def __post_init__(self):
        if self.m < 2:
            raise UsageError(f"M must be >= 2, got {self.m}")
        if self.ef_construction < 1:
            raise UsageError(f"ef_construction must be >= 1, got {self.ef_construction}")

    @property
    def level_multiplier(self) -> float:
        return 1.0 / math.log(self.m)


def ef_for_k(k: int) -> int:
    """Default search beam width: max(50, 2k)."""
    return max(DEFAULT_EF_FLOOR, 2 * k)


def _unit_checked(matrix: np.ndarray, label: str) -> np.ndarray:
    matrix = np.ascontiguousarray(matrix, dtype=np.float32)
    norms = np.sqrt((matrix.astype(np.float64) ** 2).sum(axis=1))
    deviation = np.abs(norms - 1.0)
    worst = int(deviation.argmax())
    if deviation[worst] > NORM_TOLERANCE_LOOSE:
        raise DataError(
            f"{label}: row {worst} has norm {norms[worst]:.6f}, not unit-norm"
        )
    for row in np.flatnonzero(deviation > NORM_TOLERANCE_STRICT):
        matrix[row] = (matrix[row].astype(np.float64) / norms[row]).astype(np.float32)
    return matrix


class HnswIndex:
    """Built graph: vectors, per-node levels, layered adjacency, entry point.

    Layer-0 adjacency lives in a preallocated (n, 2M) int32 block; upper
    layers are sparse per-node lists (few nodes have them).
    """

    def __init__(self, vectors: np.ndarray, ids: list[str], params: HnswParams,
                 seed: int, metadata: str = ""):
        self.vectors = vectors
        self.ids = list(ids)
        self.params = params
        self.seed = seed
        self.metadata = metadata
        n = vectors.shape[0]
        self.levels = np.zeros(n, dtype=np.int32)
        self.entry_point = 0
        self.max_level = 0
        self._adj0 = np.full((n, 2 * params.m), -1, dtype=np.int32)
        self._cnt0 = np.zeros(n, dtype=np.int32)
        self._upper: dict[int, list[list[int]]] = {}
        self._visited = np.zeros(n, dtype=np.int64)
        self._epoch = 0

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def __len__(self) -> int:
        return int(self.vectors.shape[0])

    def neighbors(self, node: int, layer: int) -> list[int]:
        if layer == 0:
            return self._adj0[node, : self._cnt0[node]].tolist()
        lists = self._upper.get(node)
        if lists is None or layer > len(lists):
            return []
        return list(lists[layer - 1])

    def _neighbor_array(self, node: int, layer: int) -> np.ndarray:
        if layer == 0:
            return self._adj0[node, : self._cnt0[node]]
        lists = self._upper.get(node)
        if lists is None or layer > len(lists):
            return np.empty(0, dtype=np.int32)
        return np.asarray(lists[layer - 1], dtype=np.int32)

    def _set_neighbors(self, node: int, layer: int, new: list[int]) -> None:
        if layer == 0:
            self._cnt0[node] = len(new)
            self._adj0[node, : len(new)] = new
        else:
            self._upper[node][layer - 1] = list(new)

    # -- traversal ---------------------------------------------------------

    def _distance(self, node: int, q: np.ndarray) -> float:
        return 1.0 - float(np.dot(self.vectors[node], q))

    def _greedy_descent(self, q: np.ndarray, entry: int, layer: int) -> int:
        cur = entry
        cur_dist = self._distance(cur, q)
        while True:
            neigh = self._neighbor_array(cur, layer)
            if neigh.size == 0:
                return cur
            dists = 1.0 - self.vectors[neigh] @ q
            j = int(np.lexsort((neigh, dists))[0])
            if float(dists[j]) < cur_dist:
                cur = int(neigh[j])
                cur_dist = float(dists[j])
            else:
                return cur

    def _search_layer(self, q: np.ndarray, entries: list[int], ef: int, layer: int
                      ) -> list[tuple[float, int]]:
        """Best-first beam search from one or more entry points; returns
        (distance, node) ascending."""
        self._epoch += 1
        epoch = self._epoch
        stamp = self._visited
        candidates: list[tuple[float, int]] = []
        # max-heap of the ef closest, as (-distance, node)
        best: list[tuple[float, int]] = []
        for entry in entries:
            if stamp[entry] == epoch:
                continue
            stamp[entry] = epoch
            d0 = self._distance(entry, q)
            candidates.append((d0, entry))
            best.append((-d0, entry))
        heapq.heapify(candidates)
        heapq.heapify(best)
        while len(best) > ef:
            heapq.heappop(best)
        while candidates:
            dist, node = heapq.heappop(candidates)
            if dist > -best[0][0] and len(best) >= ef:
                break
            neigh = self._neighbor_array(node, layer)
            if neigh.size == 0:
                continue
            fresh = neigh[stamp[neigh] != epoch]
            if fresh.size == 0:
                continue
            stamp[fresh] = epoch
            dists = (1.0 - self.vectors[fresh] @ q).tolist()
            for x, dx in zip(fresh.tolist(), dists):
                if len(best) < ef:
                    heapq.heappush(candidates, (dx, x))
                    heapq.heappush(best, (-dx, x))
                elif dx < -best[0][0]:
                    heapq.heappush(candidates, (dx, x))
                    heapq.heapreplace(best, (-dx, x))
        return sorted((-nd, node) for nd, node in best)


def build_hnsw(
    docs: EmbeddingMatrix | np.ndarray,
    ids: list[str] | None = None,
    params: HnswParams | None = None,
    seed: int = 0,
    metadata: str = "",
) -> HnswIndex:
    """Insert every row in order; deterministic for a fixed seed."""
    if isinstance(docs, EmbeddingMatrix):
        matrix, ids = docs.matrix, docs.ids
    else:
        matrix = docs
        if ids is None:
            raise UsageError("ids are required when passing a raw matrix")
    if matrix.ndim != 2 or matrix.shape[0] == 0:
        raise DataError("document matrix must be 2-D and non-empty")
    if len(ids) != matrix.shape[0]:
        raise DataError(f"{len(ids)} ids for {matrix.shape[0]} rows")
    matrix = _unit_checked(matrix, "hnsw build input")
    params = params or HnswParams()
    index = HnswIndex(matrix, list(ids), params, seed, metadata)
    rng = np.random.default_rng(seed)
    ml = params.level_multiplier
    m = params.m
    ef_c = params.ef_construction

    for i in range(matrix.shape[0]):
        u = 1.0 - rng.random()  # in (0, 1]
        level = int(math.floor(-math.log(u) * ml))
        index.levels[i] = level
        if level > 0:
            index._upper[i] = [[] for _ in range(level)]
        if i == 0:
            index.entry_point = 0
            index.max_level = level
            continue
        q = matrix[i]
        cur = index.entry_point
        for layer in range(index.max_level, level, -1):
            cur = index._greedy_descent(q, cur, layer)
        entries = [cur]
        for layer in range(min(level, index.max_level), -1, -1):
            found = index._search_layer(q, entries, ef_c, layer)
            # Layer 0 allows degree 2M, so link up to the cap there; the base
            # graph needs the extra density for high-recall beam search.
            cap = 2 * m if layer == 0 else m
            selected = found[:cap]
            index._set_neighbors(i, layer, [node for _, node in selected])
            for _, node in selected:
                current = index.neighbors(node, layer)
                current.append(i)
                if len(current) > cap:
                    current = _closest(index, node, current, cap)
                index._set_neighbors(node, layer, current)
            # the whole result set seeds the next layer down
            entries = [node for _, node in found]
        if level > index.max_level:
            index.entry_point = i
            index.max_level = level
    return index


def _closest(index: HnswIndex, node: int, candidates: list[int], cap: int) -> list[int]:
    """Simple selection: the cap nearest candidates, ties by node id ascending."""
    arr = np.asarray(candidates, dtype=np.int64)
    dists = 1.0 - index.vectors[arr] @ index.vectors[node]
    order = np.lexsort((arr, dists))[:cap]
    return [int(arr[j]) for j in order]


def ann_search(
    index: HnswIndex, query: np.ndarray, k: int, ef: int | None = None
) -> list[tuple[str, float]]:
    """Top-k (doc_id, similarity) descending; similarity = 1 - cosine distance.

    ef defaults to max(50, 2k); with ef = corpus size the result equals exact
    retrieval, including scores.
    """
    if k < 1:
        raise UsageError(f"k must be >= 1, got {k}")
    if ef is None:
        ef = ef_for_k(k)
    if ef < k:
        raise UsageError(f"ef ({ef}) must be >= k ({k})")
    q = np.ascontiguousarray(query, dtype=np.float32).reshape(-1)
    if q.shape[0] != index.dim:
        raise DataError(f"query dim {q.shape[0]} does not match index dim {index.dim}")
    cur = index.entry_point
    for layer in range(index.max_level, 0, -1):
        cur = index._greedy_descent(q, cur, layer)
    found = index._search_layer(q, [cur], ef, 0)
    nodes = np.asarray([node for _, node in found], dtype=np.int64)
    scores = cosine_scores(index.vectors[nodes], q)
    order = np.lexsort((nodes, -scores))[:k]
    return [(index.ids[int(nodes[j])], float(scores[j])) for j in order]


def reachable_nodes(index: HnswIndex) -> set[int]:
    """Layer-0 nodes reachable from the entry point (connectivity check)."""
    seen = {index.entry_point}
    frontier = [index.entry_point]
    while frontier:
        node = frontier.pop()
        for x in index.neighbors(node, 0):
            if x not in seen:
                seen.add(x)
                frontier.append(x)
    return seen


class HnswRetriever(BaseEstimator):
    """Estimator wrapper: fit builds the graph, search runs the beam."""

    def __init__(self, m: int = DEFAULT_M, ef_construction: int = DEFAULT_EF_CONSTRUCTION,
                 seed: int = 0):
        self.m = m
        self.ef_construction = ef_construction
        self.seed = seed

    def fit(self, embeddings: EmbeddingMatrix, y=None):
        self.index_ = build_hnsw(
            embeddings, params=HnswParams(self.m, self.ef_construction), seed=self.seed
        )
        return self

    def search(self, query: np.ndarray, k: int = 100, ef: int | None = None
               ) -> list[tuple[str, float]]:
        check_is_fitted(self, "index_")
        return ann_search(self.index_, query, k, ef)


# ---------------------------------------------------------------------------
# Binary persistence (format documented in FORMATS.md)
# ---------------------------------------------------------------------------


def persist_index(index: HnswIndex, path: str | Path) -> None:
    out = bytearray()
    out += struct.pack("<4sI", HNSW_MAGIC, HNSW_VERSION)
    out += struct.pack(
        "<IIdq", index.params.m, index.params.ef_construction,
        index.params.level_multiplier, index.seed,
    )
    out += struct.pack("<IQIQ", index.dim, len(index), index.max_level, index.entry_point)
    meta_blob = index.metadata.encode("utf-8")
    out += struct.pack("<I", len(meta_blob))
    out += meta_blob
    ids_blob = "\n".join(index.ids).encode("utf-8")
    out += struct.pack("<Q", len(ids_blob))
    out += ids_blob
    out += index.levels.astype("<i4").tobytes()
    for node in range(len(index)):
        for layer in range(int(index.levels[node]) + 1):
            neigh = index.neighbors(node, layer)
            out += struct.pack("<I", len(neigh))
            out += np.asarray(neigh, dtype="<i4").tobytes()
    out += index.vectors.astype("<f4", copy=False).tobytes()
    out += struct.pack("<I", zlib.crc32(bytes(out)) & 0xFFFFFFFF)
    Path(path).write_bytes(bytes(out))


def load_index(path: str | Path) -> HnswIndex:
    blob = Path(path).read_bytes()
    if len(blob) < 12:
        raise DataError(f"{path}: file too short to be an index")
    stored_crc = struct.unpack("<I", blob[-4:])[0]
    if zlib.crc32(blob[:-4]) & 0xFFFFFFFF != stored_crc:
        raise DataError(f"{path}: checksum mismatch, file corrupted or truncated")
    pos = 0

    def take(fmt: str):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(blob) - 4:
            raise DataError(f"{path}: truncated index file")
        values = struct.unpack_from(fmt, blob, pos)
        pos += size
        return values

    magic, version = take("<4sI")
    if magic != HNSW_MAGIC:
        raise DataError(f"{path}: not an HNSW index file (bad magic {magic!r})")
    if version != HNSW_VERSION:
        raise DataError(f"{path}: unsupported index version {version}")
    m, ef_construction, _ml, seed = take("<IIdq")
    dim, n, max_level, entry_point = take("<IQIQ")
    (meta_len,) = take("<I")
    metadata = blob[pos : pos + meta_len].decode("utf-8")
    pos += meta_len
    (ids_nbytes,) = take("<Q")
    ids = blob[pos : pos + ids_nbytes].decode("utf-8").split("\n") if ids_nbytes else []
    pos += ids_nbytes
    if len(ids) != n:
        raise DataError(f"{path}: id table has {len(ids)} entries for {n} nodes")
    levels = np.frombuffer(blob, dtype="<i4", count=n, offset=pos).astype(np.int32)
    pos += 4 * n
    adjacency: list[list[list[int]]] = []
    for node in range(n):
        layers: list[list[int]] = []
        for _layer in range(int(levels[node]) + 1):
            (cnt,) = take("<I")
            neigh = np.frombuffer(blob, dtype="<i4", count=cnt, offset=pos)
            pos += 4 * cnt
            layers.append([int(x) for x in neigh])
        adjacency.append(layers)
    vectors = (
        np.frombuffer(blob, dtype="<f4", count=n * dim, offset=pos)
        .reshape(n, dim)
        .astype(np.float32)
    )
    pos += 4 * n * dim
    if pos != len(blob) - 4:
        raise DataError(f"{path}: {len(blob) - 4 - pos} unexpected trailing bytes")

    index = HnswIndex(vectors, ids, HnswParams(m, ef_construction), seed, metadata)
    index.levels = levels
    index.entry_point = int(entry_point)
    index.max_level = int(max_level)
    for node in range(n):
        layers = adjacency[node]
        if len(layers[0]) > 2 * m or any(len(l) > m for l in layers[1:]):
            raise DataError(f"{path}: node {node} exceeds the degree bounds")
        index._set_neighbors(node, 0, layers[0])
        if len(layers) > 1:
            index._upper[node] = [list(l) for l in layers[1:]]
    return index
