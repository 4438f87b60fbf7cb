"""The engine's file contracts, implemented from FORMATS.md.

This module deliberately shares no code with the engine: the files are the
interface, and two independent implementations keep the contract honest.
All writers go through a temp-file-plus-rename so a crashed job never leaves
a half-written artifact behind.
"""

import hashlib
import json
import os
import struct
from datetime import date
from pathlib import Path

import numpy as np

from .errors import DataError, UsageError

EMBEDDING_MAGIC = b"CLRE"
EMBEDDING_VERSION = 1
DTYPE_FLOAT32_LE = 1
_HEADER = struct.Struct("<4sIQIB11x")  # magic, version, rows, dim, dtype, pad to 32

# loader tolerance on the engine side; we write strictly inside it
UNIT_NORM_TOLERANCE = 1e-4


def atomic_write_bytes(path: str | Path, blob: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(blob)
    os.replace(tmp, path)


def atomic_write_text(path: str | Path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def write_embedding_file(path: str | Path, matrix: np.ndarray, ids: list[str]) -> None:
    """Binary matrix plus `<path>.ids` sidecar, engine-loadable as-is."""
    if matrix.ndim != 2:
        raise UsageError(f"embedding matrix must be 2-D, got {matrix.ndim}-D")
    if matrix.shape[0] != len(ids):
        raise UsageError(f"{len(ids)} ids for {matrix.shape[0]} rows")
    if len(set(ids)) != len(ids):
        raise DataError("duplicate row ids")
    for row_id in ids:
        if not row_id or "\n" in row_id:
            raise DataError(f"invalid row id {row_id!r}")
    out = np.ascontiguousarray(matrix, dtype="<f4")
    if not np.isfinite(out).all():
        raise DataError("non-finite activations in the embedding matrix")
    norms = np.linalg.norm(out.astype(np.float64), axis=1)
    worst = int(np.argmax(np.abs(norms - 1.0))) if len(norms) else 0
    if len(norms) and abs(norms[worst] - 1.0) > UNIT_NORM_TOLERANCE:
        raise DataError(
            f"row {worst} has norm {norms[worst]:.6f}; rows must be unit-norm"
        )
    rows, dim = out.shape
    header = _HEADER.pack(
        EMBEDDING_MAGIC, EMBEDDING_VERSION, rows, dim, DTYPE_FLOAT32_LE
    )
    atomic_write_bytes(path, header + out.tobytes())
    atomic_write_text(Path(str(path) + ".ids"), "\n".join(ids) + ("\n" if ids else ""))


def _read_jsonl(path: str | Path, required: tuple[str, ...]) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed JSON: {exc}") from None
            for key in required:
                if key not in record:
                    raise DataError(f"{path}:{lineno}: missing field {key!r}")
            records.append(record)
    return records


def load_corpus_records(path: str | Path) -> list[dict]:
    """Documents as plain dicts; translated_text stays optional."""
    records = _read_jsonl(path, ("doc_id", "lang", "text"))
    seen = set()
    for record in records:
        if record["doc_id"] in seen:
            raise DataError(f"{path}: duplicate doc_id {record['doc_id']!r}")
        seen.add(record["doc_id"])
    return records


def load_query_records(path: str | Path) -> list[dict]:
    return _read_jsonl(path, ("query_id", "lang", "text"))


def write_corpus_records(path: str | Path, records: list[dict]) -> None:
    lines = []
    for record in records:
        out = {"doc_id": record["doc_id"], "lang": record["lang"], "text": record["text"]}
        if record.get("translated_text") is not None:
            out["translated_text"] = record["translated_text"]
        lines.append(json.dumps(out, ensure_ascii=False))
    atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))


def read_scoring_requests(path: str | Path) -> list[dict]:
    return _read_jsonl(path, ("query_id", "doc_id", "query_text", "doc_text"))


def write_scoring_responses(path: str | Path, rows: list[dict]) -> None:
    lines = [
        json.dumps(
            {"query_id": r["query_id"], "doc_id": r["doc_id"], "score": r["score"]},
            sort_keys=True,
        )
        for r in rows
    ]
    atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))


def load_qrels_records(path: str | Path) -> list[tuple[str, str, int]]:
    """TREC qrels rows as (query_id, doc_id, grade)."""
    rows: list[tuple[str, str, int]] = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 4:
                raise DataError(f"{path}:{lineno}: expected 4 columns, got {len(parts)}")
            try:
                grade = int(parts[3])
            except ValueError:
                raise DataError(f"{path}:{lineno}: grade must be an integer") from None
            if grade < 0:
                raise DataError(f"{path}:{lineno}: negative grade {grade}")
            rows.append((parts[0], parts[2], grade))
    return rows


def read_training_pairs(path: str | Path) -> list[dict]:
    records = _read_jsonl(
        path, ("query_id", "doc_id", "query_text", "doc_text", "label", "difficulty")
    )
    for record in records:
        if record["label"] not in (0, 1):
            raise DataError(f"{path}: label must be 0 or 1, got {record['label']!r}")
    return records


def write_manifest(
    out_path: str | Path, model: str, dim: int | None, produced: str | Path
) -> None:
    """`<out>.manifest.json`: what produced the artifact and its hash."""
    digest = hashlib.sha256(Path(produced).read_bytes()).hexdigest()
    manifest = {
        "model": model,
        "dim": dim,
        "date": date.today().isoformat(),
        "sha256": digest,
    }
    atomic_write_text(
        Path(str(out_path) + ".manifest.json"),
        json.dumps(manifest, indent=2, sort_keys=True) + "\n",
    )
