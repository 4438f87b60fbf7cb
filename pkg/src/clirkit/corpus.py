"""Corpus and query-set handling: ingestion, validation, deduplication,
language rebalancing, query sampling, and length truncation.

Record files are JSON Lines (UTF-8, LF-terminated, one object per line).
Qrels use the four-column TREC convention.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
import unicodedata
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Optional

from .errors import DataError, UsageError
from .tokenization import truncate_text

_LANG_CODE = re.compile(r"^[a-z]{2}$")


@dataclass(frozen=True)
class Document:
    doc_id: str
    lang: str
    text: str
    translated_text: Optional[str] = None


@dataclass(frozen=True)
class Query:
    query_id: str
    lang: str
    text: str


@dataclass(frozen=True)
class Judgment:
    query_id: str
    doc_id: str
    grade: int


@dataclass(frozen=True)
class LanguagePair:
    query_lang: str
    doc_lang: str

    def __str__(self) -> str:
        return f"{self.query_lang}->{self.doc_lang}"


@dataclass
class CorpusManifest:
    dataset_name: str
    retrieval_depth: int
    per_language_doc_counts: dict[str, int]
    truncation_budget: int

    def validate(self, corpus_size: int) -> None:
        if self.retrieval_depth < 1:
            raise DataError(
                f"retrieval depth must be >= 1, got {self.retrieval_depth}"
            )
        total = sum(self.per_language_doc_counts.values())
        if total != corpus_size:
            raise DataError(
                f"manifest language counts sum to {total}, corpus has "
                f"{corpus_size} documents"
            )


def _check_lang(lang: str, languages: Optional[set[str]], where: str) -> None:
    if not isinstance(lang, str) or not _LANG_CODE.match(lang):
        raise DataError(f"{where}: invalid language code {lang!r}")
    if languages is not None and lang not in languages:
        raise DataError(f"{where}: language {lang!r} not in the configured set")


class Corpus:
    """Validated, immutable document collection preserving input order."""

    def __init__(self, documents: Iterable[Document], languages: Optional[set[str]] = None):
        self._docs: list[Document] = []
        self._by_id: dict[str, int] = {}
        for doc in documents:
            where = f"document {doc.doc_id!r}"
            if doc.doc_id in self._by_id:
                raise DataError(f"duplicate doc_id {doc.doc_id!r}")
            _check_lang(doc.lang, languages, where)
            if not doc.text or not doc.text.strip():
                raise DataError(f"{where}: empty text")
            self._by_id[doc.doc_id] = len(self._docs)
            self._docs.append(doc)

    def __len__(self) -> int:
        return len(self._docs)

    def __iter__(self) -> Iterator[Document]:
        return iter(self._docs)

    def __getitem__(self, row: int) -> Document:
        return self._docs[row]

    def get(self, doc_id: str) -> Document:
        try:
            return self._docs[self._by_id[doc_id]]
        except KeyError:
            raise DataError(f"unknown doc_id {doc_id!r}") from None

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._by_id

    def row_of(self, doc_id: str) -> int:
        try:
            return self._by_id[doc_id]
        except KeyError:
            raise DataError(f"unknown doc_id {doc_id!r}") from None

    @property
    def doc_ids(self) -> list[str]:
        return [d.doc_id for d in self._docs]

    def language_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for doc in self._docs:
            counts[doc.lang] = counts.get(doc.lang, 0) + 1
        return counts

    def languages(self) -> list[str]:
        return sorted(self.language_counts())


class QuerySet:
    """Validated, immutable query collection preserving input order."""

    def __init__(self, queries: Iterable[Query], languages: Optional[set[str]] = None):
        self._queries: list[Query] = []
        self._by_id: dict[str, int] = {}
        for q in queries:
            where = f"query {q.query_id!r}"
            if q.query_id in self._by_id:
                raise DataError(f"duplicate query_id {q.query_id!r}")
            _check_lang(q.lang, languages, where)
            if not q.text or not q.text.strip():
                raise DataError(f"{where}: empty text")
            self._by_id[q.query_id] = len(self._queries)
            self._queries.append(q)

    def __len__(self) -> int:
        return len(self._queries)

    def __iter__(self) -> Iterator[Query]:
        return iter(self._queries)

    def get(self, query_id: str) -> Query:
        try:
            return self._queries[self._by_id[query_id]]
        except KeyError:
            raise DataError(f"unknown query_id {query_id!r}") from None

    def __contains__(self, query_id: str) -> bool:
        return query_id in self._by_id

    @property
    def query_ids(self) -> list[str]:
        return [q.query_id for q in self._queries]


class Judgments:
    """Relevance judgments keyed by (query_id, doc_id).

    Every judged query must carry at least one grade > 0; grades are
    non-negative integers.
    """

    def __init__(self, judgments: Iterable[Judgment]):
        self._grades: dict[tuple[str, str], int] = {}
        self._by_query: dict[str, dict[str, int]] = {}
        for j in judgments:
            key = (j.query_id, j.doc_id)
            if key in self._grades:
                raise DataError(
                    f"duplicate judgment for query {j.query_id!r}, doc {j.doc_id!r}"
                )
            if not isinstance(j.grade, int) or j.grade < 0:
                raise DataError(
                    f"grade for query {j.query_id!r}, doc {j.doc_id!r} must be a "
                    f"non-negative integer, got {j.grade!r}"
                )
            self._grades[key] = j.grade
            self._by_query.setdefault(j.query_id, {})[j.doc_id] = j.grade
        for query_id, grades in self._by_query.items():
            if not any(g > 0 for g in grades.values()):
                raise DataError(
                    f"query {query_id!r} has no judgment with grade > 0"
                )

    def __len__(self) -> int:
        return len(self._grades)

    def grade(self, query_id: str, doc_id: str) -> int:
        """Grade of the pair; unjudged pairs count as 0."""
        return self._grades.get((query_id, doc_id), 0)

    def is_judged(self, query_id: str, doc_id: str) -> bool:
        return (query_id, doc_id) in self._grades

    def grades_for(self, query_id: str) -> dict[str, int]:
        return dict(self._by_query.get(query_id, {}))

    def has_query(self, query_id: str) -> bool:
        return query_id in self._by_query

    def gold_ids(self, query_id: str) -> list[str]:
        """doc_ids with grade > 0 for the query, best grade first, ties by id."""
        grades = self._by_query.get(query_id, {})
        golds = [(g, d) for d, g in grades.items() if g > 0]
        golds.sort(key=lambda t: (-t[0], t[1]))
        return [d for _, d in golds]

    @property
    def query_ids(self) -> list[str]:
        return list(self._by_query)

    def __iter__(self) -> Iterator[Judgment]:
        for (query_id, doc_id), grade in self._grades.items():
            yield Judgment(query_id, doc_id, grade)


# ---------------------------------------------------------------------------
# File ingestion / serialization
# ---------------------------------------------------------------------------


def _iter_jsonl(path: str | Path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed record: {exc}") from None
            if not isinstance(record, dict):
                raise DataError(f"{path}:{lineno}: record is not an object")
            yield lineno, record


def _field(record: dict, name: str, path, lineno: int) -> str:
    value = record.get(name)
    if not isinstance(value, str):
        raise DataError(f"{path}:{lineno}: missing or non-string field {name!r}")
    return value


def ingest_corpus(path: str | Path, languages: Optional[set[str]] = None) -> Corpus:
    """Read a corpus file (JSONL: doc_id, lang, text, optional translated_text)."""
    docs = []
    for lineno, record in _iter_jsonl(path):
        translated = record.get("translated_text")
        if translated is not None and not isinstance(translated, str):
            raise DataError(f"{path}:{lineno}: non-string translated_text")
        docs.append(
            Document(
                doc_id=_field(record, "doc_id", path, lineno),
                lang=_field(record, "lang", path, lineno),
                text=_field(record, "text", path, lineno),
                translated_text=translated,
            )
        )
    try:
        return Corpus(docs, languages)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None


def write_corpus(corpus: Corpus, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in corpus:
            record: dict = {"doc_id": doc.doc_id, "lang": doc.lang, "text": doc.text}
            if doc.translated_text is not None:
                record["translated_text"] = doc.translated_text
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def ingest_queries(path: str | Path, languages: Optional[set[str]] = None) -> QuerySet:
    """Read a queries file (JSONL: query_id, lang, text)."""
    queries = [
        Query(
            query_id=_field(record, "query_id", path, lineno),
            lang=_field(record, "lang", path, lineno),
            text=_field(record, "text", path, lineno),
        )
        for lineno, record in _iter_jsonl(path)
    ]
    try:
        return QuerySet(queries, languages)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None


def write_queries(queries: QuerySet, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for q in queries:
            record = {"query_id": q.query_id, "lang": q.lang, "text": q.text}
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def load_qrels(path: str | Path) -> Judgments:
    """Read TREC qrels: whitespace-separated `query_id 0 doc_id grade`."""
    judgments = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 4:
                raise DataError(
                    f"{path}:{lineno}: expected 4 whitespace-separated fields, "
                    f"got {len(parts)}"
                )
            query_id, _iteration, doc_id, grade_str = parts
            try:
                grade = int(grade_str)
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-integer grade {grade_str!r}") from None
            judgments.append(Judgment(query_id, doc_id, grade))
    try:
        return Judgments(judgments)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None


def write_qrels(qrels: Judgments, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for j in qrels:
            fh.write(f"{j.query_id} 0 {j.doc_id} {j.grade}\n")


def load_manifest(path: str | Path) -> CorpusManifest:
    with open(path, encoding="utf-8") as fh:
        try:
            record = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: malformed manifest: {exc}") from None
    try:
        return CorpusManifest(
            dataset_name=record["dataset_name"],
            retrieval_depth=int(record["retrieval_depth"]),
            per_language_doc_counts=dict(record["per_language_doc_counts"]),
            truncation_budget=int(record["truncation_budget"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: invalid manifest: {exc}") from None


def write_manifest(manifest: CorpusManifest, path: str | Path) -> None:
    record = {
        "dataset_name": manifest.dataset_name,
        "retrieval_depth": manifest.retrieval_depth,
        "per_language_doc_counts": dict(sorted(manifest.per_language_doc_counts.items())),
        "truncation_budget": manifest.truncation_budget,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Corpus-level operations
# ---------------------------------------------------------------------------


def canonical_text(text: str) -> str:
    """NFC normalization plus whitespace collapse; the dedup equality key."""
    return " ".join(unicodedata.normalize("NFC", text).split())


def _derive_seed(*parts) -> int:
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def dedupe_and_rebalance(corpus: Corpus, languages: list[str], seed: int) -> Corpus:
    """Drop exact canonical-text duplicates, then spread the unique pool evenly
    over `languages` (counts differ by at most 1) with a seed-driven shuffle.

    The first occurrence of each canonical text is kept; output preserves the
    surviving documents' corpus order with reassigned language fields.
    """
    if len(corpus) == 0:
        raise DataError("cannot rebalance an empty corpus")
    if not languages:
        raise DataError("language list must be non-empty")
    seen: dict[str, int] = {}
    unique_rows: list[int] = []
    for row, doc in enumerate(corpus):
        key = canonical_text(doc.text)
        if key not in seen:
            seen[key] = row
            unique_rows.append(row)
    if len(unique_rows) < len(languages):
        raise DataError(
            f"only {len(unique_rows)} unique documents for {len(languages)} languages"
        )
    shuffled = list(unique_rows)
    random.Random(_derive_seed(seed, "rebalance")).shuffle(shuffled)
    assigned = {row: languages[i % len(languages)] for i, row in enumerate(shuffled)}
    docs = [
        Document(
            doc_id=corpus[row].doc_id,
            lang=assigned[row],
            text=corpus[row].text,
            translated_text=corpus[row].translated_text,
        )
        for row in unique_rows
    ]
    return Corpus(docs)


def sample_queries(pool: QuerySet, pair: LanguagePair, n: int, seed: int) -> QuerySet:
    """Uniform sample of `n` distinct queries from the pool, deterministic
    under (pool, pair, seed). The pool is used as given; callers slice it per
    pair beforehand, the pair only feeds the derived sub-seed.
    """
    if n < 0:
        raise UsageError(f"sample size must be >= 0, got {n}")
    if n > len(pool):
        raise DataError(f"sample size {n} exceeds pool size {len(pool)}")
    rng = random.Random(_derive_seed(seed, pair.query_lang, pair.doc_lang))
    picked = rng.sample(list(pool), n)
    return QuerySet(picked)


def truncate_corpus(corpus: Corpus, budget: int) -> Corpus:
    """Apply the engine truncation budget to every document text."""
    return Corpus(
        Document(
            doc_id=d.doc_id,
            lang=d.lang,
            text=truncate_text(d.text, budget),
            translated_text=(
                None
                if d.translated_text is None
                else truncate_text(d.translated_text, budget)
            ),
        )
        for d in corpus
    )
