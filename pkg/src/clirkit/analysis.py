"""Linguistic analyses over finished runs.

Two families: document-language bias statistics (how often the engine
retrieves documents in the query's own language, and which languages win
when it should not), and rank correlation between typological similarity of
a language pair and retrieval performance on that pair.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from scipy.stats import rankdata

from .corpus import Corpus, Judgments, QuerySet
from .errors import DataError, UsageError
from .evaluation import RunList

FEATURE_SETS = ("geographic", "syntax", "phonology", "inventory", "genealogical")


# ---------------------------------------------------------------------------
# Language bias


@dataclass
class SameLanguageRates:
    depth: int
    overall: float
    by_query_language: dict[str, float]


@dataclass
class BiasReport:
    """Same-language retrieval rates plus the rank-1 language distribution
    for queries whose gold document is in a different language.

    depth applies to the same-language rates; the distribution is always
    rank 1.  Shares cover every corpus language and sum to 1.
    """

    depth: int
    same_language_overall: float
    same_language_by_query_language: dict[str, float]
    retrieval_shares: dict[str, float]
    uniform_share: float
    cross_language_query_count: int


def _query_language(queries: QuerySet, query_id: str) -> str:
    return queries.get(query_id).lang


def _doc_language(corpus: Corpus, doc_id: str) -> str:
    if doc_id not in corpus:
        raise DataError(f"retrieved doc {doc_id} is not in the corpus")
    return corpus.get(doc_id).lang


def same_language_rate(
    run: RunList, queries: QuerySet, corpus: Corpus, depth: int = 1
) -> SameLanguageRates:
    """Fraction of queries whose top-`depth` contains a document written in
    the query's own language, overall and per query language."""
    if depth < 1:
        raise UsageError(f"depth must be >= 1, got {depth}")
    hits: dict[str, int] = {}
    counts: dict[str, int] = {}
    total_hits = 0
    for qid, ranking in run.results.items():
        qlang = _query_language(queries, qid)
        hit = any(
            _doc_language(corpus, doc_id) == qlang for doc_id, _ in ranking[:depth]
        )
        counts[qlang] = counts.get(qlang, 0) + 1
        hits[qlang] = hits.get(qlang, 0) + int(hit)
        total_hits += int(hit)
    if not counts:
        raise DataError("run has no queries")
    return SameLanguageRates(
        depth=depth,
        overall=total_hits / len(run.results),
        by_query_language={lang: hits[lang] / counts[lang] for lang in sorted(counts)},
    )


def retrieved_language_distribution(
    run: RunList, queries: QuerySet, corpus: Corpus, qrels: Judgments
) -> tuple[dict[str, float], float, int]:
    """Rank-1 retrieved-language shares over queries whose gold document is
    not in the query language.

    Returns (shares over all corpus languages, uniform baseline share,
    number of queries kept by the filter).
    """
    languages = corpus.languages()
    counts = {lang: 0 for lang in languages}
    kept = 0
    for qid, ranking in run.results.items():
        if not ranking:
            continue
        qlang = _query_language(queries, qid)
        golds = qrels.gold_ids(qid)
        if not golds:
            raise DataError(f"query {qid} has no relevant document in the judgments")
        if _doc_language(corpus, golds[0]) == qlang:
            continue
        top_lang = _doc_language(corpus, ranking[0][0])
        counts[top_lang] += 1
        kept += 1
    if kept == 0:
        raise DataError(
            "no queries left after filtering: every gold document is in its "
            "query's language"
        )
    shares = {lang: counts[lang] / kept for lang in languages}
    return shares, 1.0 / len(languages), kept


def bias_report(
    run: RunList,
    queries: QuerySet,
    corpus: Corpus,
    qrels: Judgments,
    depth: int = 1,
) -> BiasReport:
    rates = same_language_rate(run, queries, corpus, depth)
    shares, uniform, kept = retrieved_language_distribution(run, queries, corpus, qrels)
    return BiasReport(
        depth=depth,
        same_language_overall=rates.overall,
        same_language_by_query_language=rates.by_query_language,
        retrieval_shares=shares,
        uniform_share=uniform,
        cross_language_query_count=kept,
    )


def write_bias_report(report: BiasReport, path: str) -> None:
    payload = {
        "depth": report.depth,
        "same_language_overall": report.same_language_overall,
        "same_language_by_query_language": report.same_language_by_query_language,
        "retrieval_shares": report.retrieval_shares,
        "uniform_share": report.uniform_share,
        "cross_language_query_count": report.cross_language_query_count,
    }
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")


def format_bias_report(report: BiasReport) -> str:
    lines = [
        f"same-language retrieval (depth={report.depth}):",
        f"  overall: {report.same_language_overall:.4f}",
    ]
    for lang, rate in report.same_language_by_query_language.items():
        lines.append(f"  {lang}: {rate:.4f}")
    lines.append(
        f"rank-1 language shares over {report.cross_language_query_count} "
        f"cross-language queries (uniform = {report.uniform_share:.4f}):"
    )
    for lang in sorted(report.retrieval_shares):
        lines.append(f"  {lang}: {report.retrieval_shares[lang]:.4f}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Typology


@dataclass
class TypologicalVector:
    """Per-language feature vector; None marks a missing value."""

    lang: str
    feature_set: str
    values: list[float | None]

    def __post_init__(self) -> None:
        if self.feature_set not in FEATURE_SETS:
            raise DataError(
                f"unknown feature set {self.feature_set!r} for {self.lang}"
            )
        for value in self.values:
            if value is not None and not math.isfinite(value):
                raise DataError(f"non-finite feature value for {self.lang}")


def typological_similarity(
    a: TypologicalVector, b: TypologicalVector
) -> float | None:
    """Cosine over the dimensions both vectors specify; None when the shared
    support is empty or a masked vector has zero norm.  Symmetric exactly."""
    if a.feature_set != b.feature_set:
        raise UsageError(
            f"feature-set mismatch: {a.feature_set} vs {b.feature_set}"
        )
    if len(a.values) != len(b.values):
        raise DataError(
            f"length mismatch for {a.lang}/{b.lang} in {a.feature_set}"
        )
    dot = 0.0
    na = 0.0
    nb = 0.0
    shared = 0
    for x, y in zip(a.values, b.values):
        if x is None or y is None:
            continue
        shared += 1
        dot += x * y
        na += x * x
        nb += y * y
    if shared == 0 or na == 0.0 or nb == 0.0:
        return None
    return dot / math.sqrt(na * nb)


def write_typology(vectors: list[TypologicalVector], path: str) -> None:
    """Tab-separated: lang, feature_set, then one field per value; a missing
    value is an empty field."""
    with open(path, "w", encoding="utf-8") as handle:
        for vec in vectors:
            fields = [vec.lang, vec.feature_set] + [
                "" if v is None else repr(v) for v in vec.values
            ]
            handle.write("\t".join(fields) + "\n")


def load_typology(path: str) -> dict[tuple[str, str], TypologicalVector]:
    """Keyed by (lang, feature_set); enforces one length per feature set."""
    vectors: dict[tuple[str, str], TypologicalVector] = {}
    lengths: dict[str, int] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) < 3:
                raise DataError(f"{path}:{lineno}: expected lang, feature_set, values")
            lang, feature_set, *raw_values = fields
            values: list[float | None] = []
            for field in raw_values:
                if field == "":
                    values.append(None)
                else:
                    try:
                        values.append(float(field))
                    except ValueError as exc:
                        raise DataError(f"{path}:{lineno}: {exc}") from exc
            key = (lang, feature_set)
            if key in vectors:
                raise DataError(f"{path}:{lineno}: duplicate vector for {key}")
            expected = lengths.setdefault(feature_set, len(values))
            if len(values) != expected:
                raise DataError(
                    f"{path}:{lineno}: {feature_set} vectors must have "
                    f"{expected} values, got {len(values)}"
                )
            vectors[key] = TypologicalVector(lang, feature_set, values)
    return vectors


# ---------------------------------------------------------------------------
# Rank correlation


def spearman(xs: list[float], ys: list[float]) -> float:
    """Spearman rho: Pearson correlation of average ranks.

    Uses exactly rounded sums over rank data, so perfectly monotone inputs
    give +/-1.0 with no floating-point slack.
    """
    if len(xs) != len(ys):
        raise UsageError(f"length mismatch: {len(xs)} vs {len(ys)}")
    n = len(xs)
    if n < 3:
        raise UsageError(f"need at least 3 points, got {n}")
    rx = [float(r) for r in rankdata(xs, method="average")]
    ry = [float(r) for r in rankdata(ys, method="average")]
    sum_x = math.fsum(rx)
    sum_y = math.fsum(ry)
    sxx = n * math.fsum(r * r for r in rx) - sum_x * sum_x
    syy = n * math.fsum(r * r for r in ry) - sum_y * sum_y
    if sxx == 0.0 or syy == 0.0:
        raise DataError("constant input: rank variance is zero")
    sxy = n * math.fsum(a * b for a, b in zip(rx, ry)) - sum_x * sum_y
    return sxy / math.sqrt(sxx * syy)


@dataclass
class CorrelationReport:
    feature_set: str
    rho: float
    pairs_used: int
    pairs_excluded_undefined: int
    pairs_excluded_same_language: int


def correlate_similarity_with_performance(
    per_pair_recall: dict[str, float],
    typology: dict[tuple[str, str], TypologicalVector],
    feature_set: str,
    exclude_same_language: bool = True,
) -> CorrelationReport:
    """Spearman rho between typological similarity and per-pair recall.

    Pair labels are "ql->dl".  Same-language pairs are excluded by default;
    pairs whose similarity is undefined are excluded and counted.
    """
    xs: list[float] = []
    ys: list[float] = []
    undefined = 0
    same_language = 0
    for label in sorted(per_pair_recall):
        if "->" not in label:
            raise DataError(f"malformed pair label {label!r}")
        qlang, dlang = label.split("->", 1)
        if exclude_same_language and qlang == dlang:
            same_language += 1
            continue
        for lang in (qlang, dlang):
            if (lang, feature_set) not in typology:
                raise DataError(f"no {feature_set} vector for language {lang}")
        sim = typological_similarity(
            typology[(qlang, feature_set)], typology[(dlang, feature_set)]
        )
        if sim is None:
            undefined += 1
            continue
        xs.append(sim)
        ys.append(per_pair_recall[label])
    if len(xs) < 3:
        raise DataError(
            f"only {len(xs)} usable pairs for {feature_set}, need at least 3"
        )
    return CorrelationReport(
        feature_set=feature_set,
        rho=spearman(xs, ys),
        pairs_used=len(xs),
        pairs_excluded_undefined=undefined,
        pairs_excluded_same_language=same_language,
    )


def write_correlation_reports(
    reports: list[CorrelationReport], path: str, label: str = ""
) -> None:
    """One JSON record per feature set; `label` names the model/dataset row."""
    with open(path, "w", encoding="utf-8") as handle:
        for report in reports:
            record = {
                "label": label,
                "feature_set": report.feature_set,
                "rho": report.rho,
                "pairs_used": report.pairs_used,
                "pairs_excluded_undefined": report.pairs_excluded_undefined,
                "pairs_excluded_same_language": report.pairs_excluded_same_language,
            }
            handle.write(json.dumps(record, sort_keys=True) + "\n")


def format_correlation_reports(reports: list[CorrelationReport], label: str = "") -> str:
    header = f"spearman rho vs retrieval performance"
    if label:
        header += f" ({label})"
    lines = [header]
    for report in reports:
        lines.append(
            f"  {report.feature_set}: rho={report.rho:+.4f} "
            f"n={report.pairs_used} undefined={report.pairs_excluded_undefined} "
            f"same-language={report.pairs_excluded_same_language}"
        )
    return "\n".join(lines)
