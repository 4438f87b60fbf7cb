"""Retrieval metrics: Recall@k and nDCG@k per language pair, with macro and
micro aggregation.

Metric functions are pure and operate on a RunList plus Judgments.  Grouping
is by language-pair label ("ql->dl"); every query in a run must carry a pair
label before metrics are computed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .corpus import Judgments, LanguagePair
from .errors import DataError, UsageError


@dataclass
class RunList:
    """Ranked results for a set of queries, as produced by one retrieval run.

    results maps query_id to a ranked list of (doc_id, score), best first.
    pairs maps query_id to the language pair the query was evaluated under;
    it may be empty right after loading from disk and attached later.
    """

    tag: str
    results: dict[str, list[tuple[str, float]]]
    pairs: dict[str, LanguagePair] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.tag:
            raise DataError("run tag must be non-empty")
        for qid, ranking in self.results.items():
            seen: set[str] = set()
            prev = math.inf
            for doc_id, score in ranking:
                if doc_id in seen:
                    raise DataError(f"query {qid}: duplicate doc_id {doc_id}")
                seen.add(doc_id)
                if score > prev:
                    raise DataError(f"query {qid}: scores increase at {doc_id}")
                prev = score

    def query_ids(self) -> list[str]:
        return list(self.results)

    def pair_label(self, query_id: str) -> str:
        pair = self.pairs.get(query_id)
        if pair is None:
            raise DataError(f"query {query_id} has no language pair attached")
        return str(pair)

    def attach_pairs(self, pairs: dict[str, LanguagePair]) -> None:
        for qid in self.results:
            if qid not in pairs:
                raise DataError(f"no language pair for query {qid}")
        self.pairs = {qid: pairs[qid] for qid in self.results}


def write_run(run: RunList, path: str) -> None:
    """TREC run format: query_id Q0 doc_id rank score tag.

    Scores are written with repr() so a load round-trips bit-exactly.
    """
    lines = []
    for qid in run.results:
        for rank, (doc_id, score) in enumerate(run.results[qid], start=1):
            lines.append(f"{qid} Q0 {doc_id} {rank} {score!r} {run.tag}")
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines) + ("\n" if lines else ""))


def load_run(path: str) -> RunList:
    results: dict[str, list[tuple[str, float]]] = {}
    tag = ""
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 6:
                raise DataError(f"{path}:{lineno}: expected 6 columns, got {len(parts)}")
            qid, _q0, doc_id, rank_text, score_text, line_tag = parts
            try:
                rank = int(rank_text)
                score = float(score_text)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            ranking = results.setdefault(qid, [])
            if rank != len(ranking) + 1:
                raise DataError(f"{path}:{lineno}: rank {rank} out of order for {qid}")
            ranking.append((doc_id, score))
            if tag and line_tag != tag:
                raise DataError(f"{path}:{lineno}: mixed run tags {tag!r} and {line_tag!r}")
            tag = line_tag
    if not results:
        raise DataError(f"{path}: empty run file")
    return RunList(tag=tag, results=results)


def _require_judged(run: RunList, judgments: Judgments) -> None:
    for qid in run.results:
        if not judgments.has_query(qid):
            raise DataError(f"query {qid} appears in the run but not in the judgments")


def check_coverage(run: RunList, judgments: Judgments, required: list[str] | None = None) -> None:
    """Strict matching in both directions.

    Every run query must be judged, and every required query (default: all
    judged queries) must appear in the run.
    """
    _require_judged(run, judgments)
    expected = judgments.query_ids if required is None else required
    for qid in expected:
        if qid not in run.results:
            raise DataError(f"judged query {qid} is missing from the run")


def recall_flags(
    run: RunList, judgments: Judgments, k: int, min_grade: int = 1
) -> dict[str, bool]:
    """Per-query hit flags: does the top-k contain a doc with grade >= min_grade?"""
    if k < 1:
        raise UsageError(f"k must be >= 1, got {k}")
    if min_grade < 1:
        raise UsageError(f"min_grade must be >= 1, got {min_grade}")
    _require_judged(run, judgments)
    flags: dict[str, bool] = {}
    for qid, ranking in run.results.items():
        flags[qid] = any(
            judgments.grade(qid, doc_id) >= min_grade for doc_id, _ in ranking[:k]
        )
    return flags


def ndcg_values(run: RunList, judgments: Judgments, k: int) -> dict[str, float]:
    """Per-query nDCG@k with exponential gain 2^g - 1 and log2(i+1) discount.

    Queries whose ideal DCG is zero score 0.0 by definition.
    """
    if k < 1:
        raise UsageError(f"k must be >= 1, got {k}")
    _require_judged(run, judgments)
    values: dict[str, float] = {}
    for qid, ranking in run.results.items():
        dcg = 0.0
        for i, (doc_id, _) in enumerate(ranking[:k], start=1):
            grade = judgments.grade(qid, doc_id)
            if grade:
                dcg += (2.0**grade - 1.0) / math.log2(i + 1)
        ideal = sorted(judgments.grades_for(qid).values(), reverse=True)[:k]
        idcg = sum(
            (2.0**grade - 1.0) / math.log2(i + 1)
            for i, grade in enumerate(ideal, start=1)
            if grade > 0
        )
        values[qid] = dcg / idcg if idcg > 0.0 else 0.0
    return values


def _group_mean(run: RunList, per_query: dict[str, float]) -> dict[str, float]:
    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    for qid, value in per_query.items():
        label = run.pair_label(qid)
        sums[label] = sums.get(label, 0.0) + value
        counts[label] = counts.get(label, 0) + 1
    return {label: sums[label] / counts[label] for label in sorted(sums)}


def recall_at_k(
    run: RunList, judgments: Judgments, k: int, min_grade: int = 1
) -> dict[str, float]:
    """Per-pair Recall@k: fraction of the pair's queries with a relevant hit."""
    flags = recall_flags(run, judgments, k, min_grade)
    return _group_mean(run, {qid: float(hit) for qid, hit in flags.items()})


def ndcg_at_k(run: RunList, judgments: Judgments, k: int) -> dict[str, float]:
    """Per-pair mean nDCG@k."""
    return _group_mean(run, ndcg_values(run, judgments, k))


@dataclass
class PairMetrics:
    pair: str
    query_count: int
    recall: dict[int, float]
    ndcg: dict[int, float]


@dataclass
class MetricReport:
    """Per-pair metrics plus macro (unweighted over pairs) and micro
    (query-weighted) averages."""

    tag: str
    per_pair: list[PairMetrics]
    macro_recall: dict[int, float]
    macro_ndcg: dict[int, float]
    micro_recall: dict[int, float]
    micro_ndcg: dict[int, float]
    query_count: int


def aggregate(tag: str, pair_reports: list[PairMetrics]) -> MetricReport:
    """Macro = unweighted mean over pairs; micro = query-count-weighted mean,
    which equals the plain mean over all queries."""
    if not pair_reports:
        raise DataError("aggregate needs at least one pair")
    pair_reports = sorted(pair_reports, key=lambda p: p.pair)
    recall_ks = sorted(pair_reports[0].recall)
    ndcg_ks = sorted(pair_reports[0].ndcg)
    for report in pair_reports:
        if sorted(report.recall) != recall_ks or sorted(report.ndcg) != ndcg_ks:
            raise DataError(f"pair {report.pair} has a mismatched metric set")
    total = sum(report.query_count for report in pair_reports)

    def macro(values: list[float]) -> float:
        return sum(values) / len(values)

    def micro(values: list[float], counts: list[int]) -> float:
        return sum(v * c for v, c in zip(values, counts)) / total

    counts = [report.query_count for report in pair_reports]
    return MetricReport(
        tag=tag,
        per_pair=pair_reports,
        macro_recall={k: macro([r.recall[k] for r in pair_reports]) for k in recall_ks},
        macro_ndcg={k: macro([r.ndcg[k] for r in pair_reports]) for k in ndcg_ks},
        micro_recall={
            k: micro([r.recall[k] for r in pair_reports], counts) for k in recall_ks
        },
        micro_ndcg={
            k: micro([r.ndcg[k] for r in pair_reports], counts) for k in ndcg_ks
        },
        query_count=total,
    )


def evaluate_run(
    run: RunList,
    judgments: Judgments,
    recall_ks: tuple[int, ...] = (100,),
    ndcg_ks: tuple[int, ...] = (10,),
    min_grade: int = 1,
) -> MetricReport:
    recall_by_k = {k: recall_at_k(run, judgments, k, min_grade) for k in recall_ks}
    ndcg_by_k = {k: ndcg_at_k(run, judgments, k) for k in ndcg_ks}
    counts: dict[str, int] = {}
    for qid in run.results:
        label = run.pair_label(qid)
        counts[label] = counts.get(label, 0) + 1
    reports = [
        PairMetrics(
            pair=label,
            query_count=counts[label],
            recall={k: recall_by_k[k][label] for k in recall_ks},
            ndcg={k: ndcg_by_k[k][label] for k in ndcg_ks},
        )
        for label in sorted(counts)
    ]
    return aggregate(run.tag, reports)


def write_report(report: MetricReport, path: str) -> None:
    """Line-delimited JSON: one header record, one record per pair, then the
    macro and micro averages."""
    records: list[dict] = [
        {"record": "header", "tag": report.tag, "query_count": report.query_count}
    ]
    for pair in report.per_pair:
        records.append(
            {
                "record": "pair",
                "pair": pair.pair,
                "query_count": pair.query_count,
                "recall": {str(k): v for k, v in pair.recall.items()},
                "ndcg": {str(k): v for k, v in pair.ndcg.items()},
            }
        )
    for name, recall, ndcg in (
        ("macro", report.macro_recall, report.macro_ndcg),
        ("micro", report.micro_recall, report.micro_ndcg),
    ):
        records.append(
            {
                "record": name,
                "recall": {str(k): v for k, v in recall.items()},
                "ndcg": {str(k): v for k, v in ndcg.items()},
            }
        )
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record, sort_keys=True) + "\n")


def load_report(path: str) -> MetricReport:
    header = None
    pairs: list[PairMetrics] = []
    macro: dict | None = None
    micro: dict | None = None
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            kind = record.get("record")
            if kind == "header":
                header = record
            elif kind == "pair":
                pairs.append(
                    PairMetrics(
                        pair=record["pair"],
                        query_count=record["query_count"],
                        recall={int(k): v for k, v in record["recall"].items()},
                        ndcg={int(k): v for k, v in record["ndcg"].items()},
                    )
                )
            elif kind == "macro":
                macro = record
            elif kind == "micro":
                micro = record
            else:
                raise DataError(f"{path}:{lineno}: unknown record kind {kind!r}")
    if header is None or macro is None or micro is None or not pairs:
        raise DataError(f"{path}: incomplete metric report")
    return MetricReport(
        tag=header["tag"],
        per_pair=pairs,
        macro_recall={int(k): v for k, v in macro["recall"].items()},
        macro_ndcg={int(k): v for k, v in macro["ndcg"].items()},
        micro_recall={int(k): v for k, v in micro["recall"].items()},
        micro_ndcg={int(k): v for k, v in micro["ndcg"].items()},
        query_count=header["query_count"],
    )


def format_report(report: MetricReport) -> str:
    """Plain-text table, one row per pair plus macro and micro rows."""
    recall_ks = sorted(report.macro_recall)
    ndcg_ks = sorted(report.macro_ndcg)
    headers = (
        ["pair", "queries"]
        + [f"recall@{k}" for k in recall_ks]
        + [f"ndcg@{k}" for k in ndcg_ks]
    )
    rows = []
    for pair in report.per_pair:
        rows.append(
            [pair.pair, str(pair.query_count)]
            + [f"{pair.recall[k]:.4f}" for k in recall_ks]
            + [f"{pair.ndcg[k]:.4f}" for k in ndcg_ks]
        )
    rows.append(
        ["macro", str(report.query_count)]
        + [f"{report.macro_recall[k]:.4f}" for k in recall_ks]
        + [f"{report.macro_ndcg[k]:.4f}" for k in ndcg_ks]
    )
    rows.append(
        ["micro", str(report.query_count)]
        + [f"{report.micro_recall[k]:.4f}" for k in recall_ks]
        + [f"{report.micro_ndcg[k]:.4f}" for k in ndcg_ks]
    )
    widths = [max(len(row[i]) for row in [headers] + rows) for i in range(len(headers))]
    out = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    for row in rows:
        out.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)))
    return "\n".join(out)
