"""Interleaved exact-versus-ANN latency measurement.

The protocol times completion, not duration: for each language pair the
exact engine runs, then the ANN engine, each stamping a monotonic completion
time.  Timestamps are min-max normalized to [0, 1], scaled by the pair
count, and adjacent-transition differences are averaged per direction.

Sign convention: both directional means report ann minus exact over the
adjacent transitions of that direction, so the ann->exact mean is <= 0 on
any valid trace and relabeling the two methods negates (and exchanges) the
reported means.  Raw per-call durations are kept alongside because the
normalized protocol entangles queue position with cost.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from typing import Callable

from .corpus import LanguagePair
from .errors import EngineError, UsageError

PAIR_COUNT_PRESETS = {"clirmatrix": 56, "mmarco": 196, "largescale": 26}

METHOD_EXACT = "exact"
METHOD_ANN = "ann"


@dataclass(frozen=True)
class TraceEntry:
    pair: str
    method: str
    timestamp: float
    duration: float


@dataclass
class LatencyTrace:
    """Completion trace; strictly alternating exact -> ann per pair."""

    entries: list[TraceEntry]
    pair_count: int

    def __post_init__(self) -> None:
        if self.pair_count < 1:
            raise UsageError(f"pair_count must be >= 1, got {self.pair_count}")
        if len(self.entries) % 2 != 0:
            raise UsageError("trace must hold an exact/ann entry per pair")
        prev_ts = -float("inf")
        for i, entry in enumerate(self.entries):
            expected = METHOD_EXACT if i % 2 == 0 else METHOD_ANN
            if entry.method != expected:
                raise UsageError(
                    f"entry {i} must be {expected}, got {entry.method}"
                )
            if entry.timestamp < prev_ts:
                raise UsageError(f"timestamps decrease at entry {i}")
            prev_ts = entry.timestamp

    def timestamps(self) -> list[float]:
        return [entry.timestamp for entry in self.entries]


def run_interleaved(
    pairs: list[LanguagePair],
    exact_engine: Callable[[LanguagePair], dict],
    ann_engine: Callable[[LanguagePair], dict],
    warmup: bool = True,
) -> tuple[LatencyTrace, dict[str, dict], dict[str, dict]]:
    """Time exact then ann per pair, single-threaded, warm caches.

    One warm-up round on the first pair runs both engines untimed.  Returns
    the trace plus each engine's per-pair results so recall can be compared
    on exactly the timed invocations' outputs.
    """
    if not pairs:
        raise UsageError("need at least one language pair")
    entries: list[TraceEntry] = []
    exact_runs: dict[str, dict] = {}
    ann_runs: dict[str, dict] = {}

    def timed(engine: Callable, pair: LanguagePair, method: str) -> dict:
        start = time.perf_counter()
        try:
            result = engine(pair)
        except Exception as exc:
            failure = EngineError(
                f"{method} engine failed on pair {pair} after "
                f"{len(entries)} timed calls: {exc}"
            )
            failure.partial_trace = list(entries)
            raise failure from exc
        done = time.perf_counter()
        entries.append(
            TraceEntry(
                pair=str(pair), method=method, timestamp=done, duration=done - start
            )
        )
        return result

    if warmup:
        # Discarded round: touch both engines once so caches are warm.
        exact_engine(pairs[0])
        ann_engine(pairs[0])
    for pair in pairs:
        exact_runs[str(pair)] = timed(exact_engine, pair, METHOD_EXACT)
        ann_runs[str(pair)] = timed(ann_engine, pair, METHOD_ANN)
    return LatencyTrace(entries=entries, pair_count=len(pairs)), exact_runs, ann_runs


@dataclass
class LatencyReport:
    pair_count: int
    normalized: list[float]
    mean_exact_to_ann: float
    mean_ann_to_exact: float
    mean_combined: float
    degenerate: bool
    raw_duration_mean: dict[str, float]


def normalize_and_summarize(
    trace: LatencyTrace, pair_count: int | None = None
) -> LatencyReport:
    """Min-max normalize completion times to [0, 1], scale by pair_count,
    then average the signed ann-minus-exact gaps per transition direction.

    pair_count overrides the trace's own count (dataset presets); an all-equal
    trace reports zero differences with the degenerate flag set.
    """
    stamps = trace.timestamps()
    if len(stamps) < 2:
        raise UsageError("trace must contain at least 2 timestamps")
    scale = trace.pair_count if pair_count is None else pair_count
    if scale < 1:
        raise UsageError(f"pair_count must be >= 1, got {scale}")
    lo, hi = min(stamps), max(stamps)
    degenerate = hi == lo
    if degenerate:
        normalized = [0.0 for _ in stamps]
    else:
        normalized = [(t - lo) / (hi - lo) * scale for t in stamps]

    exact_to_ann: list[float] = []
    ann_to_exact: list[float] = []
    for i in range(len(trace.entries) - 1):
        a, b = trace.entries[i], trace.entries[i + 1]
        if a.method == METHOD_EXACT and b.method == METHOD_ANN:
            exact_to_ann.append(normalized[i + 1] - normalized[i])
        elif a.method == METHOD_ANN and b.method == METHOD_EXACT:
            ann_to_exact.append(normalized[i] - normalized[i + 1])

    def mean(values: list[float]) -> float:
        return sum(values) / len(values) if values else 0.0

    mean_e2a = mean(exact_to_ann)
    mean_a2e = mean(ann_to_exact)
    durations: dict[str, list[float]] = {METHOD_EXACT: [], METHOD_ANN: []}
    for entry in trace.entries:
        durations[entry.method].append(entry.duration)
    return LatencyReport(
        pair_count=scale,
        normalized=normalized,
        mean_exact_to_ann=mean_e2a,
        mean_ann_to_exact=mean_a2e,
        mean_combined=(mean_e2a + mean_a2e) / 2.0,
        degenerate=degenerate,
        raw_duration_mean={m: mean(d) for m, d in durations.items()},
    )


def write_latency_report(
    report: LatencyReport, trace: LatencyTrace, path: str
) -> None:
    """JSONL: one header record, then one record per timed call."""
    with open(path, "w", encoding="utf-8") as handle:
        header = {
            "record": "summary",
            "pair_count": report.pair_count,
            "mean_exact_to_ann": report.mean_exact_to_ann,
            "mean_ann_to_exact": report.mean_ann_to_exact,
            "mean_combined": report.mean_combined,
            "degenerate": report.degenerate,
            "raw_duration_mean": report.raw_duration_mean,
            "sign_convention": "ann minus exact",
        }
        handle.write(json.dumps(header, sort_keys=True) + "\n")
        for entry, value in zip(trace.entries, report.normalized):
            handle.write(
                json.dumps(
                    {
                        "record": "call",
                        "pair": entry.pair,
                        "method": entry.method,
                        "normalized": value,
                        "duration": entry.duration,
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def format_latency_report(
    report: LatencyReport, recall: dict[str, float] | None = None, recall_k: int = 100
) -> str:
    """Rendered table: method rows with mean raw duration and optional
    recall at the benchmark's k, then the normalized-gap summary."""
    lines = ["method  mean-duration(s)" + (f"  recall@{recall_k}" if recall else "")]
    for method in (METHOD_EXACT, METHOD_ANN):
        row = f"{method:<6}  {report.raw_duration_mean[method]:.6f}"
        if recall:
            row += f"          {recall.get(method, float('nan')):.4f}"
        lines.append(row)
    lines.append(
        f"normalized gaps (ann minus exact, scale={report.pair_count}): "
        f"exact->ann {report.mean_exact_to_ann:+.6f}, "
        f"ann->exact {report.mean_ann_to_exact:+.6f}, "
        f"combined {report.mean_combined:+.6f}"
    )
    if report.degenerate:
        lines.append("degenerate trace: all completion timestamps equal")
    return "\n".join(lines)
