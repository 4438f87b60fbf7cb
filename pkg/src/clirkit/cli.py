"""Command-line pipeline: ingest -> index -> retrieve -> rerank -> evaluate
-> analyze -> bench.

Every subcommand reads a YAML config (--config) merged under explicit flags;
flags win.  One top-level --seed feeds all randomness, and each output file
gets a `<out>.meta.json` sidecar recording the command, the seed, and the
format version.  Exit codes: 1 usage error, 2 data/validation error, 3
internal error.
"""

from __future__ import annotations

import argparse
import json
import sys
import tempfile
from pathlib import Path

import yaml

from .analysis import (
    FEATURE_SETS,
    bias_report,
    correlate_similarity_with_performance,
    format_bias_report,
    format_correlation_reports,
    load_typology,
    write_bias_report,
    write_correlation_reports,
)
from .ann import HnswParams, ann_search, build_hnsw, ef_for_k
from .ann import load_index as load_hnsw_index
from .ann import persist_index as save_hnsw_index
from .bench import (
    PAIR_COUNT_PRESETS,
    format_latency_report,
    normalize_and_summarize,
    run_interleaved,
    write_latency_report,
)
from .corpus import (
    LanguagePair,
    dedupe_and_rebalance,
    ingest_corpus,
    ingest_queries,
    load_qrels,
    sample_queries,
    truncate_corpus,
    write_corpus,
    write_qrels,
    write_queries,
)
from .dense import exact_topk, load_embeddings, save_embeddings, toy_embed
from .errors import DataError, EngineError, UsageError
from .evaluation import (
    RunList,
    check_coverage,
    evaluate_run,
    format_report,
    load_report,
    load_run,
    recall_flags,
    write_report,
    write_run,
)
from .lexical import Bm25Params, bm25_search, build_index, field_text
from .lexical import load_index as load_bm25_index
from .lexical import save_index as save_bm25_index
from .rerank import (
    apply_external_scores,
    export_scoring_requests,
    export_training_pairs,
    import_scores,
    load_candidates,
    make_candidates,
    write_candidates,
    write_training_pairs,
)

FORMAT_VERSIONS = {
    "corpus": "corpus JSONL v1",
    "queries": "queries JSONL v1",
    "qrels": "TREC qrels, 4 columns",
    "run": "TREC run, 6 columns",
    "embeddings": "CLRE v1 with .ids sidecar",
    "bm25-index": "CLXI v1",
    "hnsw-index": "CLRH v1",
    "candidates": "candidates JSONL v1",
    "scoring-requests": "scoring request JSONL v1",
    "training-pairs": "training pair JSONL v1",
    "metric-report": "metric report JSONL v1",
    "bias-report": "bias report JSON v1",
    "correlation-report": "correlation report JSONL v1",
    "latency-report": "latency report JSONL v1",
    "typology": "typology TSV v1",
}

_REQUIRED = object()


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad flags; the contract here is exit 1."""

    def error(self, message):
        raise UsageError(message)


class _Sub:
    """Records per-option defaults separately so config-file values can sit
    between argparse defaults and explicit flags."""

    def __init__(self, parser: argparse.ArgumentParser, defaults: dict):
        self.parser = parser
        self.defaults = defaults

    def opt(self, *names, default=None, required=False, **kwargs):
        action = self.parser.add_argument(*names, default=argparse.SUPPRESS, **kwargs)
        self.defaults[action.dest] = _REQUIRED if required else default

    def flag(self, *names, **kwargs):
        action = self.parser.add_argument(
            *names, action="store_true", default=argparse.SUPPRESS, **kwargs
        )
        self.defaults[action.dest] = False


_DEFAULTS: dict[str, dict] = {}


def build_parser() -> _Parser:
    epilog_lines = ["file formats:"]
    for name in sorted(FORMAT_VERSIONS):
        epilog_lines.append(f"  {name}: {FORMAT_VERSIONS[name]}")
    parser = _Parser(
        prog="clirkit",
        description="Cross-lingual retrieval experiment pipeline.",
        epilog="\n".join(epilog_lines),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    def sub(name: str, help_text: str) -> _Sub:
        sp = subparsers.add_parser(name, help=help_text)
        defaults: dict = {"config": None, "seed": 0}
        sp.add_argument("--config", default=argparse.SUPPRESS, help="YAML config file")
        sp.add_argument(
            "--seed", type=int, default=argparse.SUPPRESS, help="top-level seed"
        )
        _DEFAULTS[name] = defaults
        return _Sub(sp, defaults)

    s = sub("ingest", "validate and normalize corpus, query, and qrels files")
    s.opt("--corpus", help="raw corpus JSONL")
    s.opt("--queries", help="raw queries JSONL")
    s.opt("--qrels", help="raw TREC qrels")
    s.opt("--out-corpus", help="validated corpus output")
    s.opt("--out-queries", help="validated queries output")
    s.opt("--out-qrels", help="validated qrels output")
    s.opt("--languages", help="comma-separated allowed language codes")
    s.opt("--truncate", type=int, help="token budget per document text")
    s.flag("--rebalance", help="dedupe texts and rebalance languages")
    s.opt("--sample-n", type=int, help="sample this many queries for --sample-pair")
    s.opt("--sample-pair", help="query:doc language pair, e.g. en:de")

    s = sub("index-bm25", "build and save an inverted index")
    s.opt("--corpus", required=True)
    s.opt("--field", default="original", choices=["original", "translated"])
    s.opt("--k1", type=float, default=1.2)
    s.opt("--b", type=float, default=0.75)
    s.opt("--out", required=True)

    s = sub("index-hnsw", "build and save a graph index over embeddings")
    s.opt("--embeddings", required=True, help="CLRE file; ids at <path>.ids")
    s.opt("--m", type=int, default=16)
    s.opt("--ef-construction", type=int, default=200)
    s.opt("--metadata", default="", help="free-form note stored in the index")
    s.opt("--out", required=True)

    s = sub("toy-embed", "hashed bag-of-words embeddings for offline tests")
    s.opt("--corpus", help="embed documents from this corpus")
    s.opt("--queries", help="embed queries from this file")
    s.opt("--field", default="original", choices=["original", "translated"])
    s.opt("--dim", type=int, default=64)
    s.opt("--out", required=True)

    s = sub("retrieve", "run a retrieval method over a query set")
    s.opt("--method", required=True, choices=["bm25", "dense", "ann"])
    s.opt("--queries", help="queries JSONL (required for bm25)")
    s.opt("--index", help="CLXI (bm25) or CLRH (ann) index file")
    s.opt("--embeddings", help="document CLRE file (dense)")
    s.opt("--query-embeddings", help="query CLRE file (dense, ann)")
    s.opt("--k", type=int, default=100)
    s.opt("--ef", type=int, help="search beam (ann); default max(50, 2k)")
    s.opt("--tag", help="run tag; defaults to the method name")
    s.opt("--out", required=True)

    s = sub("make-candidates", "depth-limited candidates with gold injection")
    s.opt("--run", required=True, help="first-stage TREC run")
    s.opt("--qrels", required=True)
    s.opt("--depth", type=int, default=100)
    s.opt("--out-candidates", required=True)
    s.opt("--out-requests", help="also write scoring requests (needs texts)")
    s.opt("--queries", help="queries JSONL, required with --out-requests")
    s.opt("--corpus", help="corpus JSONL, required with --out-requests")

    s = sub("export-negatives", "training pairs: positives plus sampled negatives")
    s.opt("--queries", required=True)
    s.opt("--qrels", required=True)
    s.opt("--corpus", required=True)
    s.opt("--mode", required=True, choices=["easy", "hard"])
    s.opt("--m", type=int, default=4, help="negatives per query")
    s.opt("--run", help="first-stage run, required for --mode hard")
    s.flag("--no-positives", help="omit the label-1 pairs")
    s.opt("--out", required=True)

    s = sub("apply-scores", "re-rank candidates with external scores")
    s.opt("--candidates", required=True)
    s.opt("--scores", required=True, help="scoring response JSONL")
    s.opt("--tag", default="rerank")
    s.opt("--out", required=True)

    s = sub("evaluate", "per-pair Recall@k and nDCG@k with macro averages")
    s.opt("--run", required=True)
    s.opt("--qrels", required=True)
    s.opt("--queries", required=True, help="supplies query languages")
    s.opt("--corpus", help="supplies the document language if monolingual")
    s.opt("--doc-lang", help="document language when --corpus is mixed or absent")
    s.opt("--recall-ks", default="100", help="comma-separated k values")
    s.opt("--ndcg-ks", default="10", help="comma-separated k values")
    s.opt("--min-grade", type=int, default=1, help="relevance threshold for recall")
    s.opt("--out", required=True)

    s = sub("analyze-bias", "same-language retrieval rates and language shares")
    s.opt("--run", required=True)
    s.opt("--queries", required=True)
    s.opt("--corpus", required=True)
    s.opt("--qrels", required=True)
    s.opt("--depth", type=int, default=1)
    s.opt("--out", required=True)

    s = sub("analyze-lingsim", "rank correlation of similarity and performance")
    s.opt("--report", required=True, help="metric report from evaluate")
    s.opt("--typology", required=True, help="typology TSV")
    s.opt("--metric", default="recall", choices=["recall", "ndcg"])
    s.opt("--k", type=int, default=100)
    s.opt(
        "--feature-sets",
        default=",".join(FEATURE_SETS),
        help="comma-separated subset of: " + ", ".join(FEATURE_SETS),
    )
    s.flag("--include-same-language", help="keep ql == dl pairs")
    s.opt("--label", default="", help="model/dataset label for the report rows")
    s.opt("--out", required=True)

    s = sub("bench-latency", "interleaved exact vs ann timing")
    s.opt("--embeddings", required=True, help="document CLRE file")
    s.opt("--query-embeddings", required=True)
    s.opt("--pairs", required=True, help="comma list of ql:dl labels")
    s.opt("--k", type=int, default=100)
    s.opt("--ef", type=int, help="search beam; default max(50, 2k)")
    s.opt("--preset", choices=sorted(PAIR_COUNT_PRESETS), help="pair-count scale")
    s.opt("--index-mode", default="per-pair", choices=["per-pair", "shared"])
    s.opt("--qrels", help="adds Recall@k per method to the table")
    s.opt("--out", required=True)

    return parser


def _load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            data = yaml.safe_load(handle)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise DataError(f"malformed config {path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise DataError(f"config {path} must be a mapping")
    return data


def _merge(command: str, namespace: argparse.Namespace) -> argparse.Namespace:
    defaults = _DEFAULTS[command]
    merged = dict(defaults)
    given = {k: v for k, v in vars(namespace).items() if k != "command"}
    config_path = given.get("config", defaults.get("config"))
    if config_path:
        config = _load_config(config_path)
        known_anywhere = set()
        for cmd_defaults in _DEFAULTS.values():
            known_anywhere.update(cmd_defaults)
        for key, value in config.items():
            dest = key.replace("-", "_")
            if dest not in known_anywhere:
                raise UsageError(f"unknown config key {key!r}")
            if dest in defaults:
                merged[dest] = value
    merged.update(given)
    missing = sorted(
        "--" + dest.replace("_", "-")
        for dest, value in merged.items()
        if value is _REQUIRED
    )
    if missing:
        raise UsageError(f"missing required options: {', '.join(missing)}")
    return argparse.Namespace(**merged)


def _write_meta(out_path: str, command: str, seed: int, fmt: str) -> None:
    meta = {"command": command, "format": FORMAT_VERSIONS[fmt], "seed": seed}
    with open(str(out_path) + ".meta.json", "w", encoding="utf-8") as handle:
        json.dump(meta, handle, indent=2, sort_keys=True)
        handle.write("\n")


def _language_set(spec: str | None) -> set[str] | None:
    if not spec:
        return None
    return {code.strip() for code in spec.split(",") if code.strip()}


def _parse_pair(label: str) -> LanguagePair:
    if ":" not in label:
        raise UsageError(f"pair must look like ql:dl, got {label!r}")
    qlang, dlang = label.split(":", 1)
    return LanguagePair(qlang.strip(), dlang.strip())


def _parse_ks(spec: str, option: str) -> tuple[int, ...]:
    try:
        ks = tuple(int(part) for part in str(spec).split(",") if str(part).strip())
    except ValueError as exc:
        raise UsageError(f"{option}: {exc}") from exc
    if not ks:
        raise UsageError(f"{option} must list at least one k")
    return ks


def _ids_path(embeddings_path: str) -> str:
    return str(embeddings_path) + ".ids"


# ---------------------------------------------------------------------------
# Subcommand bodies


def _cmd_ingest(opts) -> int:
    did_anything = False
    languages = _language_set(opts.languages)
    if opts.corpus:
        if not opts.out_corpus:
            raise UsageError("--corpus needs --out-corpus")
        corpus = ingest_corpus(opts.corpus, languages)
        if opts.rebalance:
            if not languages:
                raise UsageError("--rebalance needs --languages")
            corpus = dedupe_and_rebalance(corpus, sorted(languages), opts.seed)
        if opts.truncate is not None:
            corpus = truncate_corpus(corpus, opts.truncate)
        write_corpus(corpus, opts.out_corpus)
        _write_meta(opts.out_corpus, "ingest", opts.seed, "corpus")
        did_anything = True
    if opts.queries:
        if not opts.out_queries:
            raise UsageError("--queries needs --out-queries")
        queries = ingest_queries(opts.queries, languages)
        if opts.sample_n is not None:
            if not opts.sample_pair:
                raise UsageError("--sample-n needs --sample-pair")
            pair = _parse_pair(opts.sample_pair)
            queries = sample_queries(queries, pair, opts.sample_n, opts.seed)
        write_queries(queries, opts.out_queries)
        _write_meta(opts.out_queries, "ingest", opts.seed, "queries")
        did_anything = True
    if opts.qrels:
        if not opts.out_qrels:
            raise UsageError("--qrels needs --out-qrels")
        qrels = load_qrels(opts.qrels)
        write_qrels(qrels, opts.out_qrels)
        _write_meta(opts.out_qrels, "ingest", opts.seed, "qrels")
        did_anything = True
    if not did_anything:
        raise UsageError("nothing to ingest: pass --corpus, --queries, or --qrels")
    return 0


def _cmd_index_bm25(opts) -> int:
    corpus = ingest_corpus(opts.corpus)
    index = build_index(corpus, Bm25Params(k1=opts.k1, b=opts.b), field=opts.field)
    save_bm25_index(index, opts.out)
    _write_meta(opts.out, "index-bm25", opts.seed, "bm25-index")
    return 0


def _cmd_index_hnsw(opts) -> int:
    docs = load_embeddings(opts.embeddings, _ids_path(opts.embeddings))
    if docs.renormalized_rows:
        print(
            f"note: renormalized {len(docs.renormalized_rows)} rows on load",
            file=sys.stderr,
        )
    params = HnswParams(m=opts.m, ef_construction=opts.ef_construction)
    index = build_hnsw(docs, params=params, seed=opts.seed, metadata=opts.metadata)
    save_hnsw_index(index, opts.out)
    _write_meta(opts.out, "index-hnsw", opts.seed, "hnsw-index")
    return 0


def _cmd_toy_embed(opts) -> int:
    if bool(opts.corpus) == bool(opts.queries):
        raise UsageError("pass exactly one of --corpus or --queries")
    if opts.corpus:
        corpus = ingest_corpus(opts.corpus)
        texts = [field_text(doc, opts.field) for doc in corpus]
        ids = corpus.doc_ids
    else:
        queries = ingest_queries(opts.queries)
        texts = [q.text for q in queries]
        ids = queries.query_ids
    matrix = toy_embed(texts, dim=opts.dim, seed=opts.seed)
    save_embeddings(matrix, ids, opts.out, _ids_path(opts.out))
    _write_meta(opts.out, "toy-embed", opts.seed, "embeddings")
    return 0


def _cmd_retrieve(opts) -> int:
    tag = opts.tag or opts.method
    results: dict[str, list[tuple[str, float]]] = {}
    if opts.method == "bm25":
        if not opts.queries:
            raise UsageError("--method bm25 needs --queries")
        if not opts.index:
            raise UsageError("--method bm25 needs --index")
        index = load_bm25_index(opts.index)
        queries = ingest_queries(opts.queries)
        for query in queries:
            results[query.query_id] = bm25_search(index, query.text, opts.k)
    else:
        if not opts.query_embeddings:
            raise UsageError(f"--method {opts.method} needs --query-embeddings")
        qemb = load_embeddings(opts.query_embeddings, _ids_path(opts.query_embeddings))
        order = list(range(len(qemb.ids)))
        if opts.queries:
            queries = ingest_queries(opts.queries)
            row_of = {qid: row for row, qid in enumerate(qemb.ids)}
            order = []
            for qid in queries.query_ids:
                if qid not in row_of:
                    raise DataError(f"no embedding for query {qid}")
                order.append(row_of[qid])
        if opts.method == "dense":
            if not opts.embeddings:
                raise UsageError("--method dense needs --embeddings")
            docs = load_embeddings(opts.embeddings, _ids_path(opts.embeddings))
            ranked = exact_topk(qemb.matrix[order], docs.matrix, docs.ids, opts.k)
            for row, hits in zip(order, ranked):
                results[qemb.ids[row]] = hits
        else:
            if not opts.index:
                raise UsageError("--method ann needs --index")
            index = load_hnsw_index(opts.index)
            ef = opts.ef if opts.ef is not None else ef_for_k(opts.k)
            for row in order:
                results[qemb.ids[row]] = ann_search(index, qemb.matrix[row], opts.k, ef)
    write_run(RunList(tag=tag, results=results), opts.out)
    _write_meta(opts.out, "retrieve", opts.seed, "run")
    return 0


def _cmd_make_candidates(opts) -> int:
    run = load_run(opts.run)
    qrels = load_qrels(opts.qrels)
    candidates = make_candidates(run, qrels, opts.depth)
    write_candidates(candidates, opts.out_candidates)
    _write_meta(opts.out_candidates, "make-candidates", opts.seed, "candidates")
    if opts.out_requests:
        if not (opts.queries and opts.corpus):
            raise UsageError("--out-requests needs --queries and --corpus")
        queries = ingest_queries(opts.queries)
        corpus = ingest_corpus(opts.corpus)
        export_scoring_requests(candidates, queries, corpus, opts.out_requests)
        _write_meta(opts.out_requests, "make-candidates", opts.seed, "scoring-requests")
    return 0


def _cmd_export_negatives(opts) -> int:
    queries = ingest_queries(opts.queries)
    qrels = load_qrels(opts.qrels)
    corpus = ingest_corpus(opts.corpus)
    run = load_run(opts.run) if opts.run else None
    pairs = export_training_pairs(
        queries,
        qrels,
        corpus,
        mode=opts.mode,
        m=opts.m,
        seed=opts.seed,
        run=run,
        include_positives=not opts.no_positives,
    )
    write_training_pairs(pairs, opts.out)
    _write_meta(opts.out, "export-negatives", opts.seed, "training-pairs")
    return 0


def _cmd_apply_scores(opts) -> int:
    candidates = load_candidates(opts.candidates)
    scores = import_scores(opts.scores)
    results = {
        qid: apply_external_scores(candidates[qid], scores) for qid in candidates
    }
    write_run(RunList(tag=opts.tag, results=results), opts.out)
    _write_meta(opts.out, "apply-scores", opts.seed, "run")
    return 0


def _resolve_doc_lang(opts) -> str:
    if opts.doc_lang:
        return opts.doc_lang
    if not opts.corpus:
        raise UsageError("pass --doc-lang or --corpus")
    corpus = ingest_corpus(opts.corpus)
    languages = corpus.languages()
    if len(languages) != 1:
        raise DataError(
            f"corpus holds languages {languages}; pass --doc-lang to pick one"
        )
    return languages[0]


def _cmd_evaluate(opts) -> int:
    run = load_run(opts.run)
    qrels = load_qrels(opts.qrels)
    queries = ingest_queries(opts.queries)
    doc_lang = _resolve_doc_lang(opts)
    pairs = {}
    for qid in run.results:
        if qid not in queries:
            raise DataError(f"run query {qid} is missing from the queries file")
        pairs[qid] = LanguagePair(queries.get(qid).lang, doc_lang)
    run.attach_pairs(pairs)
    check_coverage(run, qrels)
    report = evaluate_run(
        run,
        qrels,
        recall_ks=_parse_ks(opts.recall_ks, "--recall-ks"),
        ndcg_ks=_parse_ks(opts.ndcg_ks, "--ndcg-ks"),
        min_grade=opts.min_grade,
    )
    write_report(report, opts.out)
    _write_meta(opts.out, "evaluate", opts.seed, "metric-report")
    print(format_report(report))
    return 0


def _cmd_analyze_bias(opts) -> int:
    run = load_run(opts.run)
    queries = ingest_queries(opts.queries)
    corpus = ingest_corpus(opts.corpus)
    qrels = load_qrels(opts.qrels)
    report = bias_report(run, queries, corpus, qrels, depth=opts.depth)
    write_bias_report(report, opts.out)
    _write_meta(opts.out, "analyze-bias", opts.seed, "bias-report")
    print(format_bias_report(report))
    return 0


def _cmd_analyze_lingsim(opts) -> int:
    report = load_report(opts.report)
    per_pair: dict[str, float] = {}
    for pair in report.per_pair:
        values = pair.recall if opts.metric == "recall" else pair.ndcg
        if opts.k not in values:
            raise DataError(
                f"report lacks {opts.metric}@{opts.k} for pair {pair.pair}"
            )
        per_pair[pair.pair] = values[opts.k]
    typology = load_typology(opts.typology)
    feature_sets = [fs.strip() for fs in opts.feature_sets.split(",") if fs.strip()]
    for fs in feature_sets:
        if fs not in FEATURE_SETS:
            raise UsageError(f"unknown feature set {fs!r}")
    reports = [
        correlate_similarity_with_performance(
            per_pair,
            typology,
            fs,
            exclude_same_language=not opts.include_same_language,
        )
        for fs in feature_sets
    ]
    write_correlation_reports(reports, opts.out, label=opts.label)
    _write_meta(opts.out, "analyze-lingsim", opts.seed, "correlation-report")
    print(format_correlation_reports(reports, label=opts.label))
    return 0


def _cmd_bench_latency(opts) -> int:
    docs = load_embeddings(opts.embeddings, _ids_path(opts.embeddings))
    qemb = load_embeddings(opts.query_embeddings, _ids_path(opts.query_embeddings))
    pairs = [_parse_pair(label) for label in opts.pairs.split(",") if label.strip()]
    if not pairs:
        raise UsageError("--pairs must list at least one ql:dl label")
    ef = opts.ef if opts.ef is not None else ef_for_k(opts.k)
    index = build_hnsw(docs, seed=opts.seed)

    with tempfile.TemporaryDirectory() as tmp:
        index_path = str(Path(tmp) / "bench.clrh")
        save_hnsw_index(index, index_path)

        def exact_engine(_pair):
            ranked = exact_topk(qemb.matrix, docs.matrix, docs.ids, opts.k)
            return dict(zip(qemb.ids, ranked))

        if opts.index_mode == "per-pair":

            def ann_engine(_pair):
                # open/search/close per pair, mirroring per-pair index access
                loaded = load_hnsw_index(index_path)
                return {
                    qid: ann_search(loaded, qemb.matrix[row], opts.k, ef)
                    for row, qid in enumerate(qemb.ids)
                }

        else:
            shared = load_hnsw_index(index_path)

            def ann_engine(_pair):
                return {
                    qid: ann_search(shared, qemb.matrix[row], opts.k, ef)
                    for row, qid in enumerate(qemb.ids)
                }

        trace, exact_runs, ann_runs = run_interleaved(pairs, exact_engine, ann_engine)

    pair_count = PAIR_COUNT_PRESETS[opts.preset] if opts.preset else None
    summary = normalize_and_summarize(trace, pair_count)
    write_latency_report(summary, trace, opts.out)
    _write_meta(opts.out, "bench-latency", opts.seed, "latency-report")

    recall = None
    if opts.qrels:
        qrels = load_qrels(opts.qrels)
        recall = {}
        for method, runs in (("exact", exact_runs), ("ann", ann_runs)):
            flags: list[bool] = []
            for label, results in runs.items():
                run = RunList(tag=method, results=results)
                per_query = recall_flags(run, qrels, opts.k)
                flags.extend(per_query.values())
            recall[method] = sum(flags) / len(flags) if flags else 0.0
    print(format_latency_report(summary, recall, recall_k=opts.k))
    return 0


_RUNNERS = {
    "ingest": _cmd_ingest,
    "index-bm25": _cmd_index_bm25,
    "index-hnsw": _cmd_index_hnsw,
    "toy-embed": _cmd_toy_embed,
    "retrieve": _cmd_retrieve,
    "make-candidates": _cmd_make_candidates,
    "export-negatives": _cmd_export_negatives,
    "apply-scores": _cmd_apply_scores,
    "evaluate": _cmd_evaluate,
    "analyze-bias": _cmd_analyze_bias,
    "analyze-lingsim": _cmd_analyze_lingsim,
    "bench-latency": _cmd_bench_latency,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        namespace = parser.parse_args(argv)
        opts = _merge(namespace.command, namespace)
        return _RUNNERS[namespace.command](opts)
    except SystemExit as exc:  # argparse --help
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (FileNotFoundError, IsADirectoryError, NotADirectoryError, PermissionError) as exc:
        # referenced paths must exist at command start; a bad path is a bad invocation
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except EngineError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # anything unexpected is an internal error
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
