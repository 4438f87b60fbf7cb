"""Re-ranking candidate pipeline.

Builds depth-limited candidate sets from a first-stage run (injecting the
gold document when the first stage missed it), samples easy or hard negatives
for cross-encoder training, and applies externally computed scores back onto
the candidates.  Scoring requests and responses cross the process boundary as
line-delimited JSON.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass

from .corpus import Corpus, Judgments, Query, QuerySet, _derive_seed
from .errors import DataError, UsageError
from .evaluation import RunList

DEFAULT_DEPTH = 100


@dataclass
class CandidateSet:
    """Candidates for one query, in first-stage order with the gold injected.

    first_stage_ranks carries the 1-based rank each candidate held in the
    first-stage list; an injected gold takes over the rank of the slot it
    fills, which keeps the rank map unique and total.
    """

    query_id: str
    doc_ids: list[str]
    first_stage_ranks: dict[str, int]

    def __post_init__(self) -> None:
        if len(set(self.doc_ids)) != len(self.doc_ids):
            raise DataError(f"query {self.query_id}: duplicate candidate doc_ids")
        for doc_id in self.doc_ids:
            if doc_id not in self.first_stage_ranks:
                raise DataError(
                    f"query {self.query_id}: candidate {doc_id} has no rank"
                )


@dataclass
class TrainingPair:
    query_id: str
    query_text: str
    doc_id: str
    doc_text: str
    label: int
    difficulty: str

    def __post_init__(self) -> None:
        if self.label not in (0, 1):
            raise DataError(f"label must be 0 or 1, got {self.label!r}")
        if self.difficulty not in ("easy", "hard"):
            raise DataError(f"difficulty must be easy or hard, got {self.difficulty!r}")


def make_candidates(
    run: RunList, qrels: Judgments, depth: int = DEFAULT_DEPTH
) -> dict[str, CandidateSet]:
    """Top-depth first-stage candidates per query, gold guaranteed present.

    A missing gold replaces the item at position `depth` when the list is
    full, and is appended when the list is shorter.  With several relevant
    docs the one with the highest grade (ties by doc_id) is injected.
    """
    if depth < 1:
        raise UsageError(f"depth must be >= 1, got {depth}")
    for qid in qrels.query_ids:
        if qid not in run.results:
            raise DataError(f"judged query {qid} is missing from the first-stage run")
    out: dict[str, CandidateSet] = {}
    for qid, ranking in run.results.items():
        golds = qrels.gold_ids(qid)
        if not golds:
            raise DataError(f"query {qid} has no relevant document in the judgments")
        docs = [doc_id for doc_id, _ in ranking[:depth]]
        ranks = {doc_id: i + 1 for i, doc_id in enumerate(docs)}
        if not any(qrels.grade(qid, doc_id) > 0 for doc_id in docs):
            gold = golds[0]
            if len(docs) == depth:
                dropped = docs[-1]
                del ranks[dropped]
                docs[-1] = gold
                ranks[gold] = depth
            else:
                docs.append(gold)
                ranks[gold] = len(docs)
        out[qid] = CandidateSet(query_id=qid, doc_ids=docs, first_stage_ranks=ranks)
    return out


def sample_negatives(
    query: Query,
    qrels: Judgments,
    corpus: Corpus,
    run: RunList | None,
    mode: str,
    m: int,
    seed: int,
) -> list[TrainingPair]:
    """m non-relevant documents for one query, as label-0 training pairs.

    easy: uniform draws without replacement from the corpus docs whose grade
    is 0 (unjudged counts as 0), deterministic under the seed.  hard: the m
    highest-ranked non-relevant docs from the first-stage run.
    """
    if m < 1:
        raise UsageError(f"m must be >= 1, got {m}")
    if mode not in ("easy", "hard"):
        raise UsageError(f"mode must be easy or hard, got {mode!r}")
    qid = query.query_id
    if mode == "easy":
        pool = [d.doc_id for d in corpus if qrels.grade(qid, d.doc_id) == 0]
        if len(pool) < m:
            raise DataError(
                f"query {qid}: {len(pool)} eligible negatives, need {m}"
            )
        rng = random.Random(_derive_seed(seed, "easy-negatives", qid))
        chosen = rng.sample(pool, m)
    else:
        if run is None:
            raise UsageError("hard negatives require a first-stage run")
        if qid not in run.results:
            raise DataError(f"query {qid} is missing from the first-stage run")
        chosen = []
        for doc_id, _ in run.results[qid]:
            if qrels.grade(qid, doc_id) == 0:
                chosen.append(doc_id)
                if len(chosen) == m:
                    break
        if len(chosen) < m:
            raise DataError(
                f"query {qid}: only {len(chosen)} non-relevant docs in the run, need {m}"
            )
    return [
        TrainingPair(
            query_id=qid,
            query_text=query.text,
            doc_id=doc_id,
            doc_text=corpus.get(doc_id).text,
            label=0,
            difficulty=mode,
        )
        for doc_id in chosen
    ]


def positive_pairs(
    query: Query, qrels: Judgments, corpus: Corpus, difficulty: str
) -> list[TrainingPair]:
    """One label-1 pair per relevant doc; difficulty tags the export batch."""
    return [
        TrainingPair(
            query_id=query.query_id,
            query_text=query.text,
            doc_id=doc_id,
            doc_text=corpus.get(doc_id).text,
            label=1,
            difficulty=difficulty,
        )
        for doc_id in qrels.gold_ids(query.query_id)
    ]


def export_training_pairs(
    queries: QuerySet,
    qrels: Judgments,
    corpus: Corpus,
    mode: str,
    m: int,
    seed: int,
    run: RunList | None = None,
    include_positives: bool = True,
) -> list[TrainingPair]:
    """Per query: the relevant docs as positives, then m sampled negatives."""
    pairs: list[TrainingPair] = []
    for query in queries:
        if include_positives:
            pairs.extend(positive_pairs(query, qrels, corpus, mode))
        pairs.extend(sample_negatives(query, qrels, corpus, run, mode, m, seed))
    return pairs


def write_training_pairs(pairs: list[TrainingPair], path: str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for pair in pairs:
            handle.write(
                json.dumps(
                    {
                        "query_id": pair.query_id,
                        "doc_id": pair.doc_id,
                        "query_text": pair.query_text,
                        "doc_text": pair.doc_text,
                        "label": pair.label,
                        "difficulty": pair.difficulty,
                    },
                    ensure_ascii=False,
                    sort_keys=True,
                )
                + "\n"
            )


def load_training_pairs(path: str) -> list[TrainingPair]:
    pairs = []
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                pairs.append(
                    TrainingPair(
                        query_id=record["query_id"],
                        query_text=record["query_text"],
                        doc_id=record["doc_id"],
                        doc_text=record["doc_text"],
                        label=record["label"],
                        difficulty=record["difficulty"],
                    )
                )
            except (json.JSONDecodeError, KeyError) as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
    return pairs


def apply_external_scores(
    candidates: CandidateSet, scores: dict[tuple[str, str], float]
) -> list[tuple[str, float]]:
    """Candidates re-ranked by external score descending, ties by first-stage
    rank ascending.  The output is a permutation of the candidate set."""
    ranked = []
    for doc_id in candidates.doc_ids:
        key = (candidates.query_id, doc_id)
        if key not in scores:
            raise DataError(
                f"no score for query {candidates.query_id}, doc {doc_id}"
            )
        ranked.append((doc_id, scores[key]))
    ranked.sort(key=lambda t: (-t[1], candidates.first_stage_ranks[t[0]]))
    return ranked


# ---------------------------------------------------------------------------
# Engine <-> scorer boundary files


def write_candidates(candidates: dict[str, CandidateSet], path: str) -> None:
    """Candidate file keeps first-stage ranks so a later apply step can break
    score ties without the original run."""
    with open(path, "w", encoding="utf-8") as handle:
        for qid in candidates:
            cset = candidates[qid]
            for doc_id in cset.doc_ids:
                record = {
                    "query_id": qid,
                    "doc_id": doc_id,
                    "rank": cset.first_stage_ranks[doc_id],
                }
                handle.write(json.dumps(record, sort_keys=True) + "\n")


def load_candidates(path: str) -> dict[str, CandidateSet]:
    rows: dict[str, list[tuple[str, int]]] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                rows.setdefault(record["query_id"], []).append(
                    (record["doc_id"], int(record["rank"]))
                )
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
    return {
        qid: CandidateSet(
            query_id=qid,
            doc_ids=[doc_id for doc_id, _ in docs],
            first_stage_ranks=dict(docs),
        )
        for qid, docs in rows.items()
    }


def export_scoring_requests(
    candidates: dict[str, CandidateSet],
    queries: QuerySet,
    corpus: Corpus,
    path: str,
) -> None:
    """One request per (query, candidate) with both texts attached."""
    with open(path, "w", encoding="utf-8") as handle:
        for qid in candidates:
            query_text = queries.get(qid).text
            for doc_id in candidates[qid].doc_ids:
                record = {
                    "query_id": qid,
                    "doc_id": doc_id,
                    "query_text": query_text,
                    "doc_text": corpus.get(doc_id).text,
                }
                handle.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")


def import_scores(path: str) -> dict[tuple[str, str], float]:
    """Scoring responses; a repeated pair must repeat the same score."""
    scores: dict[tuple[str, str], float] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                key = (record["query_id"], record["doc_id"])
                value = float(record["score"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            if key in scores and scores[key] != value:
                raise DataError(
                    f"{path}:{lineno}: conflicting scores for query {key[0]}, doc {key[1]}"
                )
            scores[key] = value
    return scores
