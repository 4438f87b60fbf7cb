"""Contrastive fine-tuning at word, phrase, and query-document granularity.

One loop serves all three levels; they differ in batch construction (word
uses dataset-provided negatives, phrase and qd use in-batch negatives) and
in the per-epoch validation criterion:

- word: accuracy of the positive beating every provided negative
- phrase: Recall@1 source->target plus target->source
- qd: macro nDCG@10 across language pairs

The model is validated before the first update as epoch 0, and the best
checkpoint by the level's criterion is what the caller gets back; later,
worse epochs are discarded.
"""

import copy
import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .encoder import TinyEncoder
from .errors import DataError, SidecarError, UsageError
from .formats import (
    atomic_write_text,
    load_corpus_records,
    load_qrels_records,
    load_query_records,
)
from .losses import infonce_loss, word_contrastive_loss

LEVELS = ("word", "phrase", "qd")
_CRITERIA = {
    "word": "accuracy",
    "phrase": "recall@1-sum",
    "qd": "ndcg@10-macro",
}


@dataclass(frozen=True)
class ContrastiveConfig:
    level: str
    learning_rate: float = 1e-5
    batch_size: int = 16
    temperature: float = 0.1
    epochs: int = 10
    max_length: int | None = None  # tokens per text; level default when None

    def __post_init__(self):
        if self.level not in LEVELS:
            raise UsageError(f"level must be one of {LEVELS}, got {self.level!r}")
        if self.temperature <= 0:
            raise UsageError(f"temperature must be > 0, got {self.temperature}")
        if not 1 <= self.epochs <= 10:
            raise UsageError(f"epochs must be in 1..10, got {self.epochs}")
        if self.batch_size < 2:
            raise UsageError(f"batch size must be >= 2, got {self.batch_size}")
        if self.learning_rate < 0:
            raise UsageError(f"learning rate must be >= 0, got {self.learning_rate}")

    @property
    def resolved_max_length(self) -> int:
        if self.max_length is not None:
            return self.max_length
        return 512 if self.level == "qd" else 128


@dataclass
class QdValidation:
    """A retrieval task: rank docs per query, score against graded gold."""

    queries: list[dict]  # query_id, text, pair
    docs: list[dict]  # doc_id, text
    gold: dict[str, dict[str, int]]

    @classmethod
    def from_files(
        cls,
        queries_path: str,
        corpus_path: str,
        qrels_path: str,
        text_field: str = "text",
    ) -> "QdValidation":
        corpus = load_corpus_records(corpus_path)
        doc_lang = {d["doc_id"]: d["lang"] for d in corpus}
        gold: dict[str, dict[str, int]] = {}
        for qid, doc_id, grade in load_qrels_records(qrels_path):
            gold.setdefault(qid, {})[doc_id] = grade
        queries = []
        for q in load_query_records(queries_path):
            graded = gold.get(q["query_id"], {})
            positives = sorted(
                (d for d, g in graded.items() if g > 0),
                key=lambda d: (-graded[d], d),
            )
            if not positives:
                raise DataError(f"query {q['query_id']!r} has no relevant document")
            if positives[0] not in doc_lang:
                raise DataError(f"gold doc {positives[0]!r} missing from the corpus")
            queries.append(
                {
                    "query_id": q["query_id"],
                    "text": q["text"],
                    "pair": f"{q['lang']}->{doc_lang[positives[0]]}",
                }
            )
        docs = [
            {
                "doc_id": d["doc_id"],
                "text": d.get(text_field) or d["text"],
            }
            for d in corpus
        ]
        return cls(queries=queries, docs=docs, gold=gold)


@dataclass
class TrainResult:
    encoder: TinyEncoder
    criterion: str
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_value: float = float("-inf")
    encoder_state: dict | None = None


def _embed_with_grad(encoder: TinyEncoder, texts: list[str], max_len: int) -> torch.Tensor:
    flat, offsets = encoder.token_buckets(texts, max_len)
    return encoder(flat, offsets)


def _embed_eval(encoder: TinyEncoder, texts: list[str], max_len: int) -> np.ndarray:
    return encoder.encode_texts(texts, max_len)


def _ndcg_at_10(ranked_ids: list[str], grades: dict[str, int]) -> float:
    dcg = 0.0
    for i, doc_id in enumerate(ranked_ids[:10], start=1):
        grade = grades.get(doc_id, 0)
        if grade:
            dcg += (2.0**grade - 1.0) / math.log2(i + 1)
    ideal = sorted((g for g in grades.values() if g > 0), reverse=True)[:10]
    idcg = sum(
        (2.0**g - 1.0) / math.log2(i + 1) for i, g in enumerate(ideal, start=1)
    )
    return dcg / idcg if idcg > 0 else 0.0


def validate_word(encoder: TinyEncoder, instances: list[dict], max_len: int) -> float:
    hits = 0
    for inst in instances:
        rows = _embed_eval(
            encoder,
            [inst["anchor"], inst["positive"], *inst["negatives"]],
            max_len,
        )
        anchor, positive, negatives = rows[0], rows[1], rows[2:]
        if float(anchor @ positive) > float(np.max(negatives @ anchor)):
            hits += 1
    return hits / len(instances)


def validate_phrase(encoder: TinyEncoder, pairs: list[dict], max_len: int) -> float:
    sources = _embed_eval(encoder, [p["source"] for p in pairs], max_len)
    targets = _embed_eval(encoder, [p["target"] for p in pairs], max_len)
    sims = sources.astype(np.float64) @ targets.astype(np.float64).T
    forward = float(np.mean(np.argmax(sims, axis=1) == np.arange(len(pairs))))
    backward = float(np.mean(np.argmax(sims, axis=0) == np.arange(len(pairs))))
    return forward + backward


def validate_qd(encoder: TinyEncoder, task: QdValidation, max_len: int) -> float:
    doc_rows = _embed_eval(encoder, [d["text"] for d in task.docs], max_len)
    query_rows = _embed_eval(encoder, [q["text"] for q in task.queries], max_len)
    doc_ids = [d["doc_id"] for d in task.docs]
    sims = query_rows.astype(np.float64) @ doc_rows.astype(np.float64).T
    per_pair: dict[str, list[float]] = {}
    rows = np.arange(len(doc_ids))
    for qi, query in enumerate(task.queries):
        order = np.lexsort((rows, -sims[qi]))
        ranked = [doc_ids[i] for i in order]
        value = _ndcg_at_10(ranked, task.gold.get(query["query_id"], {}))
        per_pair.setdefault(query["pair"], []).append(value)
    return float(np.mean([np.mean(vals) for vals in per_pair.values()]))


def _validate(config: ContrastiveConfig, encoder: TinyEncoder, validation) -> float:
    max_len = config.resolved_max_length
    if config.level == "word":
        return validate_word(encoder, validation, max_len)
    if config.level == "phrase":
        return validate_phrase(encoder, validation, max_len)
    return validate_qd(encoder, validation, max_len)


def _check_train_data(config: ContrastiveConfig, data: list[dict]) -> list[dict]:
    if config.level == "word":
        for inst in data:
            if not inst.get("negatives"):
                raise UsageError(
                    f"word-level instance for {inst.get('anchor')!r} has no negatives"
                )
        return data
    if config.level == "phrase":
        for pair in data:
            if "source" not in pair or "target" not in pair:
                raise DataError("phrase pairs need source and target texts")
        return data
    positives = [p for p in data if p.get("label") == 1]
    if not positives:
        raise UsageError("qd training needs label-1 pairs")
    return positives


def _batch_loss(
    config: ContrastiveConfig, encoder: TinyEncoder, batch: list[dict]
) -> torch.Tensor:
    max_len = config.resolved_max_length
    if config.level == "word":
        parts = []
        for inst in batch:
            rows = _embed_with_grad(
                encoder, [inst["anchor"], inst["positive"], *inst["negatives"]], max_len
            )
            parts.append(
                word_contrastive_loss(
                    rows[0:1],
                    rows[1:2],
                    rows[2:].unsqueeze(0),
                    temperature=config.temperature,
                )
            )
        return torch.stack(parts).mean()
    if config.level == "phrase":
        left = _embed_with_grad(encoder, [p["source"] for p in batch], max_len)
        right = _embed_with_grad(encoder, [p["target"] for p in batch], max_len)
    else:
        left = _embed_with_grad(encoder, [p["query_text"] for p in batch], max_len)
        right = _embed_with_grad(encoder, [p["doc_text"] for p in batch], max_len)
    return infonce_loss(left, right, temperature=config.temperature, symmetric=True)


def train_contrastive(
    config: ContrastiveConfig,
    train_data: list[dict],
    validation,
    encoder: TinyEncoder | None = None,
    seed: int = 0,
) -> TrainResult:
    """Up to config.epochs passes; returns the best checkpoint by the
    level's validation criterion, epoch 0 (untrained) included."""
    data = _check_train_data(config, train_data)
    if not data:
        raise UsageError("no training data")
    empty = validation is None or (
        isinstance(validation, list) and not validation
    ) or (isinstance(validation, QdValidation) and not validation.queries)
    if empty:
        raise UsageError("empty validation split")
    if encoder is None:
        encoder = TinyEncoder(dim=32, seed=seed)
    optimizer = torch.optim.Adam(encoder.parameters(), lr=config.learning_rate)

    result = TrainResult(encoder=encoder, criterion=_CRITERIA[config.level])

    def record(epoch: int) -> None:
        value = _validate(config, encoder, validation)
        result.history.append(
            {"epoch": epoch, "criterion": result.criterion, "value": value}
        )
        if value > result.best_value:
            result.best_value = value
            result.best_epoch = epoch
            result.encoder_state = copy.deepcopy(encoder.state_dict())

    record(0)
    order = list(range(len(data)))
    for epoch in range(1, config.epochs + 1):
        random.Random(seed * 1_000_003 + epoch).shuffle(order)
        encoder.train()
        for start in range(0, len(order), config.batch_size):
            batch = [data[i] for i in order[start : start + config.batch_size]]
            if config.level != "word" and len(batch) < 2:
                continue  # in-batch negatives need company
            loss = _batch_loss(config, encoder, batch)
            if not torch.isfinite(loss):
                raise SidecarError(f"divergent loss at epoch {epoch}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
        record(epoch)

    encoder.load_state_dict(result.encoder_state)
    encoder.eval()
    return result


def save_encoder(encoder: TinyEncoder, path: str | Path) -> None:
    blob = {
        "kind": "tiny-encoder",
        "dim": encoder.dim,
        "buckets": encoder.buckets,
        "state": encoder.state_dict(),
    }
    tmp = Path(str(path) + ".tmp")
    torch.save(blob, tmp)
    tmp.replace(path)


def load_encoder(path: str | Path) -> TinyEncoder:
    if not Path(path).exists():
        raise UsageError(f"checkpoint not found: {path}")
    blob = torch.load(path, weights_only=True)
    if not isinstance(blob, dict) or blob.get("kind") != "tiny-encoder":
        raise DataError(f"{path}: not an encoder checkpoint")
    encoder = TinyEncoder(dim=blob["dim"], buckets=blob["buckets"])
    encoder.load_state_dict(blob["state"])
    encoder.eval()
    return encoder


def write_metrics_log(result: TrainResult, path: str | Path) -> None:
    lines = [json.dumps(record, sort_keys=True) for record in result.history]
    atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))
