"""Cross-encoder re-ranker training over exported training pairs.

Pairs are split 90/10 stratified by label under a fixed seed, the objective
is binary cross-entropy over sigmoid scores, the learning rate warms up
linearly over the first tenth of the steps and decays linearly afterwards,
and the checkpoint with the best validation loss is what comes back.
"""

import copy
import random
from dataclasses import dataclass

import torch

from .errors import SidecarError, UsageError
from .scorer import TinyCrossEncoder

SPLIT_SEED = 42


@dataclass(frozen=True)
class CrossEncoderConfig:
    learning_rate: float = 2e-5
    warmup_ratio: float = 0.1
    batch_size: int = 8
    epochs: int = 10
    validation_fraction: float = 0.1
    seed: int = SPLIT_SEED

    def __post_init__(self):
        if self.learning_rate < 0:
            raise UsageError(f"learning rate must be >= 0, got {self.learning_rate}")
        if not 0 <= self.warmup_ratio < 1:
            raise UsageError(f"warmup ratio must be in [0, 1), got {self.warmup_ratio}")
        if self.batch_size < 1:
            raise UsageError(f"batch size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise UsageError(f"epochs must be >= 1, got {self.epochs}")
        if not 0 < self.validation_fraction < 1:
            raise UsageError(
                f"validation fraction must be in (0, 1), got {self.validation_fraction}"
            )


def bce_loss(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Mean binary cross-entropy over sigmoid scores; ln 2 at logit 0."""
    return torch.nn.functional.binary_cross_entropy_with_logits(
        logits, labels.to(logits.dtype)
    )


def stratified_split(
    pairs: list[dict],
    validation_fraction: float = 0.1,
    seed: int = SPLIT_SEED,
) -> tuple[list[dict], list[dict]]:
    """Deterministic label-stratified split; per label the validation side
    gets round(n * fraction) examples, so the ratio holds within one."""
    by_label: dict[int, list[int]] = {}
    for i, pair in enumerate(pairs):
        by_label.setdefault(pair["label"], []).append(i)
    if set(by_label) != {0, 1}:
        raise UsageError(
            f"training pairs must contain both labels, got {sorted(by_label)}"
        )
    train_idx: list[int] = []
    val_idx: list[int] = []
    for label in sorted(by_label):
        indices = list(by_label[label])
        random.Random(seed * 7919 + label).shuffle(indices)
        n_val = round(len(indices) * validation_fraction)
        val_idx.extend(indices[:n_val])
        train_idx.extend(indices[n_val:])
    if not val_idx:
        raise UsageError("validation split is empty; provide more pairs")
    return [pairs[i] for i in sorted(train_idx)], [pairs[i] for i in sorted(val_idx)]


@dataclass
class CrossEncoderResult:
    model: TinyCrossEncoder
    history: list[dict]
    best_epoch: int
    best_validation_loss: float


def _validation_loss(model: TinyCrossEncoder, pairs: list[dict]) -> float:
    model.eval()
    total = 0.0
    with torch.no_grad():
        for start in range(0, len(pairs), 32):
            batch = pairs[start : start + 32]
            logits = model(
                [p["query_text"] for p in batch], [p["doc_text"] for p in batch]
            )
            labels = torch.tensor([float(p["label"]) for p in batch])
            total += bce_loss(logits, labels).item() * len(batch)
    return total / len(pairs)


def train_cross_encoder(
    config: CrossEncoderConfig,
    pairs: list[dict],
    model: TinyCrossEncoder | None = None,
) -> CrossEncoderResult:
    train_pairs, val_pairs = stratified_split(
        pairs, config.validation_fraction, config.seed
    )
    if model is None:
        model = TinyCrossEncoder(seed=config.seed)
    optimizer = torch.optim.AdamW(model.parameters(), lr=config.learning_rate)
    steps_per_epoch = max(1, (len(train_pairs) + config.batch_size - 1) // config.batch_size)
    total_steps = steps_per_epoch * config.epochs
    warmup_steps = max(1, int(total_steps * config.warmup_ratio))

    def lr_scale(step: int) -> float:
        if step < warmup_steps:
            return (step + 1) / warmup_steps
        remaining = total_steps - warmup_steps
        if remaining <= 0:
            return 1.0
        return max(0.0, (total_steps - step) / remaining)

    scheduler = torch.optim.lr_scheduler.LambdaLR(optimizer, lr_scale)

    history: list[dict] = []
    best_loss = _validation_loss(model, val_pairs)
    best_epoch = 0
    best_state = copy.deepcopy(model.state_dict())
    history.append({"epoch": 0, "criterion": "validation-loss", "value": best_loss})

    order = list(range(len(train_pairs)))
    for epoch in range(1, config.epochs + 1):
        random.Random(config.seed * 1_000_003 + epoch).shuffle(order)
        model.train()
        for start in range(0, len(order), config.batch_size):
            batch = [train_pairs[i] for i in order[start : start + config.batch_size]]
            logits = model(
                [p["query_text"] for p in batch], [p["doc_text"] for p in batch]
            )
            labels = torch.tensor([float(p["label"]) for p in batch])
            loss = bce_loss(logits, labels)
            if not torch.isfinite(loss):
                raise SidecarError(f"divergent loss at epoch {epoch}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            scheduler.step()
        value = _validation_loss(model, val_pairs)
        history.append({"epoch": epoch, "criterion": "validation-loss", "value": value})
        if value < best_loss:
            best_loss = value
            best_epoch = epoch
            best_state = copy.deepcopy(model.state_dict())

    model.load_state_dict(best_state)
    model.eval()
    return CrossEncoderResult(
        model=model,
        history=history,
        best_epoch=best_epoch,
        best_validation_loss=best_loss,
    )
