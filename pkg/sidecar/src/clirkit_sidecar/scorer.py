"""Cross-encoder pair scoring over the engine's request/response files.

The model is a hashed-vocabulary joint scorer: both texts are mean-pooled
through a shared embedding table and a linear head maps
[query, doc, query*doc] to one logit.  Prediction runs at batch size 32 and
emits sigmoid scores, clamped into the open interval (0, 1) so downstream
consumers can rely on that range even when the logit saturates float
precision.
"""

import math
from pathlib import Path

import torch
from torch import nn

from .errors import DataError, UsageError
from .formats import read_scoring_requests, write_scoring_responses
from .textproc import model_tokens, stable_bucket

PREDICT_BATCH_SIZE = 32
_SCORE_FLOOR = math.ulp(0.0)
_SCORE_CEIL = 1.0 - 2.0**-53


class TinyCrossEncoder(nn.Module):
    def __init__(
        self,
        dim: int = 32,
        buckets: int = 2048,
        max_tokens: int = 512,
        seed: int = 0,
    ):
        super().__init__()
        self.dim = dim
        self.buckets = buckets
        self.max_tokens = max_tokens
        self.bag = nn.EmbeddingBag(buckets, dim, mode="mean")
        self.head = nn.Linear(3 * dim, 1)
        generator = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            self.bag.weight.copy_(
                torch.randn(buckets, dim, generator=generator) / dim**0.5
            )
            self.head.weight.copy_(
                torch.randn(1, 3 * dim, generator=generator) / (3 * dim) ** 0.5
            )
            self.head.bias.zero_()

    def _bags(self, texts: list[str]) -> tuple[torch.Tensor, torch.Tensor]:
        flat: list[int] = []
        offsets: list[int] = []
        for text in texts:
            tokens = model_tokens(text, self.max_tokens)
            offsets.append(len(flat))
            # a token-free text pools to the zero vector via the pad bucket
            flat.extend(
                stable_bucket(t, self.buckets) for t in (tokens or ["<empty>"])
            )
        return torch.tensor(flat, dtype=torch.long), torch.tensor(
            offsets, dtype=torch.long
        )

    def forward(self, query_texts: list[str], doc_texts: list[str]) -> torch.Tensor:
        q = self.bag(*self._bags(query_texts))
        d = self.bag(*self._bags(doc_texts))
        features = torch.cat([q, d, q * d], dim=1)
        return self.head(features).squeeze(1)


def save_cross_encoder(model: TinyCrossEncoder, path: str | Path) -> None:
    blob = {
        "kind": "cross-encoder",
        "dim": model.dim,
        "buckets": model.buckets,
        "max_tokens": model.max_tokens,
        "state": model.state_dict(),
    }
    tmp = Path(str(path) + ".tmp")
    torch.save(blob, tmp)
    tmp.replace(path)


def load_cross_encoder(path: str | Path) -> TinyCrossEncoder:
    if not Path(path).exists():
        raise UsageError(f"checkpoint not found: {path}")
    blob = torch.load(path, weights_only=True)
    if not isinstance(blob, dict) or blob.get("kind") != "cross-encoder":
        raise DataError(f"{path}: not a cross-encoder checkpoint")
    model = TinyCrossEncoder(
        dim=blob["dim"], buckets=blob["buckets"], max_tokens=blob["max_tokens"]
    )
    model.load_state_dict(blob["state"])
    model.eval()
    return model


def score_requests(model: TinyCrossEncoder, requests: list[dict]) -> list[dict]:
    """One response per request, input order preserved."""
    model.eval()
    out: list[dict] = []
    with torch.no_grad():
        for start in range(0, len(requests), PREDICT_BATCH_SIZE):
            batch = requests[start : start + PREDICT_BATCH_SIZE]
            logits = model(
                [r["query_text"] for r in batch], [r["doc_text"] for r in batch]
            )
            scores = torch.sigmoid(logits.to(torch.float64))
            for request, score in zip(batch, scores.tolist()):
                out.append(
                    {
                        "query_id": request["query_id"],
                        "doc_id": request["doc_id"],
                        "score": min(max(score, _SCORE_FLOOR), _SCORE_CEIL),
                    }
                )
    return out


def score_pairs_file(requests_path: str, checkpoint_path: str, out_path: str) -> int:
    model = load_cross_encoder(checkpoint_path)
    requests = read_scoring_requests(requests_path)
    write_scoring_responses(out_path, score_requests(model, requests))
    return len(requests)
