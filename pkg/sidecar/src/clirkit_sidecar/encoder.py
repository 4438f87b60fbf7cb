"""Text encoders emitting engine-loadable embedding files.

Two desk-scale backends satisfy the output contract (mean pooling over the
final representation, L2 normalization, 512-token truncation):

- ``hashed``: a deterministic signed-hash bag of words.  No parameters, no
  torch; useful wherever a fixed encoder is enough.
- ``tiny``: a randomly initialized torch embedding-bag encoder.  This is the
  encoder the contrastive trainer fine-tunes.

Real pretrained models are configuration for deployments with the weights on
disk; anything honoring the pooling/normalization contract can sit behind
``EncoderSpec.model``.
"""

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .errors import DataError, UsageError
from .formats import write_embedding_file, write_manifest
from .textproc import model_tokens, stable_bucket, stable_sign

BACKENDS = ("hashed", "tiny")
DEFAULT_BUCKETS = 4096


@dataclass(frozen=True)
class EncoderSpec:
    model: str
    dim: int = 256
    pooling: str = "mean"
    normalize: str = "l2"
    max_tokens: int = 512
    seed: int = 0

    def __post_init__(self):
        if self.model not in BACKENDS:
            raise UsageError(
                f"unknown encoder backend {self.model!r}; expected one of {BACKENDS}"
            )
        if self.dim < 1:
            raise UsageError(f"dim must be >= 1, got {self.dim}")
        # the output contract pins both of these; reject silent divergence
        if self.pooling != "mean":
            raise UsageError(f"pooling must be 'mean', got {self.pooling!r}")
        if self.normalize != "l2":
            raise UsageError(f"normalize must be 'l2', got {self.normalize!r}")
        if self.max_tokens < 1:
            raise UsageError(f"max_tokens must be >= 1, got {self.max_tokens}")


class TinyEncoder(nn.Module):
    """Hashed-vocabulary embedding bag, mean pooled, L2 normalized."""

    def __init__(self, dim: int, buckets: int = DEFAULT_BUCKETS, seed: int = 0):
        super().__init__()
        self.dim = dim
        self.buckets = buckets
        self.bag = nn.EmbeddingBag(buckets, dim, mode="mean")
        generator = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            self.bag.weight.copy_(
                torch.randn(buckets, dim, generator=generator) / dim**0.5
            )

    def token_buckets(self, texts: list[str], max_tokens: int) -> tuple[torch.Tensor, torch.Tensor]:
        flat: list[int] = []
        offsets: list[int] = []
        for row, text in enumerate(texts):
            tokens = model_tokens(text, max_tokens)
            if not tokens:
                raise DataError(f"row {row}: text produced no tokens")
            offsets.append(len(flat))
            flat.extend(stable_bucket(t, self.buckets) for t in tokens)
        return torch.tensor(flat, dtype=torch.long), torch.tensor(offsets, dtype=torch.long)

    def forward(self, flat: torch.Tensor, offsets: torch.Tensor) -> torch.Tensor:
        pooled = self.bag(flat, offsets)
        return nn.functional.normalize(pooled, dim=1)

    def encode_texts(self, texts: list[str], max_tokens: int = 512) -> np.ndarray:
        self.eval()
        with torch.no_grad():
            flat, offsets = self.token_buckets(texts, max_tokens)
            out = self.forward(flat, offsets)
        return out.to(torch.float32).numpy()


def _hashed_rows(texts: list[str], spec: EncoderSpec) -> np.ndarray:
    rows = np.zeros((len(texts), spec.dim), dtype=np.float64)
    salt = f"enc{spec.seed}:"
    for row, text in enumerate(texts):
        tokens = model_tokens(text, spec.max_tokens)
        if not tokens:
            raise DataError(f"row {row}: text produced no tokens")
        for token in tokens:
            rows[row, stable_bucket(token, spec.dim, salt)] += stable_sign(token, salt)
        rows[row] /= len(tokens)
    return rows


def embed_texts(texts: list[str], spec: EncoderSpec) -> np.ndarray:
    """Unit-norm float32 rows, one per input text, deterministic per spec."""
    if not texts:
        return np.zeros((0, spec.dim), dtype=np.float32)
    if spec.model == "hashed":
        rows = _hashed_rows(texts, spec)
    else:
        encoder = TinyEncoder(spec.dim, seed=spec.seed)
        rows = encoder.encode_texts(texts, spec.max_tokens).astype(np.float64)
    if not np.isfinite(rows).all():
        raise DataError("non-finite activations")
    norms = np.linalg.norm(rows, axis=1)
    if (norms == 0.0).any():
        raise DataError("zero-norm embedding row")
    return (rows / norms[:, None]).astype(np.float32)


def embed_records(
    records: list[dict],
    spec: EncoderSpec,
    out_path: str,
    text_field: str = "text",
    id_field: str = "doc_id",
    encoder: TinyEncoder | None = None,
) -> int:
    """Embed corpus or query records and write the embedding + ids + manifest.

    Row order matches input order.  Pass a fine-tuned ``encoder`` to use its
    weights instead of a fresh ``EncoderSpec``-seeded initialization.
    """
    ids = []
    texts = []
    for record in records:
        if id_field not in record:
            raise DataError(f"record missing {id_field!r}")
        value = record.get(text_field)
        if not value or not str(value).strip():
            raise DataError(f"{id_field} {record[id_field]!r}: empty {text_field!r}")
        ids.append(str(record[id_field]))
        texts.append(str(value))
    if encoder is not None:
        if spec.model != "tiny":
            raise UsageError("an explicit encoder requires the tiny backend")
        rows = encoder.encode_texts(texts, spec.max_tokens)
    else:
        rows = embed_texts(texts, spec)
    write_embedding_file(out_path, rows, ids)
    write_manifest(out_path, spec.model, spec.dim, out_path)
    return len(ids)
