"""Contrastive training objectives.

Both losses depend on the embeddings only through cosine similarities, so
they are invariant under any rotation applied to all inputs at once.  Inputs
must be unit-norm; the check tolerance is loose enough (1e-3) that
finite-difference probes of the loss surface stay inside it.
"""

import torch
from torch.nn import functional as F

from .errors import UsageError

_NORM_TOLERANCE = 1e-3


def _check_unit_rows(name: str, rows: torch.Tensor) -> None:
    if rows.ndim != 2:
        raise UsageError(f"{name} must be 2-D (batch, dim), got {rows.ndim}-D")
    norms = rows.detach().norm(dim=-1)
    worst = (norms - 1.0).abs().max().item()
    if worst > _NORM_TOLERANCE:
        raise UsageError(f"{name} rows must be unit-norm; worst deviation {worst:.2e}")


def infonce_loss(
    query_embs: torch.Tensor,
    doc_embs: torch.Tensor,
    temperature: float = 0.1,
    symmetric: bool = False,
) -> torch.Tensor:
    """Mean in-batch softmax loss with the diagonal as positives.

    L = -(1/B) sum_i log( exp(s_ii / t) / sum_j exp(s_ij / t) ) with s the
    cosine matrix; the symmetric variant averages the query->doc and
    doc->query directions.  Equals log B whenever all similarities coincide.
    """
    if temperature <= 0:
        raise UsageError(f"temperature must be > 0, got {temperature}")
    _check_unit_rows("query_embs", query_embs)
    _check_unit_rows("doc_embs", doc_embs)
    if query_embs.shape != doc_embs.shape:
        raise UsageError(
            f"batch shapes differ: {tuple(query_embs.shape)} vs {tuple(doc_embs.shape)}"
        )
    batch = query_embs.shape[0]
    if batch < 2:
        raise UsageError(f"need a batch of >= 2 pairs, got {batch}")
    logits = query_embs @ doc_embs.T / temperature
    targets = torch.arange(batch, device=logits.device)
    loss = F.cross_entropy(logits, targets)
    if symmetric:
        loss = (loss + F.cross_entropy(logits.T, targets)) / 2
    return loss


def word_contrastive_loss(
    anchors: torch.Tensor,
    positives: torch.Tensor,
    negatives: torch.Tensor,
    temperature: float = 0.1,
) -> torch.Tensor:
    """Softmax over {positive} + provided negatives, averaged over both
    pairing directions (anchor scoring and positive scoring).

    negatives has shape (batch, n_negatives, dim) with n_negatives >= 1.
    """
    if temperature <= 0:
        raise UsageError(f"temperature must be > 0, got {temperature}")
    _check_unit_rows("anchors", anchors)
    _check_unit_rows("positives", positives)
    if negatives.ndim != 3:
        raise UsageError(
            f"negatives must be 3-D (batch, n, dim), got {negatives.ndim}-D"
        )
    if negatives.shape[1] < 1:
        raise UsageError("each anchor needs at least one negative")
    if anchors.shape != positives.shape or anchors.shape[0] != negatives.shape[0]:
        raise UsageError("anchor, positive, and negative batch sizes must agree")
    flat = negatives.reshape(-1, negatives.shape[-1])
    _check_unit_rows("negatives", flat)

    pos_sim = (anchors * positives).sum(dim=-1, keepdim=True)
    targets = torch.zeros(anchors.shape[0], dtype=torch.long, device=anchors.device)
    total = torch.zeros((), dtype=anchors.dtype, device=anchors.device)
    for side in (anchors, positives):
        neg_sim = torch.einsum("bd,bnd->bn", side, negatives)
        logits = torch.cat([pos_sim, neg_sim], dim=1) / temperature
        total = total + F.cross_entropy(logits, targets)
    return total / 2
