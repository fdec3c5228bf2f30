"""Hierarchical cross-attention fusion.

One head per target modality: scaled dot-product cross-attention against
the first context modality, whose output becomes the query against the
second context, followed by additive attention pooling

    alpha_i = softmax_i(v . tanh(W_h h_i + b_h)),   r = sum_i alpha_i h_i

collapsing the refined sequence to one vector per modality.
"""

from __future__ import annotations

import math
from typing import Optional

import torch
from torch import nn

from .data_model import Modality, ModalityOrdering
from .encoders import EncodedSequence
from .errors import NonFiniteLogitError, ShapeMismatchError


def _masked_softmax(logits: torch.Tensor, mask: Optional[torch.Tensor]) -> torch.Tensor:
    """Softmax over the last axis; masked positions get zero weight.

    Max subtraction keeps the exponentials in range; every row is
    guaranteed at least one valid position (T >= 1).
    """
    if mask is not None:
        logits = logits.masked_fill(~mask, float("-inf"))
    shifted = logits - logits.amax(dim=-1, keepdim=True)
    weights = torch.exp(shifted)
    return weights / weights.sum(dim=-1, keepdim=True)


class CrossAttention(nn.Module):
    """Queries from the target sequence, keys and values from the context."""

    def __init__(
        self,
        d_model: int,
        d_k: Optional[int] = None,
        n_heads: int = 1,
        output_proj: bool = True,
        dtype=torch.float32,
    ):
        super().__init__()
        d_k = d_k or d_model
        if d_k % n_heads != 0:
            raise ShapeMismatchError(f"d_k={d_k} not divisible by n_heads={n_heads}")
        if not output_proj and d_k != d_model:
            raise ShapeMismatchError("without an output map, d_k must equal d_model")
        self.d_k = d_k
        self.n_heads = n_heads
        self.q_proj = nn.Linear(d_model, d_k, dtype=dtype)
        self.k_proj = nn.Linear(d_model, d_k, dtype=dtype)
        self.v_proj = nn.Linear(d_model, d_k, dtype=dtype)
        self.out_proj = nn.Linear(d_k, d_model, dtype=dtype) if output_proj else None

    def forward(
        self,
        query_seq: torch.Tensor,  # (B, Tq, d_model)
        context_seq: torch.Tensor,  # (B, Tc, d_model)
        context_mask: Optional[torch.Tensor] = None,  # (B, Tc) bool
        return_weights: bool = False,
    ):
        if query_seq.shape[-1] != context_seq.shape[-1]:
            raise ShapeMismatchError(
                f"query width {query_seq.shape[-1]} != context width {context_seq.shape[-1]}"
            )
        b, tq, _ = query_seq.shape
        tc = context_seq.shape[1]
        d_h = self.d_k // self.n_heads

        def split(x, t):
            return x.view(b, t, self.n_heads, d_h).transpose(1, 2)  # (B, H, T, d_h)

        q = split(self.q_proj(query_seq), tq)
        k = split(self.k_proj(context_seq), tc)
        v = split(self.v_proj(context_seq), tc)

        logits = q @ k.transpose(-1, -2) / math.sqrt(d_h)  # (B, H, Tq, Tc)
        if not torch.isfinite(logits).all():
            raise NonFiniteLogitError("attention logits are not finite")
        mask = context_mask[:, None, None, :] if context_mask is not None else None
        weights = _masked_softmax(logits, mask)

        out = (weights @ v).transpose(1, 2).reshape(b, tq, self.d_k)
        if self.out_proj is not None:
            out = self.out_proj(out)
        if return_weights:
            return out, weights
        return out


class HcaHead(nn.Module):
    """Two chained cross-attention stages refining one target modality."""

    def __init__(self, d_model: int, d_k: Optional[int] = None, n_heads: int = 1, dtype=torch.float32):
        super().__init__()
        self.stage1 = CrossAttention(d_model, d_k, n_heads, dtype=dtype)
        self.stage2 = CrossAttention(d_model, d_k, n_heads, dtype=dtype)

    def forward(
        self,
        target: torch.Tensor,
        ctx_first: torch.Tensor,
        ctx_second: torch.Tensor,
        ctx_first_mask: Optional[torch.Tensor] = None,
        ctx_second_mask: Optional[torch.Tensor] = None,
    ) -> torch.Tensor:
        refined = self.stage1(target, ctx_first, ctx_first_mask)
        return self.stage2(refined, ctx_second, ctx_second_mask)


class AttentionPool(nn.Module):
    """Additive scoring over timesteps; output is a convex combination of rows."""

    def __init__(self, d_model: int, d_hidden: Optional[int] = None, dtype=torch.float32):
        super().__init__()
        self.score = nn.Linear(d_model, d_hidden or d_model, dtype=dtype)
        self.v = nn.Parameter(torch.zeros(d_hidden or d_model, dtype=dtype))

    def forward(self, seq: torch.Tensor, mask: Optional[torch.Tensor] = None):
        """(B, T, d) -> ((B, d), (B, T) weights)."""
        scores = torch.tanh(self.score(seq)) @ self.v  # (B, T)
        alpha = _masked_softmax(scores, mask)
        pooled = (alpha.unsqueeze(-1) * seq).sum(dim=1)
        return pooled, alpha


class TriModalFusion(nn.Module):
    """A distinct HCA head plus pooling layer for each target modality."""

    def __init__(
        self,
        d_model: int,
        ordering: Optional[ModalityOrdering] = None,
        d_k: Optional[int] = None,
        n_heads: int = 1,
        pool_hidden: Optional[int] = None,
        dtype=torch.float32,
    ):
        super().__init__()
        self.ordering = ordering or ModalityOrdering.default()
        self.heads = nn.ModuleDict(
            {m.key: HcaHead(d_model, d_k, n_heads, dtype=dtype) for m in self.ordering.contexts}
        )
        self.pools = nn.ModuleDict(
            {m.key: AttentionPool(d_model, pool_hidden, dtype=dtype) for m in self.ordering.contexts}
        )

    def forward(self, sequences: dict, masks: Optional[dict] = None) -> dict:
        """{modality key: (B, T, d)} -> {modality key: (B, d)} pooled vectors."""
        masks = masks or {}
        pooled = {}
        for target, (first, second) in self.ordering.contexts.items():
            refined = self.heads[target.key](
                sequences[target.key],
                sequences[first.key],
                sequences[second.key],
                masks.get(first.key),
                masks.get(second.key),
            )
            pooled[target.key], _ = self.pools[target.key](refined, masks.get(target.key))
        return pooled


# ---------------------------------------------------------------------------
# single-sequence surfaces used by tests and small tools
# ---------------------------------------------------------------------------


def cross_attention(
    query_seq: torch.Tensor, context_seq: torch.Tensor, params: CrossAttention
) -> torch.Tensor:
    """(T1, d) x (T2, d) -> (T1, d)."""
    return params(query_seq.unsqueeze(0), context_seq.unsqueeze(0)).squeeze(0)


def hca_head(
    target: EncodedSequence,
    ctx_first: EncodedSequence,
    ctx_second: EncodedSequence,
    params: HcaHead,
) -> torch.Tensor:
    return params(
        target.data.unsqueeze(0), ctx_first.data.unsqueeze(0), ctx_second.data.unsqueeze(0)
    ).squeeze(0)


def attention_pool(seq: torch.Tensor, params: AttentionPool):
    pooled, alpha = params(seq.unsqueeze(0))
    return pooled.squeeze(0), alpha.squeeze(0)


def fuse(
    text_enc: EncodedSequence,
    audio_enc: EncodedSequence,
    video_enc: EncodedSequence,
    ordering: ModalityOrdering,
    params: TriModalFusion,
):
    """Per-modality pooled vectors (r_text, r_audio, r_video)."""
    if params.ordering.contexts != ordering.contexts:
        raise ShapeMismatchError("fusion params were built for a different ordering")
    sequences = {
        Modality.TEXT.key: text_enc.data.unsqueeze(0),
        Modality.AUDIO.key: audio_enc.data.unsqueeze(0),
        Modality.VIDEO.key: video_enc.data.unsqueeze(0),
    }
    pooled = params(sequences)
    return (
        pooled[Modality.TEXT.key].squeeze(0),
        pooled[Modality.AUDIO.key].squeeze(0),
        pooled[Modality.VIDEO.key].squeeze(0),
    )
