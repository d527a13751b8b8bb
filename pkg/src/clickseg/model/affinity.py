"""Attention-relevance alignment between clicks, attention, and prediction.

Per stage, all post-softmax attention maps are averaged over layers and heads
into one row-stochastic matrix. Weighting its key dimension by the click
similarity (or its complement) and contracting against the predicted
foreground (or background) probability yields per-patch relevance scores,
which are pulled toward the prediction masked by similarity. The prediction
side of that comparison is a constant: gradients flow through the attention
maps and the similarity field inside the relevance scores only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from .layers import AttentionRecord
from .similarity import SimilarityField


@dataclass
class RelevancePair:
    stage: int
    y_pos: ad.Tensor  # (L, 1)
    y_neg: ad.Tensor  # (L, 1)


def aggregate_attention(records: list[AttentionRecord]) -> ad.Tensor:
    """Arithmetic mean of post-softmax maps over every (layer, head) pair."""
    if not records:
        raise ValueError("no attention records to aggregate")
    shape = records[0].post.shape
    if shape[0] != shape[1]:
        raise ValueError(
            f"aggregation needs square attention maps, got {shape}; "
            f"disable spatial reduction for stages feeding this loss")
    for r in records[1:]:
        if r.post.shape != shape:
            raise ValueError(
                f"mixed attention shapes {r.post.shape} vs {shape}")
    acc = records[0].post
    for r in records[1:]:
        acc = ad.add(acc, r.post)
    return ad.scale(acc, 1.0 / len(records))


def relevance(attn: ad.Tensor, sim: ad.Tensor, x_p: ad.Tensor) -> RelevancePair:
    """Key-masked attention contracted with fore/background probabilities.

    y_pos[j] = sum_k attn[j,k] * sim[k] * x_p[k]; y_neg uses (1 - sim) and
    (1 - x_p). ``sim`` is (L, 1); ``x_p`` is (L, 1) with values in [0, 1].
    """
    L = attn.shape[0]
    if attn.shape != (L, L) or sim.shape != (L, 1) or x_p.shape != (L, 1):
        raise ValueError(
            f"shape mismatch: attn {attn.shape}, sim {sim.shape}, x_p {x_p.shape}")
    s_key = ad.reshape(sim, (1, L))
    ones = ad.Tensor(np.ones((1, L)))
    y_pos = ad.matmul(ad.mul(attn, s_key), x_p)
    x_bg = ad.sub(ad.Tensor(np.ones((L, 1))), x_p)
    y_neg = ad.matmul(ad.mul(attn, ad.sub(ones, s_key)), x_bg)
    return RelevancePair(stage=-1, y_pos=y_pos, y_neg=y_neg)


def affinity_loss(stage_attn: list[ad.Tensor], sims: list[SimilarityField],
                  x_p_stage: list[np.ndarray]) -> ad.Tensor:
    """Mean over stages of L1 gaps between relevance and masked prediction.

    ``x_p_stage`` holds the predicted foreground probability pooled to each
    stage grid as plain arrays; it enters only as a constant. Targets
    (prediction masked by similarity) are detached, so the loss shapes the
    attention and similarity, not the prediction.
    """
    n = len(stage_attn)
    if n == 0:
        raise ValueError("affinity loss needs at least one stage")
    if not (len(sims) == len(x_p_stage) == n):
        raise ValueError("per-stage inputs disagree in length")
    total = None
    for attn, sim, xp_np in zip(stage_attn, sims, x_p_stage):
        L = attn.shape[0]
        xp = ad.Tensor(xp_np.reshape(L, 1))
        pair = relevance(attn, sim.values, xp)
        ones = ad.Tensor(np.ones((L, 1)))
        t_pos = ad.detach(ad.mul(xp, sim.values))
        t_neg = ad.detach(ad.mul(ad.sub(ones, xp), ad.sub(ones, sim.values)))
        term = ad.add(ad.l1(pair.y_pos, t_pos), ad.l1(pair.y_neg, t_neg))
        total = term if total is None else ad.add(total, term)
    return ad.scale(total, 1.0 / n)


def pool_probability(prob_quarter: np.ndarray, grid_sides: list[int]) -> list[np.ndarray]:
    """Area-average the 1/4-scale probability grid down to each stage grid."""
    s0 = prob_quarter.shape[0]
    out = []
    for side in grid_sides:
        r = s0 // side
        if side * r != s0:
            raise ValueError(f"stage side {side} incompatible with grid {s0}")
        pooled = prob_quarter.reshape(side, r, side, r).mean(axis=(1, 3))
        out.append(pooled.reshape(-1))
    return out
