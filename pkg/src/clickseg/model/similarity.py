"""Click-to-patch similarity fields and their supervision.

Each positive click selects the patch containing it. Features are pushed
through a small two-layer mapping head, and every patch's similarity to the
clicked patch is the cosine in that mapped space, affinely rescaled by
(1 + cos)/2 so it lives in [0, 1] and a patch's similarity to itself is 1.
Several clicks average their fields. With no positive clicks the field is
the neutral all-ones vector, which leaves attention biasing inert.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..clicks import Click
from .config import ModelConfig
from .layers import Linear, Module, gelu


@dataclass
class SimilarityField:
    stage: int
    values: ad.Tensor  # shape (L, 1), entries in [0, 1]
    neutral: bool = False  # True when no positive clicks contributed


class MappingHead(Module):
    """Two-layer projection decoupling similarity space from features."""

    def __init__(self, rng: np.random.Generator, in_dim: int, out_dim: int):
        super().__init__()
        self.fc1 = self.register_child("fc1", Linear(rng, in_dim, out_dim))
        self.fc2 = self.register_child("fc2", Linear(rng, out_dim, out_dim))

    def __call__(self, x: ad.Tensor) -> ad.Tensor:
        return self.fc2(gelu(self.fc1(x)))


def click_to_patch(click: Click, stage: int, config: ModelConfig) -> int:
    """Flat index of the stage-grid patch containing a pixel click."""
    if not (0 <= click.row < config.input_size and 0 <= click.col < config.input_size):
        raise ValueError(
            f"click ({click.row}, {click.col}) outside "
            f"{config.input_size}x{config.input_size} frame")
    p = config.patch_size * (1 << stage)
    side = config.grid_side(stage)
    return (click.row // p) * side + (click.col // p)


def _cosine_field(g: ad.Tensor, k: int) -> ad.Tensor:
    """Per-row (1 + cosine(g_row, g_k))/2, clamped into [0, 1]; shape (L, 1)."""
    gk = ad.gather_rows(g, [k])  # (1, C)
    dots = ad.matmul(g, ad.transpose2d(gk))  # (L, 1)
    sq = ad.sum_(ad.mul(g, g), axis=1, keepdims=True)  # (L, 1)
    norms = ad.sqrt(sq)
    nk = ad.gather_rows(norms, [k])  # (1, 1)
    den = ad.clamp(ad.mul(norms, nk), 1e-30, np.inf)
    cos = ad.div(dots, den)
    return ad.clamp(ad.scale(ad.add_const(cos, 1.0), 0.5), 0.0, 1.0)


def compute_similarity(f: ad.Tensor, positive_patches: list[int],
                       head: MappingHead, stage: int) -> SimilarityField:
    """Mean over clicked patches of mapped-space cosine similarity.

    Averaging runs in click order: accumulate then scale by 1/N, so two
    clicks give exactly (s_a + s_b) / 2.
    """
    L = f.shape[0]
    if not positive_patches:
        return SimilarityField(stage, ad.Tensor(np.ones((L, 1))), neutral=True)
    for k in positive_patches:
        if not (0 <= k < L):
            raise ValueError(f"patch index {k} out of range for {L} patches")
    g = head(f)
    acc = None
    for k in positive_patches:
        field_k = _cosine_field(g, k)
        acc = field_k if acc is None else ad.add(acc, field_k)
    s = ad.scale(acc, 1.0 / len(positive_patches))
    s = ad.clamp(s, 0.0, 1.0)
    return SimilarityField(stage, s)


def downsample_majority(gt: np.ndarray, patch: int) -> np.ndarray:
    """Patch labels by majority pixel vote; exact ties label 1. Shape (L, 1)."""
    h, w = gt.shape
    if h % patch or w % patch:
        raise ValueError(f"mask {gt.shape} not divisible by patch {patch}")
    frac = gt.reshape(h // patch, patch, w // patch, patch).mean(axis=(1, 3))
    return (frac >= 0.5).astype(np.float64).reshape(-1, 1)


def click_loss(fields: list[SimilarityField], gt_mask: np.ndarray,
               config: ModelConfig) -> ad.Tensor:
    """Mean over stages of MSE between similarity fields and downsampled gt.

    Zero (constant) when the fields are neutral, since no positive click
    means nothing to supervise.
    """
    live = [f for f in fields if not f.neutral]
    if not live:
        return ad.Tensor(np.zeros(()))
    total = None
    for f in live:
        p = config.patch_size * (1 << f.stage)
        y = ad.Tensor(downsample_majority(gt_mask, p))
        term = ad.mse(f.values, y)
        total = term if total is None else ad.add(total, term)
    return ad.scale(total, 1.0 / len(live))
