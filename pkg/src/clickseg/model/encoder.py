"""Four-stage hierarchical patch-transformer with click-guided attention.

Stage grids shrink by 2x2 patch merging, so a 64x64 input with patch size 4
yields sequence lengths [256, 64, 16, 4]. Positive clicks produce one
similarity field per stage, computed from the stage's input features and
shared by every attention layer in that stage. An MLP decoder fuses all four
scales into logits at 1/4 resolution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import _kernels
from .. import autodiff as ad
from ..clicks import ClickSet
from .config import ModelConfig
from .layers import AttentionRecord, Linear, Module, TransformerLayer
from .similarity import MappingHead, SimilarityField, click_to_patch, compute_similarity


def assemble_input(image: np.ndarray, click_maps: np.ndarray,
                   prev_mask: np.ndarray) -> np.ndarray:
    """Stack [RGB, positive map, negative map, previous mask] -> (6, H, W)."""
    if image.ndim != 3 or image.shape[0] != 3:
        raise ValueError(f"image must be (3, H, W), got {image.shape}")
    h, w = image.shape[1:]
    if click_maps.shape != (2, h, w):
        raise ValueError(f"click maps must be (2, {h}, {w}), got {click_maps.shape}")
    if prev_mask.shape != (1, h, w):
        raise ValueError(f"prev mask must be (1, {h}, {w}), got {prev_mask.shape}")
    if image.min() < 0.0 or image.max() > 1.0:
        raise ValueError("image values must lie in [0, 1]")
    if not np.isin(click_maps, (0.0, 1.0)).all():
        raise ValueError("click maps must be binary")
    if prev_mask.min() < 0.0 or prev_mask.max() > 1.0:
        raise ValueError("previous mask values must lie in [0, 1]")
    return np.concatenate([image, click_maps, prev_mask], axis=0).astype(np.float64)


def _im2patches(x6: np.ndarray, patch: int) -> np.ndarray:
    """(6, H, W) -> (L, 6*patch*patch) in row-major patch scan order."""
    c, h, w = x6.shape
    if h % patch or w % patch:
        raise ValueError(f"spatial size {h}x{w} not divisible by patch {patch}")
    gh, gw = h // patch, w // patch
    t = x6.reshape(c, gh, patch, gw, patch).transpose(1, 3, 0, 2, 4)
    return np.ascontiguousarray(t.reshape(gh * gw, c * patch * patch))


def _merge_indices(side: int) -> np.ndarray:
    """(L/4, 4) indices grouping a side x side grid into 2x2 blocks."""
    half = side // 2
    out = np.empty((half * half, 4), dtype=np.intp)
    g = 0
    for br in range(half):
        for bc in range(half):
            out[g] = [(2 * br) * side + 2 * bc, (2 * br) * side + 2 * bc + 1,
                      (2 * br + 1) * side + 2 * bc, (2 * br + 1) * side + 2 * bc + 1]
            g += 1
    return out


def _upsample_indices(src_side: int, dst_side: int) -> np.ndarray:
    """Nearest-neighbor row indices mapping a coarse grid onto a fine grid."""
    r = dst_side // src_side
    idx = np.empty(dst_side * dst_side, dtype=np.intp)
    for dr in range(dst_side):
        for dc in range(dst_side):
            idx[dr * dst_side + dc] = (dr // r) * src_side + (dc // r)
    return idx


def bilinear_matrix(dst: int, src: int) -> np.ndarray:
    """(dst, src) interpolation weights with half-pixel-aligned centers."""
    m = np.zeros((dst, src))
    scale = src / dst
    for d in range(dst):
        x = (d + 0.5) * scale - 0.5
        x = min(max(x, 0.0), src - 1.0)
        lo = int(np.floor(x))
        hi = min(lo + 1, src - 1)
        frac = x - lo
        m[d, lo] += 1.0 - frac
        m[d, hi] += frac
    return m


@dataclass
class ForwardResult:
    logits: ad.Tensor                       # (L_0, 1) at 1/4 resolution
    stage_features: list[ad.Tensor]         # per stage, post-layers (L_i, C_i)
    attention: list[list[AttentionRecord]]  # per stage, flat over layers/heads
    similarity: list[SimilarityField] | None
    grid_sides: list[int] = field(default_factory=list)


class ClickSegModel(Module):
    """Encoder, click-similarity heads, and decoder in one parameter tree."""

    DECODE_DIM = 32

    def __init__(self, config: ModelConfig, seed: int = 0):
        super().__init__()
        self.config = config
        rng = np.random.default_rng(seed)
        p = config.patch_size
        c = config.dims

        self.patch_embed = self.register_child(
            "patch_embed", Linear(rng, config.in_channels * p * p, c[0]))
        l0 = config.seq_len(0)
        bound = 1.0 / np.sqrt(c[0])
        self.pos_embed = self.register(
            "pos_embed", ad.Tensor(rng.uniform(-bound, bound, size=(l0, c[0])),
                                   requires_grad=True))

        self.merges: list[Linear] = []
        self.stages: list[list[TransformerLayer]] = []
        self.map_heads: list[MappingHead] = []
        self._merge_idx: list[np.ndarray] = []
        for i in range(4):
            side = config.grid_side(i)
            if i > 0:
                prev_side = config.grid_side(i - 1)
                self._merge_idx.append(_merge_indices(prev_side))
                self.merges.append(self.register_child(
                    f"merge{i}", Linear(rng, 4 * c[i - 1], c[i])))
            layers = []
            for l in range(config.layers[i]):
                layers.append(self.register_child(
                    f"stage{i}.layer{l}",
                    TransformerLayer(rng, c[i], config.heads[i], side,
                                     config.reduction[i], config.ffn_ratio)))
            self.stages.append(layers)
            self.map_heads.append(self.register_child(
                f"map{i}", MappingHead(rng, c[i], config.map_dim)))

        self.decode_proj = [self.register_child(
            f"decode{i}", Linear(rng, c[i], self.DECODE_DIM)) for i in range(4)]
        self.head = self.register_child(
            "head", Linear(rng, 4 * self.DECODE_DIM, config.n_cls))

        s0 = config.grid_side(0)
        self._up_idx = [None] + [_upsample_indices(config.grid_side(i), s0)
                                 for i in range(1, 4)]
        full = config.input_size
        self._bilin_up = ad.Tensor(bilinear_matrix(full, s0))

    # ------------------------------------------------------------------
    def forward(self, x6: np.ndarray, clicks: ClickSet | None = None,
                use_click_attention: bool | None = None) -> ForwardResult:
        cfg = self.config
        if use_click_attention is None:
            use_click_attention = cfg.use_click_attention
        if x6.shape != (6, cfg.input_size, cfg.input_size):
            raise ValueError(
                f"input must be (6, {cfg.input_size}, {cfg.input_size}), "
                f"got {x6.shape}")

        positive_patches: list[list[int]] = [[] for _ in range(4)]
        if clicks is not None:
            for c in clicks.positives:
                for i in range(4):
                    positive_patches[i].append(click_to_patch(c, i, cfg))

        x = ad.Tensor(_im2patches(x6, cfg.patch_size))
        f = self.patch_embed(x)
        f = ad.add(f, self.pos_embed)

        stage_feats: list[ad.Tensor] = []
        attn: list[list[AttentionRecord]] = []
        sims: list[SimilarityField] = [] if use_click_attention else None

        for i in range(4):
            if i > 0:
                idx = self._merge_idx[i - 1]
                cols = [ad.gather_rows(f, idx[:, m]) for m in range(4)]
                f = self.merges[i - 1](ad.concat(cols, axis=1))

            s_field = None
            if use_click_attention:
                s_field = compute_similarity(
                    f, positive_patches[i], self.map_heads[i], stage=i)
                sims.append(s_field)

            bias = None
            if s_field is not None and not s_field.neutral:
                bias = s_field.values

            stage_records: list[AttentionRecord] = []
            for l, layer in enumerate(self.stages[i]):
                f, recs = layer(f, bias, stage=i, layer=l)
                stage_records.extend(recs)
            stage_feats.append(f)
            attn.append(stage_records)

        logits = self._decode(stage_feats)
        return ForwardResult(logits, stage_feats, attn, sims,
                             grid_sides=[cfg.grid_side(i) for i in range(4)])

    def _decode(self, stage_feats: list[ad.Tensor]) -> ad.Tensor:
        parts = []
        for i, f in enumerate(stage_feats):
            d = self.decode_proj[i](f)
            if i > 0:
                d = ad.gather_rows(d, self._up_idx[i])
            parts.append(d)
        return self.head(ad.concat(parts, axis=1))

    # ------------------------------------------------------------------
    def upsample_logits(self, logits: ad.Tensor) -> ad.Tensor:
        """Bilinear 4x upsample of (L_0, 1) logits to (H, W) full frame."""
        s0 = self.config.grid_side(0)
        grid = ad.reshape(logits, (s0, s0))
        up = ad.matmul(ad.matmul(self._bilin_up, grid),
                       ad.transpose2d(self._bilin_up))
        return up

    def predict_mask(self, logits: ad.Tensor) -> tuple[np.ndarray, np.ndarray]:
        """Probability map and binary mask at full resolution.

        Follows the order: sigmoid at 1/4 scale, bilinear 4x upsample,
        threshold strictly above 0.5 (so an exact tie is background).
        """
        s0 = self.config.grid_side(0)
        with np.errstate(over="ignore"):
            prob_q = 1.0 / (1.0 + np.exp(-logits.data.reshape(s0, s0)))
        u = self._bilin_up.data
        prob = _kernels.matmul(_kernels.matmul(u, prob_q),
                               np.ascontiguousarray(u.T))
        return prob, (prob > 0.5).astype(np.uint8)
