"""Neural building blocks: linear, layer norm, attention, feed-forward.

All parameters are f64 tensors with requires_grad=True, registered under
stable dotted names so the optimizer and the checkpoint format see one
canonical ordering. Initialization is uniform(-1/sqrt(fan_in), +1/sqrt(fan_in))
for weights and biases alike.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad


class Module:
    """Minimal parameter container with deterministic registration order."""

    def __init__(self):
        self._params: list[tuple[str, ad.Tensor]] = []
        self._children: list[tuple[str, "Module"]] = []

    def register(self, name: str, t: ad.Tensor) -> ad.Tensor:
        self._params.append((name, t))
        return t

    def register_child(self, name: str, m: "Module") -> "Module":
        self._children.append((name, m))
        return m

    def params(self) -> list[tuple[str, ad.Tensor]]:
        out = list(self._params)
        for cname, child in self._children:
            out.extend((f"{cname}.{pname}", t) for pname, t in child.params())
        return out


class Linear(Module):
    def __init__(self, rng: np.random.Generator, fan_in: int, fan_out: int):
        super().__init__()
        bound = 1.0 / math.sqrt(fan_in)
        self.w = self.register("w", ad.Tensor(
            rng.uniform(-bound, bound, size=(fan_in, fan_out)), requires_grad=True))
        self.b = self.register("b", ad.Tensor(
            rng.uniform(-bound, bound, size=(1, fan_out)), requires_grad=True))

    def __call__(self, x: ad.Tensor) -> ad.Tensor:
        return ad.add(ad.matmul(x, self.w), self.b)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.gamma = self.register("gamma", ad.Tensor(
            np.ones((1, dim)), requires_grad=True))
        self.beta = self.register("beta", ad.Tensor(
            np.zeros((1, dim)), requires_grad=True))

    def __call__(self, x: ad.Tensor) -> ad.Tensor:
        mu = ad.mean(x, axis=1, keepdims=True)
        xc = ad.sub(x, mu)
        var = ad.mean(ad.mul(xc, xc), axis=1, keepdims=True)
        inv = ad.div(xc, ad.sqrt(ad.add_const(var, self.eps)))
        return ad.add(ad.mul(inv, self.gamma), self.beta)


def gelu(x: ad.Tensor) -> ad.Tensor:
    """Smooth gate x * sigmoid(1.702 x)."""
    return ad.mul(x, ad.sigmoid(ad.scale(x, 1.702)))


@dataclass
class AttentionRecord:
    """One head's attention matrices from one layer.

    ``pre`` is the scaled score matrix before any click biasing; ``post`` is
    the row-stochastic matrix actually applied to the values (biased when a
    similarity field was supplied).
    """

    stage: int
    layer: int
    head: int
    pre: ad.Tensor
    post: ad.Tensor


def _reduction_groups(side: int, r: int) -> np.ndarray:
    """Row indices grouping an side x side patch grid into r x r blocks.

    Returns shape (side*side/r^2, r^2); row g lists the flat patch indices of
    block g in row-major scan order.
    """
    out_side = side // r
    groups = np.empty((out_side * out_side, r * r), dtype=np.intp)
    g = 0
    for br in range(out_side):
        for bc in range(out_side):
            m = 0
            for dr in range(r):
                for dc in range(r):
                    groups[g, m] = (br * r + dr) * side + (bc * r + dc)
                    m += 1
            g += 1
    return groups


class SelfAttention(Module):
    """Multi-head self-attention over a flat patch sequence.

    Scores are Q Kᵀ / sqrt(dim/heads) per head. An optional similarity field
    multiplies each query row of the scores before softmax; an all-ones field
    leaves the computation bitwise unchanged. With reduction > 1, keys and
    values come from a spatially reduced sequence built by concatenating each
    r x r patch block and projecting back to the model width.
    """

    def __init__(self, rng: np.random.Generator, dim: int, heads: int,
                 side: int, reduction: int = 1):
        super().__init__()
        if dim % heads != 0:
            raise ValueError(f"dim {dim} not divisible by heads {heads}")
        if side % reduction != 0:
            raise ValueError(f"grid side {side} not divisible by reduction {reduction}")
        self.dim = dim
        self.heads = heads
        self.head_dim = dim // heads
        self.scale = 1.0 / math.sqrt(self.head_dim)
        self.reduction = reduction
        self.q_proj = self.register_child("q", Linear(rng, dim, dim))
        self.k_proj = self.register_child("k", Linear(rng, dim, dim))
        self.v_proj = self.register_child("v", Linear(rng, dim, dim))
        self.out_proj = self.register_child("o", Linear(rng, dim, dim))
        if reduction > 1:
            self._groups = _reduction_groups(side, reduction)
            self.sr_proj = self.register_child(
                "sr", Linear(rng, dim * reduction * reduction, dim))
        else:
            self._groups = None

    def _reduce(self, x: ad.Tensor) -> ad.Tensor:
        cols = [ad.gather_rows(x, self._groups[:, m])
                for m in range(self._groups.shape[1])]
        return self.sr_proj(ad.concat(cols, axis=1))

    def __call__(self, x: ad.Tensor, s_bias: ad.Tensor | None = None,
                 stage: int = 0, layer: int = 0) -> tuple[ad.Tensor, list[AttentionRecord]]:
        q = self.q_proj(x)
        kv_src = self._reduce(x) if self.reduction > 1 else x
        k = self.k_proj(kv_src)
        v = self.v_proj(kv_src)

        s_row = None
        if s_bias is not None:
            if s_bias.shape != (x.shape[0], 1):
                raise ValueError(
                    f"similarity field shape {s_bias.shape} does not match "
                    f"sequence length {x.shape[0]}")
            s_row = s_bias

        outs = []
        records = []
        for h in range(self.heads):
            off = h * self.head_dim
            qh = ad.slice_cols(q, off, self.head_dim)
            kh = ad.slice_cols(k, off, self.head_dim)
            vh = ad.slice_cols(v, off, self.head_dim)
            pre = ad.scale(ad.matmul(qh, ad.transpose2d(kh)), self.scale)
            applied = ad.mul(pre, s_row) if s_row is not None else pre
            post = ad.softmax(applied, axis=1)
            outs.append(ad.matmul(post, vh))
            records.append(AttentionRecord(stage, layer, h, pre, post))
        merged = outs[0] if len(outs) == 1 else ad.concat(outs, axis=1)
        return self.out_proj(merged), records


class FeedForward(Module):
    def __init__(self, rng: np.random.Generator, dim: int, ratio: int):
        super().__init__()
        self.up = self.register_child("up", Linear(rng, dim, dim * ratio))
        self.down = self.register_child("down", Linear(rng, dim * ratio, dim))

    def __call__(self, x: ad.Tensor) -> ad.Tensor:
        return self.down(gelu(self.up(x)))


class TransformerLayer(Module):
    """Pre-norm attention + feed-forward with residual connections."""

    def __init__(self, rng: np.random.Generator, dim: int, heads: int,
                 side: int, reduction: int, ffn_ratio: int):
        super().__init__()
        self.ln1 = self.register_child("ln1", LayerNorm(dim))
        self.attn = self.register_child(
            "attn", SelfAttention(rng, dim, heads, side, reduction))
        self.ln2 = self.register_child("ln2", LayerNorm(dim))
        self.ffn = self.register_child("ffn", FeedForward(rng, dim, ffn_ratio))

    def __call__(self, x: ad.Tensor, s_bias: ad.Tensor | None,
                 stage: int, layer: int) -> tuple[ad.Tensor, list[AttentionRecord]]:
        a, records = self.attn(self.ln1(x), s_bias, stage, layer)
        x = ad.add(x, a)
        x = ad.add(x, self.ffn(self.ln2(x)))
        return x, records
