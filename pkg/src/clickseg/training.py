"""Training loop: composite loss, AdamW, click simulation, determinism.

Each step simulates an interaction on one sample (initial clicks, then
probabilistically continued corrective clicks with the probability map fed
back as the prior mask), runs one recorded forward pass, and descends the
total loss. All randomness comes from one seeded PCG64 generator, and all
linear algebra runs through the project kernels, so two runs from the same
seed produce byte-identical checkpoints.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, fields as dc_fields

import numpy as np

from . import autodiff as ad
from .dataset import Sample, augment
from .interaction import ClickSchedule, iterative_clicks, render_click_maps
from .model.affinity import affinity_loss, aggregate_attention, pool_probability
from .model.checkpoint import save_checkpoint
from .model.config import ModelConfig
from .model.encoder import ClickSegModel, ForwardResult, assemble_input
from .model.similarity import click_loss


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    samples_per_epoch: int = 200
    lr: float = 5e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    lambda_click: float = 1.0
    lambda_aff: float = 1.0
    seed: int = 0
    decay_at: tuple[float, float] = (0.8, 0.95)  # fractions of total epochs
    max_clicks: int = 24
    continue_probability: float = 0.8

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.lambda_click < 0 or self.lambda_aff < 0:
            raise ValueError("loss weights must be nonnegative")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")

    def lr_at(self, epoch: int) -> float:
        """Step-decayed rate: x0.1 at each configured fraction of training."""
        lr = self.lr
        for frac in self.decay_at:
            if epoch >= int(math.floor(frac * self.epochs)):
                lr *= 0.1
        return lr


# ---------------------------------------------------------------------------
# configuration files: plain "key = value" lines, model.* / train.* prefixes

def _coerce(value: str, annot: type):
    if annot is int:
        return int(value)
    if annot is float:
        return float(value)
    if annot is bool:
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if annot is str:
        return value
    # remaining fields are numeric tuples
    parts = [p.strip() for p in value.split(",") if p.strip()]
    if all(p.lstrip("+-").isdigit() for p in parts):
        return tuple(int(p) for p in parts)
    return tuple(float(p) for p in parts)


def parse_config_text(text: str) -> tuple[ModelConfig, TrainConfig]:
    """Parse key = value lines into model and train configurations.

    Keys take a ``model.`` or ``train.`` prefix; unprefixed keys resolve to
    whichever dataclass has the field (train wins a name clash). ``#`` starts
    a comment. Unknown keys are an error, silent typos being worse than loud
    ones.
    """
    model_fields = {f.name: f for f in dc_fields(ModelConfig)}
    train_fields = {f.name: f for f in dc_fields(TrainConfig)}
    model_kw: dict = {}
    train_kw: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key.startswith("model."):
            name = key[len("model."):]
            if name not in model_fields:
                raise ValueError(f"line {lineno}: unknown model field {name!r}")
            model_kw[name] = _coerce(value, _annot(model_fields[name]))
        elif key.startswith("train."):
            name = key[len("train."):]
            if name not in train_fields:
                raise ValueError(f"line {lineno}: unknown train field {name!r}")
            train_kw[name] = _coerce(value, _annot(train_fields[name]))
        elif key in train_fields:
            train_kw[key] = _coerce(value, _annot(train_fields[key]))
        elif key in model_fields:
            model_kw[key] = _coerce(value, _annot(model_fields[key]))
        else:
            raise ValueError(f"line {lineno}: unknown field {key!r}")
    return ModelConfig(**model_kw), TrainConfig(**train_kw)


def _annot(f) -> type:
    return {"int": int, "float": float, "bool": bool, "str": str}.get(
        str(f.type).split("[")[0].strip(), tuple)


def load_config(path: str) -> tuple[ModelConfig, TrainConfig]:
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read())


# ---------------------------------------------------------------------------
# losses

def total_loss(model: ClickSegModel, result: ForwardResult, gt: np.ndarray,
               cfg: TrainConfig) -> tuple[ad.Tensor, dict[str, float]]:
    """Segmentation term plus weighted click and relevance terms.

    Segmentation is cross-entropy computed in logit space on the bilinearly
    upsampled logits (mathematically the cross-entropy of the upsampled
    probabilities, but immune to sigmoid saturation in f64).
    """
    gt_t = ad.Tensor(gt.astype(np.float64))
    up = model.upsample_logits(result.logits)
    l_seg = ad.bce_with_logits(up, gt_t)
    loss = l_seg
    parts = {"seg": l_seg.item(), "click": 0.0, "aff": 0.0}

    if result.similarity is not None and cfg.lambda_click > 0:
        l_click = click_loss(result.similarity, gt, model.config)
        parts["click"] = l_click.item()
        loss = ad.add(loss, ad.scale(l_click, cfg.lambda_click))

    if (result.similarity is not None and cfg.lambda_aff > 0
            and model.config.use_relevance_loss):
        stage_attn = [aggregate_attention(recs) for recs in result.attention]
        s0 = model.config.grid_side(0)
        with np.errstate(over="ignore"):
            prob_q = 1.0 / (1.0 + np.exp(-result.logits.data.reshape(s0, s0)))
        x_p = pool_probability(prob_q, result.grid_sides)
        l_aff = affinity_loss(stage_attn, result.similarity, x_p)
        parts["aff"] = l_aff.item()
        loss = ad.add(loss, ad.scale(l_aff, cfg.lambda_aff))

    parts["total"] = loss.item()
    return loss, parts


# ---------------------------------------------------------------------------
# optimizer

class AdamW:
    """Decoupled-weight-decay Adam with bias correction, fully deterministic."""

    def __init__(self, params: list[tuple[str, ad.Tensor]], cfg: TrainConfig):
        self.params = params
        self.cfg = cfg
        self.t = 0
        self.m = {n: np.zeros_like(p.data) for n, p in params}
        self.v = {n: np.zeros_like(p.data) for n, p in params}

    def step(self, lr: float) -> None:
        c = self.cfg
        self.t += 1
        bc1 = 1.0 - c.beta1 ** self.t
        bc2 = 1.0 - c.beta2 ** self.t
        for name, p in self.params:
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            elif g.shape != p.data.shape:
                raise ValueError(
                    f"gradient shape {g.shape} mismatches {name} {p.data.shape}")
            m = self.m[name]
            v = self.v[name]
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * (g * g)
            update = (m / bc1) / (np.sqrt(v / bc2) + c.eps)
            p.data = p.data - lr * (update + c.weight_decay * p.data)

    def zero_grad(self) -> None:
        for _, p in self.params:
            p.grad = None


# ---------------------------------------------------------------------------
# the loop

def train(model_cfg: ModelConfig, train_cfg: TrainConfig,
          train_samples: list[Sample], out_checkpoint: str | None = None,
          log_path: str | None = None, quiet: bool = False) -> ClickSegModel:
    if not train_samples:
        raise ValueError("empty training set")
    model = ClickSegModel(model_cfg, seed=train_cfg.seed)
    opt = AdamW(model.params(), train_cfg)
    rng = np.random.default_rng(train_cfg.seed + 1)
    schedule = ClickSchedule(train_cfg.max_clicks,
                             train_cfg.continue_probability)
    log_lines = []

    for epoch in range(train_cfg.epochs):
        lr = train_cfg.lr_at(epoch)
        order = rng.permutation(len(train_samples))
        sums = {"total": 0.0, "seg": 0.0, "click": 0.0, "aff": 0.0}
        n_steps = train_cfg.samples_per_epoch
        for step in range(n_steps):
            base = train_samples[order[step % len(order)]]
            sample = augment(base, rng)
            clicks, prev = iterative_clicks(
                model, sample.image, sample.gt, schedule, rng)
            maps = render_click_maps(clicks, *sample.gt.shape,
                                     model_cfg.click_radius)
            x6 = assemble_input(sample.image, maps, prev[None])
            try:
                with ad.Tape() as tape:
                    result = model.forward(x6, clicks)
                    loss, parts = total_loss(model, result, sample.gt, train_cfg)
            except ad.TensorError as exc:
                # a non-finite intermediate is the same failure as a
                # non-finite loss: the run is unrecoverable, stop loudly
                raise RuntimeError(
                    f"loss diverged at epoch {epoch} step {step}: {exc}") from exc
            if not np.isfinite(parts["total"]):
                raise RuntimeError(
                    f"loss diverged at epoch {epoch} step {step}: {parts}")
            tape.backward(loss)
            opt.step(lr)
            opt.zero_grad()
            for k in sums:
                sums[k] += parts[k]
        line = (f"epoch {epoch} lr {lr:.6g} "
                + " ".join(f"{k} {sums[k] / n_steps:.6f}"
                           for k in ("total", "seg", "click", "aff")))
        log_lines.append(line)
        if not quiet:
            print(line, flush=True)

    if log_path:
        with open(log_path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(log_lines) + ("\n" if log_lines else ""))
    if out_checkpoint:
        os.makedirs(os.path.dirname(out_checkpoint) or ".", exist_ok=True)
        save_checkpoint(out_checkpoint, model,
                        extra={"epochs": train_cfg.epochs,
                               "seed": train_cfg.seed})
    return model


# ---------------------------------------------------------------------------
# ablation variants

ABLATION_VARIANTS = ("baseline", "ca", "ca_daa")


def variant_configs(model_cfg: ModelConfig, train_cfg: TrainConfig,
                    variant: str, seed: int
                    ) -> tuple[ModelConfig, TrainConfig]:
    """The three comparison arms: plain, +click attention, +relevance loss."""
    from dataclasses import replace
    if variant == "baseline":
        m = replace(model_cfg, use_click_attention=False,
                    use_relevance_loss=False)
        t = replace(train_cfg, lambda_click=0.0, lambda_aff=0.0, seed=seed)
    elif variant == "ca":
        m = replace(model_cfg, use_click_attention=True,
                    use_relevance_loss=False)
        t = replace(train_cfg, lambda_aff=0.0, seed=seed)
    elif variant == "ca_daa":
        m = replace(model_cfg, use_click_attention=True,
                    use_relevance_loss=True)
        t = replace(train_cfg, seed=seed)
    else:
        raise ValueError(f"unknown variant {variant!r}; "
                         f"expected one of {ABLATION_VARIANTS}")
    return m, t
