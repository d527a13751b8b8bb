"""Synthetic shape samples and PNG file IO.

Each sample is one target shape (ellipse, rectangle, or noise blob) over a
textured background, optionally with distractor shapes of similar color that
the ground truth does not cover. Generation is a pure function of the seed:
the same seed always yields byte-identical samples.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy import ndimage

MIN_AREA = 16
MAX_AREA_FRAC = 0.6


@dataclass
class Sample:
    image: np.ndarray  # (3, H, W) float64 in [0, 1]
    gt: np.ndarray     # (H, W) uint8 in {0, 1}
    id: str

    def __post_init__(self):
        if self.image.ndim != 3 or self.image.shape[0] != 3:
            raise ValueError(f"image must be (3, H, W), got {self.image.shape}")
        if self.gt.shape != self.image.shape[1:]:
            raise ValueError("image and mask sizes disagree")
        if not self.gt.any():
            raise ValueError("empty ground truth")


def _smooth_noise(rng: np.random.Generator, size: int, cells: int) -> np.ndarray:
    """Coarse random grid bilinearly stretched to size x size, in [0, 1]."""
    coarse = rng.random((cells, cells))
    pos = (np.arange(size) + 0.5) * cells / size - 0.5
    pos = np.clip(pos, 0.0, cells - 1.0)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, cells - 1)
    frac = pos - lo
    rows = coarse[lo][:, lo] * np.outer(1 - frac, 1 - frac) \
        + coarse[lo][:, hi] * np.outer(1 - frac, frac) \
        + coarse[hi][:, lo] * np.outer(frac, 1 - frac) \
        + coarse[hi][:, hi] * np.outer(frac, frac)
    return rows


def _shape_mask(rng: np.random.Generator, size: int) -> np.ndarray:
    """One random filled shape as a boolean (size, size) mask."""
    kind = rng.integers(0, 3)
    yy, xx = np.mgrid[0:size, 0:size]
    if kind == 0:  # rotated ellipse
        cy, cx = rng.uniform(size * 0.25, size * 0.75, size=2)
        a = rng.uniform(size / 10, size / 3.5)
        b = rng.uniform(size / 10, size / 3.5)
        th = rng.uniform(0, np.pi)
        dy, dx = yy - cy, xx - cx
        u = dx * np.cos(th) + dy * np.sin(th)
        v = -dx * np.sin(th) + dy * np.cos(th)
        return (u / a) ** 2 + (v / b) ** 2 <= 1.0
    if kind == 1:  # rotated rectangle
        cy, cx = rng.uniform(size * 0.25, size * 0.75, size=2)
        hh = rng.uniform(size / 12, size / 4)
        hw = rng.uniform(size / 12, size / 4)
        th = rng.uniform(0, np.pi)
        dy, dx = yy - cy, xx - cx
        u = dx * np.cos(th) + dy * np.sin(th)
        v = -dx * np.sin(th) + dy * np.cos(th)
        return (np.abs(u) <= hw) & (np.abs(v) <= hh)
    # blob: thresholded smooth noise, largest 4-connected component
    noise = _smooth_noise(rng, size, cells=5)
    cut = np.quantile(noise, rng.uniform(0.72, 0.85))
    blob = noise > cut
    labels, n = ndimage.label(blob, structure=np.array(
        [[0, 1, 0], [1, 1, 1], [0, 1, 0]]))
    if n == 0:
        return blob
    sizes = ndimage.sum_labels(blob, labels, index=np.arange(1, n + 1))
    return labels == (int(np.argmax(sizes)) + 1)


def _connected(mask: np.ndarray) -> bool:
    _, n = ndimage.label(mask, structure=np.array(
        [[0, 1, 0], [1, 1, 1], [0, 1, 0]]))
    return n == 1


def _paint(img: np.ndarray, mask: np.ndarray, color: np.ndarray,
           rng: np.random.Generator) -> None:
    jitter = rng.normal(0.0, 0.02, size=(3, int(mask.sum())))
    for ch in range(3):
        img[ch][mask] = np.clip(color[ch] + jitter[ch], 0.0, 1.0)


def generate_shapes(seed: int, n: int, size: int = 64,
                    max_distractors: int = 2) -> list[Sample]:
    """Deterministic list of n samples; see module docstring for content."""
    if n < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    out = []
    max_area = int(MAX_AREA_FRAC * size * size)
    for i in range(n):
        base = rng.uniform(0.1, 0.9, size=3)
        bg = _smooth_noise(rng, size, cells=8)
        img = np.empty((3, size, size))
        for ch in range(3):
            img[ch] = np.clip(
                base[ch] * 0.5 + bg * 0.3 + rng.normal(0, 0.015, (size, size)),
                0.0, 1.0)

        target_color = rng.uniform(0.15, 0.95, size=3)
        for _ in range(int(rng.integers(0, max_distractors + 1))):
            dmask = _shape_mask(rng, size)
            dcolor = np.clip(target_color + rng.uniform(-0.08, 0.08, 3), 0, 1)
            _paint(img, dmask, dcolor, rng)

        gt = None
        for _ in range(200):
            cand = _shape_mask(rng, size)
            if MIN_AREA <= cand.sum() <= max_area and _connected(cand):
                gt = cand
                break
        if gt is None:
            raise RuntimeError("shape sampler failed to satisfy constraints")
        _paint(img, gt, target_color, rng)
        out.append(Sample(image=img, gt=gt.astype(np.uint8), id=f"s{i:05d}"))
    return out


# ---------------------------------------------------------------------------
# augmentation

def _resize_image(img: np.ndarray, new: int) -> np.ndarray:
    size = img.shape[1]
    pos = np.clip((np.arange(new) + 0.5) * size / new - 0.5, 0, size - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, size - 1)
    frac = pos - lo
    out = np.empty((3, new, new))
    for ch in range(3):
        rows = img[ch][lo] * (1 - frac)[:, None] + img[ch][hi] * frac[:, None]
        out[ch] = rows[:, lo] * (1 - frac)[None, :] + rows[:, hi] * frac[None, :]
    return out


def _resize_mask(mask: np.ndarray, new: int) -> np.ndarray:
    size = mask.shape[0]
    idx = np.clip(((np.arange(new) + 0.5) * size / new).astype(int), 0, size - 1)
    return mask[idx][:, idx]


def augment(sample: Sample, rng: np.random.Generator,
            scale_range: tuple[float, float] = (0.75, 1.4)) -> Sample:
    """Random horizontal flip and resize; output keeps the original frame.

    Upscales crop around the object centroid; downscales pad with edge
    replication (mask pads with background). If the object would vanish or
    split, the resize is skipped and only the flip applies.
    """
    img, gt = sample.image, sample.gt
    size = gt.shape[0]
    if rng.random() < 0.5:
        img = img[:, :, ::-1].copy()
        gt = gt[:, ::-1].copy()

    s = rng.uniform(*scale_range)
    new = max(8, int(round(size * s)))
    if new == size:
        return Sample(img, gt, sample.id)
    rimg = _resize_image(img, new)
    rgt = _resize_mask(gt, new)
    if new > size:
        ys, xs = np.nonzero(rgt)
        cy = int(ys.mean()) if ys.size else new // 2
        cx = int(xs.mean()) if xs.size else new // 2
        top = min(max(cy - size // 2, 0), new - size)
        left = min(max(cx - size // 2, 0), new - size)
        rimg = rimg[:, top:top + size, left:left + size]
        rgt = rgt[top:top + size, left:left + size]
    else:
        pad = size - new
        before = pad // 2
        after = pad - before
        rimg = np.pad(rimg, ((0, 0), (before, after), (before, after)),
                      mode="edge")
        rgt = np.pad(rgt, ((before, after), (before, after)))
    if rgt.sum() < 1 or not _connected(rgt):
        return Sample(img, gt, sample.id)
    return Sample(np.ascontiguousarray(rimg), rgt.astype(np.uint8), sample.id)


# ---------------------------------------------------------------------------
# file IO

def save_image(image: np.ndarray, path: str) -> None:
    arr = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr.transpose(1, 2, 0), mode="RGB").save(path, format="PNG")


def save_mask(mask: np.ndarray, path: str) -> None:
    arr = (mask.astype(np.uint8) * 255)
    Image.fromarray(arr, mode="L").save(path, format="PNG")


def load_sample(image_path: str, mask_path: str, sample_id: str | None = None
                ) -> Sample:
    img = Image.open(image_path).convert("RGB")
    image = np.asarray(img, dtype=np.float64).transpose(2, 0, 1) / 255.0
    m = Image.open(mask_path)
    if m.mode not in ("L", "1", "I", "P"):
        m = m.convert("L")
    mask = np.asarray(m.convert("L"))
    if mask.shape != image.shape[1:]:
        raise ValueError(
            f"image {image.shape[1:]} and mask {mask.shape} sizes disagree")
    gt = (mask >= 128).astype(np.uint8)
    if sample_id is None:
        sample_id = os.path.splitext(os.path.basename(image_path))[0]
    return Sample(image=image, gt=gt, id=sample_id)


def write_dataset(samples: list[Sample], root: str) -> str:
    """Write images/, masks/, and a manifest; returns the manifest path."""
    img_dir = os.path.join(root, "images")
    mask_dir = os.path.join(root, "masks")
    os.makedirs(img_dir, exist_ok=True)
    os.makedirs(mask_dir, exist_ok=True)
    lines = []
    for s in samples:
        ipath = os.path.join("images", f"{s.id}.png")
        mpath = os.path.join("masks", f"{s.id}.png")
        save_image(s.image, os.path.join(root, ipath))
        save_mask(s.gt, os.path.join(root, mpath))
        lines.append(f"{s.id}\t{ipath}\t{mpath}")
    manifest = os.path.join(root, "manifest.txt")
    with open(manifest, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return manifest


def read_dataset(root: str) -> list[Sample]:
    manifest = os.path.join(root, "manifest.txt")
    out = []
    with open(manifest, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            sid, ipath, mpath = line.split("\t")
            out.append(load_sample(os.path.join(root, ipath),
                                   os.path.join(root, mpath), sid))
    return out
