"""Click simulation: map rendering, error-driven click placement, schedules.

The simulated annotator always clicks the most wrong spot: the pixel deepest
inside the largest 4-connected component of the prediction error, positive on
missed object, negative on false alarms. All randomness flows through an
explicitly passed numpy Generator (PCG64 via np.random.default_rng), which is
the project-wide RNG so trajectories replay across platforms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .clicks import NEGATIVE, POSITIVE, Click, ClickSet

D_MARGIN = 5  # background-band inner radius for sampled negative clicks, px


def render_click_maps(clicks: ClickSet, height: int, width: int,
                      radius: int) -> np.ndarray:
    """Binary (2, H, W) maps: filled Euclidean disks, positives then negatives."""
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    maps = np.zeros((2, height, width))
    rr = np.arange(height)
    cc = np.arange(width)
    for c in clicks:
        if c.row >= height or c.col >= width:
            raise ValueError(f"click ({c.row}, {c.col}) outside {height}x{width}")
        d2 = (rr[:, None] - c.row) ** 2 + (cc[None, :] - c.col) ** 2
        ch = 0 if c.polarity == POSITIVE else 1
        maps[ch][d2 <= radius * radius] = 1.0
    return maps


def _interior_distance(component: np.ndarray) -> np.ndarray:
    """Distance of each component pixel to the nearest outside pixel.

    The frame border counts as outside, so a component touching the edge
    still has finite depth there.
    """
    padded = np.pad(component, 1)
    d = ndimage.distance_transform_edt(padded)
    return d[1:-1, 1:-1]


def _deepest_pixel(component: np.ndarray) -> tuple[int, int]:
    """Max interior-distance pixel; ties to smallest row, then column."""
    d = _interior_distance(component)
    flat = int(np.argmax(d))  # raster order = lexicographic (row, col)
    return flat // component.shape[1], flat % component.shape[1]


def next_click(pred: np.ndarray, gt: np.ndarray,
               ordinal: int = 0) -> Click | None:
    """Click at the deepest pixel of the largest prediction-error component.

    Returns None when prediction and ground truth agree everywhere. Among
    equal-size components the one whose first raster-order pixel comes
    earliest wins; within the component ties go to smallest row then column.
    """
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {gt.shape}")
    err = (pred.astype(bool) ^ gt.astype(bool))
    if not err.any():
        return None
    labels, n = ndimage.label(err, structure=np.array(
        [[0, 1, 0], [1, 1, 1], [0, 1, 0]]))
    sizes = ndimage.sum_labels(err, labels, index=np.arange(1, n + 1))
    # labels are assigned in raster order, so argmax picks the component
    # whose first pixel is lexicographically smallest among max-size ones
    target = int(np.argmax(sizes)) + 1
    comp = labels == target
    r, c = _deepest_pixel(comp)
    polarity = POSITIVE if gt.astype(bool)[r, c] else NEGATIVE
    return Click(r, c, polarity, ordinal)


def initial_clicks(gt: np.ndarray, rng: np.random.Generator,
                   max_negatives: int = 3,
                   d_margin: int = D_MARGIN) -> ClickSet:
    """Starting clicks for a training sample.

    One positive click at the object's deepest interior pixel; then 0 to
    ``max_negatives`` negative clicks drawn uniformly without replacement
    from background pixels whose distance to the object lies in
    [d_margin, 2*d_margin].
    """
    gtb = gt.astype(bool)
    if not gtb.any():
        raise ValueError("empty ground truth mask")
    h, w = gt.shape
    cs = ClickSet(h, w)
    r, c = _deepest_pixel(gtb)
    cs.add(r, c, POSITIVE)

    dist = ndimage.distance_transform_edt(~gtb)
    band = (dist >= d_margin) & (dist <= 2 * d_margin)
    candidates = np.flatnonzero(band)
    n_neg = int(rng.integers(0, max_negatives + 1))
    n_neg = min(n_neg, candidates.size)
    if n_neg:
        chosen = rng.choice(candidates, size=n_neg, replace=False)
        for flat in chosen:
            cs.add(int(flat) // w, int(flat) % w, NEGATIVE)
    return cs


@dataclass(frozen=True)
class ClickSchedule:
    max_clicks: int = 24
    continue_probability: float = 0.8

    def __post_init__(self):
        if not (1 <= self.max_clicks):
            raise ValueError("max_clicks must be at least 1")
        if not (0.0 <= self.continue_probability <= 1.0):
            raise ValueError("continue_probability must lie in [0, 1]")

    def draw_added(self, rng: np.random.Generator, already: int = 1) -> int:
        """How many clicks to add on top of ``already`` existing ones.

        Geometric with success probability continue_probability, truncated
        so the total never exceeds max_clicks.
        """
        k = 0
        while already + k < self.max_clicks and \
                rng.random() < self.continue_probability:
            k += 1
        return k

    @property
    def expected_added(self) -> float:
        """Closed form sum_{k=1..cap-1} p^k for a single starting click."""
        p = self.continue_probability
        cap = self.max_clicks - 1
        if p == 1.0:
            return float(cap)
        return p * (1.0 - p ** cap) / (1.0 - p)


def iterative_clicks(model, image: np.ndarray, gt: np.ndarray,
                     schedule: ClickSchedule, rng: np.random.Generator,
                     initial_mask: np.ndarray | None = None
                     ) -> tuple[ClickSet, np.ndarray]:
    """Simulate a training interaction and return (clicks, final prev-mask).

    Starts from sampled initial clicks, then repeatedly rolls the continue
    probability; each accepted roll runs an inference pass and adds the
    max-error click against the current prediction, feeding the probability
    map back through the prior-mask channel. The returned prev-mask is the
    one the final (caller-run) forward pass should see.
    """
    from .model.encoder import assemble_input

    h, w = gt.shape
    clicks = initial_clicks(gt, rng)
    if initial_mask is not None:
        prev = initial_mask.astype(np.float64)
    else:
        prev = np.zeros((h, w))

    while len(clicks) < schedule.max_clicks and \
            rng.random() < schedule.continue_probability:
        maps = render_click_maps(clicks, h, w, model.config.click_radius)
        x6 = assemble_input(image, maps, prev[None])
        res = model.forward(x6, clicks)
        prob, binary = model.predict_mask(res.logits)
        nc = next_click(binary, gt, ordinal=len(clicks))
        if nc is None:
            break
        clicks.add(nc.row, nc.col, nc.polarity)
        prev = prob
    return clicks, prev


def synthesize_initial_mask(gt: np.ndarray, rng: np.random.Generator,
                            lo: float = 0.75, hi: float = 0.85) -> np.ndarray:
    """Degrade a ground-truth mask to IoU within [lo, hi] against itself.

    Erodes or dilates by flipping pixels in order of distance from the
    boundary (nearest first, raster order on ties), with the flip count
    solved in closed form from the target IoU. Falls back to erosion when
    dilation cannot reach the band.
    """
    gtb = gt.astype(bool)
    area = int(gtb.sum())
    if area == 0:
        raise ValueError("empty ground truth mask")

    def pick_count(lo_k: int, hi_k: int) -> int | None:
        if hi_k < lo_k:
            return None
        return int(rng.integers(lo_k, hi_k + 1))

    dilate = bool(rng.integers(0, 2))
    out = gtb.copy()
    if dilate:
        # adding k background pixels: IoU = area / (area + k)
        lo_k = int(np.ceil(area * (1.0 - hi) / hi))
        hi_k = int(np.floor(area * (1.0 - lo) / lo))
        dist = ndimage.distance_transform_edt(~gtb)
        candidates = np.flatnonzero(~gtb.ravel())
        k = pick_count(lo_k, hi_k)
        if k is not None and k <= candidates.size:
            order = np.lexsort((candidates, dist.ravel()[candidates]))
            out.ravel()[candidates[order[:k]]] = True
            return out.astype(np.uint8)
        dilate = False
    # removing k object pixels: IoU = (area - k) / area
    lo_k = int(np.ceil(area * (1.0 - hi)))
    hi_k = int(np.floor(area * (1.0 - lo)))
    k = pick_count(max(lo_k, 1), min(hi_k, area - 1))
    if k is None:
        raise ValueError(
            f"object of {area} px cannot reach IoU band [{lo}, {hi}]")
    depth = _interior_distance(gtb)
    members = np.flatnonzero(gtb.ravel())
    order = np.lexsort((members, depth.ravel()[members]))
    out.ravel()[members[order[:k]]] = False
    return out.astype(np.uint8)
