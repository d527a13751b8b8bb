"""IoU, NoC, and NoF metrics plus the benchmark loop and report format.

A sample's click loop always starts against its current prediction (the
supplied initial mask in correction mode, an empty mask from scratch), adds
the max-error click, runs one forward pass, and measures IoU. The loop runs
until every tracked threshold is met or the click cap is reached; because a
click depends only on the prediction so far, the trajectory prefix up to any
threshold equals the trajectory of a loop that stopped there, so one pass
yields NoC at every threshold at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .clicks import ClickSet
from .interaction import next_click, render_click_maps

MAX_CLICKS = 20
REPORT_HEADER = "clickseg-eval v1"


def iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union of two binary masks; both-empty counts as 1."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    ab = a.astype(bool)
    bb = b.astype(bool)
    union = int((ab | bb).sum())
    if union == 0:
        return 1.0
    return int((ab & bb).sum()) / union


@dataclass
class SampleResult:
    sample_id: str
    clicks_used: int
    final_iou: float
    failed: bool
    curve: list[float]  # IoU after click k (1-based), up to the stop point


@dataclass
class EvalReport:
    target_iou: float
    results: list[SampleResult] = field(default_factory=list)

    def _noc(self, t: float) -> float:
        total = 0
        for r in self.results:
            k = next((i + 1 for i, v in enumerate(r.curve) if v >= t),
                     MAX_CLICKS)
            total += k
        return total / len(self.results)

    def _nof(self, t: float) -> int:
        return sum(1 for r in self.results
                   if not any(v >= t for v in r.curve))

    @property
    def noc85(self) -> float:
        return self._noc(0.85)

    @property
    def noc90(self) -> float:
        return self._noc(0.90)

    @property
    def nof85(self) -> int:
        return self._nof(0.85)

    @property
    def nof90(self) -> int:
        return self._nof(0.90)

    @property
    def noc(self) -> float:
        return self._noc(self.target_iou)

    @property
    def nof(self) -> int:
        return self._nof(self.target_iou)


def evaluate_noc(model, samples, target_iou: float,
                 max_clicks: int = MAX_CLICKS,
                 initial_masks: list[np.ndarray] | None = None) -> EvalReport:
    """Run the interactive loop over samples and collect NoC/NoF metrics.

    ``samples`` yields objects with ``image`` (3, H, W), ``gt`` (H, W), and
    ``id``. The loop keeps clicking past ``target_iou`` while 0.85 or 0.90
    is still unmet, so the report's fixed-threshold aggregates are exact.
    """
    from .model.encoder import assemble_input

    samples = list(samples)
    if not samples:
        raise ValueError("empty sample set")
    if not (0.0 < target_iou < 1.0):
        raise ValueError(f"target IoU must lie in (0, 1), got {target_iou}")
    if initial_masks is not None and len(initial_masks) != len(samples):
        raise ValueError("one initial mask per sample required")

    tracked = sorted({target_iou, 0.85, 0.90})
    report = EvalReport(target_iou=target_iou)
    for idx, sample in enumerate(samples):
        gt = sample.gt
        h, w = gt.shape
        if initial_masks is not None:
            pred = initial_masks[idx].astype(np.uint8)
            prev = pred.astype(np.float64)
        else:
            pred = np.zeros((h, w), dtype=np.uint8)
            prev = np.zeros((h, w))
        clicks = ClickSet(h, w)
        curve: list[float] = []
        while len(curve) < max_clicks:
            nc = next_click(pred, gt, ordinal=len(clicks))
            if nc is None:
                break  # already perfect; nothing left to click
            clicks.add(nc.row, nc.col, nc.polarity)
            maps = render_click_maps(clicks, h, w, model.config.click_radius)
            x6 = assemble_input(sample.image, maps, prev[None])
            res = model.forward(x6, clicks)
            prob, pred = model.predict_mask(res.logits)
            prev = prob
            curve.append(iou(pred, gt))
            if all(curve[-1] >= t for t in tracked):
                break
        if curve:
            final = curve[-1]
            reached = next((i + 1 for i, v in enumerate(curve)
                            if v >= target_iou), None)
        else:
            # prediction already matched gt before any click
            final = iou(pred, gt)
            reached = 1
        failed = reached is None
        clicks_used = max_clicks if failed else reached
        report.results.append(SampleResult(
            sample_id=str(getattr(sample, "id", idx)),
            clicks_used=clicks_used, final_iou=final,
            failed=failed, curve=curve))
    return report


def iou_curve(report: EvalReport, max_clicks: int = MAX_CLICKS
              ) -> list[tuple[int, float]]:
    """Mean IoU after k clicks, carrying each sample's last value forward."""
    out = []
    for k in range(1, max_clicks + 1):
        vals = []
        for r in report.results:
            if not r.curve:
                vals.append(r.final_iou)
            elif k <= len(r.curve):
                vals.append(r.curve[k - 1])
            else:
                vals.append(r.curve[-1])
        out.append((k, sum(vals) / len(vals)))
    return out


def _fmt(x: float) -> str:
    return np.format_float_scientific(x, precision=17, trim="-")


def write_report(report: EvalReport, path: str) -> None:
    lines = [REPORT_HEADER,
             f"samples {len(report.results)}",
             f"target {_fmt(report.target_iou)}"]
    for r in report.results:
        curve = ",".join(_fmt(v) for v in r.curve)
        lines.append(
            f"sample {r.sample_id} clicks_used={r.clicks_used} "
            f"final_iou={_fmt(r.final_iou)} failed={int(r.failed)} "
            f"curve={curve}")
    lines.append(f"noc85 {_fmt(report.noc85)}")
    lines.append(f"noc90 {_fmt(report.noc90)}")
    lines.append(f"nof85 {report.nof85}")
    lines.append(f"nof90 {report.nof90}")
    curve = iou_curve(report)
    lines.append("mean_curve " + ",".join(_fmt(v) for _, v in curve))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_report(path: str) -> EvalReport:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != REPORT_HEADER:
        raise ValueError(f"not a recognized report file: {path}")
    target = float(lines[2].split()[1])
    report = EvalReport(target_iou=target)
    for ln in lines[3:]:
        if not ln.startswith("sample "):
            continue
        head, _, curve_part = ln.partition(" curve=")
        fields = dict(kv.split("=", 1) for kv in head.split()[2:])
        sid = ln.split()[1]
        curve = [float(v) for v in curve_part.split(",")] if curve_part else []
        report.results.append(SampleResult(
            sample_id=sid,
            clicks_used=int(fields["clicks_used"]),
            final_iou=float(fields["final_iou"]),
            failed=bool(int(fields["failed"])),
            curve=curve))
    return report
