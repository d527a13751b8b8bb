"""IoU, NoC/NoF accounting, the benchmark loop, and report files."""

from types import SimpleNamespace

import numpy as np
import pytest

from clickseg.dataset import Sample
from clickseg.evaluation import (MAX_CLICKS, EvalReport, SampleResult,
                                 evaluate_noc, iou, iou_curve, read_report,
                                 write_report)
from clickseg.interaction import next_click, synthesize_initial_mask


# ---------------------------------------------------------------------------
# stub models exposing the same inference surface as the real one

class _StubBase:
    config = SimpleNamespace(click_radius=3)

    def predict_mask(self, logits):
        pred = logits.astype(np.uint8)
        return pred.astype(np.float64), pred


class OracleModel(_StubBase):
    """Nails the ground truth after any click."""

    def __init__(self, gt):
        self.gt = gt.astype(np.uint8)

    def forward(self, x6, clicks):
        return SimpleNamespace(logits=self.gt)


class EmptyModel(_StubBase):
    """Never predicts any foreground."""

    def __init__(self, shape):
        self.shape = shape

    def forward(self, x6, clicks):
        return SimpleNamespace(logits=np.zeros(self.shape, dtype=np.uint8))


class RevealModel(_StubBase):
    """Reveals ground truth within a fixed radius of each positive click.

    Pure function of the click set, so an independent loop in the test can
    replay the exact trajectory.
    """

    def __init__(self, gt, reach=6):
        self.gt = gt.astype(bool)
        self.reach = reach

    def reveal(self, clicks):
        h, w = self.gt.shape
        rr, cc = np.mgrid[0:h, 0:w]
        mask = np.zeros((h, w), dtype=bool)
        for c in clicks.positives:
            mask |= (rr - c.row) ** 2 + (cc - c.col) ** 2 <= self.reach ** 2
        return (self.gt & mask).astype(np.uint8)

    def forward(self, x6, clicks):
        return SimpleNamespace(logits=self.reveal(clicks))


def make_sample(gt, sid="s0"):
    rng = np.random.default_rng(hash(sid) % 2**32)
    img = rng.random((3,) + gt.shape)
    return Sample(image=img, gt=gt.astype(np.uint8), id=sid)


def square_gt(size=64, lo=20, hi=44):
    gt = np.zeros((size, size))
    gt[lo:hi, lo:hi] = 1
    return gt


# ---------------------------------------------------------------------------
# iou

def test_iou_basic_cases():
    a = np.zeros((4, 4))
    b = np.zeros((4, 4))
    assert iou(a, b) == 1.0  # both empty
    a[0, 0] = 1
    assert iou(a, b) == 0.0
    assert iou(a, a) == 1.0


def test_iou_partial_overlap():
    a = np.zeros((4, 4))
    b = np.zeros((4, 4))
    a[0, :4] = 1          # 4 px
    b[0, 2:4] = 1
    b[1, :2] = 1          # 4 px, overlap 2, union 6
    assert abs(iou(a, b) - 2.0 / 6.0) < 1e-15


def test_iou_shape_mismatch():
    with pytest.raises(ValueError):
        iou(np.zeros((4, 4)), np.zeros((4, 5)))


def test_iou_symmetry_and_bounds():
    rng = np.random.default_rng(0)
    for _ in range(50):
        a = rng.random((8, 8)) < 0.4
        b = rng.random((8, 8)) < 0.4
        v = iou(a, b)
        assert v == iou(b, a)
        assert 0.0 <= v <= 1.0


# ---------------------------------------------------------------------------
# evaluate_noc

def test_oracle_model_one_click_everywhere():
    gt = square_gt()
    samples = [make_sample(gt, f"s{i}") for i in range(5)]
    report = evaluate_noc(OracleModel(gt), samples, target_iou=0.85)
    assert report.noc85 == 1.0
    assert report.noc90 == 1.0
    assert report.nof85 == 0 and report.nof90 == 0
    for r in report.results:
        assert r.clicks_used == 1
        assert not r.failed
        assert r.final_iou == 1.0
        assert r.curve == [1.0]


def test_empty_model_exhausts_cap():
    gt = square_gt()
    samples = [make_sample(gt, f"s{i}") for i in range(3)]
    report = evaluate_noc(EmptyModel(gt.shape), samples, target_iou=0.85)
    assert report.noc85 == float(MAX_CLICKS)
    assert report.nof85 == 3
    for r in report.results:
        assert r.failed
        assert r.clicks_used == MAX_CLICKS
        assert len(r.curve) == MAX_CLICKS
        assert r.final_iou == 0.0


def test_clicks_used_range_invariant():
    gt = square_gt()
    for model in (OracleModel(gt), EmptyModel(gt.shape), RevealModel(gt)):
        report = evaluate_noc(model, [make_sample(gt)], target_iou=0.85)
        for r in report.results:
            assert 1 <= r.clicks_used <= MAX_CLICKS


def test_reveal_model_duplicate_loop_oracle():
    """Independent replay of the loop must reproduce curves exactly."""
    from clickseg.clicks import ClickSet

    gt = np.zeros((48, 48))
    gt[6:20, 6:20] = 1
    gt[30:44, 28:44] = 1
    model = RevealModel(gt, reach=6)
    sample = make_sample(gt, "dup")
    report = evaluate_noc(model, [sample], target_iou=0.85)

    pred = np.zeros_like(gt, dtype=np.uint8)
    clicks = ClickSet(48, 48)
    expect_curve = []
    tracked = [0.85, 0.90]
    for _ in range(MAX_CLICKS):
        nc = next_click(pred, gt, ordinal=len(clicks))
        if nc is None:
            break
        clicks.add(nc.row, nc.col, nc.polarity)
        pred = model.reveal(clicks)
        expect_curve.append(iou(pred, gt))
        if all(expect_curve[-1] >= t for t in tracked):
            break
    got = report.results[0]
    assert got.curve == expect_curve
    assert len(expect_curve) > 1  # the reveal radius forces several clicks


def test_initial_perfect_mask_counts_one_click():
    gt = square_gt()
    report = evaluate_noc(EmptyModel(gt.shape), [make_sample(gt)],
                          target_iou=0.85, initial_masks=[gt.copy()])
    r = report.results[0]
    assert r.clicks_used == 1
    assert not r.failed
    assert r.final_iou == 1.0
    assert r.curve == []


def test_correction_mode_starts_from_given_mask():
    """With a degraded initial mask the oracle still fixes it in one click."""
    gt = square_gt()
    init = synthesize_initial_mask(gt, np.random.default_rng(1))
    assert 0.75 <= iou(init, gt) <= 0.85 + 1e-12
    report = evaluate_noc(OracleModel(gt), [make_sample(gt)],
                          target_iou=0.85, initial_masks=[init])
    assert report.results[0].clicks_used == 1


def test_evaluate_noc_validation():
    gt = square_gt()
    with pytest.raises(ValueError):
        evaluate_noc(OracleModel(gt), [], target_iou=0.85)
    with pytest.raises(ValueError):
        evaluate_noc(OracleModel(gt), [make_sample(gt)], target_iou=1.5)
    with pytest.raises(ValueError):
        evaluate_noc(OracleModel(gt), [make_sample(gt)], target_iou=0.85,
                     initial_masks=[gt, gt])


def test_noc_monotone_in_threshold():
    rng = np.random.default_rng(2)
    report = EvalReport(target_iou=0.85)
    for i in range(30):
        n = int(rng.integers(1, MAX_CLICKS + 1))
        curve = sorted(rng.random(n))
        report.results.append(SampleResult(
            sample_id=str(i), clicks_used=n, final_iou=curve[-1],
            failed=curve[-1] < 0.85, curve=list(curve)))
    assert report.noc90 >= report.noc85
    assert report.nof90 >= report.nof85


def test_nof_counts_never_reaching():
    report = EvalReport(target_iou=0.85)
    report.results.append(SampleResult("a", 2, 0.9, False, [0.5, 0.9]))
    report.results.append(SampleResult("b", MAX_CLICKS, 0.6, True,
                                       [0.4, 0.5, 0.6]))
    report.results.append(SampleResult("c", 1, 0.86, False, [0.86]))
    assert report.nof85 == 1
    assert report.nof90 == 2
    assert report.noc85 == (2 + MAX_CLICKS + 1) / 3.0


# ---------------------------------------------------------------------------
# iou_curve

def test_iou_curve_carry_forward():
    report = EvalReport(target_iou=0.85)
    report.results.append(SampleResult("a", 2, 0.9, False, [0.5, 0.9]))
    report.results.append(SampleResult("b", 1, 0.95, False, [0.95]))
    curve = iou_curve(report, max_clicks=4)
    assert curve[0] == (1, (0.5 + 0.95) / 2)
    assert curve[1] == (2, (0.9 + 0.95) / 2)
    assert curve[2] == (3, (0.9 + 0.95) / 2)  # both carried forward
    assert len(curve) == 4


def test_iou_curve_empty_curve_uses_final():
    report = EvalReport(target_iou=0.85)
    report.results.append(SampleResult("a", 1, 1.0, False, []))
    curve = iou_curve(report, max_clicks=3)
    assert all(v == 1.0 for _, v in curve)


def test_iou_curve_nondecreasing_for_nondecreasing_samples():
    rng = np.random.default_rng(3)
    report = EvalReport(target_iou=0.85)
    for i in range(10):
        c = sorted(rng.random(int(rng.integers(1, 10))))
        report.results.append(SampleResult(str(i), len(c), c[-1],
                                           c[-1] < 0.85, list(c)))
    curve = [v for _, v in iou_curve(report)]
    assert all(b >= a - 1e-12 for a, b in zip(curve, curve[1:]))


# ---------------------------------------------------------------------------
# report files

def make_report():
    gt = square_gt(48, 10, 38)
    model = RevealModel(gt, reach=7)
    samples = [make_sample(gt, f"r{i}") for i in range(3)]
    return evaluate_noc(model, samples, target_iou=0.85)


def test_report_round_trip(tmp_path):
    report = make_report()
    p = tmp_path / "eval.txt"
    write_report(report, str(p))
    back = read_report(str(p))
    assert back.target_iou == report.target_iou
    assert len(back.results) == len(report.results)
    for a, b in zip(report.results, back.results):
        assert a.sample_id == b.sample_id
        assert a.clicks_used == b.clicks_used
        assert a.failed == b.failed
        assert a.final_iou == b.final_iou
        assert a.curve == b.curve
    assert back.noc85 == report.noc85
    assert back.nof90 == report.nof90


def test_report_bytes_deterministic(tmp_path):
    report = make_report()
    p1, p2 = tmp_path / "a.txt", tmp_path / "b.txt"
    write_report(report, str(p1))
    write_report(report, str(p2))
    assert p1.read_bytes() == p2.read_bytes()


def test_report_header_enforced(tmp_path):
    p = tmp_path / "junk.txt"
    p.write_text("not a report\n")
    with pytest.raises(ValueError):
        read_report(str(p))


def test_report_header_line(tmp_path):
    report = make_report()
    p = tmp_path / "eval.txt"
    write_report(report, str(p))
    assert p.read_text().splitlines()[0] == "clickseg-eval v1"
