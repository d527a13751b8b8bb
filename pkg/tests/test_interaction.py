"""Click simulation: disk maps, error clicking, schedules, mask synthesis."""

import numpy as np
import pytest

from clickseg.clicks import NEGATIVE, POSITIVE, ClickSet
from clickseg.interaction import (ClickSchedule, initial_clicks, next_click,
                                  render_click_maps, synthesize_initial_mask,
                                  _deepest_pixel)


# ---------------------------------------------------------------------------
# independent oracle for next_click, written against the stated contract only

def oracle_next_click(pred, gt):
    """Brute force: pairwise distances, python loops, own tie handling."""
    err = pred.astype(bool) ^ gt.astype(bool)
    if not err.any():
        return None
    h, w = err.shape
    # flood-fill 4-connected components, visiting seeds in raster order so
    # component ids increase with the first pixel's raster position
    comp = -np.ones((h, w), dtype=int)
    n = 0
    for r in range(h):
        for c in range(w):
            if err[r, c] and comp[r, c] < 0:
                stack = [(r, c)]
                comp[r, c] = n
                while stack:
                    rr, cc = stack.pop()
                    for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                        r2, c2 = rr + dr, cc + dc
                        if 0 <= r2 < h and 0 <= c2 < w and err[r2, c2] \
                                and comp[r2, c2] < 0:
                            comp[r2, c2] = n
                            stack.append((r2, c2))
                n += 1
    sizes = [int((comp == i).sum()) for i in range(n)]
    best = max(range(n), key=lambda i: (sizes[i], -i))  # size, then first id
    members = [(r, c) for r in range(h) for c in range(w) if comp[r, c] == best]
    outside = [(r, c) for r in range(-1, h + 1) for c in range(-1, w + 1)
               if not (0 <= r < h and 0 <= c < w) or comp[r, c] != best]
    depth = {}
    for (r, c) in members:
        depth[(r, c)] = min(np.hypot(r - ro, c - co) for ro, co in outside)
    peak = max(depth.values())
    r, c = min(p for p, d in depth.items() if abs(d - peak) < 1e-9)
    pol = POSITIVE if gt.astype(bool)[r, c] else NEGATIVE
    return r, c, pol


# ---------------------------------------------------------------------------
# render_click_maps

def test_disk_pixel_count_radius_3():
    cs = ClickSet(32, 32)
    cs.add(16, 16, POSITIVE)
    maps = render_click_maps(cs, 32, 32, radius=3)
    # r^2 <= 9: 29 lattice points
    assert int(maps[0].sum()) == 29
    assert int(maps[1].sum()) == 0


def test_disk_radius_zero_single_pixel():
    cs = ClickSet(16, 16)
    cs.add(5, 7, NEGATIVE)
    maps = render_click_maps(cs, 16, 16, radius=0)
    assert int(maps[1].sum()) == 1
    assert maps[1][5, 7] == 1.0


def test_disk_clipped_at_border():
    cs = ClickSet(16, 16)
    cs.add(0, 0, POSITIVE)
    maps = render_click_maps(cs, 16, 16, radius=3)
    full = render_click_maps(_center_click(), 16, 16, radius=3)
    assert int(maps[0].sum()) < int(full[0].sum())
    assert maps[0][0, 0] == 1.0


def _center_click():
    cs = ClickSet(16, 16)
    cs.add(8, 8, POSITIVE)
    return cs


def test_disk_monotone_in_radius():
    cs = _center_click()
    prev = -1
    for r in range(0, 6):
        n = int(render_click_maps(cs, 16, 16, radius=r)[0].sum())
        assert n > prev
        prev = n


def test_overlapping_same_polarity_disks_stay_binary():
    cs = ClickSet(16, 16)
    cs.add(8, 8, POSITIVE)
    cs.add(8, 9, POSITIVE)
    maps = render_click_maps(cs, 16, 16, radius=3)
    assert set(np.unique(maps)) <= {0.0, 1.0}


def test_empty_click_set_all_zero():
    maps = render_click_maps(ClickSet(8, 8), 8, 8, radius=3)
    assert not maps.any()


def test_render_rejects_out_of_frame():
    cs = ClickSet(64, 64)
    cs.add(40, 40, POSITIVE)
    with pytest.raises(ValueError):
        render_click_maps(cs, 32, 32, radius=3)


# ---------------------------------------------------------------------------
# next_click

def test_next_click_perfect_prediction_none():
    gt = np.zeros((16, 16))
    gt[4:10, 4:10] = 1
    assert next_click(gt.copy(), gt) is None


def test_next_click_missed_square_center():
    gt = np.zeros((17, 17))
    gt[4:13, 4:13] = 1  # 9x9 square, center (8, 8)
    click = next_click(np.zeros_like(gt), gt)
    assert (click.row, click.col) == (8, 8)
    assert click.polarity == POSITIVE


def test_next_click_false_alarm_is_negative():
    gt = np.zeros((17, 17))
    pred = np.zeros((17, 17))
    pred[4:13, 4:13] = 1
    click = next_click(pred, gt)
    assert (click.row, click.col) == (8, 8)
    assert click.polarity == NEGATIVE


def test_next_click_picks_larger_component():
    gt = np.zeros((20, 20))
    gt[1:4, 1:4] = 1    # 9 px
    gt[10:17, 10:17] = 1  # 49 px
    click = next_click(np.zeros_like(gt), gt)
    assert (click.row, click.col) == (13, 13)


def test_next_click_component_tie_prefers_raster_first():
    gt = np.zeros((10, 10))
    gt[6:9, 6:9] = 1  # later 3x3
    gt[0:3, 0:3] = 1  # earlier 3x3, same size
    click = next_click(np.zeros_like(gt), gt)
    assert (click.row, click.col) == (1, 1)


def test_next_click_border_component_depth():
    """A strip on the frame edge still has an interior maximum."""
    gt = np.zeros((8, 8))
    gt[0:3, :] = 1
    click = next_click(np.zeros_like(gt), gt)
    # depth peaks at 2 on row 1 for cols 1..6; raster tie rule picks (1, 1)
    assert (click.row, click.col) == (1, 1)
    assert click.polarity == POSITIVE


def test_next_click_brute_force_agreement():
    rng = np.random.default_rng(100)
    checked = 0
    for _ in range(400):
        pred = rng.random((24, 24)) < rng.uniform(0.05, 0.5)
        gt = rng.random((24, 24)) < rng.uniform(0.05, 0.5)
        expect = oracle_next_click(pred, gt)
        got = next_click(pred, gt)
        if expect is None:
            assert got is None
            continue
        checked += 1
        assert (got.row, got.col, got.polarity) == expect
    assert checked > 350


def test_next_click_always_on_error_pixel():
    rng = np.random.default_rng(101)
    for _ in range(100):
        pred = rng.random((16, 16)) < 0.3
        gt = rng.random((16, 16)) < 0.3
        click = next_click(pred, gt)
        if click is None:
            assert not (pred ^ gt).any()
            continue
        assert pred[click.row, click.col] != gt[click.row, click.col]
        expect_pol = POSITIVE if gt[click.row, click.col] else NEGATIVE
        assert click.polarity == expect_pol


def test_next_click_shape_mismatch_raises():
    with pytest.raises(ValueError):
        next_click(np.zeros((4, 4)), np.zeros((5, 5)))


# ---------------------------------------------------------------------------
# _deepest_pixel

def test_deepest_pixel_centered_square():
    m = np.zeros((21, 21), dtype=bool)
    m[3:18, 3:18] = True
    assert _deepest_pixel(m) == (10, 10)


def test_deepest_pixel_full_frame_center():
    m = np.ones((9, 9), dtype=bool)
    assert _deepest_pixel(m) == (4, 4)


def test_deepest_pixel_tie_lexicographic():
    m = np.zeros((4, 8), dtype=bool)
    m[1:3, 1:7] = True  # depth-1 plateau across many pixels
    r, c = _deepest_pixel(m)
    assert (r, c) == (1, 1)


# ---------------------------------------------------------------------------
# initial_clicks

def test_initial_clicks_positive_at_deepest():
    gt = np.zeros((32, 32))
    gt[8:23, 8:23] = 1  # 15x15, center (15, 15)
    rng = np.random.default_rng(0)
    for _ in range(20):
        cs = initial_clicks(gt, rng)
        pos = cs.positives
        assert len(pos) == 1
        assert (pos[0].row, pos[0].col) == (15, 15)
        assert pos[0].ordinal == 0


def test_initial_clicks_negatives_in_band():
    from scipy import ndimage
    gt = np.zeros((64, 64))
    gt[20:44, 20:44] = 1
    dist = ndimage.distance_transform_edt(~gt.astype(bool))
    rng = np.random.default_rng(1)
    counts = []
    for _ in range(300):
        cs = initial_clicks(gt, rng)
        negs = cs.negatives
        counts.append(len(negs))
        for n in negs:
            assert gt[n.row, n.col] == 0
            assert 5 <= dist[n.row, n.col] <= 10
        # uniqueness within one draw
        coords = {(n.row, n.col) for n in negs}
        assert len(coords) == len(negs)
    # 0..3 negatives, all counts reachable, mean near 1.5
    assert set(counts) == {0, 1, 2, 3}
    assert 1.3 < np.mean(counts) < 1.7


def test_initial_clicks_object_filling_frame_no_negatives():
    gt = np.ones((32, 32))
    rng = np.random.default_rng(2)
    for _ in range(10):
        cs = initial_clicks(gt, rng)
        assert len(cs.negatives) == 0
        assert len(cs.positives) == 1


def test_initial_clicks_empty_mask_raises():
    with pytest.raises(ValueError):
        initial_clicks(np.zeros((16, 16)), np.random.default_rng(3))


def test_initial_clicks_reproducible():
    gt = np.zeros((64, 64))
    gt[10:40, 15:50] = 1
    a = initial_clicks(gt, np.random.default_rng(42))
    b = initial_clicks(gt, np.random.default_rng(42))
    assert [(c.row, c.col, c.polarity) for c in a] == \
           [(c.row, c.col, c.polarity) for c in b]


# ---------------------------------------------------------------------------
# ClickSchedule

def test_schedule_validation():
    with pytest.raises(ValueError):
        ClickSchedule(max_clicks=0)
    with pytest.raises(ValueError):
        ClickSchedule(continue_probability=1.5)


def test_schedule_p_zero_never_adds():
    sched = ClickSchedule(continue_probability=0.0)
    rng = np.random.default_rng(4)
    assert all(sched.draw_added(rng) == 0 for _ in range(50))


def test_schedule_p_one_fills_to_cap():
    sched = ClickSchedule(max_clicks=24, continue_probability=1.0)
    rng = np.random.default_rng(5)
    assert sched.draw_added(rng, already=1) == 23
    assert sched.draw_added(rng, already=20) == 4
    assert sched.expected_added == 23.0


def test_schedule_default_expectation():
    sched = ClickSchedule()
    # sum_{k=1..23} 0.8^k
    expect = sum(0.8 ** k for k in range(1, 24))
    assert abs(sched.expected_added - expect) < 1e-12
    assert abs(sched.expected_added - 3.9764) < 5e-4


def test_schedule_empirical_mean_matches_expectation():
    sched = ClickSchedule()
    rng = np.random.default_rng(6)
    draws = [sched.draw_added(rng) for _ in range(100_000)]
    assert max(draws) <= 23
    assert abs(np.mean(draws) - sched.expected_added) < 0.03


def test_schedule_never_exceeds_cap():
    sched = ClickSchedule(max_clicks=6, continue_probability=0.95)
    rng = np.random.default_rng(7)
    for already in (1, 3, 5, 6):
        for _ in range(200):
            assert already + sched.draw_added(rng, already) <= 6


# ---------------------------------------------------------------------------
# synthesize_initial_mask

def iou_np(a, b):
    a, b = a.astype(bool), b.astype(bool)
    union = (a | b).sum()
    return 1.0 if union == 0 else (a & b).sum() / union


def test_synthesized_mask_iou_band():
    rng = np.random.default_rng(8)
    gt = np.zeros((64, 64))
    gt[10:50, 12:52] = 1
    saw_erode = saw_dilate = False
    for _ in range(60):
        m = synthesize_initial_mask(gt, rng)
        v = iou_np(m, gt)
        assert 0.75 <= v <= 0.85 + 1e-12
        area = m.sum()
        if area < gt.sum():
            saw_erode = True
        else:
            saw_dilate = True
    assert saw_erode and saw_dilate


def test_synthesized_mask_erosion_is_subset_dilation_superset():
    rng = np.random.default_rng(9)
    gt = np.zeros((48, 48))
    gt[8:40, 8:40] = 1
    gtb = gt.astype(bool)
    for _ in range(40):
        m = synthesize_initial_mask(gt, rng).astype(bool)
        if m.sum() <= gtb.sum():
            assert not (m & ~gtb).any()
        else:
            assert not (gtb & ~m).any()


def test_synthesized_mask_flips_shallow_pixels_first():
    """Eroded pixels hug the boundary: none deeper than a kept one's depth."""
    from scipy import ndimage
    rng = np.random.default_rng(10)
    gt = np.zeros((48, 48))
    gt[8:40, 8:40] = 1
    gtb = gt.astype(bool)
    for _ in range(30):
        m = synthesize_initial_mask(gt, rng).astype(bool)
        if m.sum() >= gtb.sum():
            continue
        padded = np.pad(gtb, 1)
        depth = ndimage.distance_transform_edt(padded)[1:-1, 1:-1]
        removed = gtb & ~m
        kept = m
        assert depth[removed].max() <= depth[kept].min() + 1e-9


def test_synthesized_mask_tiny_object_raises():
    with pytest.raises(ValueError):
        one = np.zeros((16, 16))
        one[8, 8] = 1
        synthesize_initial_mask(one, np.random.default_rng(11))


def test_synthesized_mask_empty_raises():
    with pytest.raises(ValueError):
        synthesize_initial_mask(np.zeros((16, 16)), np.random.default_rng(12))


def test_synthesized_mask_reproducible():
    gt = np.zeros((32, 32))
    gt[5:27, 5:27] = 1
    a = synthesize_initial_mask(gt, np.random.default_rng(13))
    b = synthesize_initial_mask(gt, np.random.default_rng(13))
    assert np.array_equal(a, b)


# ---------------------------------------------------------------------------
# iterative_clicks (uses the real model; kept small via the tiny config)

def test_iterative_clicks_trajectory():
    from clickseg.model.config import ModelConfig
    from clickseg.model.encoder import ClickSegModel

    cfg = ModelConfig(input_size=8, patch_size=1, dims=(4, 4, 4, 8),
                      heads=(1, 2, 2, 4), layers=(1, 1, 1, 1), click_radius=1)
    model = ClickSegModel(cfg, seed=0)
    gt = np.zeros((8, 8))
    gt[2:6, 2:6] = 1
    image = np.random.default_rng(14).random((3, 8, 8))
    sched = ClickSchedule(max_clicks=5, continue_probability=1.0)

    from clickseg.interaction import iterative_clicks
    clicks, prev = iterative_clicks(model, image, gt, sched,
                                    np.random.default_rng(15))
    assert 1 <= len(clicks) <= 5
    assert prev.shape == (8, 8)
    assert len(clicks.positives) >= 1
    # replay with the same seed is identical
    clicks2, prev2 = iterative_clicks(model, image, gt, sched,
                                      np.random.default_rng(15))
    assert [(c.row, c.col, c.polarity) for c in clicks] == \
           [(c.row, c.col, c.polarity) for c in clicks2]
    assert np.array_equal(prev, prev2)
