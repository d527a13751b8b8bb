"""Synthetic data generation, augmentation, and PNG round trips."""

import numpy as np
import pytest
from scipy import ndimage

from clickseg.dataset import (MAX_AREA_FRAC, MIN_AREA, Sample, augment,
                              generate_shapes, load_sample, read_dataset,
                              save_image, save_mask, write_dataset)


def four_connected(mask):
    labels, n = ndimage.label(mask, structure=np.array(
        [[0, 1, 0], [1, 1, 1], [0, 1, 0]]))
    return n == 1


# ---------------------------------------------------------------------------
# Sample validation

def test_sample_rejects_bad_inputs():
    with pytest.raises(ValueError):
        Sample(image=np.zeros((64, 64)), gt=np.ones((64, 64), np.uint8), id="x")
    with pytest.raises(ValueError):
        Sample(image=np.zeros((3, 64, 64)), gt=np.ones((32, 32), np.uint8), id="x")
    with pytest.raises(ValueError):
        Sample(image=np.zeros((3, 64, 64)), gt=np.zeros((64, 64), np.uint8), id="x")


# ---------------------------------------------------------------------------
# generation

def test_generate_deterministic_byte_for_byte():
    a = generate_shapes(123, 5)
    b = generate_shapes(123, 5)
    for s1, s2 in zip(a, b):
        assert s1.id == s2.id
        assert np.array_equal(s1.image, s2.image)
        assert np.array_equal(s1.gt, s2.gt)


def test_generate_different_seeds_differ():
    a = generate_shapes(1, 3)
    b = generate_shapes(2, 3)
    assert not all(np.array_equal(x.image, y.image) for x, y in zip(a, b))


def test_generate_constraints_hold_at_scale():
    samples = generate_shapes(7, 100)
    assert len(samples) == 100
    ids = [s.id for s in samples]
    assert ids == [f"s{i:05d}" for i in range(100)]
    max_area = MAX_AREA_FRAC * 64 * 64
    for s in samples:
        assert s.image.shape == (3, 64, 64)
        assert s.image.min() >= 0.0 and s.image.max() <= 1.0
        assert s.gt.dtype == np.uint8
        assert set(np.unique(s.gt)) <= {0, 1}
        area = int(s.gt.sum())
        assert MIN_AREA <= area <= max_area
        assert four_connected(s.gt)


def test_generate_rejects_zero_samples():
    with pytest.raises(ValueError):
        generate_shapes(0, 0)


def test_generate_no_distractors_config():
    samples = generate_shapes(11, 10, max_distractors=0)
    assert len(samples) == 10


def test_generate_custom_size():
    samples = generate_shapes(13, 3, size=96)
    for s in samples:
        assert s.image.shape == (3, 96, 96)
        assert s.gt.shape == (96, 96)


# ---------------------------------------------------------------------------
# augmentation

def test_augment_keeps_frame_and_validity():
    samples = generate_shapes(17, 20)
    rng = np.random.default_rng(0)
    for s in samples:
        for _ in range(5):
            out = augment(s, rng)
            assert out.image.shape == s.image.shape
            assert out.gt.shape == s.gt.shape
            assert out.image.min() >= 0.0 and out.image.max() <= 1.0
            assert out.gt.sum() >= 1
            assert four_connected(out.gt)
            assert out.id == s.id


def test_augment_deterministic_under_seed():
    s = generate_shapes(19, 1)[0]
    a = augment(s, np.random.default_rng(5))
    b = augment(s, np.random.default_rng(5))
    assert np.array_equal(a.image, b.image)
    assert np.array_equal(a.gt, b.gt)


def test_augment_flip_only_when_scale_pinned():
    s = generate_shapes(23, 1)[0]
    seen_flip = seen_plain = False
    for seed in range(40):
        out = augment(s, np.random.default_rng(seed), scale_range=(1.0, 1.0))
        if np.array_equal(out.gt, s.gt[:, ::-1]):
            seen_flip = True
        if np.array_equal(out.gt, s.gt):
            seen_plain = True
    assert seen_flip and seen_plain


def test_augment_actually_rescales():
    s = generate_shapes(29, 1)[0]
    areas = {int(augment(s, np.random.default_rng(k)).gt.sum())
             for k in range(30)}
    assert len(areas) > 3  # scale jitter changes object area


# ---------------------------------------------------------------------------
# file IO

def test_png_round_trip_mask_exact(tmp_path):
    s = generate_shapes(31, 1)[0]
    p = tmp_path / "m.png"
    save_mask(s.gt, str(p))
    save_image(s.image, str(tmp_path / "i.png"))
    back = load_sample(str(tmp_path / "i.png"), str(p))
    assert np.array_equal(back.gt, s.gt)


def test_png_round_trip_image_quantized(tmp_path):
    s = generate_shapes(37, 1)[0]
    save_image(s.image, str(tmp_path / "i.png"))
    save_mask(s.gt, str(tmp_path / "m.png"))
    back = load_sample(str(tmp_path / "i.png"), str(tmp_path / "m.png"))
    # 8-bit storage: within half a quantization step
    assert np.abs(back.image - s.image).max() <= 0.5 / 255.0 + 1e-12


def test_load_sample_size_mismatch(tmp_path):
    a = generate_shapes(41, 1, size=64)[0]
    b = generate_shapes(41, 1, size=96)[0]
    save_image(a.image, str(tmp_path / "i.png"))
    save_mask(b.gt, str(tmp_path / "m.png"))
    with pytest.raises(ValueError):
        load_sample(str(tmp_path / "i.png"), str(tmp_path / "m.png"))


def test_dataset_round_trip(tmp_path):
    samples = generate_shapes(43, 6)
    manifest = write_dataset(samples, str(tmp_path))
    assert manifest.endswith("manifest.txt")
    with open(manifest) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln]
    assert len(lines) == 6
    assert all(len(ln.split("\t")) == 3 for ln in lines)

    back = read_dataset(str(tmp_path))
    assert [s.id for s in back] == [s.id for s in samples]
    for orig, rt in zip(samples, back):
        assert np.array_equal(orig.gt, rt.gt)
        assert np.abs(orig.image - rt.image).max() <= 0.5 / 255.0 + 1e-12


def test_written_files_deterministic(tmp_path):
    samples = generate_shapes(47, 2)
    d1, d2 = tmp_path / "a", tmp_path / "b"
    write_dataset(samples, str(d1))
    write_dataset(samples, str(d2))
    for sub in ("images/s00000.png", "masks/s00000.png", "manifest.txt"):
        assert (d1 / sub).read_bytes() == (d2 / sub).read_bytes()
