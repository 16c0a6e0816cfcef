import numpy as np
import pytest

from compstyle.augment import (
    MixConfig,
    TraditionalConfig,
    apply_pipeline,
    mix_additive,
    mix_multiplicative,
    traditional,
)

IDENTITY = TraditionalConfig(rotate=False, contrast_range=(1.0, 1.0), crop_min_area=1.0)


def batch(seed=0, n=4, size=16, lo=0.0, hi=1.0):
    rng = np.random.default_rng(seed)
    images = (rng.random((n, 1, size, size)) * (hi - lo) + lo).astype(np.float32)
    masks = (rng.random((n, size, size)) > 0.6).astype(np.int64)
    return images, masks


def small_pool(size=16):
    rng = np.random.default_rng(99)
    return [rng.random((size, size)).astype(np.float32) for _ in range(4)]


def test_traditional_identity_parameters():
    images, masks = batch(1)
    out_i, out_m = traditional(images, masks, IDENTITY, np.random.default_rng(0))
    np.testing.assert_array_equal(out_i, images)
    np.testing.assert_array_equal(out_m, masks)


def test_rotation_twice_by_180_restores():
    images, masks = batch(2)
    rot = np.rot90(images[0, 0], 2)
    np.testing.assert_array_equal(np.rot90(rot, 2), images[0, 0])


def test_contrast_clamps():
    images = np.full((1, 1, 4, 4), 0.9, dtype=np.float32)
    masks = np.zeros((1, 4, 4), dtype=np.int64)
    cfg = TraditionalConfig(rotate=False, contrast_range=(1.3, 1.3), crop_min_area=1.0)
    out_i, _ = traditional(images, masks, cfg, np.random.default_rng(0))
    np.testing.assert_allclose(out_i, 1.0)


def test_masks_never_get_photometric_transforms():
    images, masks = batch(3)
    cfg = TraditionalConfig(rotate=False, contrast_range=(0.5, 0.5), crop_min_area=1.0)
    _, out_m = traditional(images, masks, cfg, np.random.default_rng(1))
    np.testing.assert_array_equal(out_m, masks)


def test_masks_follow_geometric_transforms():
    images, masks = batch(4)
    cfg = TraditionalConfig(rotate=True, contrast_range=(1.0, 1.0), crop_min_area=1.0)
    rng_a = np.random.default_rng(5)
    out_i, out_m = traditional(images, masks, cfg, rng_a)
    # replay the same draws to recover each k and verify mask alignment
    rng_b = np.random.default_rng(5)
    for s in range(images.shape[0]):
        k = int(rng_b.integers(0, 4))
        np.testing.assert_array_equal(out_i[s, 0], np.rot90(images[s, 0], k))
        np.testing.assert_array_equal(out_m[s], np.rot90(masks[s], k))


def test_mask_labels_preserved_under_full_pipeline():
    images, masks = batch(5)
    cfg = MixConfig(p_apply=1.0)
    out_i, out_m = apply_pipeline(images, masks, small_pool(), cfg, np.random.default_rng(2))
    assert out_m.dtype == masks.dtype
    assert set(np.unique(out_m)) <= set(np.unique(masks))


def test_mix_additive_closed_forms():
    x = np.full((4, 4), 0.5, dtype=np.float32)
    fr = np.ones((4, 4), dtype=np.float32)
    np.testing.assert_array_equal(mix_additive(x, fr, 0.0), x)
    np.testing.assert_array_equal(mix_additive(x, fr, 1.0), fr)
    np.testing.assert_allclose(mix_additive(x, fr, 0.3), 0.65, rtol=1e-6)
    with pytest.raises(ValueError):
        mix_additive(x, fr[:2], 0.5)


def test_mix_multiplicative_closed_forms():
    x = np.full((4, 4), 0.25, dtype=np.float32)
    fr = np.ones((4, 4), dtype=np.float32)
    np.testing.assert_allclose(mix_multiplicative(x, fr, 0.5), 0.5, rtol=1e-6)
    np.testing.assert_allclose(mix_multiplicative(x, fr, 0.0), x, rtol=1e-6)
    zeros = np.zeros((2, 2), dtype=np.float32)
    np.testing.assert_allclose(mix_multiplicative(zeros, np.ones_like(zeros), 0.0), 1e-4)
    with pytest.raises(ValueError):
        mix_multiplicative(x, fr[:1], 0.5)


def test_mix_multiplicative_bounded_by_max():
    rng = np.random.default_rng(6)
    for _ in range(20):
        x = rng.random((8, 8)).astype(np.float32)
        fr = rng.random((8, 8)).astype(np.float32)
        m = rng.random()
        out = mix_multiplicative(x, fr, m)
        cap = np.maximum(np.maximum(x, fr), 1e-4)
        assert np.all(out <= cap + 1e-6)


def test_pipeline_disabled_is_identity():
    images, masks = batch(7)
    cfg = MixConfig(p_apply=0.0, noise_std=0.0)
    out_i, out_m = apply_pipeline(images, masks, small_pool(), cfg, np.random.default_rng(3))
    np.testing.assert_array_equal(out_i, images)
    np.testing.assert_array_equal(out_m, masks)


def test_pipeline_vanishing_mix_weight_equals_traditional():
    images, masks = batch(8, lo=0.2, hi=0.8)  # off the 1e-4 floor
    cfg = MixConfig(p_apply=1.0, intensity_max=1e-9, traditional=IDENTITY)
    out_i, _ = apply_pipeline(images, masks, small_pool(), cfg, np.random.default_rng(4))
    assert np.max(np.abs(out_i - images)) < 1e-6


def test_pipeline_deterministic():
    images, masks = batch(9)
    cfg = MixConfig(p_apply=0.7)
    a_i, a_m = apply_pipeline(images, masks, small_pool(), cfg, np.random.default_rng(5))
    b_i, b_m = apply_pipeline(images, masks, small_pool(), cfg, np.random.default_rng(5))
    np.testing.assert_array_equal(a_i, b_i)
    np.testing.assert_array_equal(a_m, b_m)


def test_pipeline_rejects_empty_pool():
    images, masks = batch(10)
    with pytest.raises(ValueError):
        apply_pipeline(images, masks, [], MixConfig(), np.random.default_rng(0))


def test_additive_foreground_change_bounded_by_intensity():
    images, masks = batch(11)
    cfg = MixConfig(p_apply=1.0, intensity_max=0.3, mode_probs=(1.0, 0.0),
                    traditional=IDENTITY)
    out_i, out_m = apply_pipeline(images, masks, small_pool(), cfg, np.random.default_rng(6))
    for s in range(images.shape[0]):
        fg = out_m[s] > 0
        if fg.any():
            change = np.abs(out_i[s, 0][fg] - images[s, 0][fg])
            assert change.mean() <= cfg.intensity_max + 1e-6


def test_config_validation():
    with pytest.raises(ValueError):
        MixConfig(p_apply=1.5)
    with pytest.raises(ValueError):
        MixConfig(intensity_max=0.0)
    with pytest.raises(ValueError):
        MixConfig(mode_probs=(0.7, 0.7))
