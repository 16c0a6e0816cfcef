import numpy as np
import pytest

from compstyle.synthdata import (
    DOMAIN_PROFILES,
    DomainProfile,
    build_preset,
    generate_dataset,
    load_dataset,
    render_sample,
    save_dataset,
)


def test_same_seed_identical_samples():
    a = render_sample(DOMAIN_PROFILES[0], 0, 3, 32, 2, seed=5)
    b = render_sample(DOMAIN_PROFILES[0], 0, 3, 32, 2, seed=5)
    np.testing.assert_array_equal(a.image, b.image)
    np.testing.assert_array_equal(a.mask, b.mask)


def test_binary_mask_labels():
    ds = generate_dataset(3, DOMAIN_PROFILES[:2], size=32, num_classes=2, seed=1)
    for s in ds.samples:
        assert set(np.unique(s.mask)) <= {0, 1}
        assert s.image.shape == (1, 32, 32)
        assert s.image.min() >= 0.0 and s.image.max() <= 1.0


def test_ring_mask_labels():
    ds = generate_dataset(3, DOMAIN_PROFILES[:2], size=32, num_classes=4, seed=1)
    labels = set()
    for s in ds.samples:
        labels |= set(np.unique(s.mask))
    assert labels == {0, 1, 2, 3}


def test_rejects_bad_num_classes():
    with pytest.raises(ValueError):
        generate_dataset(1, DOMAIN_PROFILES[:2], size=32, num_classes=3, seed=0)


def test_mask_independent_of_photometrics():
    other = DomainProfile(0.1, 0.3, 0.9, 1.0, 0.3, 0.2, 5, 2.0)
    a = render_sample(DOMAIN_PROFILES[0], 2, 7, 32, 4, seed=9)
    b = render_sample(other, 2, 7, 32, 4, seed=9)
    np.testing.assert_array_equal(a.mask, b.mask)
    assert not np.allclose(a.image, b.image)


def test_preset_domain_shift_and_area_overlap():
    ds = build_preset("prostate7", seed=3, size=32)
    means, fracs = {}, {}
    for did in range(7):
        split = "train" if did == 0 else "test"
        samples = ds.split(split, domain_id=did)
        assert len(samples) >= 50
        means[did] = np.mean([s.image.mean() for s in samples])
        fracs[did] = np.mean([(s.mask > 0).mean() for s in samples])
    big_gaps = sum(
        1
        for i in range(7)
        for j in range(i + 1, 7)
        if abs(means[i] - means[j]) > 0.05
    )
    assert big_gaps >= 5
    mean_frac = np.mean(list(fracs.values()))
    for did, f in fracs.items():
        assert abs(f - mean_frac) / mean_frac < 0.30


def test_preset_split_sizes():
    ds = build_preset("cardiac7", seed=1, size=32)
    assert len(ds.split("train", 0)) == 200
    assert len(ds.split("val", 0)) == 50
    assert len(ds.split("test", 0)) == 50
    for did in range(1, 7):
        assert len(ds.split("test", did)) == 50
    assert ds.held_out_domains() == [1, 2, 3, 4, 5, 6]


def test_manifest_roundtrip(tmp_path):
    ds = generate_dataset(2, DOMAIN_PROFILES[:3], size=16, num_classes=2, seed=4)
    manifest = save_dataset(ds, tmp_path / "corpus")
    loaded = load_dataset(manifest)
    assert loaded.num_classes == ds.num_classes
    assert loaded.size == ds.size
    assert len(loaded.samples) == len(ds.samples)
    for a, b in zip(ds.samples, loaded.samples):
        np.testing.assert_array_equal(a.image, b.image)
        np.testing.assert_array_equal(a.mask, b.mask)
        assert a.domain_id == b.domain_id and a.split == b.split
    # save -> load -> save is byte-identical
    manifest2 = save_dataset(loaded, tmp_path / "corpus2")
    assert manifest.read_bytes() == manifest2.read_bytes()
    img0 = (tmp_path / "corpus" / "tensors" / "img_00000.cstn").read_bytes()
    img0b = (tmp_path / "corpus2" / "tensors" / "img_00000.cstn").read_bytes()
    assert img0 == img0b
