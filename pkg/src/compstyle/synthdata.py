"""Synthetic multi-domain segmentation corpus.

Each sample is a random ellipse (optionally with concentric ring labels)
rendered under a photometric domain profile. Geometry and photometrics
draw from separate seeded streams, so masks never depend on the profile:
the same (seed, domain, index) always yields the same mask.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .serial import read_tensor, write_tensor

_GEO_TAG = 11
_PHOTO_TAG = 12

RING_EDGES = (0.45, 0.75, 1.0)  # core / middle / outer normalized radii


@dataclass
class DomainProfile:
    """Photometric appearance of one acquisition domain."""

    fg_mean: float
    fg_contrast: float
    bg_base: float
    grad_dir: float      # radians
    grad_slope: float
    noise_amp: float
    noise_corr: int      # box-blur half width in pixels
    gamma: float


@dataclass
class SegSample:
    image: np.ndarray    # (1, H, W) float32 in [0, 1]
    mask: np.ndarray     # (H, W) int64
    domain_id: int
    split: str           # train | val | test


@dataclass
class Dataset:
    samples: list
    num_classes: int
    size: int
    train_domain: int = 0

    def split(self, name, domain_id=None):
        return [s for s in self.samples
                if s.split == name and (domain_id is None or s.domain_id == domain_id)]

    def held_out_domains(self):
        return sorted({s.domain_id for s in self.samples if s.domain_id != self.train_domain})


def _ellipse_radius(size, rng):
    cy, cx = rng.uniform(0.35, 0.65, size=2) * size
    ry, rx = rng.uniform(0.14, 0.26, size=2) * size
    theta = rng.uniform(0.0, np.pi)
    ii, jj = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    dy, dx = ii - cy, jj - cx
    ct, st = np.cos(theta), np.sin(theta)
    return np.sqrt(((dy * ct + dx * st) / ry) ** 2 + ((-dy * st + dx * ct) / rx) ** 2)


def _box_blur(a: np.ndarray, half: int) -> np.ndarray:
    if half <= 0:
        return a
    k = 2 * half + 1
    pad = np.pad(a, half, mode="edge")
    c = np.cumsum(np.cumsum(pad, axis=0), axis=1)
    c = np.pad(c, ((1, 0), (1, 0)))
    h, w = a.shape
    out = (c[k:k + h, k:k + w] - c[:h, k:k + w] - c[k:k + h, :w] + c[:h, :w])
    return out / (k * k)


def render_sample(profile: DomainProfile, domain_id: int, index: int, size: int,
                  num_classes: int, seed: int, split: str = "test") -> SegSample:
    if num_classes not in (2, 4):
        raise ValueError("num_classes must be 2 (binary) or 4 (rings)")
    geo = np.random.default_rng(np.random.SeedSequence([int(seed), _GEO_TAG, int(domain_id), int(index)]))
    photo = np.random.default_rng(np.random.SeedSequence([int(seed), _PHOTO_TAG, int(domain_id), int(index)]))

    r = _ellipse_radius(size, geo)
    if num_classes == 2:
        mask = (r <= 1.0).astype(np.int64)
    else:
        mask = np.zeros_like(r, dtype=np.int64)
        mask[r <= RING_EDGES[2]] = 3
        mask[r <= RING_EDGES[1]] = 2
        mask[r <= RING_EDGES[0]] = 1

    fg_mean = profile.fg_mean + photo.uniform(-0.03, 0.03)
    bg_base = profile.bg_base + photo.uniform(-0.03, 0.03)
    ii, jj = np.meshgrid(np.linspace(-0.5, 0.5, size), np.linspace(-0.5, 0.5, size), indexing="ij")
    ramp = np.cos(profile.grad_dir) * ii + np.sin(profile.grad_dir) * jj
    img = bg_base + profile.grad_slope * ramp

    if num_classes == 2:
        shading = 0.5 * (1.0 - np.clip(r, 0.0, 1.0) ** 2)
        img = np.where(mask == 1, fg_mean + profile.fg_contrast * shading, img)
    else:
        levels = (fg_mean + profile.fg_contrast,
                  fg_mean - profile.fg_contrast,
                  fg_mean + 0.4 * profile.fg_contrast)
        for label, level in zip((1, 2, 3), levels):
            img = np.where(mask == label, level, img)

    if profile.noise_amp > 0:
        white = photo.standard_normal((size, size))
        tex = _box_blur(white, profile.noise_corr)
        std = tex.std()
        if std > 1e-9:
            img = img + profile.noise_amp * tex / std
    img = np.clip(img, 0.0, 1.0) ** profile.gamma
    img = np.clip(img, 0.0, 1.0).astype(np.float32)
    return SegSample(image=img[None], mask=mask, domain_id=domain_id, split=split)


def generate_dataset(n_per_domain: int, domains, size: int, num_classes: int,
                     seed: int, train_domain: int = 0) -> Dataset:
    """n_per_domain samples per profile; the train domain's samples are
    tagged 'train', remaining domains 'test'."""
    samples = []
    for did, profile in enumerate(domains):
        split = "train" if did == train_domain else "test"
        for i in range(n_per_domain):
            samples.append(render_sample(profile, did, i, size, num_classes, seed, split))
    return Dataset(samples=samples, num_classes=num_classes, size=size, train_domain=train_domain)


# -- presets ------------------------------------------------------------------

DOMAIN_PROFILES = (
    DomainProfile(0.72, 0.12, 0.30, 0.5, 0.06, 0.03, 3, 1.00),   # G: train
    DomainProfile(0.68, 0.10, 0.34, 2.0, 0.10, 0.04, 3, 1.10),   # A
    DomainProfile(0.62, 0.15, 0.38, 4.0, 0.16, 0.06, 2, 0.85),   # B
    DomainProfile(0.80, 0.08, 0.45, 1.0, 0.12, 0.05, 5, 0.70),   # C
    DomainProfile(0.55, 0.10, 0.25, 5.5, 0.20, 0.08, 2, 1.30),   # D
    DomainProfile(0.25, 0.10, 0.70, 3.0, 0.10, 0.05, 3, 1.00),   # E: inverted
    DomainProfile(0.40, 0.08, 0.58, 2.5, 0.25, 0.10, 4, 0.90),   # F: inverted, low contrast
)

PRESETS = {"prostate7": 2, "cardiac7": 4}

TRAIN_N, VAL_N, TEST_N = 200, 50, 50


def build_preset(name: str, seed: int, size: int = 64) -> Dataset:
    """Seven-domain corpus: train/val/test in G, held-out test in A-F."""
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; options: {sorted(PRESETS)}")
    num_classes = PRESETS[name]
    samples = []
    g = DOMAIN_PROFILES[0]
    for i in range(TRAIN_N):
        samples.append(render_sample(g, 0, i, size, num_classes, seed, "train"))
    for i in range(VAL_N):
        samples.append(render_sample(g, 0, TRAIN_N + i, size, num_classes, seed, "val"))
    for i in range(TEST_N):
        samples.append(render_sample(g, 0, TRAIN_N + VAL_N + i, size, num_classes, seed, "test"))
    for did in range(1, len(DOMAIN_PROFILES)):
        for i in range(TEST_N):
            samples.append(render_sample(DOMAIN_PROFILES[did], did, i, size, num_classes, seed, "test"))
    return Dataset(samples=samples, num_classes=num_classes, size=size, train_domain=0)


# -- manifest io ---------------------------------------------------------------


def save_dataset(ds: Dataset, out_dir) -> Path:
    out = Path(out_dir)
    (out / "tensors").mkdir(parents=True, exist_ok=True)
    lines = []
    for i, s in enumerate(ds.samples):
        img_rel = f"tensors/img_{i:05d}.cstn"
        msk_rel = f"tensors/msk_{i:05d}.cstn"
        write_tensor(out / img_rel, s.image)
        write_tensor(out / msk_rel, s.mask.astype(np.float32))
        lines.append(f"{img_rel},{msk_rel},{s.domain_id},{s.split}")
    header = f"# num_classes={ds.num_classes} size={ds.size} train_domain={ds.train_domain}\n"
    manifest = out / "manifest.txt"
    manifest.write_text(header + "\n".join(lines) + "\n")
    return manifest


def load_dataset(manifest_path) -> Dataset:
    manifest_path = Path(manifest_path)
    root = manifest_path.parent
    text = manifest_path.read_text().splitlines()
    meta = dict(kv.split("=") for kv in text[0].lstrip("# ").split())
    samples = []
    for line in text[1:]:
        if not line.strip():
            continue
        img_rel, msk_rel, domain_id, split = line.split(",")
        samples.append(SegSample(
            image=read_tensor(root / img_rel),
            mask=read_tensor(root / msk_rel).astype(np.int64),
            domain_id=int(domain_id),
            split=split,
        ))
    return Dataset(samples=samples, num_classes=int(meta["num_classes"]),
                   size=int(meta["size"]), train_domain=int(meta["train_domain"]))
