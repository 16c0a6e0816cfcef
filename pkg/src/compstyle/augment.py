"""Input-level augmentation: traditional transforms followed by fractal mixing.

A batch is either mixed (traditional transforms, then per-sample additive
or multiplicative blending with a random fractal) or, as the fallback
path, perturbed with Gaussian pixel noise. Label masks follow the
geometric transforms only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class TraditionalConfig:
    """Enabled geometric/photometric transforms and their ranges."""

    rotate: bool = True                       # k * 90 degrees
    contrast_range: tuple = (0.7, 1.3)
    crop_min_area: float = 0.8


@dataclass
class MixConfig:
    p_apply: float = 0.4
    intensity_max: float = 0.3
    mode_probs: tuple = (0.5, 0.5)            # additive, multiplicative
    noise_std: float = 0.05
    traditional: TraditionalConfig = field(default_factory=TraditionalConfig)

    def __post_init__(self):
        if not 0.0 <= self.p_apply <= 1.0:
            raise ValueError("p_apply must be in [0, 1]")
        if not 0.0 < self.intensity_max <= 1.0:
            raise ValueError("intensity_max must be in (0, 1]")
        if abs(sum(self.mode_probs) - 1.0) > 1e-9 or any(p < 0 for p in self.mode_probs):
            raise ValueError("mode_probs must be non-negative and sum to 1")


def traditional(images: np.ndarray, masks: np.ndarray, cfg: TraditionalConfig,
                rng: np.random.Generator):
    """Per-sample rotation / contrast / crop-resize; masks get the
    geometric transforms only."""
    out_i = images.copy()
    out_m = masks.copy()
    n = images.shape[0]
    for s in range(n):
        img = out_i[s, 0]
        msk = out_m[s]
        if cfg.rotate:
            k = int(rng.integers(0, 4))
            img = np.rot90(img, k)
            msk = np.rot90(msk, k)
        lo, hi = cfg.contrast_range
        if hi > lo or lo != 1.0:
            scale = rng.uniform(lo, hi)
            img = np.clip(img * scale, 0.0, 1.0)
        if cfg.crop_min_area < 1.0:
            area = rng.uniform(cfg.crop_min_area, 1.0)
            h, w = img.shape
            ch = max(1, int(round(h * np.sqrt(area))))
            cw = max(1, int(round(w * np.sqrt(area))))
            top = int(rng.integers(0, h - ch + 1))
            left = int(rng.integers(0, w - cw + 1))
            img = _resize_nn(img[top:top + ch, left:left + cw], (h, w))
            msk = _resize_nn(msk[top:top + ch, left:left + cw], (h, w))
        out_i[s, 0] = img
        out_m[s] = msk
    return out_i, out_m


def _resize_nn(a: np.ndarray, shape):
    h, w = shape
    sy = (np.arange(h) * a.shape[0]) // h
    sx = (np.arange(w) * a.shape[1]) // w
    return a[sy[:, None], sx[None, :]]


def mix_additive(x: np.ndarray, fr: np.ndarray, m: float) -> np.ndarray:
    if x.shape != fr.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {fr.shape}")
    return ((1.0 - m) * x + m * fr).astype(x.dtype)


def mix_multiplicative(x: np.ndarray, fr: np.ndarray, m: float) -> np.ndarray:
    """Geometric blend x^(1-m) * fr^m; inputs floored at 1e-4 first."""
    if x.shape != fr.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {fr.shape}")
    xs = np.maximum(x, 1e-4)
    fs = np.maximum(fr, 1e-4)
    return np.clip(xs ** (1.0 - m) * fs ** m, 0.0, 1.0).astype(x.dtype)


def apply_pipeline(images: np.ndarray, masks: np.ndarray, pool, cfg: MixConfig,
                   rng: np.random.Generator):
    """Whole-batch gate: mix with probability p_apply, else add pixel noise."""
    if not pool:
        raise ValueError("fractal pool is empty")
    if rng.random() < cfg.p_apply:
        images, masks = traditional(images, masks, cfg.traditional, rng)
        out = images.copy()
        for s in range(images.shape[0]):
            fr = pool[int(rng.integers(0, len(pool)))]
            m = rng.uniform(0.0, cfg.intensity_max)
            mode = int(rng.random() >= cfg.mode_probs[0])
            blend = mix_multiplicative if mode else mix_additive
            out[s, 0] = blend(images[s, 0], fr.astype(images.dtype), m)
        return out, masks
    noisy = images + cfg.noise_std * rng.standard_normal(images.shape)
    return np.clip(noisy, 0.0, 1.0).astype(images.dtype), masks.copy()
