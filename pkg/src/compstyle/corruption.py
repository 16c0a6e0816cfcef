"""MRI-style image corruptions: bias field, k-space spikes, ghosting, motion.

Spike, ghosting and motion are linear spectral edits on the centered
unitary FFT; bias is a smooth multiplicative intensity field. Severity 0
is the identity for every kind, and outputs stay in [0,1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fourier import Spectrum, fft2, ifft2

KINDS = ("bias", "spike", "ghosting", "motion")


@dataclass
class CorruptionSpec:
    """Artifact family plus severity and kind-specific parameters."""

    kind: str
    severity: float
    seed: int = 0
    bias_order: int = 3
    num_spikes: int = 1
    num_ghosts: int = 4
    axis: int = 0
    num_transforms: int = 2
    max_rotation: float = 10.0     # degrees at severity 1
    max_translation: float = 8.0   # pixels at severity 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown corruption kind {self.kind!r}")
        if self.severity < 0:
            raise ValueError("severity must be >= 0")


def apply_corruption(x: np.ndarray, spec: CorruptionSpec) -> np.ndarray:
    fn = {"bias": bias_field, "spike": spike, "ghosting": ghosting, "motion": motion}[spec.kind]
    return fn(x, spec)


def _rng(spec: CorruptionSpec) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(spec.seed), KINDS.index(spec.kind)]))


# -- bias field ---------------------------------------------------------------


def bias_field(x: np.ndarray, spec: CorruptionSpec) -> np.ndarray:
    """Multiply by exp(P(u,v)) for a random low-order polynomial P.

    Coefficients are uniform in [-severity, severity] scaled by the term
    count, which keeps the field smooth (4-neighbor steps stay well below
    0.05 at severity 0.3, order 3).
    """
    h, w = x.shape
    rng = _rng(spec)
    u = np.linspace(-1.0, 1.0, h)[:, None]
    v = np.linspace(-1.0, 1.0, w)[None, :]
    terms = [(i, j) for i in range(spec.bias_order + 1)
             for j in range(spec.bias_order + 1 - i)]
    coeffs = rng.uniform(-spec.severity, spec.severity, size=len(terms))
    p = np.zeros((h, w))
    for c, (i, j) in zip(coeffs, terms):
        p += c * (u ** i) * (v ** j)
    p /= len(terms)
    return np.clip(x * np.exp(p), 0.0, 1.0).astype(x.dtype)


def polynomial_field(x_shape, coeffs, order) -> np.ndarray:
    """Deterministic exp-polynomial field for given coefficients (test hook)."""
    h, w = x_shape
    u = np.linspace(-1.0, 1.0, h)[:, None]
    v = np.linspace(-1.0, 1.0, w)[None, :]
    terms = [(i, j) for i in range(order + 1) for j in range(order + 1 - i)]
    if len(coeffs) != len(terms):
        raise ValueError("coefficient count does not match polynomial order")
    p = np.zeros((h, w))
    for c, (i, j) in zip(coeffs, terms):
        p += c * (u ** i) * (v ** j)
    return np.exp(p / len(terms))


# -- spike (herringbone) ------------------------------------------------------


def _mirror(idx: int, n: int) -> int:
    return (n - idx) % n


def insert_spikes(x: np.ndarray, positions, severity: float) -> np.ndarray:
    """Add severity * max|F| at the given centered k-space bins (and their
    conjugate mirrors, keeping the image real)."""
    spec = fft2(x)
    z = spec.to_complex()
    amp = severity * np.max(np.abs(z))
    h, w = z.shape
    for (i, j) in positions:
        z[i, j] += amp
        mi, mj = _mirror(i, h), _mirror(j, w)
        if (mi, mj) != (i, j):
            z[mi, mj] += amp
    out = ifft2(Spectrum.from_complex(z))
    return np.clip(out, 0.0, 1.0).astype(x.dtype)


def spike(x: np.ndarray, spec: CorruptionSpec) -> np.ndarray:
    """Random off-center k-space spikes producing stripe patterns."""
    h, w = x.shape
    rng = _rng(spec)
    center = (h // 2, w // 2)
    positions = []
    while len(positions) < spec.num_spikes:
        pos = (int(rng.integers(0, h)), int(rng.integers(0, w)))
        if pos != center and pos not in positions:
            positions.append(pos)
    return insert_spikes(x, positions, spec.severity)


# -- ghosting -----------------------------------------------------------------


def ghosting(x: np.ndarray, spec: CorruptionSpec) -> np.ndarray:
    """Attenuate k-space lines off the num_ghosts comb, displacing copies.

    Lines i with (i - center) % num_ghosts == 0 are preserved (the comb,
    center included); all others are scaled by (1 - severity). At severity
    1 only the comb survives, which aliases into num_ghosts shifted copies.
    """
    if spec.axis not in (0, 1):
        raise ValueError("axis must be 0 or 1")
    z = fft2(x).to_complex()
    n = z.shape[spec.axis]
    idx = np.arange(n)
    keep = (idx - n // 2) % max(int(spec.num_ghosts), 1) == 0
    factors = np.where(keep, 1.0, 1.0 - spec.severity)
    if spec.axis == 0:
        z *= factors[:, None]
    else:
        z *= factors[None, :]
    out = ifft2(Spectrum.from_complex(z))
    return np.clip(out, 0.0, 1.0).astype(x.dtype)


# -- motion -------------------------------------------------------------------


def rigid_transform(x: np.ndarray, angle_deg: float, ty: float, tx: float) -> np.ndarray:
    """Rotate about the image center then translate, nearest-neighbor,
    zero fill outside."""
    h, w = x.shape
    th = math.radians(angle_deg)
    cos_t, sin_t = math.cos(th), math.sin(th)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    ii, jj = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    yy = ii - cy - ty
    xx = jj - cx - tx
    src_i = np.rint(cos_t * yy + sin_t * xx + cy).astype(np.int64)
    src_j = np.rint(-sin_t * yy + cos_t * xx + cx).astype(np.int64)
    valid = (src_i >= 0) & (src_i < h) & (src_j >= 0) & (src_j < w)
    out = np.zeros_like(x)
    out[valid] = x[src_i[valid], src_j[valid]]
    return out


def compose_band_spectrum(spectra, cuts) -> Spectrum:
    """Stitch contiguous row bands of the given spectra: band b (rows
    cuts[b]..cuts[b+1]) comes from spectra[b]."""
    h = spectra[0].shape[0]
    edges = [0] + sorted(int(c) for c in cuts) + [h]
    if len(edges) - 1 != len(spectra):
        raise ValueError("need exactly len(spectra) bands")
    z = np.zeros(spectra[0].shape, dtype=np.complex128)
    for b, spec in enumerate(spectra):
        z[edges[b]:edges[b + 1], :] = spec.to_complex()[edges[b]:edges[b + 1], :]
    return Spectrum.from_complex(z)


def motion(x: np.ndarray, spec: CorruptionSpec) -> np.ndarray:
    """Composite k-space from rigid-transformed copies in contiguous bands."""
    h, w = x.shape
    rng = _rng(spec)
    copies = []
    for _ in range(spec.num_transforms):
        ang = rng.uniform(-1.0, 1.0) * spec.max_rotation * spec.severity
        ty = rng.uniform(-1.0, 1.0) * spec.max_translation * spec.severity
        tx = rng.uniform(-1.0, 1.0) * spec.max_translation * spec.severity
        copies.append(rigid_transform(x, ang, ty, tx))
    spectra = [fft2(x)] + [fft2(c) for c in copies]
    cuts = sorted(int(c) for c in rng.integers(1, h, size=spec.num_transforms))
    out = ifft2(compose_band_spectrum(spectra, cuts))
    return np.clip(out, 0.0, 1.0).astype(x.dtype)
