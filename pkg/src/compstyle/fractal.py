"""Fractal mixer images from iterated function systems.

Renders run the chaos game over a set of contractive affine maps,
accumulate a point-density histogram, and tonemap it with log scaling.
Everything is a pure function of the spec, including its seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BURN_IN = 100
MIN_VARIANCE = 1e-4


@dataclass
class FractalSpec:
    """Affine map set, selection weights and render parameters.

    Each map is (a, b, c, d, e, f) acting as (x, y) -> (ax+by+e, cx+dy+f).
    """

    maps: list
    weights: list
    iterations: int
    size: int
    seed: int = 0

    def __post_init__(self):
        if len(self.maps) < 2:
            raise ValueError("need at least 2 affine maps")
        if len(self.weights) != len(self.maps):
            raise ValueError("one weight per map required")
        w = np.asarray(self.weights, dtype=np.float64)
        if np.any(w < 0):
            raise ValueError("weights must be non-negative")
        total = w.sum()
        if total <= 0:
            raise ValueError("weights must not sum to zero")
        if abs(total - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")
        for m in self.maps:
            a, b, c, d = m[0], m[1], m[2], m[3]
            if abs(a * d - b * c) >= 1.0:
                raise ValueError("affine map is not contractive (|det| >= 1)")
        if self.size < 2 or (self.size & (self.size - 1)) != 0:
            raise ValueError("size must be a power of two")


CHAINS = 64


def render_fractal(spec: FractalSpec) -> np.ndarray:
    """Chaos-game density image in [0,1]; all zeros if the density is flat.

    Runs a block of independent chains in lockstep (vectorized over the
    chain axis); the first BURN_IN steps of every chain are discarded so
    all recorded points lie on the attractor.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(spec.seed) & 0x7FFFFFFFFFFFFFFF, 0xF2AC]))
    chains = min(CHAINS, max(1, spec.iterations))
    steps = BURN_IN + -(-spec.iterations // chains)
    choices = rng.choice(len(spec.maps), size=(steps, chains),
                         p=np.asarray(spec.weights, dtype=np.float64))
    lin = np.asarray([[[m[0], m[1]], [m[2], m[3]]] for m in spec.maps])
    off = np.asarray([[m[4], m[5]] for m in spec.maps])
    pos = np.zeros((chains, 2))
    recorded = np.empty((steps - BURN_IN, chains, 2))
    for t in range(steps):
        idx = choices[t]
        pos = np.einsum("pij,pj->pi", lin[idx], pos) + off[idx]
        if t >= BURN_IN:
            recorded[t - BURN_IN] = pos
    pts = recorded.reshape(-1, 2)[: spec.iterations]
    return _tonemap(pts, spec.size)


def _tonemap(pts: np.ndarray, size: int) -> np.ndarray:
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    span = np.maximum(hi - lo, 1e-9)
    pad = 0.02 * span
    counts, _, _ = np.histogram2d(
        pts[:, 1], pts[:, 0], bins=size,
        range=[[lo[1] - pad[1], hi[1] + pad[1]], [lo[0] - pad[0], hi[0] + pad[0]]],
    )
    img = np.log1p(counts)
    top = img.max()
    bottom = img.min()
    if top - bottom < 1e-12:
        return np.zeros((size, size), dtype=np.float32)
    return ((img - bottom) / (top - bottom)).astype(np.float32)


def random_spec(size: int, seed: int, index: int = 0) -> FractalSpec:
    """Random contractive IFS with 2-6 maps; deterministic per (seed, index)."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0x7FFFFFFFFFFFFFFF, 0x5BEC, int(index)]))
    n_maps = int(rng.integers(2, 7))
    maps = []
    dets = []
    for _ in range(n_maps):
        s1, s2 = rng.uniform(0.3, 0.8, size=2)
        th, phi = rng.uniform(0.0, 2.0 * np.pi, size=2)
        flip = -1.0 if rng.random() < 0.25 else 1.0
        # rotation * diag(s1, flip*s2) * rotation: contractive by construction
        ct, st = np.cos(th), np.sin(th)
        cp, sp = np.cos(phi), np.sin(phi)
        a = ct * s1 * cp - st * flip * s2 * sp
        b = -ct * s1 * sp - st * flip * s2 * cp
        c = st * s1 * cp + ct * flip * s2 * sp
        d = -st * s1 * sp + ct * flip * s2 * cp
        e, f = rng.uniform(-1.0, 1.0, size=2)
        maps.append((a, b, c, d, e, f))
        dets.append(abs(a * d - b * c))
    weights = np.asarray(dets) + 0.05
    weights /= weights.sum()
    # renormalize defensively so the sum-to-1 invariant holds bit-for-bit
    weights[-1] = 1.0 - weights[:-1].sum()
    return FractalSpec(maps=maps, weights=list(weights),
                       iterations=max(10 * size * size, 2000), size=size,
                       seed=int(rng.integers(0, 2 ** 62)))


def sample_pool(n: int, size: int, seed: int) -> list[np.ndarray]:
    """n distinct fractal images; degenerate (flat) renders are regenerated."""
    if n < 1:
        raise ValueError("pool size must be >= 1")
    pool = []
    attempt = 0
    while len(pool) < n:
        img = render_fractal(random_spec(size, seed, index=attempt))
        attempt += 1
        if img.var() >= MIN_VARIANCE:
            pool.append(img)
    return pool
