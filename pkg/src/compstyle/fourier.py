"""Centered, unitary 2D FFT for power-of-two images.

Iterative radix-2 butterflies, vectorized across rows. The spectrum is
stored shifted so the zero-frequency coefficient sits at (H/2, W/2), and
both directions carry a 1/sqrt(N) factor, making the transform unitary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Spectrum:
    """Centered Fourier coefficients of a real image."""

    real: np.ndarray
    imag: np.ndarray

    @property
    def shape(self):
        return self.real.shape

    def to_complex(self) -> np.ndarray:
        return self.real + 1j * self.imag

    @classmethod
    def from_complex(cls, z: np.ndarray) -> "Spectrum":
        return cls(real=np.ascontiguousarray(z.real), imag=np.ascontiguousarray(z.imag))

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.real, self.imag)


def _check_pow2(n: int) -> None:
    if n < 1 or (n & (n - 1)) != 0:
        raise ValueError(f"size {n} is not a power of two")


def _bit_reverse_indices(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for _ in range(bits):
        rev = (rev << 1) | (idx & 1)
        idx >>= 1
    return rev


def _fft_rows(a: np.ndarray, inverse: bool) -> np.ndarray:
    """Radix-2 FFT along the last axis of a complex128 array."""
    n = a.shape[-1]
    _check_pow2(n)
    out = a[..., _bit_reverse_indices(n)].copy()
    sign = 1.0 if inverse else -1.0
    size = 2
    while size <= n:
        half = size // 2
        tw = np.exp(sign * 2j * np.pi * np.arange(half) / size)
        blocks = out.reshape(*out.shape[:-1], n // size, size)
        even = blocks[..., :half].copy()
        odd = blocks[..., half:] * tw
        blocks[..., :half] = even + odd
        blocks[..., half:] = even - odd
        size *= 2
    return out


def fft2(x: np.ndarray) -> Spectrum:
    """Forward transform of a real (H, W) image, centered and unitary."""
    x = np.asarray(x)
    if x.ndim != 2:
        raise ValueError("fft2 expects a 2D image")
    h, w = x.shape
    _check_pow2(h)
    _check_pow2(w)
    z = x.astype(np.complex128)
    z = _fft_rows(z, inverse=False)
    z = _fft_rows(z.T, inverse=False).T
    z /= np.sqrt(h * w)
    z = np.fft.fftshift(z)
    return Spectrum.from_complex(z)


def ifft2(spec: Spectrum) -> np.ndarray:
    """Inverse transform back to a real image (imaginary residue dropped)."""
    z = np.fft.ifftshift(spec.to_complex())
    h, w = z.shape
    _check_pow2(h)
    _check_pow2(w)
    z = _fft_rows(z, inverse=True)
    z = _fft_rows(z.T, inverse=True).T
    z /= np.sqrt(h * w)
    return np.ascontiguousarray(z.real)
