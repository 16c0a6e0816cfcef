"""Binary tensor files ("CSTN") and 8-bit PGM previews.

CSTN layout: magic ``CSTN``, 1-byte version (1), 1-byte dtype code
(0 = float32), 1-byte rank, rank little-endian uint32 dims, then the
row-major little-endian float32 payload. Bit-exact across platforms.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"CSTN"
VERSION = 1
DTYPE_F32 = 0


def write_tensor(path, array: np.ndarray) -> None:
    a = np.ascontiguousarray(np.asarray(array, dtype="<f4"))
    if a.ndim > 255:
        raise ValueError("rank too large for CSTN header")
    header = MAGIC + struct.pack("<BBB", VERSION, DTYPE_F32, a.ndim)
    header += struct.pack(f"<{a.ndim}I", *a.shape)
    Path(path).write_bytes(header + a.tobytes())


def read_tensor(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: not a CSTN file")
    version, dtype_code, rank = struct.unpack_from("<BBB", raw, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported CSTN version {version}")
    if dtype_code != DTYPE_F32:
        raise ValueError(f"{path}: unsupported dtype code {dtype_code}")
    dims = struct.unpack_from(f"<{rank}I", raw, 7)
    offset = 7 + 4 * rank
    count = int(np.prod(dims)) if rank else 1
    data = np.frombuffer(raw, dtype="<f4", count=count, offset=offset)
    return data.reshape(dims).astype(np.float32)


def write_pgm(path, image: np.ndarray) -> None:
    """Write a [0,1] grayscale image as binary 8-bit PGM."""
    img = np.asarray(image)
    if img.ndim == 3 and img.shape[0] == 1:
        img = img[0]
    if img.ndim != 2:
        raise ValueError("PGM preview expects a single-channel 2D image")
    q = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    h, w = q.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + q.tobytes())
