"""Binary PPM (P6) / PGM (P5) images, maxval 255."""
from __future__ import annotations

from pathlib import Path

import numpy as np


def to_uint8(pixels: np.ndarray) -> np.ndarray:
    """[0, 1] floats to bytes, clamped."""
    return np.round(np.clip(pixels, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_ppm(path, rgb: np.ndarray) -> None:
    """``rgb`` is uint8 [H, W, 3]."""
    rgb = np.asarray(rgb, dtype=np.uint8)
    h, w, c = rgb.shape
    if c != 3:
        raise ValueError("PPM needs three channels")
    Path(path).write_bytes(b"P6\n%d %d\n255\n" % (w, h) + rgb.tobytes())


def write_pgm(path, gray: np.ndarray) -> None:
    gray = np.asarray(gray, dtype=np.uint8)
    h, w = gray.shape
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + gray.tobytes())


def read_pnm(path) -> np.ndarray:
    """Read a P5/P6 file written by this module; returns [H, W] or [H, W, 3] uint8."""
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    magic, dims, maxval, body = parts
    w, h = (int(v) for v in dims.split())
    if maxval != b"255":
        raise ValueError(f"{path}: unsupported maxval {maxval!r}")
    if magic == b"P6":
        return np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3)
    if magic == b"P5":
        return np.frombuffer(body, dtype=np.uint8).reshape(h, w)
    raise ValueError(f"{path}: not a binary PPM/PGM file")


def attention_image(attention: np.ndarray, grid: int, patch_size: int) -> np.ndarray:
    """Token attention -> uint8 image, nearest-neighbour upscaled, min-max normalised."""
    a = np.asarray(attention, dtype=np.float64).reshape(grid, grid)
    lo, hi = a.min(), a.max()
    a = (a - lo) / (hi - lo) if hi > lo else np.zeros_like(a)
    a = np.kron(a, np.ones((patch_size, patch_size)))
    return np.round(a * 255.0).astype(np.uint8)
