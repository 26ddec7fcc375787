"""Binary mixing masks, image mixing and nearest-neighbour mask downsampling.

Masks are ``H x W`` arrays of 0/1 (float64). Pixels where the mask is 1 come
from the first image of a pair, the rest from the second.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MASK_STRATEGIES = ("grid", "region", "region_aligned", "block")


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class MixMask:
    mask: np.ndarray
    tau: float
    lambda_area: float
    strategy: str
    p_mask: int | None = None
    num_cells: int | None = None

    @property
    def height(self) -> int:
        return self.mask.shape[0]

    @property
    def width(self) -> int:
        return self.mask.shape[1]

    def complement(self) -> "MixMask":
        m = 1.0 - self.mask
        return MixMask(m, 1.0 - self.tau, _area(m), self.strategy + "~", self.p_mask,
                       self.num_cells)


def _area(mask: np.ndarray) -> float:
    return float(np.count_nonzero(mask)) / mask.size


def sample_tau(beta: float, rng: np.random.Generator) -> float:
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    return float(rng.beta(beta, beta))


def _check_tau(tau: float) -> None:
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")


def generate_grid_mask(width: int, height: int, patch_size: int, scale_k: int, tau: float,
                       rng: np.random.Generator) -> MixMask:
    """Select ``floor(S * tau)`` of the ``S`` mask cells uniformly without replacement.

    Cells are ``scale_k * patch_size`` pixels wide, so they never split an
    image patch.
    """
    _check_tau(tau)
    p_mask = scale_k * patch_size
    if scale_k < 1 or width % p_mask or height % p_mask:
        raise ConfigurationError(
            f"mask cell {p_mask}px (scale {scale_k} x patch {patch_size}) does not tile "
            f"a {width}x{height} image")
    gh, gw = height // p_mask, width // p_mask
    s = gh * gw
    n = math.floor(s * tau)
    cells = np.zeros(s)
    cells[rng.choice(s, size=n, replace=False)] = 1.0
    mask = np.kron(cells.reshape(gh, gw), np.ones((p_mask, p_mask)))
    return MixMask(mask, tau, _area(mask), "grid", p_mask, s)


def _box(width, height, tau, rng):
    bw = int(round(width * math.sqrt(tau)))
    bh = int(round(height * math.sqrt(tau)))
    # top-left drawn so the box stays inside the image
    x0 = int(rng.integers(0, width - bw + 1))
    y0 = int(rng.integers(0, height - bh + 1))
    return x0, y0, x0 + bw, y0 + bh


def generate_region_mask(width: int, height: int, tau: float, aligned: bool, patch_size: int,
                         rng: np.random.Generator) -> MixMask:
    """One CutMix rectangle of side ``sqrt(tau)`` times the image side.

    With ``aligned`` the edges are rounded to the nearest patch boundary.
    """
    _check_tau(tau)
    x0, y0, x1, y1 = _box(width, height, tau, rng)
    if aligned:
        snap = lambda v, hi: min(hi, max(0, int(round(v / patch_size)) * patch_size))
        x0, x1 = snap(x0, width), snap(x1, width)
        y0, y1 = snap(y0, height), snap(y1, height)
    mask = np.zeros((height, width))
    mask[y0:y1, x0:x1] = 1.0
    return MixMask(mask, tau, _area(mask), "region_aligned" if aligned else "region")


def generate_block_mask(width: int, height: int, patch_size: int, tau: float,
                        rng: np.random.Generator) -> MixMask:
    """Union of random 2x2-patch squares, trimmed to exactly ``floor(N * tau)`` patches."""
    _check_tau(tau)
    if width % patch_size or height % patch_size:
        raise ConfigurationError(f"patch size {patch_size} does not tile {width}x{height}")
    gh, gw = height // patch_size, width // patch_size
    target = math.floor(gh * gw * tau)
    side_h, side_w = min(2, gh), min(2, gw)
    cells = np.zeros((gh, gw), dtype=bool)
    while cells.sum() < target:
        r = int(rng.integers(0, gh - side_h + 1))
        c = int(rng.integers(0, gw - side_w + 1))
        cells[r:r + side_h, c:c + side_w] = True
    extra = int(cells.sum()) - target
    if extra > 0:
        covered = np.flatnonzero(cells)
        cells.flat[rng.choice(covered, size=extra, replace=False)] = False
    mask = np.kron(cells.astype(np.float64), np.ones((patch_size, patch_size)))
    return MixMask(mask, tau, _area(mask), "block", patch_size, gh * gw)


def make_mask(strategy: str, width: int, height: int, patch_size: int, scale_k: int,
              tau: float, rng: np.random.Generator) -> MixMask:
    if strategy == "grid":
        return generate_grid_mask(width, height, patch_size, scale_k, tau, rng)
    if strategy == "region":
        return generate_region_mask(width, height, tau, False, patch_size, rng)
    if strategy == "region_aligned":
        return generate_region_mask(width, height, tau, True, patch_size, rng)
    if strategy == "block":
        return generate_block_mask(width, height, patch_size, tau, rng)
    raise ConfigurationError(f"unknown mask strategy {strategy!r}; choose from {MASK_STRATEGIES}")


def mix_images(x_i: np.ndarray, x_j: np.ndarray, mask: MixMask | np.ndarray) -> np.ndarray:
    """Pixelwise select: ``x_i`` where the mask is 1, ``x_j`` elsewhere.

    Works on single images [C, H, W] and batches [B, C, H, W]; the mask is
    shared across channels and batch entries.
    """
    m = mask.mask if isinstance(mask, MixMask) else np.asarray(mask)
    x_i, x_j = np.asarray(x_i), np.asarray(x_j)
    if x_i.shape != x_j.shape or x_i.shape[-2:] != m.shape:
        raise ValueError(f"shape mismatch: {x_i.shape}, {x_j.shape}, mask {m.shape}")
    return np.where(m.astype(bool), x_i, x_j)


def downsample_mask(mask: MixMask | np.ndarray, patch_size: int) -> np.ndarray:
    """Nearest-neighbour downsampling to one value per patch token (top-left pixel)."""
    m = mask.mask if isinstance(mask, MixMask) else np.asarray(mask)
    h, w = m.shape
    if h % patch_size or w % patch_size:
        raise ConfigurationError(f"patch size {patch_size} does not tile {w}x{h}")
    return np.ascontiguousarray(m[::patch_size, ::patch_size], dtype=np.float64).reshape(-1)
