"""Occlusion robustness by patch dropping.

Dropped patches are set to 0 in normalised pixel space. Saliency for the
ordered modes comes from the evaluated model's own class attention.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .vit import ViTParams, patchify, predict, predict_with_attention, unpatchify

OCCLUSION_MODES = ("random", "salient", "nonsalient")
SALIENCY_SOURCE = "model_class_attention"


@dataclass(frozen=True)
class OcclusionSpec:
    mode: str
    drop_ratios: tuple[float, ...]
    seed: int = 0

    def __post_init__(self):
        if self.mode not in OCCLUSION_MODES:
            raise ValueError(f"unknown occlusion mode {self.mode!r}")
        r = list(self.drop_ratios)
        if r != sorted(r) or any(not 0.0 <= x <= 1.0 for x in r):
            raise ValueError("drop ratios must be sorted ascending within [0, 1]")


def drop_count(num_patches: int, ratio: float) -> int:
    # round half up; Python's round() would send 0.5 to even
    return int(math.floor(num_patches * ratio + 0.5))


def patch_order(mode: str, num_patches: int, saliency=None, rng=None) -> np.ndarray:
    """Token indices in the order they get dropped."""
    idx = np.arange(num_patches)
    if mode == "random":
        return rng.permutation(num_patches)
    if saliency is None:
        raise ValueError(f"mode {mode!r} needs a saliency map")
    saliency = np.asarray(saliency, dtype=np.float64)
    if saliency.shape != (num_patches,):
        raise ValueError(f"saliency shape {saliency.shape} != ({num_patches},)")
    key = -saliency if mode == "salient" else saliency
    # lexsort: last key is primary, ties go to the lower index
    return np.lexsort((idx, key))


def drop_patches(image: np.ndarray, patch_size: int, ratio: float, mode: str,
                 saliency=None, rng: np.random.Generator | None = None) -> np.ndarray:
    """Zero ``round(N * ratio)`` patches of a [C, H, W] image."""
    if not 0.0 <= ratio <= 1.0:
        raise ValueError(f"ratio must lie in [0, 1], got {ratio}")
    if mode not in OCCLUSION_MODES:
        raise ValueError(f"unknown occlusion mode {mode!r}")
    c, h, w = image.shape
    tokens = patchify(image, patch_size).copy()
    n = tokens.shape[0]
    k = drop_count(n, ratio)
    if mode == "random" and rng is None:
        raise ValueError("random mode needs an rng")
    order = patch_order(mode, n, saliency, rng)
    tokens[order[:k]] = 0.0
    return unpatchify(tokens, patch_size, c, h, w)


def occlude_dataset(params: ViTParams, ds: Dataset, mode: str, ratio: float,
                    rng: np.random.Generator, saliency: np.ndarray | None = None) -> np.ndarray:
    p = params.config.patch_size
    if mode != "random" and saliency is None:
        saliency = predict_with_attention(params, ds.images)[1]
    out = np.empty_like(ds.images)
    for i, img in enumerate(ds.images):
        out[i] = drop_patches(img, p, ratio, mode, None if saliency is None else saliency[i], rng)
    return out


def occlusion_curve(params: ViTParams, ds: Dataset, spec: OcclusionSpec,
                    batch_size: int = 256) -> list[tuple[float, float]]:
    """Top-1 accuracy on occluded copies of ``ds`` for every ratio in ``spec``."""
    saliency = None
    if spec.mode != "random":
        saliency = predict_with_attention(params, ds.images, batch_size)[1]
    curve = []
    for i, ratio in enumerate(spec.drop_ratios):
        rng = np.random.default_rng([spec.seed, i])
        images = occlude_dataset(params, ds, spec.mode, ratio, rng, saliency)
        logits = predict(params, images, batch_size)
        curve.append((ratio, float(np.mean(np.argmax(logits, axis=1) == ds.labels))))
    return curve


def write_occlusion_csv(path, curves: dict[str, list[tuple[float, float]]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mode", "ratio", "top1"])
        for mode, curve in curves.items():
            for ratio, top1 in curve:
                w.writerow([mode, f"{ratio:.9g}", f"{top1:.9g}"])


def read_occlusion_csv(path) -> dict[str, list[tuple[float, float]]]:
    out: dict[str, list[tuple[float, float]]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.setdefault(row["mode"], []).append((float(row["ratio"]), float(row["top1"])))
    return out
