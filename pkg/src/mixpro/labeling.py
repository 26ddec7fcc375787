"""Label-space math for attention-guided mixing.

All functions operate on plain numpy arrays; nothing here is differentiated.
Batched forms take per-sample rows along axis 0.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import ContractError

ALPHA_STRATEGIES = ("pal_cosine", "equal", "linear", "parabolic", "area_only", "attn_only")


@dataclass
class LambdaWeights:
    lambda_area: float
    lambda_attn: np.ndarray
    alpha: np.ndarray
    lam: np.ndarray


@dataclass(frozen=True)
class AlphaStrategy:
    kind: str = "pal_cosine"
    epoch: int = 1
    total_epochs: int = 1

    def __post_init__(self):
        if self.kind not in ALPHA_STRATEGIES:
            raise ValueError(f"unknown alpha strategy {self.kind!r}; choose from {ALPHA_STRATEGIES}")
        if self.total_epochs < 1 or not 0 <= self.epoch <= self.total_epochs:
            raise ValueError(f"epoch {self.epoch} outside [0, {self.total_epochs}]")


def lambda_attn(attention: np.ndarray, down_mask: np.ndarray) -> np.ndarray | float:
    """Attention mass on tokens taken from the first image."""
    attention = np.asarray(attention, dtype=np.float64)
    down_mask = np.asarray(down_mask, dtype=np.float64)
    if attention.shape[-1] != down_mask.shape[-1]:
        raise ValueError(f"length mismatch: attention {attention.shape}, mask {down_mask.shape}")
    # a renormalised attention row can sum to 1 + ulp
    out = np.clip(attention @ down_mask, 0.0, 1.0)
    return float(out) if np.ndim(out) == 0 else out


def progressive_factor(p: np.ndarray, y_mix: np.ndarray) -> np.ndarray | float:
    """Cosine similarity between output probabilities and the mixed target.

    Both arguments are non-negative, so the result is clipped into [0, 1]
    to absorb rounding.
    """
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y_mix, dtype=np.float64)
    if p.shape != y.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {y.shape}")
    pn = np.linalg.norm(p, axis=-1)
    yn = np.linalg.norm(y, axis=-1)
    if np.any(pn == 0) or np.any(yn == 0):
        raise ContractError("cosine similarity of a zero vector is undefined")
    d = np.clip(np.sum(p * y, axis=-1) / (pn * yn), 0.0, 1.0)
    return float(d) if np.ndim(d) == 0 else d


def alpha_for(strategy: AlphaStrategy, p: np.ndarray, y_mix: np.ndarray) -> np.ndarray:
    """Per-sample progressive factor under ``strategy`` (shape ``p.shape[:-1]``)."""
    shape = np.shape(p)[:-1]
    kind = strategy.kind
    if kind == "pal_cosine":
        return np.broadcast_to(progressive_factor(p, y_mix), shape).astype(np.float64)
    frac = strategy.epoch / strategy.total_epochs
    value = {"equal": 0.5, "linear": frac, "parabolic": frac ** 2,
             "area_only": 0.0, "attn_only": 1.0}[kind]
    return np.full(shape, value)


def blend_lambda(alpha, lam_attn, lam_area):
    """``alpha * lam_attn + (1 - alpha) * lam_area``, kept inside the endpoints' hull."""
    alpha = np.asarray(alpha, dtype=np.float64)
    lam_attn = np.asarray(lam_attn, dtype=np.float64)
    lam_area = np.asarray(lam_area, dtype=np.float64)
    raw = alpha * lam_attn + (1.0 - alpha) * lam_area
    # rounding can push a convex combination one ulp outside its endpoints
    out = np.clip(raw, np.minimum(lam_attn, lam_area), np.maximum(lam_attn, lam_area))
    return float(out) if out.ndim == 0 else out


def mix_labels(y_i: np.ndarray, y_j: np.ndarray, lam) -> np.ndarray:
    """``lam * y_i + (1 - lam) * y_j``; ``lam`` is a scalar or one value per row."""
    lam = np.asarray(lam, dtype=np.float64)
    if np.any(lam < 0) or np.any(lam > 1) or np.any(np.isnan(lam)):
        raise ContractError(f"mixing proportion outside [0, 1]: {lam}")
    if lam.ndim == 1:
        lam = lam[:, None]
    return lam * np.asarray(y_i) + (1.0 - lam) * np.asarray(y_j)


def one_hot(labels, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros(labels.shape + (num_classes,))
    np.put_along_axis(out, labels[..., None], 1.0, axis=-1)
    return out


def smooth_labels(y: np.ndarray, eps: float, num_classes: int) -> np.ndarray:
    if not 0.0 <= eps < 1.0:
        raise ValueError(f"label smoothing must lie in [0, 1), got {eps}")
    return (1.0 - eps) * np.asarray(y, dtype=np.float64) + eps / num_classes
