"""Desk-scale ablation tables: one seeded training run per row."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

from .config import TrainConfig
from .data import Dataset
from .training import train_loop


@dataclass(frozen=True)
class AblationRow:
    label: str
    overrides: tuple[tuple[str, object], ...]

    def apply(self, cfg: TrainConfig) -> TrainConfig:
        return cfg.replace(**dict(self.overrides))


def _row(label, **kw) -> AblationRow:
    return AblationRow(label, tuple(kw.items()))


# Component rows: (mask, alpha) pairs. Region + area labels is CutMix, region +
# attention labels is TransMix, grid + cosine alpha is the full method.
TABLES: dict[str, tuple[AblationRow, ...]] = {
    "components": (
        _row("CutMix", mask_strategy="region", alpha_strategy="area_only"),
        _row("CutMix+TransMix", mask_strategy="region", alpha_strategy="attn_only"),
        _row("TransMix+MaskMix", mask_strategy="grid", alpha_strategy="attn_only"),
        _row("CutMix+TransMix+PAL", mask_strategy="region", alpha_strategy="pal_cosine"),
        _row("MaskMix+PAL", mask_strategy="grid", alpha_strategy="pal_cosine"),
    ),
    # area labels only, so the mask shape is the sole difference
    "mask_strategy": (
        _row("region", mask_strategy="region", alpha_strategy="area_only"),
        _row("block", mask_strategy="block", alpha_strategy="area_only"),
        _row("random", mask_strategy="grid", scale_k=1, alpha_strategy="area_only"),
        _row("random(4x scale)", mask_strategy="grid", scale_k=4, alpha_strategy="area_only"),
    ),
    "scale": tuple(_row(f"{k}x", mask_strategy="grid", scale_k=k, alpha_strategy="pal_cosine")
                   for k in (1, 2, 4)),
    "beta": tuple(_row(f"beta={b:g}", mask_strategy="grid", beta=b, alpha_strategy="pal_cosine")
                  for b in (0.5, 0.8, 1.0, 2.0)),
    "alpha_strategy": (
        _row("Equal weight", alpha_strategy="equal"),
        _row("Linear increment", alpha_strategy="linear"),
        _row("Parabolic increment", alpha_strategy="parabolic"),
        _row("PAL (cosine)", alpha_strategy="pal_cosine"),
    ),
}

CSV_HEADER = ("table", "row", "mask_strategy", "scale_k", "beta", "alpha_strategy",
              "train_loss", "alpha_mean", "val_top1")


def run_table(name: str, base: TrainConfig, train: Dataset, val: Dataset, out_dir=None,
              on_row=None) -> list[list[str]]:
    """Train every row of table ``name`` from ``base``; returns CSV rows (header excluded)."""
    if name not in TABLES:
        raise KeyError(f"unknown ablation table {name!r}; choose from {sorted(TABLES)}")
    rows = []
    for i, row in enumerate(TABLES[name]):
        cfg = row.apply(base)
        cfg.validate()
        sub = None if out_dir is None else Path(out_dir) / name / f"row{i}"
        res = train_loop(cfg, train, val, out_dir=sub)
        last = res.metrics[-1]
        rows.append([name, row.label, cfg.mask_strategy, str(cfg.scale_k), f"{cfg.beta:g}",
                     cfg.alpha_strategy, f"{last.train_loss:.9g}", f"{last.alpha_mean:.9g}",
                     f"{last.val_top1:.9g}"])
        if on_row is not None:
            on_row(rows[-1])
    return rows


def write_table_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        w.writerows(rows)
