"""Training steps (MixPro, Mixup, CutMix, TransMix), the epoch loop and evaluation.

Pairs are formed by reversing the batch: sample ``b`` is mixed with sample
``B - 1 - b``. One mask is drawn per batch; label weights are per sample.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import autodiff as ad
from .config import TrainConfig
from .data import Dataset, load_cifar10, split_dataset, synth_dataset
from .labeling import (AlphaStrategy, LambdaWeights, alpha_for, blend_lambda, lambda_attn,
                       mix_labels, one_hot, smooth_labels)
from .maskmix import ConfigurationError, MixMask, downsample_mask, make_mask, mix_images, \
    sample_tau
from .optim import AdamW, lr_at_step
from .vit import ViTParams, forward, init_params, predict, save_checkpoint

log = logging.getLogger(__name__)

METRICS_HEADER = ("epoch", "step", "lr", "train_loss", "alpha_mean", "val_top1")


@dataclass
class MixedBatch:
    images: np.ndarray
    targets: np.ndarray
    mask: MixMask | float
    pairing: np.ndarray


@dataclass
class StepResult:
    loss: float
    batch: MixedBatch
    weights: LambdaWeights | None = None
    kind: str = "mixpro"


@dataclass
class MetricsRecord:
    epoch: int
    step: int
    lr: float
    train_loss: float
    alpha_mean: float
    val_top1: float

    def row(self) -> list[str]:
        return [str(self.epoch), str(self.step)] + [
            f"{v:.9g}" for v in (self.lr, self.train_loss, self.alpha_mean, self.val_top1)]


def make_optimizer(params: ViTParams, cfg: TrainConfig) -> AdamW:
    return AdamW(list(params), lr=cfg.base_lr, weight_decay=cfg.weight_decay,
                 decay_mask=params.decay_mask())


def pairing(batch_size: int) -> np.ndarray:
    if batch_size < 2:
        raise ConfigurationError(f"batch size {batch_size} < 2: mixing needs pairs")
    return np.arange(batch_size)[::-1].copy()


def _targets(labels, cfg: TrainConfig) -> np.ndarray:
    return smooth_labels(one_hot(labels, cfg.num_classes), cfg.label_smoothing, cfg.num_classes)


def _descend(params: ViTParams, optimizer: AdamW, logits: ad.Tensor, targets) -> float:
    loss = ad.cross_entropy_soft(logits, targets)
    optimizer.zero_grad()
    loss.backward()
    optimizer.step()
    return float(loss.data)


def mixpro_train_step(params: ViTParams, images: np.ndarray, labels: np.ndarray,
                      cfg: TrainConfig, rng: np.random.Generator, optimizer: AdamW,
                      epoch: int = 1, tau: float | None = None) -> StepResult:
    """One MaskMix + progressive-attention-labelling update.

    ``cfg.mask_strategy``/``cfg.alpha_strategy`` select the ablation variant;
    ``epoch`` (1-based) feeds the schedule-driven alpha strategies.
    """
    perm = pairing(len(images))
    if tau is None:
        tau = sample_tau(cfg.beta, rng)
    mask = make_mask(cfg.mask_strategy, cfg.image_size, cfg.image_size, cfg.patch_size,
                     cfg.scale_k, tau, rng)
    x_mix = mix_images(images, images[perm], mask)
    out = forward(params, x_mix, train_mode=True, rng=rng)

    y = _targets(labels, cfg)
    y_area = mix_labels(y, y[perm], mask.lambda_area)
    strategy = AlphaStrategy(cfg.alpha_strategy, epoch, cfg.epochs)
    alpha = alpha_for(strategy, out.probs, y_area)
    lam_attn = lambda_attn(out.attention, downsample_mask(mask, cfg.patch_size))
    lam = blend_lambda(alpha, lam_attn, mask.lambda_area)
    y_mix = mix_labels(y, y[perm], lam)

    loss = _descend(params, optimizer, out.logits, y_mix)
    weights = LambdaWeights(mask.lambda_area, lam_attn, alpha, lam)
    return StepResult(loss, MixedBatch(x_mix, y_mix, mask, perm), weights, "mixpro")


def transmix_train_step(params: ViTParams, images: np.ndarray, labels: np.ndarray,
                        cfg: TrainConfig, rng: np.random.Generator, optimizer: AdamW,
                        tau: float | None = None) -> StepResult:
    """CutMix box with labels weighted by the attention mass inside the box."""
    perm = pairing(len(images))
    if tau is None:
        tau = sample_tau(cfg.beta, rng)
    mask = make_mask("region", cfg.image_size, cfg.image_size, cfg.patch_size, 1, tau, rng)
    x_mix = mix_images(images, images[perm], mask)
    out = forward(params, x_mix, train_mode=True, rng=rng)
    lam = lambda_attn(out.attention, downsample_mask(mask, cfg.patch_size))
    y = _targets(labels, cfg)
    y_mix = mix_labels(y, y[perm], lam)
    loss = _descend(params, optimizer, out.logits, y_mix)
    ones = np.ones(len(images))
    return StepResult(loss, MixedBatch(x_mix, y_mix, mask, perm),
                      LambdaWeights(mask.lambda_area, lam, ones, lam), "transmix")


def area_mix_train_step(params: ViTParams, images: np.ndarray, labels: np.ndarray,
                        cfg: TrainConfig, rng: np.random.Generator, optimizer: AdamW,
                        tau: float | None = None) -> StepResult:
    """Mask mixing with area-proportional labels (CutMix for ``region``)."""
    perm = pairing(len(images))
    if tau is None:
        tau = sample_tau(cfg.beta, rng)
    mask = make_mask(cfg.mask_strategy, cfg.image_size, cfg.image_size, cfg.patch_size,
                     cfg.scale_k, tau, rng)
    x_mix = mix_images(images, images[perm], mask)
    out = forward(params, x_mix, train_mode=True, rng=rng)
    y = _targets(labels, cfg)
    y_mix = mix_labels(y, y[perm], mask.lambda_area)
    loss = _descend(params, optimizer, out.logits, y_mix)
    return StepResult(loss, MixedBatch(x_mix, y_mix, mask, perm), None, "area")


def mixup_train_step(params: ViTParams, images: np.ndarray, labels: np.ndarray,
                     cfg: TrainConfig, rng: np.random.Generator, optimizer: AdamW,
                     tau: float | None = None) -> StepResult:
    perm = pairing(len(images))
    if tau is None:
        tau = sample_tau(cfg.mixup_alpha, rng)
    x_mix = tau * images + (1.0 - tau) * images[perm]
    out = forward(params, x_mix, train_mode=True, rng=rng)
    y = _targets(labels, cfg)
    y_mix = mix_labels(y, y[perm], tau)
    loss = _descend(params, optimizer, out.logits, y_mix)
    return StepResult(loss, MixedBatch(x_mix, y_mix, tau, perm), None, "mixup")


def plain_train_step(params: ViTParams, images: np.ndarray, labels: np.ndarray,
                     cfg: TrainConfig, rng: np.random.Generator, optimizer: AdamW) -> StepResult:
    out = forward(params, images, train_mode=True, rng=rng)
    y = _targets(labels, cfg)
    loss = _descend(params, optimizer, out.logits, y)
    return StepResult(loss, MixedBatch(images, y, 1.0, np.arange(len(images))), None, "plain")


def evaluate(params: ViTParams, ds: Dataset, batch_size: int = 256) -> float:
    """Top-1 accuracy of eval-mode predictions."""
    if len(ds) == 0:
        raise ValueError("cannot evaluate on an empty split")
    logits = predict(params, ds.images, batch_size)
    return float(np.mean(np.argmax(logits, axis=1) == ds.labels))


# ---------------------------------------------------------------------------
# loop
# ---------------------------------------------------------------------------

def batch_rng(seed: int, epoch: int, batch_index: int) -> np.random.Generator:
    return np.random.default_rng([seed, epoch, batch_index])


def epoch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    # batch index 2**32 - 1 is reserved for the shuffle stream
    return np.random.default_rng([seed, epoch, 2**32 - 1]).permutation(n)


@dataclass
class TrainResult:
    params: ViTParams
    metrics: list[MetricsRecord] = field(default_factory=list)
    lambda_log: list[LambdaWeights] = field(default_factory=list)
    step_losses: list[float] = field(default_factory=list)
    step_kinds: list[str] = field(default_factory=list)


def train_loop(cfg: TrainConfig, train: Dataset, val: Dataset, params: ViTParams | None = None,
               out_dir=None, on_epoch: Callable[[MetricsRecord], None] | None = None
               ) -> TrainResult:
    """Train for ``cfg.epochs``; each batch is a MixPro step with probability
    ``cfg.mixpro_switch_prob`` and a Mixup step otherwise.

    Writes ``metrics.csv`` and ``checkpoint.bin`` into ``out_dir`` when given.
    """
    if params is None:
        params = init_params(cfg.vit_config(), cfg.seed)
    optimizer = make_optimizer(params, cfg)
    n_batches = len(train) // cfg.batch_size
    if n_batches == 0:
        raise ConfigurationError(f"training split ({len(train)}) smaller than one batch")
    total = cfg.epochs * n_batches
    warmup = cfg.warmup_epochs * n_batches
    result = TrainResult(params)
    step = 0
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_metrics_csv(out / "metrics.csv", [])

    for epoch in range(cfg.epochs):
        order = epoch_order(cfg.seed, epoch, len(train))
        losses, alphas = [], []
        for b in range(n_batches):
            idx = order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            rng = batch_rng(cfg.seed, epoch, b)
            lr = lr_at_step(step, warmup, total, cfg.base_lr, cfg.min_lr)
            optimizer.state.lr = lr
            images, labels = train.images[idx], train.labels[idx]
            if rng.random() < cfg.mixpro_switch_prob:
                res = mixpro_train_step(params, images, labels, cfg, rng, optimizer, epoch + 1)
                alphas.append(res.weights.alpha)
                result.lambda_log.append(res.weights)
            else:
                res = mixup_train_step(params, images, labels, cfg, rng, optimizer)
            if not math.isfinite(res.loss):
                raise FloatingPointError(f"non-finite loss at epoch {epoch + 1}, batch {b}")
            losses.append(res.loss)
            result.step_losses.append(res.loss)
            result.step_kinds.append(res.kind)
            step += 1
        alpha_mean = float(np.mean(np.concatenate(alphas))) if alphas else float("nan")
        rec = MetricsRecord(epoch + 1, step, lr, float(np.mean(losses)), alpha_mean,
                            evaluate(params, val))
        result.metrics.append(rec)
        log.info("epoch %d loss %.4f alpha %.4f val_top1 %.4f", rec.epoch, rec.train_loss,
                 rec.alpha_mean, rec.val_top1)
        if out is not None:
            write_metrics_csv(out / "metrics.csv", result.metrics)
        if on_epoch is not None:
            on_epoch(rec)
    if out is not None:
        save_checkpoint(out / "checkpoint.bin", params)
    return result


def metrics_csv_text(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_HEADER)
    for r in records:
        w.writerow(r.row())
    return buf.getvalue()


def write_metrics_csv(path, records) -> None:
    Path(path).write_text(metrics_csv_text(records))


def read_metrics_csv(path) -> list[MetricsRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [MetricsRecord(int(r["epoch"]), int(r["step"]), float(r["lr"]),
                          float(r["train_loss"]), float(r["alpha_mean"]), float(r["val_top1"]))
            for r in rows]


def datasets_from_config(cfg: TrainConfig) -> tuple[Dataset, Dataset]:
    """Train/validation splits named by ``cfg.dataset``.

    For ``cifar10``, ``data_path`` is a directory of binary batches (with
    ``test_batch.bin`` used for validation when present) or a single file that
    is split by ``val_fraction``.
    """
    if cfg.dataset == "synth":
        ds = synth_dataset(cfg.seed, cfg.n_per_class, cfg.num_classes, cfg.image_size,
                           cfg.channels, cfg.norm_mean, cfg.norm_std)
        return split_dataset(ds, cfg.val_fraction, cfg.seed)
    path = Path(cfg.data_path)
    if path.is_dir():
        train_files = sorted(path.glob("data_batch_*.bin"))
        test_file = path / "test_batch.bin"
        if train_files and test_file.is_file():
            return (load_cifar10(train_files, cfg.norm_mean, cfg.norm_std),
                    load_cifar10(test_file, cfg.norm_mean, cfg.norm_std))
        files = sorted(path.glob("*.bin"))
        if not files:
            raise FileNotFoundError(f"no CIFAR-10 .bin files under {path}")
        ds = load_cifar10(files, cfg.norm_mean, cfg.norm_std)
    else:
        ds = load_cifar10(path, cfg.norm_mean, cfg.norm_std)
    return split_dataset(ds, cfg.val_fraction, cfg.seed)
