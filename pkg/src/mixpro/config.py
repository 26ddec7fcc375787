"""Run configuration and the ``key = value`` config-file format."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .labeling import ALPHA_STRATEGIES
from .maskmix import MASK_STRATEGIES, ConfigurationError
from .vit import ViTConfig


@dataclass
class TrainConfig:
    seed: int = 0
    # data
    dataset: str = "synth"
    data_path: str = ""
    n_per_class: int = 500
    val_fraction: float = 0.2
    norm_mean: tuple[float, ...] = (0.5, 0.5, 0.5)
    norm_std: tuple[float, ...] = (0.25, 0.25, 0.25)
    # model
    image_size: int = 32
    channels: int = 3
    patch_size: int = 8
    embed_dim: int = 64
    heads: int = 4
    depth: int = 4
    mlp_ratio: float = 4.0
    num_classes: int = 10
    drop_path_rate: float = 0.1
    # optimisation
    epochs: int = 30
    batch_size: int = 64
    base_lr: float = 1e-3
    min_lr: float = 1e-5
    weight_decay: float = 0.05
    warmup_epochs: int = 2
    # augmentation
    beta: float = 1.0
    mask_strategy: str = "grid"
    scale_k: int = 2
    alpha_strategy: str = "pal_cosine"
    mixup_alpha: float = 0.8
    mixpro_switch_prob: float = 0.5
    label_smoothing: float = 0.1

    def __post_init__(self):
        self.norm_mean = tuple(float(x) for x in self.norm_mean)
        self.norm_std = tuple(float(x) for x in self.norm_std)
        self.validate()

    def validate(self) -> None:
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")
        if self.batch_size < 2:
            raise ConfigurationError("batch_size must be >= 2 (pairs need two samples)")
        for key in ("val_fraction", "mixpro_switch_prob", "drop_path_rate"):
            if not 0.0 <= getattr(self, key) <= 1.0:
                raise ConfigurationError(f"{key} must lie in [0, 1]")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ConfigurationError("label_smoothing must lie in [0, 1)")
        if self.beta <= 0 or self.mixup_alpha <= 0:
            raise ConfigurationError("beta and mixup_alpha must be positive")
        if self.mask_strategy not in MASK_STRATEGIES:
            raise ConfigurationError(f"mask_strategy must be one of {MASK_STRATEGIES}")
        if self.alpha_strategy not in ALPHA_STRATEGIES:
            raise ConfigurationError(f"alpha_strategy must be one of {ALPHA_STRATEGIES}")
        if self.dataset not in ("synth", "cifar10"):
            raise ConfigurationError("dataset must be 'synth' or 'cifar10'")
        if self.mask_strategy == "grid":
            p_mask = self.scale_k * self.patch_size
            if self.scale_k < 1 or self.image_size % p_mask:
                raise ConfigurationError(
                    f"scale_k={self.scale_k}: mask cell {p_mask}px does not tile "
                    f"{self.image_size}px images")
        if not 0 <= self.warmup_epochs < self.epochs:
            raise ConfigurationError("warmup_epochs must lie in [0, epochs)")
        if len(self.norm_mean) != self.channels or len(self.norm_std) != self.channels:
            raise ConfigurationError("norm_mean/norm_std need one value per channel")
        self.vit_config()

    def vit_config(self) -> ViTConfig:
        try:
            return ViTConfig(self.image_size, self.channels, self.patch_size, self.embed_dim,
                             self.heads, self.depth, self.mlp_ratio, self.num_classes,
                             self.drop_path_rate)
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from exc

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ", ".join(repr(x) for x in v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


_FIELDS = {f.name: f for f in fields(TrainConfig)}


def _coerce(key: str, raw: str):
    default = getattr(TrainConfig, key, None)
    if key not in _FIELDS:
        raise ConfigurationError(f"unknown config key {key!r}")
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            return raw.lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(float(x) for x in raw.split(",") if x.strip())
    except ValueError as exc:
        raise ConfigurationError(f"bad value for {key!r}: {raw!r}") from exc
    return raw


def parse_config_text(text: str, source: str = "<string>") -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key] = _coerce(key, value)
    return values


def parse_overrides(items) -> dict:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        out[key.strip()] = _coerce(key.strip(), value)
    return out


def load_config(path=None, overrides=None) -> TrainConfig:
    """Defaults, then the file at ``path``, then ``overrides`` (a key -> value dict)."""
    values = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise FileNotFoundError(f"config file not found: {p}")
        values.update(parse_config_text(p.read_text(), str(p)))
    values.update(overrides or {})
    return TrainConfig(**values)
