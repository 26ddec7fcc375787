"""DeiT-style Vision Transformer with a class token.

``forward`` returns, besides logits, the class-token attention row of the
last block averaged over heads, restricted to the patch tokens and
renormalised to sum to one.
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import DimensionError, Tensor

CHECKPOINT_MAGIC = b"MIXPROCK"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ViTConfig:
    image_size: int = 32
    channels: int = 3
    patch_size: int = 8
    embed_dim: int = 64
    heads: int = 4
    depth: int = 4
    mlp_ratio: float = 4.0
    num_classes: int = 10
    drop_path_rate: float = 0.1

    def __post_init__(self):
        if self.image_size % self.patch_size:
            raise DimensionError(
                f"image_size {self.image_size} not divisible by patch_size {self.patch_size}")
        if self.embed_dim % self.heads:
            raise DimensionError(f"embed_dim {self.embed_dim} not divisible by heads {self.heads}")
        if not 0.0 <= self.drop_path_rate < 1.0:
            raise ValueError("drop_path_rate must lie in [0, 1)")

    @property
    def grid(self) -> int:
        return self.image_size // self.patch_size

    @property
    def num_patches(self) -> int:
        return self.grid ** 2

    @property
    def patch_dim(self) -> int:
        return self.channels * self.patch_size ** 2

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.heads

    @property
    def mlp_dim(self) -> int:
        return int(round(self.embed_dim * self.mlp_ratio))


BLOCK_KEYS = ("ln1_g", "ln1_b", "q_w", "q_b", "k_w", "k_b", "v_w", "v_b", "proj_w", "proj_b",
              "ln2_g", "ln2_b", "fc1_w", "fc1_b", "fc2_w", "fc2_b")


def param_shapes(cfg: ViTConfig) -> dict[str, tuple[int, ...]]:
    """Parameter names and shapes in declaration order."""
    d, m = cfg.embed_dim, cfg.mlp_dim
    shapes: dict[str, tuple[int, ...]] = {
        "patch_w": (cfg.patch_dim, d),
        "patch_b": (d,),
        "cls_token": (1, d),
        "pos_embed": (cfg.num_patches + 1, d),
    }
    block = {"ln1_g": (d,), "ln1_b": (d,), "q_w": (d, d), "q_b": (d,), "k_w": (d, d),
             "k_b": (d,), "v_w": (d, d), "v_b": (d,), "proj_w": (d, d), "proj_b": (d,),
             "ln2_g": (d,), "ln2_b": (d,), "fc1_w": (d, m), "fc1_b": (m,), "fc2_w": (m, d),
             "fc2_b": (d,)}
    for i in range(cfg.depth):
        for key in BLOCK_KEYS:
            shapes[f"blocks.{i}.{key}"] = block[key]
    shapes.update({"norm_g": (d,), "norm_b": (d,), "head_w": (d, cfg.num_classes),
                   "head_b": (cfg.num_classes,)})
    return shapes


class ViTParams:
    """All learnable tensors of a :class:`ViTConfig`, keyed by name in declaration order."""

    def __init__(self, config: ViTConfig, tensors: dict[str, Tensor]):
        expected = param_shapes(config)
        if list(tensors) != list(expected):
            raise ValueError("parameter names do not match the configuration")
        for name, shape in expected.items():
            if tensors[name].shape != shape:
                raise DimensionError(f"{name}: expected {shape}, got {tensors[name].shape}")
        self.config = config
        self.tensors = tensors

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __iter__(self):
        return iter(self.tensors.values())

    def names(self) -> list[str]:
        return list(self.tensors)

    def decay_mask(self) -> list[bool]:
        # decay matrices only; biases, norms, embeddings and class token are exempt
        return [name.endswith("_w") for name in self.tensors]

    def copy(self) -> "ViTParams":
        return ViTParams(self.config, {k: Tensor(t.data.copy(), requires_grad=True, name=k)
                                       for k, t in self.tensors.items()})

    def num_parameters(self) -> int:
        return sum(t.size for t in self.tensors.values())


def _trunc_normal(rng: np.random.Generator, shape, std: float = 0.02) -> np.ndarray:
    out = rng.standard_normal(shape)
    bad = np.abs(out) > 2.0
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > 2.0
    return out * std


def init_params(config: ViTConfig, seed: int) -> ViTParams:
    """Truncated-normal (std 0.02) weights and embeddings, zero biases, unit norm gains."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in param_shapes(config).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf.endswith("_g"):
            data = np.ones(shape)
        elif leaf.endswith("_b"):
            data = np.zeros(shape)
        else:
            data = _trunc_normal(rng, shape)
        tensors[name] = Tensor(data, requires_grad=True, name=name)
    return ViTParams(config, tensors)


# ---------------------------------------------------------------------------
# patches
# ---------------------------------------------------------------------------

def patchify(image: np.ndarray, patch_size: int) -> np.ndarray:
    """[..., C, H, W] -> [..., N, C*P*P], tokens in row-major grid order."""
    *lead, c, h, w = image.shape
    if h % patch_size or w % patch_size:
        raise DimensionError(f"image {h}x{w} not divisible by patch size {patch_size}")
    gh, gw = h // patch_size, w // patch_size
    x = image.reshape(*lead, c, gh, patch_size, gw, patch_size)
    k = len(lead)
    x = x.transpose(*range(k), k + 1, k + 3, k, k + 2, k + 4)
    return x.reshape(*lead, gh * gw, c * patch_size * patch_size)


def unpatchify(tokens: np.ndarray, patch_size: int, channels: int, height: int,
               width: int | None = None) -> np.ndarray:
    """Inverse of :func:`patchify`."""
    width = height if width is None else width
    *lead, n, _ = tokens.shape
    gh, gw = height // patch_size, width // patch_size
    if gh * gw != n:
        raise DimensionError(f"{n} tokens do not tile a {height}x{width} image")
    k = len(lead)
    x = tokens.reshape(*lead, gh, gw, channels, patch_size, patch_size)
    x = x.transpose(*range(k), k + 2, k, k + 3, k + 1, k + 4)
    return x.reshape(*lead, channels, height, width)


# ---------------------------------------------------------------------------
# forward
# ---------------------------------------------------------------------------

@dataclass
class ForwardOutput:
    logits: Tensor
    probs: np.ndarray
    attention: np.ndarray


def _attention(x: Tensor, p: ViTParams, prefix: str, cfg: ViTConfig):
    b, t, d = x.shape
    h, dh = cfg.heads, cfg.head_dim

    def heads(name):
        y = ad.linear(x, p[prefix + name + "_w"], p[prefix + name + "_b"])
        return y.reshape(b, t, h, dh).transpose(0, 2, 1, 3)

    q, k, v = heads("q"), heads("k"), heads("v")
    scores = ad.matmul(q, k.transpose(0, 1, 3, 2)) * (1.0 / np.sqrt(dh))
    attn = ad.softmax(scores, axis=-1)
    out = ad.matmul(attn, v).transpose(0, 2, 1, 3).reshape(b, t, d)
    return ad.linear(out, p[prefix + "proj_w"], p[prefix + "proj_b"]), attn.data


def class_attention(attn: np.ndarray) -> np.ndarray:
    """Head-averaged class-token row over patch tokens, renormalised to sum to one.

    ``attn`` has shape [B, heads, T, T] with token 0 the class token.
    """
    row = attn[:, :, 0, 1:].mean(axis=1)
    return row / row.sum(axis=1, keepdims=True)


def forward(params: ViTParams, batch, train_mode: bool = False,
            rng: np.random.Generator | None = None) -> ForwardOutput:
    """Run the ViT on ``batch`` of shape [B, C, H, W]."""
    cfg = params.config
    x_np = batch.data if isinstance(batch, Tensor) else np.asarray(batch, dtype=np.float64)
    expected = (cfg.channels, cfg.image_size, cfg.image_size)
    if x_np.ndim != 4 or x_np.shape[1:] != expected:
        raise DimensionError(f"batch shape {x_np.shape} does not match config {expected}")
    dpr = cfg.drop_path_rate if train_mode else 0.0
    if dpr > 0 and rng is None:
        raise ValueError("train-mode drop path needs an rng")
    b = x_np.shape[0]
    p = params

    tokens = Tensor(patchify(x_np, cfg.patch_size))
    x = ad.linear(tokens, p["patch_w"], p["patch_b"])
    cls = ad.broadcast_to(p["cls_token"].reshape(1, 1, cfg.embed_dim), (b, 1, cfg.embed_dim))
    x = ad.concat([cls, x], axis=1) + p["pos_embed"]

    attn = None
    for i in range(cfg.depth):
        pre = f"blocks.{i}."
        y, attn = _attention(ad.layer_norm(x, p[pre + "ln1_g"], p[pre + "ln1_b"]), p, pre, cfg)
        x = x + ad.drop_path(y, dpr, rng, train_mode)
        y = ad.layer_norm(x, p[pre + "ln2_g"], p[pre + "ln2_b"])
        y = ad.linear(ad.gelu(ad.linear(y, p[pre + "fc1_w"], p[pre + "fc1_b"])),
                      p[pre + "fc2_w"], p[pre + "fc2_b"])
        x = x + ad.drop_path(y, dpr, rng, train_mode)

    x = ad.layer_norm(x, p["norm_g"], p["norm_b"])
    logits = ad.linear(x[:, 0, :], p["head_w"], p["head_b"])
    probs = ad.softmax_np(logits.data, axis=1)
    return ForwardOutput(logits, probs, class_attention(attn))


def predict(params: ViTParams, images: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Eval-mode logits for ``images`` in chunks, without building a graph."""
    out = []
    for lo in range(0, len(images), batch_size):
        fo = forward(_frozen(params), images[lo:lo + batch_size])
        out.append(fo.logits.data)
    return np.concatenate(out, axis=0)


def predict_with_attention(params: ViTParams, images: np.ndarray, batch_size: int = 256):
    logits, attn = [], []
    frozen = _frozen(params)
    for lo in range(0, len(images), batch_size):
        fo = forward(frozen, images[lo:lo + batch_size])
        logits.append(fo.logits.data)
        attn.append(fo.attention)
    return np.concatenate(logits, axis=0), np.concatenate(attn, axis=0)


def _frozen(params: ViTParams) -> ViTParams:
    # shares data buffers; requires_grad=False so no graph is recorded
    return ViTParams(params.config, {k: Tensor(t.data, name=k) for k, t in params.tensors.items()})


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, params: ViTParams) -> None:
    """Write magic, version, JSON config block, then float64 LE parameters in order."""
    cfg = json.dumps(asdict(params.config), sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(cfg)))
        fh.write(cfg)
        fh.write(struct.pack("<Q", params.num_parameters()))
        for t in params:
            fh.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())


class CheckpointError(ValueError):
    pass


def load_checkpoint(path) -> ViTParams:
    raw = Path(path).read_bytes()
    if raw[:8] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    version, cfg_len = struct.unpack_from("<II", raw, 8)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    off = 16
    config = ViTConfig(**json.loads(raw[off:off + cfg_len].decode()))
    off += cfg_len
    (count,) = struct.unpack_from("<Q", raw, off)
    off += 8
    shapes = param_shapes(config)
    if count != sum(int(np.prod(s)) for s in shapes.values()):
        raise CheckpointError(f"{path}: parameter count {count} does not match config")
    if len(raw) != off + 8 * count:
        raise CheckpointError(f"{path}: expected {off + 8 * count} bytes, found {len(raw)}")
    flat = np.frombuffer(raw, dtype="<f8", count=count, offset=off)
    tensors, pos = {}, 0
    for name, shape in shapes.items():
        n = int(np.prod(shape))
        tensors[name] = Tensor(flat[pos:pos + n].reshape(shape).astype(np.float64),
                               requires_grad=True, name=name)
        pos += n
    return ViTParams(config, tensors)
