"""Central finite-difference checks for every differentiable op and a toy ViT."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .vit import ViTConfig, forward, init_params

STEP = 1e-4
TOLERANCE = 1e-4


def rel_error(analytic, numeric, floor: float = 1e-6) -> float:
    """``||a - n|| / max(||a||, ||n||, floor)``; below ``floor`` the comparison is absolute."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    return float(np.linalg.norm(a - n) / max(np.linalg.norm(a), np.linalg.norm(n), floor))


def numeric_grad(f: Callable[[], float], x: np.ndarray, h: float = STEP,
                 coords=None) -> np.ndarray:
    """Central differences of ``f`` w.r.t. ``x`` (modified in place, then restored)."""
    flat = x.reshape(-1)
    coords = range(flat.size) if coords is None else coords
    out = np.zeros(len(coords))
    for j, i in enumerate(coords):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        out[j] = (fp - fm) / (2 * h)
    return out


# ---------------------------------------------------------------------------
# op cases: each returns input arrays and a builder mapping Tensors to a scalar
# ---------------------------------------------------------------------------

def _proj(rng, shape):
    w = rng.standard_normal(shape)
    return lambda t: ad.sum_(ad.mul(t, w))


def _case_matmul(rng):
    a, b = rng.standard_normal((3, 4)), rng.standard_normal((4, 5))
    p = _proj(rng, (3, 5))
    return [a, b], lambda A, B: p(ad.matmul(A, B))


def _case_batched_matmul(rng):
    a, b = rng.standard_normal((2, 3, 4)), rng.standard_normal((2, 4, 3))
    p = _proj(rng, (2, 3, 3))
    return [a, b], lambda A, B: p(ad.matmul(A, B))


def _case_linear(rng):
    x, w, b = rng.standard_normal((2, 3, 4)), rng.standard_normal((4, 5)), rng.standard_normal(5)
    p = _proj(rng, (2, 3, 5))
    return [x, w, b], lambda X, W, B: p(ad.linear(X, W, B))


def _case_add_mul(rng):
    a, b = rng.standard_normal((3, 4)), rng.standard_normal((1, 4))
    p = _proj(rng, (3, 4))
    return [a, b], lambda A, B: p(ad.mul(ad.add(A, B), A) - B)


def _case_softmax(rng):
    x = rng.standard_normal((3, 5))
    p = _proj(rng, (3, 5))
    return [x], lambda X: p(ad.softmax(X, axis=-1))


def _case_layer_norm(rng):
    x, g, b = rng.standard_normal((3, 6)), rng.standard_normal(6), rng.standard_normal(6)
    p = _proj(rng, (3, 6))
    return [x, g, b], lambda X, G, B: p(ad.layer_norm(X, G, B, 1e-6))


def _case_gelu(rng):
    x = 2.0 * rng.standard_normal((4, 5))
    p = _proj(rng, (4, 5))
    return [x], lambda X: p(ad.gelu(X))


def _case_cross_entropy(rng):
    logits = rng.standard_normal((4, 6))
    t = rng.random((4, 6))
    t /= t.sum(axis=1, keepdims=True)
    return [logits], lambda L: ad.cross_entropy_soft(L, t)


def _case_shape_ops(rng):
    x, y = rng.standard_normal((2, 3, 4)), rng.standard_normal((2, 1, 4))
    p = _proj(rng, (4, 2, 2))

    def build(X, Y):
        z = ad.concat([Y, X], axis=1)                 # [2, 4, 4]
        z = z.transpose(2, 0, 1)[:, :, 1:3]           # [4, 2, 2]
        return p(z.reshape(8, 2).reshape(4, 2, 2))

    return [x, y], build


def _case_reductions(rng):
    x = rng.standard_normal((3, 4))
    w = rng.standard_normal(4)
    return [x], lambda X: ad.sum_(ad.mul(ad.mean(X ** 2.0, axis=0), w)) + ad.exp(X).sum()


def _case_broadcast(rng):
    x = rng.standard_normal((1, 1, 4))
    p = _proj(rng, (2, 3, 4))
    return [x], lambda X: p(ad.broadcast_to(X, (2, 3, 4)))


def _case_drop_path(rng):
    x = rng.standard_normal((6, 2, 3))
    p = _proj(rng, (6, 2, 3))
    seed = int(rng.integers(2**31))
    return [x], lambda X: p(ad.drop_path(X, 0.3, np.random.default_rng(seed), True))


OP_CASES: dict[str, Callable] = {
    "matmul": _case_matmul,
    "batched_matmul": _case_batched_matmul,
    "linear": _case_linear,
    "add_mul": _case_add_mul,
    "softmax": _case_softmax,
    "layer_norm": _case_layer_norm,
    "gelu": _case_gelu,
    "cross_entropy_soft": _case_cross_entropy,
    "shape_ops": _case_shape_ops,
    "reductions": _case_reductions,
    "broadcast": _case_broadcast,
    "drop_path": _case_drop_path,
}


def check_op(name: str, seed: int, corrupt: bool = False) -> float:
    rng = np.random.default_rng(seed)
    arrays, build = OP_CASES[name](rng)
    tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    loss = build(*tensors)
    loss.backward()
    worst = 0.0
    for k, t in enumerate(tensors):
        def f():
            return float(build(*[Tensor(x.data) for x in tensors]).data)

        num = numeric_grad(f, tensors[k].data)
        ana = np.zeros(t.shape) if t.grad is None else t.grad
        if corrupt:
            ana = ana * 1.01
        worst = max(worst, rel_error(ana, num))
    return worst


# ---------------------------------------------------------------------------
# toy ViT
# ---------------------------------------------------------------------------

TOY_VIT = ViTConfig(image_size=16, channels=3, patch_size=4, embed_dim=16, heads=2, depth=2,
                    mlp_ratio=2.0, num_classes=5, drop_path_rate=0.1)


def check_vit(seed: int, config: ViTConfig = TOY_VIT, directions: int = 3,
              corrupt: bool = False) -> tuple[float, str]:
    """Check every parameter tensor of a toy ViT by random projections.

    Per tensor, the analytic gradient projected on ``directions`` Gaussian
    directions is compared with central differences along the same
    directions. The projection error scales as ``|err| / |grad|`` over the
    whole tensor, i.e. the per-tensor relative error, at a cost independent
    of the tensor size. Drop path runs in train mode with a replayed rng.
    Returns the worst relative error and the tensor it came from.
    """
    rng = np.random.default_rng(seed)
    params = init_params(config, seed)
    # break the symmetric init so every parameter carries signal
    for t in params:
        t.data += 0.1 * rng.standard_normal(t.shape)
    x = rng.standard_normal((2, config.channels, config.image_size, config.image_size))
    t = rng.random((2, config.num_classes))
    t /= t.sum(axis=1, keepdims=True)
    fwd_seed = int(rng.integers(2**31))

    def loss_value() -> float:
        out = forward(params, x, True, np.random.default_rng(fwd_seed))
        return float(ad.cross_entropy_soft(out.logits, t).data)

    out = forward(params, x, True, np.random.default_rng(fwd_seed))
    ad.cross_entropy_soft(out.logits, t).backward()
    grads = {name: p.grad.copy() for name, p in params.tensors.items()}
    if corrupt:
        grads = {k: g * 1.01 for k, g in grads.items()}
    frozen = {name: p for name, p in params.tensors.items()}
    for p in frozen.values():
        p.requires_grad = False  # no graphs during the numeric passes

    worst, worst_name = 0.0, ""
    for name, p in frozen.items():
        base = p.data.copy()
        ana, num = [], []
        for _ in range(directions):
            d = rng.standard_normal(p.shape)
            p.data[...] = base + STEP * d
            fp = loss_value()
            p.data[...] = base - STEP * d
            fm = loss_value()
            p.data[...] = base
            ana.append(np.sum(grads[name] * d))
            num.append((fp - fm) / (2 * STEP))
        err = rel_error(np.array(ana), np.array(num))
        if err > worst:
            worst, worst_name = err, name
    for p in frozen.values():
        p.requires_grad = True
    return worst, worst_name


@dataclass
class GradcheckReport:
    errors: dict[str, float]
    worst_detail: dict[str, str]

    @property
    def max_error(self) -> float:
        return max(self.errors.values())

    @property
    def worst_op(self) -> str:
        return max(self.errors, key=self.errors.get)

    def passed(self, tol: float = TOLERANCE) -> bool:
        return self.max_error < tol


def run_suite(seed: int = 0, n_seeds: int = 100, corrupt: str | None = None,
              vit_seeds: int | None = None) -> GradcheckReport:
    """All op cases and the toy ViT over ``n_seeds`` seeds derived from ``seed``."""
    errors: dict[str, float] = {}
    detail: dict[str, str] = {}
    seeds = [seed * 100003 + i for i in range(n_seeds)]
    for name in OP_CASES:
        errors[name] = max(check_op(name, s, corrupt == name) for s in seeds)
    worst, where = 0.0, ""
    for s in seeds[: (n_seeds if vit_seeds is None else vit_seeds)]:
        err, name = check_vit(s, corrupt=corrupt == "vit")
        if err >= worst:
            worst, where = err, name
    errors["vit"] = worst
    detail["vit"] = where
    return GradcheckReport(errors, detail)
