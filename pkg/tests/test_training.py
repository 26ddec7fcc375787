import math

import numpy as np
import pytest

from mixpro.autodiff import cross_entropy_soft
from mixpro.config import TrainConfig
from mixpro.data import Dataset, split_dataset, synth_dataset
from mixpro.labeling import mix_labels, one_hot, smooth_labels
from mixpro.maskmix import ConfigurationError
from mixpro.training import (area_mix_train_step, evaluate, make_optimizer, metrics_csv_text,
                             mixpro_train_step, mixup_train_step, pairing, plain_train_step,
                             read_metrics_csv, train_loop, transmix_train_step,
                             write_metrics_csv)
from mixpro.vit import forward, init_params

TINY = dict(image_size=16, patch_size=4, embed_dim=16, heads=2, depth=1, mlp_ratio=2.0,
            batch_size=8, n_per_class=8, epochs=2, warmup_epochs=0, scale_k=2)


def tiny_cfg(**kw):
    return TrainConfig(**{**TINY, **kw})


def setup(cfg, seed=0):
    ds = synth_dataset(seed, 4, cfg.num_classes, cfg.image_size)
    params = init_params(cfg.vit_config(), seed)
    return params, make_optimizer(params, cfg), ds.images[:8], ds.labels[:8]


def test_pairing_reverses():
    assert pairing(4).tolist() == [3, 2, 1, 0]
    with pytest.raises(ConfigurationError):
        pairing(1)


def test_batch_size_one_rejected():
    with pytest.raises(ConfigurationError):
        tiny_cfg(batch_size=1)


def test_full_mask_area_only_equals_plain_step():
    cfg = tiny_cfg(alpha_strategy="area_only", drop_path_rate=0.0)
    p1, o1, x, y = setup(cfg)
    p2, o2, _, _ = setup(cfg)
    a = mixpro_train_step(p1, x, y, cfg, np.random.default_rng(0), o1, tau=1.0)
    b = plain_train_step(p2, x, y, cfg, np.random.default_rng(0), o2)
    assert a.loss == b.loss
    assert a.batch.images.tobytes() == x.tobytes()


def test_mixup_full_tau_is_plain():
    cfg = tiny_cfg(drop_path_rate=0.0)
    p1, o1, x, y = setup(cfg)
    p2, o2, _, _ = setup(cfg)
    a = mixup_train_step(p1, x, y, cfg, np.random.default_rng(0), o1, tau=1.0)
    b = plain_train_step(p2, x, y, cfg, np.random.default_rng(0), o2)
    assert a.loss == b.loss


def test_mixup_identical_pair_is_identity():
    cfg = tiny_cfg()
    p, o, x, y = setup(cfg)
    x = np.repeat(x[:1], 8, axis=0)
    res = mixup_train_step(p, x, y, cfg, np.random.default_rng(0), o, tau=0.5)
    np.testing.assert_allclose(res.batch.images, x, rtol=0, atol=1e-15)


def test_mixpro_targets_follow_lambda():
    cfg = tiny_cfg()
    p, o, x, y = setup(cfg)
    res = mixpro_train_step(p, x, y, cfg, np.random.default_rng(3), o)
    w = res.weights
    ys = smooth_labels(one_hot(y, 10), 0.1, 10)
    np.testing.assert_array_equal(res.batch.targets, mix_labels(ys, ys[::-1], w.lam))
    assert np.all((w.alpha >= 0) & (w.alpha <= 1))
    lo, hi = np.minimum(w.lambda_attn, w.lambda_area), np.maximum(w.lambda_attn, w.lambda_area)
    assert np.all((lo <= w.lam) & (w.lam <= hi))


def test_attn_only_region_matches_transmix_for_50_steps():
    cfg = tiny_cfg(mask_strategy="region", alpha_strategy="attn_only", drop_path_rate=0.1)
    p1, o1, x, y = setup(cfg)
    p2, o2, _, _ = setup(cfg)
    for s in range(50):
        a = mixpro_train_step(p1, x, y, cfg, np.random.default_rng(s), o1)
        b = transmix_train_step(p2, x, y, cfg, np.random.default_rng(s), o2)
        assert a.weights.lam.tobytes() == b.weights.lam.tobytes()
        assert a.loss == b.loss


def test_area_only_matches_area_labels_for_50_steps():
    cfg = tiny_cfg(alpha_strategy="area_only")
    p1, o1, x, y = setup(cfg)
    p2, o2, _, _ = setup(cfg)
    for s in range(50):
        a = mixpro_train_step(p1, x, y, cfg, np.random.default_rng(s), o1)
        b = area_mix_train_step(p2, x, y, cfg, np.random.default_rng(s), o2)
        assert a.batch.targets.tobytes() == b.batch.targets.tobytes()
        assert np.all(a.weights.lam == a.weights.lambda_area)


def test_step_sequence_is_deterministic():
    cfg = tiny_cfg()
    runs = []
    for _ in range(2):
        p, o, x, y = setup(cfg)
        runs.append([mixpro_train_step(p, x, y, cfg, np.random.default_rng(s), o).loss
                     for s in range(50)])
    assert runs[0] == runs[1]


def _splits(cfg):
    return split_dataset(synth_dataset(cfg.seed, cfg.n_per_class, 10, cfg.image_size), 0.25, 0)


def test_loop_determinism_and_csv(tmp_path):
    cfg = tiny_cfg()
    tr, va = _splits(cfg)
    a = train_loop(cfg, tr, va, out_dir=tmp_path / "a")
    b = train_loop(cfg, tr, va, out_dir=tmp_path / "b")
    ta, tb = (tmp_path / "a" / "metrics.csv").read_bytes(), (tmp_path / "b" / "metrics.csv").read_bytes()
    assert ta == tb
    assert ta.decode() == metrics_csv_text(a.metrics)
    assert len(a.metrics) == 2 and a.metrics[-1].step == 2 * (len(tr) // 8)
    assert (tmp_path / "a" / "checkpoint.bin").is_file()
    recs = read_metrics_csv(tmp_path / "a" / "metrics.csv")
    assert [r.epoch for r in recs] == [1, 2]


def test_switch_prob_zero_is_pure_mixup():
    cfg = tiny_cfg(mixpro_switch_prob=0.0)
    tr, va = _splits(cfg)
    res = train_loop(cfg, tr, va)
    assert set(res.step_kinds) == {"mixup"}
    assert all(math.isnan(m.alpha_mean) for m in res.metrics)
    res = train_loop(cfg.replace(mixpro_switch_prob=1.0), tr, va)
    assert set(res.step_kinds) == {"mixpro"}


def test_untrained_model_is_near_chance():
    cfg = tiny_cfg()
    tr, va = split_dataset(synth_dataset(0, 40, 10, 16), 0.5, 0)
    acc = evaluate(init_params(cfg.vit_config(), 0), va)
    n = len(va)
    assert abs(acc - 0.1) <= 3 * math.sqrt(0.1 * 0.9 / n)


class TestEvaluate:
    def _constant(self, cfg):
        p = init_params(cfg.vit_config(), 0)
        p["head_w"].data[:] = 0.0
        p["head_b"].data[:] = 0.0
        p["head_b"].data[0] = 1.0
        return p

    def test_constant_predictor(self, rng):
        cfg = tiny_cfg()
        p = self._constant(cfg)
        x = rng.standard_normal((20, 3, 16, 16))
        assert evaluate(p, Dataset(x, np.zeros(20, int), 10, (0.0,) * 3, (1.0,) * 3)) == 1.0
        balanced = Dataset(x, np.arange(20) % 10, 10, (0.0,) * 3, (1.0,) * 3)
        assert evaluate(p, balanced) == 0.1
        assert evaluate(p, balanced) == evaluate(p, balanced)

    def test_empty(self):
        cfg = tiny_cfg()
        with pytest.raises(ValueError):
            evaluate(init_params(cfg.vit_config(), 0),
                     Dataset(np.zeros((0, 3, 16, 16)), np.zeros(0, int), 10, (0.0,) * 3, (1.0,) * 3))


def test_first_step_loss_near_log_k():
    cfg = tiny_cfg()
    p, o, x, y = setup(cfg)
    loss = mixpro_train_step(p, x, y, cfg, np.random.default_rng(0), o).loss
    assert abs(loss - math.log(10)) < 0.1 * math.log(10)
