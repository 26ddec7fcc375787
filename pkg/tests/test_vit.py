import numpy as np
import pytest

from mixpro.autodiff import DimensionError
from mixpro.vit import (CheckpointError, ViTConfig, forward, init_params, load_checkpoint,
                        param_shapes, patchify, save_checkpoint, unpatchify)

SMALL = ViTConfig(image_size=16, channels=3, patch_size=4, embed_dim=16, heads=2, depth=2,
                  mlp_ratio=2.0, num_classes=5, drop_path_rate=0.0)


def batch(rng, cfg=SMALL, n=3):
    return rng.standard_normal((n, cfg.channels, cfg.image_size, cfg.image_size))


class TestPatchify:
    def test_cifar_shape(self, rng):
        assert patchify(rng.standard_normal((3, 32, 32)), 8).shape == (16, 192)

    def test_token_contents_row_major(self):
        img = np.arange(2 * 4 * 4, dtype=float).reshape(2, 4, 4)
        tok = patchify(img, 2)
        # token 1 is the top row, second column of patches
        np.testing.assert_array_equal(tok[1], img[:, 0:2, 2:4].reshape(-1))

    def test_round_trip(self, rng):
        img = rng.standard_normal((5, 3, 16, 24))
        assert unpatchify(patchify(img, 8), 8, 3, 16, 24).tobytes() == img.tobytes()

    def test_non_divisible(self, rng):
        with pytest.raises(DimensionError):
            patchify(rng.standard_normal((3, 30, 30)), 8)


class TestInit:
    def test_deterministic(self):
        a, b = init_params(SMALL, 3), init_params(SMALL, 3)
        for x, y in zip(a, b):
            assert x.data.tobytes() == y.data.tobytes()

    def test_seed_changes_weights(self):
        a, b = init_params(SMALL, 3), init_params(SMALL, 4)
        assert any(not np.array_equal(x.data, y.data) for x, y in zip(a, b))

    def test_shapes_and_decay_mask(self):
        p = init_params(SMALL, 0)
        assert p.names() == list(param_shapes(SMALL))
        assert p["pos_embed"].shape == (17, 16)
        assert p["head_w"].shape == (16, 5)
        mask = dict(zip(p.names(), p.decay_mask()))
        assert mask["blocks.0.q_w"] and not mask["blocks.0.q_b"] and not mask["norm_g"]

    def test_trunc_normal(self):
        w = init_params(ViTConfig(), 0)["blocks.0.fc1_w"].data
        assert np.abs(w).max() <= 0.04 and abs(w.std() - 0.0176) < 0.002


class TestForward:
    def test_output_shapes(self, rng):
        out = forward(init_params(SMALL, 0), batch(rng))
        assert out.logits.shape == (3, 5)
        assert out.attention.shape == (3, 16)
        np.testing.assert_allclose(out.attention.sum(axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(out.probs.sum(axis=1), 1.0, atol=1e-12)

    def test_eval_deterministic(self, rng):
        p, x = init_params(SMALL, 0), batch(rng)
        assert forward(p, x).logits.data.tobytes() == forward(p, x).logits.data.tobytes()

    def test_train_equals_eval_without_drop_path(self, rng):
        p, x = init_params(SMALL, 0), batch(rng)
        a = forward(p, x, train_mode=True, rng=np.random.default_rng(0)).logits.data
        assert a.tobytes() == forward(p, x).logits.data.tobytes()

    def test_drop_path_changes_train_output(self, rng):
        cfg = ViTConfig(**{**SMALL.__dict__, "drop_path_rate": 0.5})
        p, x = init_params(cfg, 0), batch(rng, cfg, 8)
        a = forward(p, x, train_mode=True, rng=np.random.default_rng(0)).logits.data
        assert not np.allclose(a, forward(p, x).logits.data)
        with pytest.raises(ValueError):
            forward(p, x, train_mode=True)

    def test_uniform_scores_give_uniform_attention(self, rng):
        cfg = ViTConfig(**{**SMALL.__dict__, "heads": 1})
        p = init_params(cfg, 0)
        last = f"blocks.{cfg.depth - 1}."
        p[last + "q_w"].data[:] = 0.0
        p[last + "q_b"].data[:] = 0.0
        att = forward(p, batch(rng, cfg)).attention
        np.testing.assert_allclose(att, 1 / 16, atol=1e-15)

    def test_key_bias_does_not_move_attention(self, rng):
        p, x = init_params(SMALL, 0), batch(rng)
        a = forward(p, x).attention
        p["blocks.1.k_b"].data += rng.standard_normal(16)
        np.testing.assert_allclose(forward(p, x).attention, a, atol=1e-12)

    def test_head_permutation_covariance(self, rng):
        """Swapping the two heads' columns (and proj rows) leaves logits unchanged."""
        p, x = init_params(SMALL, 0), batch(rng)
        ref = forward(p, x).logits.data
        dh = SMALL.head_dim
        perm = np.r_[np.arange(dh, 2 * dh), np.arange(0, dh)]
        for i in range(SMALL.depth):
            pre = f"blocks.{i}."
            for n in ("q", "k", "v"):
                p[pre + n + "_w"].data[:] = p[pre + n + "_w"].data[:, perm]
                p[pre + n + "_b"].data[:] = p[pre + n + "_b"].data[perm]
            p[pre + "proj_w"].data[:] = p[pre + "proj_w"].data[perm, :]
        np.testing.assert_allclose(forward(p, x).logits.data, ref, atol=1e-12)

    def test_bad_shape(self, rng):
        with pytest.raises(DimensionError):
            forward(init_params(SMALL, 0), rng.standard_normal((2, 3, 8, 8)))


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        p = init_params(SMALL, 7)
        save_checkpoint(tmp_path / "c.bin", p)
        q = load_checkpoint(tmp_path / "c.bin")
        assert q.config == SMALL
        for a, b in zip(p, q):
            assert a.data.tobytes() == b.data.tobytes()

    def test_bad_magic(self, tmp_path):
        (tmp_path / "c.bin").write_bytes(b"NOTACKPT" + bytes(64))
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "c.bin")

    def test_truncated(self, tmp_path):
        save_checkpoint(tmp_path / "c.bin", init_params(SMALL, 7))
        raw = (tmp_path / "c.bin").read_bytes()
        (tmp_path / "c.bin").write_bytes(raw[:-8])
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "c.bin")
