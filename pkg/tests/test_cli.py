import csv
import json

import numpy as np
import pytest

from mixpro.cli import main
from mixpro.pnm import read_pnm

TINY_CFG = """\
# small enough to train in a second
image_size = 16
patch_size = 4
embed_dim = 16
heads = 2
depth = 1
mlp_ratio = 2
n_per_class = 8
batch_size = 8
epochs = 1
warmup_epochs = 0
"""


@pytest.fixture
def cfg(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY_CFG)
    return str(path)


@pytest.fixture
def trained(tmp_path, cfg):
    out = tmp_path / "run"
    assert main(["train", "--config", cfg, "--out", str(out)]) == 0
    return out


def test_missing_config(tmp_path, capsys):
    missing = str(tmp_path / "nope.cfg")
    assert main(["train", "--config", missing, "--out", str(tmp_path / "o")]) == 2
    assert missing in capsys.readouterr().err


def test_unknown_key(tmp_path, cfg, capsys):
    assert main(["train", "--config", cfg, "--set", "learning_rate=1", "--out", str(tmp_path)]) == 2
    assert "learning_rate" in capsys.readouterr().err
    bad = tmp_path / "bad.cfg"
    bad.write_text("epoch = 3\n")
    assert main(["train", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert "epoch" in capsys.readouterr().err


def test_missing_subcommand():
    assert main([]) == 2


def test_train_outputs(trained):
    rows = list(csv.reader(open(trained / "metrics.csv")))
    assert rows[0] == ["epoch", "step", "lr", "train_loss", "alpha_mean", "val_top1"]
    assert len(rows) == 2
    manifest = json.loads((trained / "manifest.json").read_text())
    assert manifest["seed"] == 0 and manifest["config"]["epochs"] == 1 and "finished" in manifest
    assert (trained / "checkpoint.bin").is_file()


def test_seed_replay_is_byte_identical(tmp_path, cfg):
    for name in ("a", "b"):
        assert main(["train", "--config", cfg, "--seed", "7", "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()
    assert json.loads((tmp_path / "a" / "manifest.json").read_text())["seed"] == 7


def test_eval_and_occlusion_ratio_zero(tmp_path, cfg, trained, capsys):
    ckpt = str(trained / "checkpoint.bin")
    capsys.readouterr()
    assert main(["eval", "--config", cfg, "--checkpoint", ckpt]) == 0
    top1 = float(capsys.readouterr().out.split()[-1])
    out = tmp_path / "occ.csv"
    assert main(["occlusion", "--config", cfg, "--checkpoint", ckpt, "--ratios", "0",
                 "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out)))
    assert [r["mode"] for r in rows] == ["random", "salient", "nonsalient"]
    assert all(float(r["top1"]) == top1 for r in rows)
    meta = json.loads(out.with_suffix(".meta.json").read_text())
    assert meta["saliency_source"] == "model_class_attention"


def test_occlusion_bad_mode(tmp_path, cfg, trained):
    assert main(["occlusion", "--config", cfg, "--checkpoint", str(trained / "checkpoint.bin"),
                 "--modes", "sideways", "--out", str(tmp_path / "o.csv")]) == 2


def test_checkpoint_config_mismatch(tmp_path, cfg, trained):
    assert main(["eval", "--config", cfg, "--set", "num_classes=5",
                 "--checkpoint", str(trained / "checkpoint.bin")]) == 2


def test_missing_checkpoint(tmp_path, cfg):
    assert main(["eval", "--config", cfg, "--checkpoint", str(tmp_path / "x.bin")]) == 2


def test_unreadable_data_is_io_error(tmp_path, cfg):
    (tmp_path / "broken.bin").write_bytes(b"\x00" * 100)
    assert main(["train", "--config", cfg, "--set", "dataset=cifar10",
                 "--set", f"data_path={tmp_path / 'broken.bin'}", "--set", "image_size=32",
                 "--set", "patch_size=8", "--out", str(tmp_path / "o")]) == 3


def test_visualize(tmp_path, cfg, trained):
    out = tmp_path / "viz"
    assert main(["visualize", "--config", cfg, "--checkpoint", str(trained / "checkpoint.bin"),
                 "--n", "2", "--out", str(out)]) == 0
    files = sorted(p.name for p in out.iterdir())
    assert len(files) == 8
    for p in out.glob("*.ppm"):
        assert p.read_bytes().startswith(b"P6\n")
        assert read_pnm(p).shape == (16, 16, 3)
    for p in out.glob("*.pgm"):
        img = read_pnm(p)
        assert img.min() == 0 and img.max() == 255


@pytest.mark.parametrize("table,labels", [
    ("alpha_strategy", ["Equal weight", "Linear increment", "Parabolic increment", "PAL (cosine)"]),
    ("beta", ["beta=0.5", "beta=0.8", "beta=1", "beta=2"]),
    ("scale", ["1x", "2x", "4x"]),
])
def test_ablate_rows(tmp_path, cfg, table, labels):
    assert main(["ablate", "--config", cfg, "--table", table, "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader(open(tmp_path / f"ablation_{table}.csv")))
    assert [r["row"] for r in rows] == labels


def test_ablate_components_mapping(tmp_path, cfg):
    assert main(["ablate", "--config", cfg, "--table", "components", "--out", str(tmp_path)]) == 0
    rows = {r["row"]: r for r in csv.DictReader(open(tmp_path / "ablation_components.csv"))}
    assert len(rows) == 5
    assert (rows["CutMix"]["mask_strategy"], rows["CutMix"]["alpha_strategy"]) == ("region", "area_only")
    assert (rows["CutMix+TransMix"]["mask_strategy"], rows["CutMix+TransMix"]["alpha_strategy"]) \
        == ("region", "attn_only")
    assert (rows["MaskMix+PAL"]["mask_strategy"], rows["MaskMix+PAL"]["alpha_strategy"]) \
        == ("grid", "pal_cosine")


def test_ablate_unknown_table(tmp_path, cfg):
    assert main(["ablate", "--config", cfg, "--table", "nope", "--out", str(tmp_path)]) == 2


def test_gradcheck_passes_and_corrupt_fails(capsys):
    assert main(["gradcheck", "--seeds", "2"]) == 0
    assert main(["gradcheck", "--seeds", "1", "--corrupt", "layer_norm"]) == 1
    assert "layer_norm" in capsys.readouterr().err
