"""Command-line entry point: ``mixpro {train,eval,ablate,occlusion,visualize,gradcheck}``.

Exit codes: 0 ok, 1 a check failed, 2 usage or configuration error, 3 I/O error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .ablation import TABLES, run_table, write_table_csv
from .config import TrainConfig, load_config, parse_overrides
from .data import Dataset, FormatError
from .gradcheck import TOLERANCE, run_suite
from .maskmix import ConfigurationError, make_mask, mix_images, sample_tau
from .pnm import attention_image, to_uint8, write_pgm, write_ppm
from .robustness import OCCLUSION_MODES, SALIENCY_SOURCE, OcclusionSpec, occlusion_curve, \
    write_occlusion_csv
from .training import datasets_from_config, evaluate, train_loop
from .vit import CheckpointError, ViTParams, forward, load_checkpoint

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("mixpro")


class UsageError(Exception):
    pass


def _config(args) -> TrainConfig:
    overrides = parse_overrides(getattr(args, "set", None))
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    try:
        return load_config(args.config, overrides)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from exc
    except TypeError as exc:
        raise UsageError(f"bad configuration: {exc}") from exc


def _checkpoint(path, cfg: TrainConfig | None = None) -> ViTParams:
    if not Path(path).is_file():
        raise UsageError(f"checkpoint not found: {path}")
    params = load_checkpoint(path)
    if cfg is not None:
        c = params.config
        mine = (cfg.image_size, cfg.channels, cfg.num_classes)
        if (c.image_size, c.channels, c.num_classes) != mine:
            raise UsageError(
                f"checkpoint expects image_size/channels/classes "
                f"{(c.image_size, c.channels, c.num_classes)}, config provides {mine}")
    return params


def _split(cfg: TrainConfig, which: str) -> Dataset:
    train, val = datasets_from_config(cfg)
    return train if which == "train" else val


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_train(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "config": vars(cfg),
        "seed": cfg.seed,
        "version": __version__,
        "started": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "outputs": {"metrics": str(out / "metrics.csv"), "checkpoint": str(out / "checkpoint.bin"),
                    "manifest": str(out / "manifest.json")},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    train, val = datasets_from_config(cfg)
    res = train_loop(cfg, train, val, out_dir=out,
                     on_epoch=lambda r: print(",".join(r.row()), flush=True))
    manifest["finished"] = time.strftime("%Y-%m-%dT%H:%M:%S")
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"final val_top1 {res.metrics[-1].val_top1:.4f}; outputs in {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _config(args)
    params = _checkpoint(args.checkpoint, cfg)
    top1 = evaluate(params, _split(cfg, args.split))
    print(f"top1 {top1:.9g}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    if args.table not in TABLES:
        raise UsageError(f"unknown ablation table {args.table!r}; choose from {sorted(TABLES)}")
    cfg = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train, val = datasets_from_config(cfg)
    rows = run_table(args.table, cfg, train, val, out_dir=out,
                     on_row=lambda r: print(",".join(r), flush=True))
    path = out / f"ablation_{args.table}.csv"
    write_table_csv(path, rows)
    print(f"wrote {path}")
    return EXIT_OK


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise UsageError(f"bad number list {text!r}") from exc


def cmd_occlusion(args) -> int:
    cfg = _config(args)
    params = _checkpoint(args.checkpoint, cfg)
    ds = _split(cfg, args.split)
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    bad = [m for m in modes if m not in OCCLUSION_MODES]
    if bad or not modes:
        raise UsageError(f"unknown occlusion mode(s) {bad}; choose from {OCCLUSION_MODES}")
    try:
        specs = [OcclusionSpec(m, _floats(args.ratios), args.occlusion_seed) for m in modes]
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    curves = {}
    for spec in specs:
        curves[spec.mode] = occlusion_curve(params, ds, spec)
        for ratio, top1 in curves[spec.mode]:
            print(f"{spec.mode},{ratio:.9g},{top1:.9g}")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_occlusion_csv(out, curves)
    meta = {"saliency_source": SALIENCY_SOURCE, "checkpoint": str(args.checkpoint),
            "split": args.split, "seed": args.occlusion_seed, "zeroing": "normalized pixel space"}
    out.with_suffix(".meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    return EXIT_OK


def cmd_visualize(args) -> int:
    cfg = _config(args)
    params = _checkpoint(args.checkpoint, cfg)
    ds = _split(cfg, args.split)
    if args.n < 1 or 2 * args.n > len(ds):
        raise UsageError(f"need 1 <= n <= {len(ds) // 2}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    c = params.config
    for i in range(args.n):
        a, b = ds.images[2 * i], ds.images[2 * i + 1]
        mask = make_mask(cfg.mask_strategy, c.image_size, c.image_size, c.patch_size,
                         cfg.scale_k, sample_tau(cfg.beta, rng), rng)
        mixed = mix_images(a, b, mask)
        attn = forward(params, mixed[None]).attention[0]
        for tag, img in (("a", a), ("b", b), ("mixed", mixed)):
            pix = to_uint8(ds.denormalize(img)).transpose(1, 2, 0)
            write_ppm(out / f"pair{i}_{tag}.ppm", pix)
        write_pgm(out / f"pair{i}_attention.pgm", attention_image(attn, c.grid, c.patch_size))
    print(f"wrote {4 * args.n} files to {out}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    report = run_suite(args.seed, args.seeds, corrupt=args.corrupt)
    for op, err in report.errors.items():
        extra = f" (worst tensor {report.worst_detail[op]})" if op in report.worst_detail else ""
        print(f"{op:20s} max_rel_err {err:.3e}{extra}")
    print(f"max relative error {report.max_error:.3e} (tolerance {TOLERANCE:g})")
    if not report.passed():
        print(f"FAILED: worst op {report.worst_op}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mixpro", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p, required=True):
        p.add_argument("--config", required=required, help="key = value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key (repeatable)")
        p.add_argument("--seed", type=int, help="shortcut for --set seed=N")

    p = sub.add_parser("train", help="train a model and write metrics, manifest, checkpoint")
    with_config(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="top-1 accuracy of a checkpoint")
    with_config(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=("val", "train"), default="val")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run one ablation table")
    with_config(p)
    p.add_argument("--table", required=True, help=", ".join(TABLES))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("occlusion", help="patch-dropping robustness curves")
    with_config(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--modes", default=",".join(OCCLUSION_MODES))
    p.add_argument("--ratios", default="0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1")
    p.add_argument("--occlusion-seed", type=int, default=0)
    p.add_argument("--split", choices=("val", "train"), default="val")
    p.add_argument("--out", required=True, help="CSV path")
    p.set_defaults(func=cmd_occlusion)

    p = sub.add_parser("visualize", help="dump mixed images and attention maps as PPM/PGM")
    with_config(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--split", choices=("val", "train"), default="val")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_visualize)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds", type=int, default=100)
    p.add_argument("--corrupt", default=None, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigurationError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, FormatError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
