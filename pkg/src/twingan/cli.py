"""Command-line entry points.

One command per process: train, translate, eval-seg, grid. Exit codes are
0 on success, 2 for usage/config problems, 3 for IO or runtime failures.
All stochastic behavior is seeded through the config, so rerunning a
command reproduces its outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt_mod
from . import data as data_mod
from . import metrics as metrics_mod
from .config import SYNTHETIC_DATASET_SIZE, RunConfig
from .errors import (
    CheckpointError,
    ConfigError,
    DataError,
    NonFiniteError,
    ShapeError,
    TwinGanError,
    UsageError,
)
from .model import TwinGanModel, format_history_line, train
from .rng import RngStream


def _build_dataset(cfg: RunConfig):
    t = cfg.train
    if cfg.synthetic_task is not None:
        dataset, _ = data_mod.make_synthetic_pairtask(
            cfg.synthetic_task, SYNTHETIC_DATASET_SIZE, t.image_size, t.seed
        )
        return dataset
    ru = data_mod.load_domain(cfg.data_root, "u")
    rv = data_mod.load_domain(cfg.data_root, "v")
    return data_mod.UnpairedDataset(ru, rv, t.image_size, t.seed)


def _grid_rows(model: TwinGanModel, dataset, n: int, rng: RngStream) -> list[np.ndarray]:
    """Row-major tiles for a 3-column (input, translation, round trip) grid,
    n rows of u-side then n rows of v-side."""
    want_c = max(model.cfg.channels_u, model.cfg.channels_v)

    def display(a: np.ndarray) -> np.ndarray:
        return np.repeat(a, want_c, axis=0) if a.shape[0] != want_c else a

    tiles: list[np.ndarray] = []
    for i in range(n):
        u = dataset.image("u", i)[None]
        fake_v = model.translate_u2v(u, noise_enabled=True, rng=rng)
        back_u = model.translate_v2u(fake_v, noise_enabled=True, rng=rng)
        tiles += [display(u[0]), display(fake_v.data[0]), display(back_u.data[0])]
    for i in range(n):
        v = dataset.image("v", i)[None]
        fake_u = model.translate_v2u(v, noise_enabled=True, rng=rng)
        back_v = model.translate_u2v(fake_u, noise_enabled=True, rng=rng)
        tiles += [display(v[0]), display(fake_u.data[0]), display(back_v.data[0])]
    return tiles


def cmd_train(args) -> int:
    cfg = RunConfig.from_json_file(args.config)
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = _build_dataset(cfg)
    model = TwinGanModel(cfg.train)
    total = cfg.train.total_generator_steps
    saved_steps: set[int] = set()

    def save_at(step: int) -> None:
        ckpt_mod.save_checkpoint(
            out_dir / f"ckpt-{step:06d}.bin", model, step, config=cfg.to_dict()
        )
        n = min(2, dataset.n_u, dataset.n_v)
        grid_rng = RngStream(cfg.train.seed).substream(f"grid.{step}")
        data_mod.save_image_grid(
            out_dir / f"grid-{step:06d}.png", _grid_rows(model, dataset, n, grid_rng), 3
        )
        saved_steps.add(step)

    def on_gen(step: int, _model, diag: dict) -> None:
        if cfg.checkpoint_every > 0 and step % cfg.checkpoint_every == 0:
            save_at(step)
        if step % cfg.log_every == 0 or step == total:
            print(
                f"step {step}/{total} l_g={diag['l_g']:.4f} "
                f"recon_u={diag['recon_u']:.4f} recon_v={diag['recon_v']:.4f}",
                flush=True,
            )

    history = train(model, dataset, on_generator_step=on_gen)
    if total not in saved_steps:
        save_at(total)
    with open(out_dir / "loss_log.tsv", "w", encoding="utf-8") as f:
        for entry in history:
            f.write(format_history_line(entry) + "\n")
    print(f"done: {total} generator steps, outputs in {out_dir}")
    return 0


def cmd_translate(args) -> int:
    model, _step = ckpt_mod.restore_model(args.ckpt)
    cfg = model.cfg
    if args.dir == "a2b":
        expect_c, fwd = cfg.channels_u, model.translate_u2v
    else:
        expect_c, fwd = cfg.channels_v, model.translate_v2u
    in_dir = Path(args.in_dir)
    if not in_dir.is_dir():
        raise DataError(f"input directory not found: {in_dir}")
    paths = sorted(p for p in in_dir.iterdir() if p.suffix.lower() == ".png")
    if not paths:
        raise DataError(f"no .png files in {in_dir}")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    noise = not args.no_noise
    rng = RngStream(cfg.seed).substream("translate")
    for p in paths:
        pixels = data_mod.read_image_u8(p)
        if pixels.shape[0] != expect_c:
            raise ConfigError(
                "dir",
                f"{p.name} has {pixels.shape[0]} channels but direction {args.dir} "
                f"needs {expect_c}",
            )
        x = data_mod.preprocess(pixels, cfg.image_size)[None]
        y = fwd(x, noise_enabled=noise, rng=rng)
        data_mod.write_image_u8(out_dir / p.name, data_mod.deprocess(y.data[0]))
    print(f"translated {len(paths)} images to {out_dir}")
    return 0


def cmd_eval_seg(args) -> int:
    palette = metrics_mod.parse_palette_file(args.palette)
    pred_dir, gt_dir = Path(args.pred), Path(args.gt)
    for d in (pred_dir, gt_dir):
        if not d.is_dir():
            raise DataError(f"directory not found: {d}")
    pred_names = sorted(p.name for p in pred_dir.iterdir() if p.suffix.lower() == ".png")
    gt_names = sorted(p.name for p in gt_dir.iterdir() if p.suffix.lower() == ".png")
    if not pred_names:
        raise DataError(f"no .png files in {pred_dir}")
    if pred_names != gt_names:
        only_p = sorted(set(pred_names) - set(gt_names))[:3]
        only_g = sorted(set(gt_names) - set(pred_names))[:3]
        raise UsageError(
            f"prediction/ground-truth filename mismatch (pred-only {only_p}, gt-only {only_g})"
        )

    def as_rgb_unit(path: Path) -> np.ndarray:
        px = data_mod.read_image_u8(path)
        if px.shape[0] == 1:
            px = np.repeat(px, 3, axis=0)
        return data_mod.to_unit_range(px)

    scores = []
    for name in pred_names:
        pred = metrics_mod.quantize_to_labels(as_rgb_unit(pred_dir / name), palette)
        gt = metrics_mod.quantize_to_labels(as_rgb_unit(gt_dir / name), palette)
        scores.append(metrics_mod.segmentation_scores(pred, gt))
    print(json.dumps(metrics_mod.average_scores(scores), indent=2))
    return 0


def cmd_grid(args) -> int:
    if args.n < 1:
        raise UsageError(f"--n must be positive, got {args.n}")
    ckpt = ckpt_mod.load_checkpoint(args.ckpt)
    model, step = ckpt_mod.restore_model(ckpt)
    run_cfg = RunConfig.from_dict(ckpt.config)
    dataset = _build_dataset(run_cfg)
    n = min(args.n, dataset.n_u, dataset.n_v)
    if n < args.n:
        print(f"warning: only {n} images per domain available, clamping", file=sys.stderr)
    rng = RngStream(model.cfg.seed).substream(f"grid.{step}")
    data_mod.save_image_grid(args.out, _grid_rows(model, dataset, n, rng), 3)
    print(f"wrote {2 * n}x3 grid to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="twingan",
        description="Unpaired image-to-image translation with twin adversarial translators.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a JSON run config")
    p.add_argument("--config", required=True, help="path to JSON run config")
    p.add_argument(
        "--deterministic",
        action="store_true",
        help="accepted for compatibility; every run is already seed-deterministic",
    )
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("translate", help="translate a directory of images")
    p.add_argument("--ckpt", required=True, help="checkpoint file")
    p.add_argument("--dir", required=True, choices=["a2b", "b2a"], help="direction")
    p.add_argument("--in", dest="in_dir", required=True, help="input image directory")
    p.add_argument("--out", dest="out_dir", required=True, help="output image directory")
    p.add_argument("--no-noise", action="store_true", help="disable decoder noise")
    p.set_defaults(fn=cmd_translate)

    p = sub.add_parser("eval-seg", help="score predicted label images against ground truth")
    p.add_argument("--pred", required=True, help="predicted label image directory")
    p.add_argument("--gt", required=True, help="ground-truth label image directory")
    p.add_argument("--palette", required=True, help="palette file (class_id R G B lines)")
    p.set_defaults(fn=cmd_eval_seg)

    p = sub.add_parser("grid", help="render an input/translation/round-trip grid")
    p.add_argument("--ckpt", required=True, help="checkpoint file")
    p.add_argument("--n", type=int, required=True, help="samples per domain")
    p.add_argument("--out", required=True, help="output PNG path")
    p.set_defaults(fn=cmd_grid)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code else 0
    try:
        return args.fn(args)
    except (ConfigError, UsageError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (DataError, CheckpointError, NonFiniteError, ShapeError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except TwinGanError as e:  # anything else from the library is a runtime failure
        print(f"error: {e}", file=sys.stderr)
        return 3


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
