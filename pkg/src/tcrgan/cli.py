"""Command-line entry point: ``tcrgan <command> ...``.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

logger = logging.getLogger("tcrgan")


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _ensure_out(path: Path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


# -- commands ----------------------------------------------------------------


def cmd_make_synthetic(args) -> int:
    from .dataset import make_synthetic, write_raw_dump

    out = _ensure_out(args.out)
    if any(out.iterdir()):
        raise UsageError(f"output directory {out} is not empty")
    samples = make_synthetic(args.count, args.image_size, args.seed, frames_per_storm=args.frames_per_storm)
    write_raw_dump(samples, out, pmr_factor=args.pmr_factor)
    print(f"wrote {len(samples)} raw pairs to {out}")
    return EXIT_OK


def cmd_build_dataset(args) -> int:
    from .dataset import build_dataset, read_raw_dir

    raw = Path(args.raw_dir)
    if not raw.is_dir():
        raise UsageError(f"raw directory {raw} does not exist")
    samples, skipped = read_raw_dir(raw)
    for reason in skipped:
        logger.warning("skipped %s", reason)
    if not samples:
        raise RuntimeError(f"no paired samples found under {raw}")
    out = Path(args.out_dir)
    if (out / "manifest.json").exists() and not args.overwrite:
        raise UsageError(f"{out / 'manifest.json'} exists; pass --overwrite to rebuild")
    train_count = args.train_count if args.train_count is not None else int(round(len(samples) * args.train_fraction))
    manifest = build_dataset(samples, _ensure_out(out), train_count)
    if skipped:
        (out / "skipped.txt").write_text("\n".join(skipped) + "\n")
    n_train = sum(r.split == "train" for r in manifest.records)
    print(f"dataset: {len(manifest.records)} pairs ({n_train} train / {len(manifest.records) - n_train} test), "
          f"{len(skipped)} skipped -> {out}")
    return EXIT_OK


def _train_overrides(args) -> dict:
    return {
        "epochs": args.epochs,
        "seed": args.seed,
        "batch_size": args.batch_size,
        "lr": args.lr,
        "checkpoint_every": args.checkpoint_every,
        "input_size": args.input_size,
        "generator.variant": args.variant,
        "generator.levels": args.levels,
        "generator.base_channels": args.base_channels,
        "discriminator.base_channels": args.base_channels,
        "loss.lambda_l1": args.lambda_l1,
        "augment": None if args.no_augment is None else (not args.no_augment),
    }


def cmd_train(args) -> int:
    from .config import load_train_config
    from .dataset import load_samples
    from .training import Trainer

    out = _ensure_out(args.out)
    samples, manifest = load_samples(args.dataset, which="train")
    if not samples:
        raise RuntimeError(f"{args.dataset} has no training records")
    if args.resume:
        trainer = Trainer.load(args.resume)
        if args.epochs is not None:
            trainer.config = type(trainer.config).from_dict({**trainer.config.to_dict(), "epochs": args.epochs})
    else:
        if list(out.glob("checkpoint_*.pt")) and not args.overwrite:
            raise UsageError(f"{out} already holds checkpoints; pass --overwrite or --resume")
        for stale in out.glob("checkpoint_*.pt"):
            stale.unlink()
        try:
            config = load_train_config(args.config, _train_overrides(args))
        except (KeyError, ValueError, OSError) as exc:
            raise UsageError(f"bad training config: {exc}") from exc
        trainer = Trainer(config, manifest.stats)
    trainer.fit(samples, out_dir=out)
    print(f"trained {trainer.config.generator.variant} for {trainer.epoch} epochs ({trainer.step} steps) -> {out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from .dataset import load_samples
    from .metrics import MetricsConfig, evaluate
    from .training import Trainer, predict_fn

    trainer = Trainer.load(args.checkpoint)
    samples, manifest = load_samples(args.dataset, which=args.split)
    if not samples:
        raise RuntimeError(f"no {args.split} records in {args.dataset}")
    stats = trainer.stats or manifest.stats
    data_max = 255.0 if args.bit8 else stats.pmr.max
    cfg = MetricsConfig(data_max=data_max, ssim_mode=args.ssim_mode, window=args.window)
    report = evaluate(predict_fn(trainer), samples, stats, cfg, bit8=args.bit8)
    out = _ensure_out(args.out)
    report.write_csv(out / "report.csv")
    print(report.summary())
    return EXIT_OK


def cmd_predict(args) -> int:
    from .training import Trainer, predict

    trainer = Trainer.load(args.checkpoint)
    out = _ensure_out(args.out)
    arrays = [np.load(p) for p in args.inputs]
    preds = predict(trainer, arrays)
    for path, pred in zip(args.inputs, preds):
        np.save(out / f"{Path(path).stem}_pred.npy", pred)
    print(f"wrote {len(preds)} predictions to {out}")
    return EXIT_OK


def cmd_render(args) -> int:
    from .dataset import denormalize, load_samples
    from .render import make_panel, save_panel
    from .training import Trainer, predict_fn

    trainer = Trainer.load(args.checkpoint)
    samples, manifest = load_samples(args.dataset, which=args.split)
    stats = trainer.stats or manifest.stats
    if args.ids:
        wanted = set(args.ids)
        samples = [s for s in samples if s.key in wanted]
    samples = samples[:args.count]
    if not samples:
        raise RuntimeError("no samples selected for rendering")
    out = _ensure_out(args.out)
    fn = predict_fn(trainer)
    failures = 0
    for s in samples:
        try:
            panel = make_panel(denormalize(s.ir, stats).values, fn(s), denormalize(s.pmr, stats).values)
            save_panel(panel, out / f"{s.key.replace('/', '_')}.png")
        except Exception as exc:  # keep rendering the rest
            failures += 1
            logger.error("render failed for %s: %s", s.key, exc)
    print(f"rendered {len(samples) - failures}/{len(samples)} panels to {out}")
    return EXIT_OK if failures == 0 else EXIT_RUNTIME


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    from .generator import VARIANTS

    parser = Parser(prog="tcrgan", description="IR -> passive-microwave rainfall translation with a conditional GAN.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=Parser)

    p = sub.add_parser("make-synthetic", help="write synthetic cyclone pairs in the raw input layout")
    p.add_argument("--out", required=True, type=Path, help="raw output directory (must be empty)")
    p.add_argument("--count", type=int, default=32, help="number of pairs (default 32)")
    p.add_argument("--image-size", type=int, default=64, help="IR grid size (default 64)")
    p.add_argument("--pmr-factor", type=int, default=4, help="PMR coarsening factor (default 4)")
    p.add_argument("--frames-per-storm", type=int, default=4, help="frames per synthetic storm (default 4)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_make_synthetic)

    p = sub.add_parser("build-dataset", help="fill nulls, upsample PMR, normalize, split and write a dataset")
    p.add_argument("raw_dir", type=Path, help="directory of <storm_id>/<YYYYmmddTHHMMZ>_{ir,pmr}.npy files")
    p.add_argument("out_dir", type=Path)
    p.add_argument("--train-count", type=int, help="number of chronologically first pairs used for training")
    p.add_argument("--train-fraction", type=float, default=0.875,
                   help="fraction used when --train-count is absent (default 0.875, i.e. 4000/4579 rounded)")
    p.add_argument("--overwrite", action="store_true", help="replace an existing manifest")
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("train", help="train G and D on the train split")
    p.add_argument("--dataset", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path, help="directory for checkpoints and history.csv")
    p.add_argument("--config", type=Path, help="flat key=value config file")
    p.add_argument("--variant", choices=VARIANTS)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--lambda-l1", type=float)
    p.add_argument("--input-size", type=int, help="working resolution of G and D")
    p.add_argument("--levels", type=int)
    p.add_argument("--base-channels", type=int, help="base width of both G and D")
    p.add_argument("--checkpoint-every", type=int)
    p.add_argument("--no-augment", action="store_const", const=True, default=None,
                   help="disable resize/crop/flip jitter")
    p.add_argument("--resume", type=Path, help="continue from this checkpoint")
    p.add_argument("--overwrite", action="store_true", help="replace checkpoints already in --out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="PSNR/RMSE/CC/SSIM on a split, written to report.csv")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--dataset", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--split", default="test", choices=("train", "test"))
    p.add_argument("--bit8", action="store_true", help="rescale PMR to 0..255 and use peak 255")
    p.add_argument("--ssim-mode", default="global", choices=("global", "windowed"))
    p.add_argument("--window", type=int, default=11)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="translate raw IR .npy grids to PMR .npy grids")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("inputs", nargs="+", type=Path)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("render", help="IR | prediction | truth panels as PNG")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--dataset", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--split", default="test", choices=("train", "test"))
    p.add_argument("--count", type=int, default=5)
    p.add_argument("--ids", nargs="*", help="sample ids (<storm_id>/<timestamp>) to render")
    p.set_defaults(func=cmd_render)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help or a usage error
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"tcrgan {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (KeyError, ValueError, FileNotFoundError, FileExistsError, RuntimeError, OSError) as exc:
        print(f"tcrgan {args.command}: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
