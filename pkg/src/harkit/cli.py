"""Command-line entry point: ``synth``, ``train``, ``evaluate``, ``predict``.

Exit codes: 0 on success, 1 on data or file-format errors, 2 on usage errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import (SYNTHETIC_CLASSES, VideoSample, generate_synthetic_dataset, load_dataset,
                   load_video, sample_frame_indices, write_dataset)
from .errors import DataError, FormatError, HarError, ParameterError, UsageError
from .evaluation import (evaluate, predict_video, render_heatmap, write_confusion_csv,
                         write_report_csv)
from .models import CONVLSTM, SINGLE_FRAME_CNN, build_model
from .tensor import make_rng
from .train import TrainConfig, load_checkpoint, save_checkpoint, train_model

log = logging.getLogger("harkit")

ARCH_CHOICES = {"single-frame-cnn": SINGLE_FRAME_CNN, "convlstm": CONVLSTM}
SEED_ENV = "HAR_SEED"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_help(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _fraction(text):
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"expected a fraction in (0, 1), got {text}")
    return value


def _positive_float(text):
    value = float(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="harkit", description="Human activity recognition from video frames.")
    parser.add_argument("--version", action="version", version=f"harkit {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic moving-square video dataset")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--classes", default=",".join(SYNTHETIC_CLASSES),
                   help=f"comma-separated subset of {','.join(SYNTHETIC_CLASSES)}")
    p.add_argument("--videos-per-class", type=_positive_int, default=40)
    p.add_argument("--frames", type=_positive_int, default=20)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("train", help="train a model on a frame-directory dataset")
    p.add_argument("--arch", required=True, choices=sorted(ARCH_CHOICES))
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--seq-len", type=_positive_int, default=20,
                   help="frames sampled per video (sequence length / frames averaged)")
    p.add_argument("--epochs", type=_positive_int, default=50)
    p.add_argument("--patience", type=_positive_int, default=15)
    p.add_argument("--lr", type=_positive_float, default=1e-3)
    p.add_argument("--batch-size", type=_positive_int)
    p.add_argument("--val-split", type=_fraction, default=0.2)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on a test dataset")
    p.add_argument("--model", required=True, type=Path)
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("predict", help="classify one directory of frames")
    p.add_argument("--model", required=True, type=Path)
    p.add_argument("--frames", required=True, type=Path)
    p.add_argument("--window", type=_positive_int, help="frames per window for per-window labels")
    p.add_argument("--stride", type=_positive_int, help="window stride (requires --window)")
    return parser


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"{SEED_ENV}={env!r} is not an integer") from None
    return 0


def _echo(config: dict):
    print(json.dumps(config, sort_keys=True))


def _write_manifest(out: Path, config: dict):
    tmp = out / "manifest.json.tmp"
    tmp.write_text(json.dumps(config, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, out / "manifest.json")


# ---------------------------------------------------------------- subcommands

def cmd_synth(args) -> int:
    classes = [c.strip() for c in args.classes.split(",") if c.strip()]
    unknown = sorted(set(classes) - set(SYNTHETIC_CLASSES))
    if unknown or len(set(classes)) < 2:
        raise UsageError(f"--classes needs >= 2 of {','.join(SYNTHETIC_CLASSES)}; bad: {unknown}")
    config = {"command": "synth", "out": str(args.out), "classes": sorted(set(classes)),
              "videos_per_class": args.videos_per_class, "frames": args.frames, "seed": _resolve_seed(args)}
    _echo(config)
    dataset = generate_synthetic_dataset(classes, args.videos_per_class, args.frames, make_rng(config["seed"]))
    args.out.mkdir(parents=True, exist_ok=True)
    write_dataset(dataset, args.out)
    # the output path is left out so identical runs give identical trees
    _write_manifest(args.out, {k: v for k, v in config.items() if k != "out"})
    return 0


def cmd_train(args) -> int:
    seed = _resolve_seed(args)
    config = TrainConfig(epochs=args.epochs, patience=args.patience, learning_rate=args.lr,
                         batch_size=args.batch_size, val_split=args.val_split, seed=seed)
    arch = ARCH_CHOICES[args.arch]
    resolved = {"command": "train", "arch": arch, "data": str(args.data), "out": str(args.out),
                "seq_len": args.seq_len, **config.to_dict(),
                "batch_size": config.resolved_batch_size(arch)}
    _echo(resolved)
    dataset = load_dataset(args.data, args.seq_len)
    model = build_model(arch, len(dataset.class_names), args.seq_len, seed)
    rng = make_rng(seed)
    model, history = train_model(model, dataset, config, rng)
    args.out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, args.out / "model.ckpt", dataset.class_names)
    history.to_csv(args.out / "history.csv")
    resolved.update(best_epoch=history.best_epoch, stopped_epoch=history.stopped_epoch,
                    class_names=dataset.class_names)
    _write_manifest(args.out, resolved)
    print(f"trained {arch}: best epoch {history.best_epoch}, stopped at {history.stopped_epoch}; "
          f"wrote {args.out / 'model.ckpt'}")
    return 0


def cmd_evaluate(args) -> int:
    model = load_checkpoint(args.model)
    resolved = {"command": "evaluate", "model": str(args.model), "data": str(args.data),
                "out": str(args.out), "arch": model.arch_tag, "seq_len": model.seq_len}
    _echo(resolved)
    dataset = load_dataset(args.data, model.seq_len)
    if model.class_names is not None and model.class_names != dataset.class_names:
        raise DataError(f"test classes {dataset.class_names} differ from the model's {model.class_names}")
    report = evaluate(model, dataset)
    args.out.mkdir(parents=True, exist_ok=True)
    write_report_csv(report, args.out / "report.csv")
    write_confusion_csv(report.confusion, report.class_names, args.out / "confusion.csv")
    render_heatmap(report.row_normalized, report.class_names, args.out / "heatmap.csv",
                   args.out / "heatmap.pgm")
    history = args.model.parent / "history.csv"
    if history.is_file():
        shutil.copyfile(history, args.out / "history.csv")
    resolved["accuracy"] = report.accuracy
    _write_manifest(args.out, resolved)
    print(f"accuracy {report.accuracy:.4f} on {len(dataset)} videos")
    return 0


def _window_starts(total, window, stride):
    if total < window:
        raise DataError(f"video has {total} frames, shorter than the {window}-frame window")
    return range(0, total - window + 1, stride)


def cmd_predict(args) -> int:
    if args.stride is not None and args.window is None:
        raise UsageError("--stride requires --window")
    model = load_checkpoint(args.model)
    names = model.class_names or [str(k) for k in range(model.num_classes)]
    _echo({"command": "predict", "model": str(args.model), "frames": str(args.frames),
           "window": args.window, "stride": args.stride or args.window})
    if args.window is None:
        frames = load_video(args.frames, model.seq_len)
        probs = predict_video(model, VideoSample(frames, -1, "", str(args.frames)))
        print(f"{names[int(np.argmax(probs))]}\t" + " ".join(f"{p:.6f}" for p in probs))
        return 0
    if args.window < model.seq_len:
        raise UsageError(f"--window must be >= the model's seq_len ({model.seq_len})")
    stride = args.stride or args.window
    total = len([p for p in args.frames.iterdir() if p.suffix.lower() in (".ppm", ".pgm")]) \
        if args.frames.is_dir() else 0
    if total == 0:
        raise DataError(f"{args.frames}: no frame files")
    all_frames = load_video(args.frames, total)
    for start in _window_starts(total, args.window, stride):
        idx = [start + i for i in sample_frame_indices(args.window, model.seq_len)]
        probs = predict_video(model, VideoSample(all_frames[idx], -1, "", str(args.frames)))
        print(f"{start}\t{start + args.window - 1}\t{names[int(np.argmax(probs))]}\t"
              + " ".join(f"{p:.6f}" for p in probs))
    return 0


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "evaluate": cmd_evaluate, "predict": cmd_predict}


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ParameterError) as exc:
        print(f"harkit {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (DataError, FormatError, HarError, OSError) as exc:
        print(f"harkit {args.command}: error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
