"""Command line entry point: ``dxann gen-data | train | eval | explain``.

Exit codes: 0 on success, 1 on runtime failure, 2 on bad arguments.
"""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import netpbm, render
from .checkpoint import load_checkpoint, save_checkpoint
from .classifier import ecs_raw, predict
from .data import gen_blob_images, gen_two_moons, load_dataset, preprocess, save_dataset, split
from .errors import ConfigurationError, ContractError, DxannError
from .train import TrainConfig, evaluate, train


class _UsageError(Exception):
    pass


def _err(msg: str) -> None:
    print(f"dxann: error: {msg}", file=sys.stderr)


def _widths(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dxann", description="Flow-based classifier with built-in explanations.")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a synthetic dataset directory")
    g.add_argument("--kind", required=True, choices=["two-moons", "moons", "blobs"])
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--h", type=int, default=16)
    g.add_argument("--w", type=int, default=16)
    g.add_argument("--r", type=float, default=2.0)
    g.add_argument("--a", type=float, default=0.8)
    g.add_argument("--sigma", type=float, default=0.1)
    g.add_argument("--out", required=True)

    t = sub.add_parser("train", help="train a model and write a checkpoint plus metrics CSV")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--epochs", type=int, default=200)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--batch", type=int, default=50)
    t.add_argument("--k", type=int, default=4)
    t.add_argument("--c", type=float, default=1.0)
    t.add_argument("--alpha", type=float, default=3.0)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--split", type=float, default=0.8)
    t.add_argument("--hidden", type=_widths, default=(64, 64))
    t.add_argument("--conditioner", choices=["mlp", "cnn"], default="mlp")
    t.add_argument("--conv-channels", type=_widths, default=(16,) * 8)
    t.add_argument("--clip", type=float, default=100.0, help="global gradient-norm clip (inf disables)")
    t.add_argument("--no-dequantize", action="store_true")
    t.add_argument("--timing", action="store_true", help="record wall-clock seconds in the metrics CSV")

    e = sub.add_parser("eval", help="report accuracy, mean loss and confusion matrix")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)

    x = sub.add_parser("explain", help="write the ECS map (and heatmaps for images) for one sample")
    x.add_argument("--model", required=True)
    x.add_argument("--data", required=True)
    x.add_argument("--id", required=True, dest="sample_id")
    x.add_argument("--out", required=True)
    x.add_argument("--overlay-alpha", type=float, default=0.5)
    return parser


def cmd_gen_data(args) -> int:
    try:
        if args.kind in ("two-moons", "moons"):
            ds = gen_two_moons(args.n, args.sigma, args.seed)
        else:
            ds = gen_blob_images(args.n, args.h, args.w, args.r, args.a, args.sigma, args.seed)
    except (ContractError, ConfigurationError) as exc:
        raise _UsageError(str(exc)) from None
    save_dataset(ds, args.out)
    n0, n1 = ds.class_counts()
    print(f"wrote {len(ds)} samples to {args.out}: class 0 = {n0}, class 1 = {n1}")
    return 0


def _metrics_path(model_path: str) -> Path:
    return Path(model_path).with_suffix(".metrics.csv")


def cmd_train(args) -> int:
    if not 0 < args.split < 1:
        raise _UsageError(f"--split must lie in (0, 1), got {args.split}")
    ds = preprocess(load_dataset(args.data))
    n0, n1 = ds.class_counts()
    if n0 == 0 or n1 == 0:
        _err(f"dataset must contain both classes (class 0: {n0}, class 1: {n1})")
        return 1
    train_set, test_set = split(ds, args.split, args.seed)
    batch = args.batch
    if batch > len(train_set):
        print(f"note: batch size reduced to training set size {len(train_set)}", file=sys.stderr)
        batch = len(train_set)
    try:
        config = TrainConfig(lr=args.lr, epochs=args.epochs, batch_size=batch, seed=args.seed,
                             alpha=args.alpha, c=args.c, n_blocks=args.k, hidden=args.hidden,
                             conditioner=args.conditioner, conv_channels=args.conv_channels,
                             clip_norm=args.clip, dequantize=not args.no_dequantize)
    except ConfigurationError as exc:
        raise _UsageError(str(exc)) from None
    model, heads, metrics = train(train_set, test_set, config)
    save_checkpoint(args.out, model, heads, config)
    metrics.to_csv(_metrics_path(args.out), timing=args.timing)
    train_res = evaluate(model, heads, train_set)
    print(f"train accuracy: {train_res.accuracy:.4f}")
    if len(test_set):
        print(f"test accuracy: {evaluate(model, heads, test_set).accuracy:.4f}")
    return 0


def _load_matching(model_path: str, data_path: str):
    ckpt = load_checkpoint(model_path)
    ds = preprocess(load_dataset(data_path))
    if len(ds) == 0:
        raise DxannError(f"dataset {data_path} has no samples")
    if ds.dim != ckpt.model.dim:
        raise DxannError(f"model dimension D={ckpt.model.dim} does not match data dimension D={ds.dim}")
    return ckpt, ds


def cmd_eval(args) -> int:
    ckpt, ds = _load_matching(args.model, args.data)
    res = evaluate(ckpt.model, ckpt.heads, ds)
    cm = res.confusion
    print(f"accuracy: {res.accuracy:.4f}")
    print(f"mean loss: {res.mean_loss:.6f}")
    print("confusion (rows = true, cols = predicted):")
    print(f"  {cm[0, 0]} {cm[0, 1]}")
    print(f"  {cm[1, 0]} {cm[1, 1]}")
    return 0


def cmd_explain(args) -> int:
    ckpt, ds = _load_matching(args.model, args.data)
    try:
        sample = ds.get(args.sample_id)
    except KeyError:
        _err(f"unknown sample id {args.sample_id!r}")
        return 1
    pred = predict(sample.features, ckpt.model, ckpt.heads)
    ecs = ecs_raw(sample.features, ckpt.model, ckpt.heads)
    prefix = args.out
    with open(f"{prefix}.ecs.csv", "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["feature", "raw", "normalized"])
        for m, (r, u) in enumerate(zip(ecs.raw, ecs.normalized)):
            w.writerow([m, repr(float(r)), repr(float(u))])
    print(f"sample {sample.id}: predicted label {pred.label} "
          f"(log p0 = {pred.logp0:.6f}, log p1 = {pred.logp1:.6f})")
    if ds.spatial_shape is None:
        print("notice: vector dataset, wrote ECS CSV only", file=sys.stderr)
        return 0
    heat = render.colormap(ecs.normalized.reshape(ds.spatial_shape))
    gray = render.to_gray8(sample.features.reshape(ds.spatial_shape))
    netpbm.write_ppm(f"{prefix}.heatmap.ppm", heat)
    netpbm.write_ppm(f"{prefix}.overlay.ppm", render.overlay(gray, heat, args.overlay_alpha))
    return 0


_COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval, "explain": cmd_explain}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        _err(str(exc))
        return 2
    except (DxannError, OSError) as exc:
        _err(str(exc))
        return 1


if __name__ == "__main__":
    sys.exit(main())
