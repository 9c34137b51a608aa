"""Command-line entry point.

Subcommands: explore, decode, encode, make-toy, train, eval, predict,
gradcheck. Exit codes: 0 success, 1 domain error (bad data, divergence,
incompatible files), 2 usage error (bad flags or enum-valued config
fields). SEGKIT_DATA_DIR provides a default dataset directory.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from . import plots
from .data import class_histogram, load_annotations, size_histogram
from .errors import SegkitError
from .losses import GRADCHECK_TOLERANCE, finite_difference_report
from .metrics import MetricsReport
from .models import load_checkpoint, save_checkpoint
from .palette import load_classmap_png, overlay, save_classmap_png
from .rle import format_rle, resize_classmap, rle_encode
from .toy import ToySpec, generate_toy, load_toy_dataset, save_toy_dataset
from .train import (
    LOSS_KINDS,
    MODEL_KINDS,
    OPTIMIZER_KINDS,
    STAGE_KINDS,
    build_model_from_config,
    evaluate,
    fit,
    load_config,
    overfit_single,
    restore_snapshot,
    save_config,
)
from .data import diverse_subset, split

DATA_DIR_ENV = "SEGKIT_DATA_DIR"

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2


@dataclass
class CommandResult:
    exit_code: int = EXIT_OK
    artifacts: list[Path] = field(default_factory=list)
    summary: str = ""


def _out_dir(args) -> Path:
    out = Path(args.out_dir) if args.out_dir else Path("segkit-out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _report_row_errors(index) -> str:
    if not index.row_errors:
        return ""
    lines = [f"{len(index.row_errors)} malformed row(s) skipped:"]
    lines += [f"  {err}" for err in index.row_errors[:10]]
    if len(index.row_errors) > 10:
        lines.append(f"  ... and {len(index.row_errors) - 10} more")
    return "\n".join(lines)


def cmd_explore(args) -> CommandResult:
    index = load_annotations(args.csv, strict=args.strict)
    if len(index) == 0:
        return CommandResult(EXIT_ERROR, [], f"empty dataset: {args.csv} has no usable rows")
    row_report = _report_row_errors(index)
    if row_report:
        print(row_report, file=sys.stderr)

    out = _out_dir(args)
    hist = class_histogram(index)
    sizes = size_histogram(index)

    class_csv = out / "class_histogram.csv"
    with open(class_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class_id", "image_count", "image_share", "instance_count"])
        for cls in sorted(set(hist.image_counts) | set(hist.instance_counts)):
            writer.writerow([
                cls,
                hist.image_counts.get(cls, 0),
                repr(hist.image_shares.get(cls, 0.0)),
                hist.instance_counts.get(cls, 0),
            ])
    size_csv = out / "size_histogram.csv"
    with open(size_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dimension", "value", "count"])
        for value in sorted(sizes.width_counts):
            writer.writerow(["width", value, sizes.width_counts[value]])
        for value in sorted(sizes.height_counts):
            writer.writerow(["height", value, sizes.height_counts[value]])

    artifacts = [
        class_csv,
        size_csv,
        plots.plot_class_histogram(hist, out / "class_histogram.png"),
        plots.plot_size_histogram(sizes, out / "size_histogram.png"),
    ]

    ranked = sorted(hist.image_shares.items(), key=lambda kv: (-kv[1], kv[0]))
    def fmt(items):
        return ", ".join(
            f"class {cls}: {share:.1%} ({hist.image_counts[cls]} images)"
            for cls, share in items
        )
    summary = "\n".join([
        f"{len(index)} images, {index.n_records} annotations, "
        f"{len(hist.image_counts)} classes",
        f"most common:  {fmt(ranked[:3])}",
        f"least common: {fmt(ranked[-3:][::-1])}",
        f"width  min {sizes.width_min} max {sizes.width_max} "
        f"(max pairwise diff {sizes.width_diff})",
        f"height min {sizes.height_min} max {sizes.height_max} "
        f"(max pairwise diff {sizes.height_diff})",
    ])
    return CommandResult(EXIT_OK, artifacts, summary)


def cmd_decode(args) -> CommandResult:
    index = load_annotations(args.csv, strict=args.strict)
    if args.image_id not in index:
        return CommandResult(
            EXIT_ERROR, [], f"image id {args.image_id!r} not found in {args.csv}"
        )
    class_map = index.class_map(args.image_id)
    fg_before = int(np.count_nonzero(class_map))
    resized = resize_classmap(class_map, (args.size, args.size))
    out_path = Path(args.out) if args.out else _out_dir(args) / f"{args.image_id}.png"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    save_classmap_png(resized, out_path)
    present = sorted(int(c) for c in np.unique(resized) if c != 0)
    summary = (
        f"{args.image_id}: {fg_before} foreground pixels at native size, "
        f"classes {present} after resize to {args.size}x{args.size}"
    )
    return CommandResult(EXIT_OK, [out_path], summary)


def cmd_encode(args) -> CommandResult:
    class_map = load_classmap_png(args.mask)
    image_id = args.image_id or Path(args.mask).stem
    height, width = class_map.shape
    out_path = Path(args.out) if args.out else _out_dir(args) / f"{image_id}.csv"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    rows = 0
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["ImageId", "EncodedPixels", "ClassId", "Height", "Width"])
        for cls in sorted(int(c) for c in np.unique(class_map) if c != 0):
            pairs = rle_encode((class_map == cls).astype(np.uint8))
            writer.writerow([image_id, format_rle(pairs), cls, height, width])
            rows += 1
    return CommandResult(
        EXIT_OK, [out_path], f"encoded {rows} class mask(s) from {args.mask}"
    )


def cmd_make_toy(args) -> CommandResult:
    class_ids = tuple(int(x) for x in args.classes.split(","))
    if args.probs:
        probs = tuple(float(x) for x in args.probs.split(","))
    else:
        probs = tuple(0.9 / (i + 1) for i in range(len(class_ids)))
    lo, hi = (int(x) for x in args.shapes.split(","))
    spec = ToySpec(
        n_images=args.n_images,
        image_size=(args.size, args.size),
        class_ids=class_ids,
        spawn_probs=probs,
        shapes_per_image=(lo, hi),
        noise_level=args.noise,
        seed=args.seed or 0,
    )
    dataset = generate_toy(spec)
    out = Path(args.out) if args.out else _out_dir(args) / "toy"
    save_toy_dataset(dataset, out)
    summary = (
        f"toy dataset: {len(dataset)} images of {args.size}x{args.size}, "
        f"classes {list(class_ids)}, seed {spec.seed}"
    )
    return CommandResult(EXIT_OK, [out / "annotations.csv", out / "manifest.json"], summary)


def cmd_train(args) -> CommandResult:
    config = load_config(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.out_dir:
        config.out_dir = args.out_dir
    for value, allowed, what in (
        (config.loss, LOSS_KINDS, "loss"),
        (config.optimizer, OPTIMIZER_KINDS, "optimizer"),
        (config.model, MODEL_KINDS, "model"),
        (config.stage, STAGE_KINDS, "stage"),
    ):
        if value not in allowed:
            return CommandResult(
                EXIT_USAGE, [], f"invalid {what} {value!r}: choose from {allowed}"
            )
    config.validate()

    data_dir = config.data_dir or os.environ.get(DATA_DIR_ENV, "")
    if not data_dir:
        return CommandResult(
            EXIT_ERROR, [],
            f"no dataset: set data_dir in the config or {DATA_DIR_ENV}",
        )
    dataset = load_toy_dataset(data_dir)
    out = Path(config.out_dir) if config.out_dir else Path("segkit-out")
    out.mkdir(parents=True, exist_ok=True)

    net = build_model_from_config(config)
    if config.stage == "overfit-one":
        image_id = config.image_id or dataset.index.image_ids[0]
        if image_id not in dataset.images:
            return CommandResult(EXIT_ERROR, [], f"image id {image_id!r} not in dataset")
        log = overfit_single(
            net, dataset.images[image_id], dataset.class_maps[image_id], config
        )
        ckpt_epoch = len(log.records)
        stage_note = f"single image {image_id}"
    else:
        if config.stage == "overfit-subset":
            n = config.subset_size or max(2, len(dataset.index) // 2)
            pool = diverse_subset(dataset.index, n, seed=config.seed)
        else:
            pool = dataset.index
        train_index, val_index = split(pool, config.split_fraction, config.seed)
        log, best_params, best_state = fit(net, dataset, train_index, val_index, config)
        restore_snapshot(net, best_params, best_state)
        last = log.records[-1]
        log.success = (
            last["val_acc"] >= config.success_acc
            and last["val_biou"] >= config.success_biou
        )
        ckpt_epoch = log.best_epoch
        stage_note = f"{len(train_index)} train / {len(val_index)} val images"

    runlog_path = out / "runlog.jsonl"
    log.save_jsonl(runlog_path)
    meta_path = out / "runmeta.json"
    log.save_meta(meta_path)
    config_path = out / "config.resolved.txt"
    save_config(config, config_path)
    ckpt_path = out / "checkpoint.npz"
    save_checkpoint(
        net, ckpt_path, epoch=ckpt_epoch,
        extra={
            "stage": config.stage,
            "input_scale": config.input_scale,
            "config_fingerprint": config.fingerprint(),
            "success": log.success,
        },
    )
    curves_path = plots.plot_curves(log.records, out / "curves.png")
    last = log.records[-1]
    summary = (
        f"stage {config.stage} ({stage_note}): {len(log.records)} epochs, "
        f"success={log.success}, best epoch {log.best_epoch}, "
        f"final val_acc {last['val_acc']:.4f}, val_biou {last['val_biou']:.4f}"
    )
    return CommandResult(
        EXIT_OK,
        [runlog_path, meta_path, config_path, ckpt_path, curves_path],
        summary,
    )


def cmd_eval(args) -> CommandResult:
    net, meta = load_checkpoint(args.checkpoint)
    data_path = Path(args.data)
    if data_path.is_file():
        data_path = data_path.parent
    dataset = load_toy_dataset(data_path)
    extra = meta.get("extra", {})
    report = evaluate(
        net,
        dataset,
        input_scale=extra.get("input_scale", 255.0),
        config_fingerprint=extra.get("config_fingerprint", ""),
    )
    out = _out_dir(args)
    metrics_path = out / "metrics.json"
    report.save_json(metrics_path)
    csv_path = out / "metrics.csv"
    report.save_csv(csv_path)
    name = net.spec.name
    summary = "\n".join([
        f"{'Model':<16}{'Accuracy':>10}{'IoU':>10}",
        f"{name:<16}{report.pixel_accuracy:>10.4f}{report.binary_iou:>10.4f}",
        f"({report.n_images} images)",
    ])
    return CommandResult(EXIT_OK, [metrics_path, csv_path], summary)


def cmd_predict(args) -> CommandResult:
    net, meta = load_checkpoint(args.checkpoint)
    with Image.open(args.image) as img:
        rgb = img.convert("RGB")
        h, w, _ = net.spec.input_shape
        if rgb.size != (w, h):
            rgb = rgb.resize((w, h), Image.BILINEAR)
        arr = np.asarray(rgb, dtype=np.uint8)
    from .train import predict as predict_map

    scale = meta.get("extra", {}).get("input_scale", 255.0)
    class_map = predict_map(net, arr, input_scale=scale)
    out_path = Path(args.out) if args.out else _out_dir(args) / (Path(args.image).stem + "_mask.png")
    out_path.parent.mkdir(parents=True, exist_ok=True)
    save_classmap_png(class_map, out_path)
    overlay_path = out_path.with_name(out_path.stem + "_overlay.png")
    Image.fromarray(overlay(arr, class_map), mode="RGB").save(overlay_path)
    present = sorted(int(c) for c in np.unique(class_map))
    summary = f"predicted classes {present} for {args.image}"
    return CommandResult(EXIT_OK, [out_path, overlay_path], summary)


def cmd_gradcheck(args) -> CommandResult:
    report = finite_difference_report(
        seed=args.seed or 0, trials=args.trials, wrong_sign=args.inject_wrong_sign
    )
    lines = [f"{'loss':<16}{'max rel err':>14}{'tolerance':>12}  status"]
    failures = []
    for name, err in report.items():
        ok = err <= GRADCHECK_TOLERANCE
        if not ok:
            failures.append(name)
        lines.append(
            f"{name:<16}{err:>14.3e}{GRADCHECK_TOLERANCE:>12.0e}  "
            f"{'ok' if ok else 'FAIL'}"
        )
    print("\n".join(lines))
    if failures:
        return CommandResult(
            EXIT_ERROR, [], f"gradient check failed for: {', '.join(failures)}"
        )
    return CommandResult(EXIT_OK, [], f"all gradients within {GRADCHECK_TOLERANCE:.0e}")


def _positive_int(raw: str) -> int:
    value = int(raw)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {raw}")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="override the random seed")
    common.add_argument("--out-dir", default="",
                        help="directory for artifacts (default segkit-out)")
    common.add_argument("--strict", action="store_true",
                        help="fail on the first malformed CSV row")

    parser = argparse.ArgumentParser(
        prog="segkit",
        description="Semantic segmentation toolkit: RLE codec, imbalance-aware "
                    "losses, encoder-decoder models, staged training.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("explore", parents=[common],
                       help="dataset statistics, histograms, and plots")
    p.add_argument("csv", help="annotation CSV path")
    p.set_defaults(func=cmd_explore)

    p = sub.add_parser("decode", parents=[common],
                       help="condense one image's annotations to an indexed PNG")
    p.add_argument("csv", help="annotation CSV path")
    p.add_argument("image_id", help="image to decode")
    p.add_argument("-o", "--out", default="", help="output PNG path")
    p.add_argument("--size", type=_positive_int, default=256,
                   help="output side length (default 256)")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("encode", parents=[common],
                       help="turn an indexed-PNG class map back into RLE rows")
    p.add_argument("mask", help="indexed PNG class map")
    p.add_argument("--image-id", default="", help="ImageId for the CSV rows")
    p.add_argument("-o", "--out", default="", help="output CSV path")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("make-toy", parents=[common],
                       help="generate a synthetic shape dataset")
    p.add_argument("--n-images", type=_positive_int, default=32)
    p.add_argument("--size", type=_positive_int, default=64)
    p.add_argument("--classes", default="1,2,3,4,5",
                   help="comma-separated class ids")
    p.add_argument("--probs", default="",
                   help="comma-separated spawn probabilities (default harmonic)")
    p.add_argument("--shapes", default="1,6", help="min,max shapes per image")
    p.add_argument("--noise", type=float, default=8.0)
    p.add_argument("-o", "--out", default="", help="dataset directory")
    p.set_defaults(func=cmd_make_toy)

    p = sub.add_parser("train", parents=[common],
                       help="run a training stage from a config file")
    p.add_argument("config", help="flat key=value config file")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common],
                       help="score a checkpoint on a dataset directory")
    p.add_argument("checkpoint", help="checkpoint .npz")
    p.add_argument("data", help="dataset directory (or its annotations.csv)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", parents=[common],
                       help="predict a mask and overlay for one image")
    p.add_argument("checkpoint", help="checkpoint .npz")
    p.add_argument("image", help="input image")
    p.add_argument("-o", "--out", default="", help="output mask PNG path")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("gradcheck", parents=[common],
                       help="compare analytic loss gradients to finite differences")
    p.add_argument("--trials", type=_positive_int, default=100)
    p.add_argument("--inject-wrong-sign", action="store_true",
                   help=argparse.SUPPRESS)  # negative control for the harness
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        result = args.func(args)
    except SegkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    for path in result.artifacts:
        print(f"wrote {path}")
    if result.summary:
        print(result.summary, file=sys.stderr if result.exit_code else sys.stdout)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
