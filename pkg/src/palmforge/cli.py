"""Command-line entry point: generate, evaluate, count, experiment, charts.

Results go to stdout, progress to stderr. Exit codes: 0 success, 1 for
validation/parse/config errors, 2 for IO errors. The final stdout line of
`evaluate` is machine-parseable: `mAP@<tau> = <value>`.
"""

import argparse
import json
import os
import sys

from palmforge import annotations, metrics
from palmforge.errors import ConfigError, PalmforgeError
from palmforge.experiment import (
    load_experiment_spec,
    run_evaluation_phase,
    run_generation_phase,
    write_charts,
)
from palmforge.generator import generate_dataset, load_config


def _progress(quiet):
    if quiet:
        return None

    def report(done, total):
        step = max(1, total // 10)
        if done % step == 0 or done == total:
            print(f"  rendered {done}/{total} images", file=sys.stderr)

    return report


def _parse_range(text):
    try:
        name, span = text.split("=", 1)
        lo, hi = span.split("-", 1)
        return name.strip(), (int(lo), int(hi))
    except ValueError:
        raise ConfigError(f"expected CLASS=LO-HI, got {text!r}") from None


def _read_names(path):
    if path is None:
        return None
    with open(path, "r", encoding="utf-8") as f:
        lines = [line.strip() for line in f]
    names = []
    in_names = False
    if any(line.startswith("names:") for line in lines):
        # dataset.yaml style: indented "- name" entries under names:
        for line in lines:
            if line.startswith("names:"):
                in_names = True
            elif in_names and line.startswith("- "):
                names.append(line[2:].strip())
            elif in_names and line and not line.startswith("-"):
                in_names = False
    else:
        names = [line for line in lines if line and not line.startswith("#")]
    if not names:
        raise ConfigError(f"no class names found in {path}")
    return names


def cmd_generate(args):
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.size:
        try:
            w, h = args.size.lower().split("x")
            overrides["width"], overrides["height"] = int(w), int(h)
        except ValueError:
            raise ConfigError(f"expected WIDTHxHEIGHT, got {args.size!r}") from None
    for key in ("train_count", "val_count", "max_placement_attempts", "margin",
                "flip_prob_h", "flip_prob_v"):
        value = getattr(args, key)
        if value is not None:
            overrides[key] = value
    if args.flip_prob is not None:
        overrides.setdefault("flip_prob_h", args.flip_prob)
        overrides.setdefault("flip_prob_v", args.flip_prob)
    for key, attr in (("bg_pool_train", "bg_train"), ("bg_pool_val", "bg_val"),
                      ("sprite_pool", "sprites")):
        value = getattr(args, attr)
        if value is not None:
            overrides[key] = os.path.abspath(value)
    if args.scale_range:
        try:
            lo, hi = args.scale_range.split(":")
            overrides["scale_range"] = (float(lo), float(hi))
        except ValueError:
            raise ConfigError(f"expected LO:HI, got {args.scale_range!r}") from None
    if args.no_rotation:
        overrides["rotation"] = False
    if args.strict_count:
        overrides["strict_count"] = True
    if args.classes:
        overrides["class_names"] = [c.strip() for c in args.classes.split(",")]

    config = load_config(args.config, overrides)
    for spec_text, split in ((args.range, None), (args.train_range, "train"),
                             (args.val_range, "val")):
        for item in spec_text or []:
            name, span = _parse_range(item)
            entry = config.count_ranges.setdefault(
                name, {"train": (0, 0), "val": (0, 0)})
            if split is None:
                entry["train"] = entry["val"] = span
            else:
                entry[split] = span
    config.validate()

    manifest = generate_dataset(config, args.out, jobs=args.jobs,
                                overwrite=args.overwrite,
                                progress=_progress(args.quiet))
    per_split = {"train": {}, "val": {}}
    for image in manifest["images"]:
        for name, n in image["object_counts_per_class"].items():
            split = per_split[image["split"]]
            split[name] = split.get(name, 0) + n
    parts = [f"train={config.train_count}", f"val={config.val_count}"]
    for name in manifest["class_names"]:
        if name not in config.count_ranges and not manifest["totals_per_class"].get(name):
            continue  # pool classes that were never targeted stay out of the summary
        parts.append(f"{name}≈{per_split['train'].get(name, 0)}"
                     f"/{per_split['val'].get(name, 0)}")
    skipped = sum(s["count"] for s in manifest["skips"])
    if skipped:
        parts.append(f"skips={skipped}")
    print(" ".join(parts))
    return 0


def cmd_evaluate(args):
    gt = annotations.read_annotations_dir(args.gt)
    det = annotations.read_detections_dir(args.det)
    if not set(gt) & set(det):
        raise ConfigError(
            f"no overlapping image ids between {args.gt} and {args.det}")
    names = _read_names(args.names)
    curves = {}
    report = metrics.evaluate(gt, det, args.iou, args.conf, names,
                              interpolation=args.interpolation, curves=curves)
    tags = annotations.read_tags_file(args.tags) if args.tags else {}
    if args.group_by:
        report.groups = metrics.group_by_tag(gt, det, tags, args.group_by,
                                             args.iou, args.conf, names,
                                             args.interpolation)
    text = metrics.format_report(report)
    if args.group_by:
        for value in sorted(report.groups):
            text += f"\n[{args.group_by} = {value}]\n"
            text += metrics.format_report(report.groups[value])
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "report.json"), "w", encoding="ascii") as f:
            f.write(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
        with open(os.path.join(args.out, "report.txt"), "w", encoding="ascii") as f:
            f.write(text)
        for name, curve in curves.items():
            path = os.path.join(args.out, f"pr_{name}.csv")
            with open(path, "w", encoding="ascii") as f:
                f.write(curve.to_csv())
    print(text)
    map_text = f"{report.map:.4f}" if report.map is not None else "nan"
    print(f"mAP@{args.iou:g} = {map_text}")
    return 0


def cmd_count(args):
    det = annotations.read_detections_dir(args.det)
    gt = annotations.read_annotations_dir(args.gt) if args.gt else None
    names = _read_names(args.names)
    report = metrics.count_report(det, args.conf, gt, names)
    for name, entry in report["per_class"].items():
        if "labeled" in entry:
            print(f"{name}: predicted {entry['predicted']}, "
                  f"labeled {entry['labeled']}, delta {entry['delta']:+d}")
        else:
            print(f"{name}: predicted {entry['predicted']}")
    if not report["per_class"]:
        print(f"no detections at conf >= {args.conf:g}")
    if args.per_image:
        for image_id, counts in report["per_image"].items():
            detail = " ".join(f"{k}={v}" for k, v in sorted(counts.items())) or "-"
            print(f"  {image_id}: {detail}")
    return 0


def cmd_experiment(args):
    spec = load_experiment_spec(args.spec)
    if args.phase in ("generate", "all"):
        manifests = run_generation_phase(spec, jobs=args.jobs,
                                         overwrite=args.overwrite,
                                         progress=_progress(args.quiet))
        for name in manifests:
            print(f"generated dataset for variant {name}", file=sys.stderr)
        print("datasets ready. For each variant, train the external detector on")
        print("  <out_dir>/<variant>/dataset/dataset.yaml")
        print("and write one text file per test image, lines `class cx cy w h conf`, to")
        print("  <out_dir>/<variant>/detections/rep<k>/<image_id>.txt")
        print(f"for k = 1..{spec.repetitions}, then rerun with --phase evaluate.")
    if args.phase in ("evaluate", "all"):
        rows = run_evaluation_phase(spec)
        for row in rows:
            if row.maps:
                note = " (incomplete)" if row.incomplete else ""
                print(f"{row.variant}: mAP min={row.min_map:.4f} "
                      f"max={row.max_map:.4f} mean={row.mean_map:.4f} "
                      f"({len(row.maps)} reps){note}")
            else:
                print(f"{row.variant}: no repetitions evaluated")
        print(f"summary written to {os.path.join(spec.out_dir, 'summary.csv')}")
    return 0


def cmd_charts(args):
    with open(args.summary, "r", encoding="utf-8") as f:
        summary = json.load(f)
    for path in write_charts(summary, args.out):
        print(path)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="palmforge",
        description="Synthetic aerial training images and detector evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a synthetic dataset")
    p.add_argument("--config", required=True, help="generator config TOML")
    p.add_argument("--out", default="dataset", help="output dataset root")
    p.add_argument("--seed", type=int)
    p.add_argument("--size", help="output size, e.g. 1280x720")
    p.add_argument("--train-count", type=int, dest="train_count")
    p.add_argument("--val-count", type=int, dest="val_count")
    p.add_argument("--bg-train", dest="bg_train", help="training background pool")
    p.add_argument("--bg-val", dest="bg_val", help="validation background pool")
    p.add_argument("--sprites", help="sprite pool root (class subdirectories)")
    p.add_argument("--classes", help="comma-separated class order")
    p.add_argument("--range", action="append",
                   help="CLASS=LO-HI object count range for both splits")
    p.add_argument("--train-range", action="append", dest="train_range",
                   help="CLASS=LO-HI for the train split")
    p.add_argument("--val-range", action="append", dest="val_range",
                   help="CLASS=LO-HI for the val split")
    p.add_argument("--scale-range", dest="scale_range", help="LO:HI sprite scale")
    p.add_argument("--no-rotation", action="store_true", dest="no_rotation")
    p.add_argument("--flip-prob", type=float, dest="flip_prob")
    p.add_argument("--flip-prob-h", type=float, dest="flip_prob_h")
    p.add_argument("--flip-prob-v", type=float, dest="flip_prob_v")
    p.add_argument("--max-attempts", type=int, dest="max_placement_attempts")
    p.add_argument("--margin", type=int)
    p.add_argument("--strict-count", action="store_true", dest="strict_count")
    p.add_argument("--overwrite", action="store_true")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="score detections against ground truth")
    p.add_argument("--gt", required=True, help="ground-truth label directory")
    p.add_argument("--det", required=True, help="detection directory")
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--conf", type=float, default=0.6)
    p.add_argument("--tags", help="tags JSON {image_id: {key: value}}")
    p.add_argument("--group-by", dest="group_by", help="tag key for sub-reports")
    p.add_argument("--names", help="class-names file (plain list or dataset.yaml)")
    p.add_argument("--interpolation", choices=("all", "11point"), default="all")
    p.add_argument("--out", help="directory for report.json/report.txt/pr_*.csv")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("count", help="confidence-thresholded object counts")
    p.add_argument("--det", required=True)
    p.add_argument("--gt")
    p.add_argument("--conf", type=float, default=0.6)
    p.add_argument("--names", help="class-names file")
    p.add_argument("--per-image", action="store_true", dest="per_image")
    p.set_defaults(func=cmd_count)

    p = sub.add_parser("experiment", help="run the experiment grid")
    p.add_argument("--spec", required=True, help="experiment spec TOML")
    p.add_argument("--phase", choices=("generate", "evaluate", "all"), default="all")
    p.add_argument("--overwrite", action="store_true")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("charts", help="render SVG charts from a summary JSON")
    p.add_argument("--summary", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_charts)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors; our contract reserves 2 for IO
        return 0 if not exc.code else 1
    try:
        return args.func(args)
    except PalmforgeError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except OSError as err:
        print(f"io error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
