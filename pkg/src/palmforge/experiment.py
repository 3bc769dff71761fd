"""Config-driven experiment grid: dataset variants, repeated evaluation, summaries.

An experiment spec (TOML) names variants that differ in generator settings.
The generation phase builds one dataset per variant, seeding each variant
from (master seed, variant name). Training/inference happens outside this
package: an external detector consumes runs/<variant>/dataset/dataset.yaml
and must leave one detection text file per test image under
runs/<variant>/detections/rep<k>/ (or wherever the variant's `detections`
key points). The evaluation phase scores every repetition against the
shared test ground truth and writes summary.csv, summary.json and SVG
charts; repetitions with a missing detections directory mark the row
incomplete but do not stop the run.
"""

import csv
import io
import json
import os
from dataclasses import dataclass, field, replace

from palmforge.annotations import read_annotations_dir, read_detections_dir, read_tags_file
from palmforge.charts import render_charts
from palmforge.errors import ConfigError, GenerationError, PalmforgeError
from palmforge.generator import config_from_dict, generate_dataset, mix_seed
from palmforge.metrics import count_report, evaluate, format_report, group_by_tag

_VARIANT_KEYS = {"detections", "freeze", "repetitions", "iou_threshold",
                 "conf_threshold", "group_by"}


@dataclass
class ExperimentVariant:
    name: str
    generator: dict = field(default_factory=dict)
    detections: str = None   # detections root holding rep<k>/ subdirectories
    freeze: str = None       # opaque metadata echoed into the summary
    repetitions: int = None  # per-variant overrides; None falls back to the spec
    iou_threshold: float = None
    conf_threshold: float = None
    group_by: str = None


@dataclass
class ExperimentSpec:
    master_seed: int
    test_gt: str
    variants: list
    base_dir: str
    generator: dict = field(default_factory=dict)  # shared generator defaults
    tags: str = None
    names: list = None
    repetitions: int = 3
    iou_threshold: float = 0.5
    conf_threshold: float = 0.6
    group_by: str = None
    out_dir: str = "runs"


@dataclass
class SummaryRow:
    variant: str
    maps: list
    min_map: float
    max_map: float
    mean_map: float
    ap_ranges: dict
    counts: dict
    reps: list
    missing_reps: list
    incomplete: bool
    freeze: str = None


def load_experiment_spec(path) -> ExperimentSpec:
    try:
        import tomllib
    except ImportError:
        import tomli as tomllib
    with open(path, "rb") as f:
        try:
            data = tomllib.load(f)
        except tomllib.TOMLDecodeError as err:
            raise ConfigError(f"{path}: {err}") from None
    base = os.path.dirname(os.path.abspath(path))
    if "test_gt" not in data:
        raise ConfigError(f"{path}: experiment spec needs a test_gt directory")
    variants = []
    seen = set()
    for name, table in data.get("variants", {}).items():
        if name in seen:
            raise ConfigError(f"{path}: duplicate variant {name!r}")
        seen.add(name)
        if not isinstance(table, dict):
            raise ConfigError(f"{path}: variant {name!r} must be a table")
        gen = {k: v for k, v in table.items() if k not in _VARIANT_KEYS}
        variants.append(ExperimentVariant(
            name=name,
            generator=gen,
            detections=table.get("detections"),
            freeze=table.get("freeze"),
            repetitions=table.get("repetitions"),
            iou_threshold=table.get("iou_threshold"),
            conf_threshold=table.get("conf_threshold"),
            group_by=table.get("group_by"),
        ))
    return ExperimentSpec(
        master_seed=data.get("master_seed", 0),
        test_gt=os.path.join(base, data["test_gt"]),
        variants=variants,
        base_dir=base,
        generator=data.get("generator", {}),
        tags=os.path.join(base, data["tags"]) if data.get("tags") else None,
        names=data.get("names"),
        repetitions=data.get("repetitions", 3),
        iou_threshold=data.get("iou_threshold", 0.5),
        conf_threshold=data.get("conf_threshold", 0.6),
        group_by=data.get("group_by"),
        out_dir=os.path.join(base, data.get("out_dir", "runs")),
    )


def variant_config(spec: ExperimentSpec, variant: ExperimentVariant):
    """Generator config for a variant; its seed derives from the variant name.

    Variant fields override the spec-level [generator] table. Any explicit
    seed is replaced by the derived one so variants stay independent.
    """
    merged = dict(spec.generator)
    merged.update(variant.generator)
    cfg = config_from_dict(merged, spec.base_dir, origin=f"variant {variant.name!r}")
    return replace(cfg, seed=mix_seed(spec.master_seed, variant.name))


def run_generation_phase(spec: ExperimentSpec, jobs=1, overwrite=False, progress=None):
    """Generate one dataset per variant under out_dir/<variant>/dataset."""
    manifests = {}
    for variant in spec.variants:
        cfg = variant_config(spec, variant)
        out_root = os.path.join(spec.out_dir, variant.name, "dataset")
        try:
            manifests[variant.name] = generate_dataset(
                cfg, out_root, jobs=jobs, overwrite=overwrite, progress=progress)
        except PalmforgeError as err:
            raise GenerationError(f"variant {variant.name!r}: {err}") from err
    return manifests


def _detections_root(spec, variant):
    if variant.detections:
        return os.path.join(spec.base_dir, variant.detections)
    return os.path.join(spec.out_dir, variant.name, "detections")


def run_evaluation_phase(spec: ExperimentSpec):
    """Evaluate every (variant, repetition) and write summary files and charts."""
    gt = read_annotations_dir(spec.test_gt)
    tags = read_tags_file(spec.tags) if spec.tags else {}
    rows = []
    for variant in spec.variants:
        reps_wanted = variant.repetitions or spec.repetitions
        tau = variant.iou_threshold if variant.iou_threshold is not None else spec.iou_threshold
        theta = (variant.conf_threshold if variant.conf_threshold is not None
                 else spec.conf_threshold)
        group_key = variant.group_by or spec.group_by
        det_root = _detections_root(spec, variant)
        reps = []
        missing = []
        for k in range(1, reps_wanted + 1):
            rep_dir = os.path.join(det_root, f"rep{k}")
            if not os.path.isdir(rep_dir):
                missing.append(k)
                continue
            det = read_detections_dir(rep_dir)
            report = evaluate(gt, det, tau, theta, spec.names)
            if group_key:
                report.groups = group_by_tag(gt, det, tags, group_key, tau, theta,
                                             spec.names)
            counts = count_report(det, theta, gt, spec.names)
            _write_rep_report(spec, variant.name, k, report)
            entry = {
                "rep": k,
                "map": report.map,
                "ap": {n: s["ap"] for n, s in report.class_stats.items()},
                "tp": sum(s["tp"] for s in report.class_stats.values()),
                "fp": sum(s["fp"] for s in report.class_stats.values()),
                "fn": sum(s["fn"] for s in report.class_stats.values()),
                "counts": counts["per_class"],
            }
            if group_key:
                entry["group_maps"] = {g: r.map for g, r in report.groups.items()}
            reps.append(entry)
        maps = [r["map"] for r in reps]
        ap_ranges = {}
        for r in reps:
            for name, ap in r["ap"].items():
                if ap is None:
                    continue
                lo, hi = ap_ranges.get(name, (ap, ap))
                ap_ranges[name] = (min(lo, ap), max(hi, ap))
        count_summary = {}
        for r in reps:
            for name, entry in r["counts"].items():
                got = count_summary.setdefault(
                    name, {"predicted_min": entry["predicted"],
                           "predicted_max": entry["predicted"],
                           "labeled": entry.get("labeled")})
                got["predicted_min"] = min(got["predicted_min"], entry["predicted"])
                got["predicted_max"] = max(got["predicted_max"], entry["predicted"])
        rows.append(SummaryRow(
            variant=variant.name,
            maps=maps,
            min_map=min(maps) if maps else None,
            max_map=max(maps) if maps else None,
            mean_map=sum(maps) / len(maps) if maps else None,
            ap_ranges={k: list(v) for k, v in sorted(ap_ranges.items())},
            counts=count_summary,
            reps=reps,
            missing_reps=missing,
            incomplete=bool(missing),
            freeze=variant.freeze,
        ))
    _write_summary(spec, rows)
    return rows


def _write_rep_report(spec, variant, rep, report):
    rep_dir = os.path.join(spec.out_dir, variant, "report", f"rep{rep}")
    os.makedirs(rep_dir, exist_ok=True)
    with open(os.path.join(rep_dir, "report.json"), "w", encoding="ascii") as f:
        f.write(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    with open(os.path.join(rep_dir, "report.txt"), "w", encoding="ascii") as f:
        f.write(format_report(report))


def summary_to_dict(spec: ExperimentSpec, rows):
    return {
        "iou_threshold": spec.iou_threshold,
        "conf_threshold": spec.conf_threshold,
        "repetitions": spec.repetitions,
        "group_by": spec.group_by,
        "rows": [
            {
                "variant": row.variant,
                "freeze": row.freeze,
                "incomplete": row.incomplete,
                "missing_reps": row.missing_reps,
                "maps": row.maps,
                "min_map": row.min_map,
                "max_map": row.max_map,
                "mean_map": row.mean_map,
                "ap_ranges": row.ap_ranges,
                "counts": row.counts,
                "reps": row.reps,
            }
            for row in rows
        ],
    }


def summary_csv(rows) -> str:
    """Per-repetition CSV: variant, rep, mAP, per-class APs, thresholded counts."""
    classes = sorted({name for row in rows for r in row.reps for name in r["ap"]})
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["variant", "rep", "mAP"] + [f"ap_{c}" for c in classes]
                    + ["tp", "fp", "fn"])
    for row in rows:
        for r in row.reps:
            aps = [(f"{r['ap'][c]:.6f}" if r["ap"].get(c) is not None else "")
                   for c in classes]
            map_text = f"{r['map']:.6f}" if r["map"] is not None else ""
            writer.writerow([row.variant, r["rep"], map_text] + aps
                            + [r["tp"], r["fp"], r["fn"]])
    return buf.getvalue()


def _write_summary(spec, rows):
    os.makedirs(spec.out_dir, exist_ok=True)
    summary = summary_to_dict(spec, rows)
    with open(os.path.join(spec.out_dir, "summary.json"), "w", encoding="ascii") as f:
        f.write(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    with open(os.path.join(spec.out_dir, "summary.csv"), "w", encoding="ascii") as f:
        f.write(summary_csv(rows))
    if rows:
        charts_dir = os.path.join(spec.out_dir, "charts")
        os.makedirs(charts_dir, exist_ok=True)
        for name, svg in render_charts(summary).items():
            with open(os.path.join(charts_dir, name), "w", encoding="ascii") as f:
                f.write(svg)


def write_charts(summary, out_dir):
    """Regenerate charts from a summary dict (the `charts` subcommand)."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for name, svg in render_charts(summary).items():
        path = os.path.join(out_dir, name)
        with open(path, "w", encoding="ascii") as f:
            f.write(svg)
        written.append(path)
    return written
