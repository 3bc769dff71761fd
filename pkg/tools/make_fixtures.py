#!/usr/bin/env python3
"""Regenerate the packaged text fixtures under src/palmforge/data.

Everything is closed-form (no RNG), so rerunning this script reproduces the
committed files byte for byte. Layout:

  counting/   38 images, 187 ground-truth palms, 221 detections of which
              199 score >= 0.6 and 187 score >= 0.71 (none reach 1.0)
  testset/    the counting images plus 12 more at 45m (126 palms) and 3 at
              70m (66 palms), with altitude tags for grouped evaluation
  experiment/ a 3-variant demo spec, 20-ground-truth test set, and
              detections for 3 repetitions per variant; the red-bg variant
              is tuned so every repetition evaluates to mAP@0.5 = 0.65
"""

import json
import os
import shutil
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from palmforge.annotations import (  # noqa: E402
    BBox,
    Detection,
    GroundTruthAnnotation,
    write_detection_file,
    write_label_file,
)

DATA = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..",
                    "src", "palmforge", "data")

SLOT_W = 0.1


def slot_box(index, w=SLOT_W):
    col, row = index % 5, index // 5
    return BBox(cx=0.12 + 0.19 * col, cy=0.12 + 0.19 * row, w=w, h=w)


def write_txt(path, text):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w", encoding="ascii") as f:
        f.write(text)


def build_altitude_group(altitude, gt_counts, tp_conf, extras):
    """Per-image ground truth and detections for one altitude band.

    gt_counts: objects per image. tp_conf(k): confidence of the k-th matched
    object (global within the band). extras(i, image_gt_count): additional
    (slot, conf) detections for image i.
    """
    gt_files = {}
    det_files = {}
    k = 0
    for i, n in enumerate(gt_counts):
        image_id = f"test_{altitude}_{i:03d}"
        gts = [GroundTruthAnnotation(0, slot_box(s)) for s in range(n)]
        dets = []
        for s in range(n):
            conf = tp_conf(k)
            if conf is not None:
                dets.append(Detection(0, slot_box(s), conf))
            k += 1
        for slot, conf in extras(i, n):
            dets.append(Detection(0, slot_box(slot), conf))
        gt_files[image_id] = gts
        det_files[image_id] = dets
    return gt_files, det_files


def counting_band():
    # 35 images with 5 palms + 3 with 4 = 187 ground truth
    gt_counts = [5] * 35 + [4] * 3
    mediums = {i: 0.60 + ((i * 7) % 11) / 100 for i in range(12)}   # 12 in [0.60, 0.70]
    lows = {i: 0.10 + ((i * 13) % 50) / 100 for i in range(22)}     # 22 in [0.10, 0.59]

    def tp_conf(k):
        return 0.71 + ((k * 37) % 28) / 100  # 187 in [0.71, 0.98]

    def extras(i, n):
        out = []
        if i in mediums:
            out.append((5, mediums[i]))
        if i in lows:
            out.append((6, lows[i]))
        return out

    return build_altitude_group("25m", gt_counts, tp_conf, extras)


def mid_band():
    # 6 images with 11 + 6 with 10 = 126 ground truth at 45m
    gt_counts = [11] * 6 + [10] * 6
    misses = {i * 9 + 4 for i in range(12)}  # one undetected object per image

    def tp_conf(k):
        if k in misses:
            return None
        return 0.60 + ((k * 17) % 35) / 100

    def extras(i, n):
        return [(20, 0.55)]

    return build_altitude_group("45m", gt_counts, tp_conf, extras)


def high_band():
    gt_counts = [22] * 3  # 66 ground truth at 70m

    def tp_conf(k):
        return 0.65 + ((k * 11) % 30) / 100

    def extras(i, n):
        return [(24, 0.30)]

    return build_altitude_group("70m", gt_counts, tp_conf, extras)


def emit_set(root, gt_files, det_files, tags):
    for image_id, gts in gt_files.items():
        write_txt(os.path.join(root, "gt", image_id + ".txt"), write_label_file(gts))
    for image_id, dets in det_files.items():
        write_txt(os.path.join(root, "det", image_id + ".txt"), write_detection_file(dets))
    write_txt(os.path.join(root, "names.txt"), "palm\n")
    write_txt(os.path.join(root, "tags.json"),
              json.dumps(tags, indent=2, sort_keys=True) + "\n")


EXPERIMENT_SPEC = """\
master_seed = 20220901
test_gt = "test_gt"
repetitions = 3
iou_threshold = 0.5
conf_threshold = 0.6
out_dir = "runs"
names = ["palm"]

[generator]
output_size = [640, 360]
train_count = 6
val_count = 3
sprite_pool = "pools/sprites"
classes = ["palm"]
scale_range = [0.6, 1.0]

[generator.counts.palm]
train = [5, 10]
val = [5, 10]

[variants.red-bg]
freeze = "none"
detections = "detections/red-bg"
bg_pool_train = "pools/backgrounds/red/train"
bg_pool_val = "pools/backgrounds/red/val"

[variants.green-bg]
freeze = "none"
detections = "detections/green-bg"
bg_pool_train = "pools/backgrounds/green/train"
bg_pool_val = "pools/backgrounds/green/val"

[variants.mixed-bg]
freeze = "0-10"
detections = "detections/mixed-bg"
bg_pool_train = "pools/backgrounds/mixed/train"
bg_pool_val = "pools/backgrounds/mixed/val"
"""

# matched objects per repetition; with 20 ground truths and every match
# outranking every false positive, mAP@0.5 is exactly k/20
VARIANT_TPS = {
    "red-bg": ([13, 13, 13], 5),    # 0.65 everywhere: the baseline echo
    "green-bg": ([15, 15, 16], 3),  # 0.75 / 0.75 / 0.80
    "mixed-bg": ([14, 14, 15], 4),  # 0.70 / 0.70 / 0.75
}


def gt_object_box(index):
    img, pos = divmod(index, 4)
    return img, BBox(cx=0.2 + 0.2 * pos, cy=0.4, w=0.12, h=0.12)


def fp_box(j):
    return BBox(cx=0.15 + 0.18 * j, cy=0.8, w=0.1, h=0.1)


def emit_experiment(root):
    write_txt(os.path.join(root, "spec.toml"), EXPERIMENT_SPEC)
    per_image = {i: [] for i in range(5)}
    for k in range(20):
        img, box = gt_object_box(k)
        per_image[img].append(GroundTruthAnnotation(0, box))
    for img, gts in per_image.items():
        write_txt(os.path.join(root, "test_gt", f"exp_{img:03d}.txt"),
                  write_label_file(gts))
    for variant, (tps_per_rep, n_fp) in VARIANT_TPS.items():
        for rep, n_tp in enumerate(tps_per_rep, start=1):
            dets = {i: [] for i in range(5)}
            for t in range(n_tp):
                img, box = gt_object_box(t)
                dets[img].append(Detection(0, box, 0.95 - t * 0.01))
            for j in range(n_fp):
                dets[j % 5].append(Detection(0, fp_box(j), 0.45 - j * 0.01 - (rep - 1) * 0.003))
            for img, items in dets.items():
                write_txt(os.path.join(root, "detections", variant, f"rep{rep}",
                                       f"exp_{img:03d}.txt"),
                          write_detection_file(items))


def main():
    for sub in ("counting", "testset", "experiment"):
        shutil.rmtree(os.path.join(DATA, sub), ignore_errors=True)
    gt25, det25 = counting_band()
    gt45, det45 = mid_band()
    gt70, det70 = high_band()

    tags25 = {i: {"altitude": "25m"} for i in gt25}
    emit_set(os.path.join(DATA, "counting"), gt25, det25, tags25)

    gt_all = {**gt25, **gt45, **gt70}
    det_all = {**det25, **det45, **det70}
    tags_all = {}
    for i in gt_all:
        tags_all[i] = {"altitude": i.split("_")[1]}
    emit_set(os.path.join(DATA, "testset"), gt_all, det_all, tags_all)

    emit_experiment(os.path.join(DATA, "experiment"))

    n25 = sum(len(v) for v in gt25.values())
    nconf = sorted(d.confidence for ds in det25.values() for d in ds)
    print(f"counting: {len(gt25)} images, {n25} gt, {len(nconf)} det, "
          f"{sum(1 for c in nconf if c >= 0.6)} >= 0.6, "
          f"{sum(1 for c in nconf if c >= 0.71)} >= 0.71")
    print(f"testset: {len(gt_all)} images, {sum(len(v) for v in gt_all.values())} gt")


if __name__ == "__main__":
    main()
