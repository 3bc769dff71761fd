"""Detection evaluation: IoU, greedy matching, PR curves, AP, mAP, counting.

Matching is per image and per class: detections are taken in descending
confidence order (ties break on image id, then input order) and each claims
the unmatched ground-truth box of highest IoU, provided that IoU reaches
the threshold. AP integrates the precision envelope over recall
(all-point interpolation; an 11-point legacy mode is available), and mAP
averages AP over the classes that have ground truth. Classes that appear
only in detections are excluded from the mean and flagged.

Confidence thresholds affect counting reports and the TP/FP/FN totals
only; AP always sweeps the full ranking.
"""

from dataclasses import dataclass, field

from palmforge.errors import EmptyEvaluationError, ValidationError


def iou(a, b) -> float:
    """Intersection area over union area of two normalized boxes."""
    ax0, ay0, ax1, ay1 = a.corners()
    bx0, by0, bx1, by1 = b.corners()
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return inter / union


@dataclass
class MatchOutcome:
    """Greedy matching result for one image and one class.

    order[i] is the index (into the input detections) of the i-th ranked
    detection; flags[i] is True for TP; matched_gt[i] is the claimed
    ground-truth index or None.
    """

    order: list
    flags: list
    matched_gt: list
    fn: int


def match(detections, ground_truths, iou_threshold) -> MatchOutcome:
    """Match one image's detections of one class against its ground truths."""
    order = sorted(range(len(detections)), key=lambda i: (-detections[i].confidence, i))
    taken = [False] * len(ground_truths)
    flags = []
    matched = []
    for i in order:
        best_iou = 0.0
        best_j = None
        for j, gt in enumerate(ground_truths):
            if taken[j]:
                continue
            v = iou(detections[i].box, gt.box)
            if v > best_iou:  # strict: IoU ties resolve to the lowest index
                best_iou = v
                best_j = j
        if best_j is not None and best_iou >= iou_threshold:
            taken[best_j] = True
            flags.append(True)
            matched.append(best_j)
        else:
            flags.append(False)
            matched.append(None)
    return MatchOutcome(order=order, flags=flags, matched_gt=matched,
                        fn=taken.count(False))


@dataclass
class PRCurve:
    """Precision/recall traced over the confidence ranking."""

    confidences: list
    precisions: list
    recalls: list
    n_gt: int
    n_det: int

    def rows(self):
        """(rank, confidence, precision, recall) tuples, rank from 1."""
        return [(i + 1, self.confidences[i], self.precisions[i], self.recalls[i])
                for i in range(self.n_det)]

    def to_csv(self) -> str:
        lines = ["rank,conf,precision,recall\n"]
        for rank, conf, prec, rec in self.rows():
            lines.append(f"{rank},{conf:.6f},{prec:.9f},{rec:.9f}\n")
        return "".join(lines)


def average_precision(flags, n_gt, confidences=None, interpolation="all"):
    """AP from ranked TP/FP flags plus the PR curve behind it.

    flags are True/False per detection in global rank order; n_gt is the
    class's ground-truth count (must be >= 1).
    """
    if n_gt < 1:
        raise ValidationError("average precision needs at least one ground truth")
    if confidences is None:
        confidences = [0.0] * len(flags)
    tp = 0
    fp = 0
    precisions = []
    recalls = []
    for is_tp in flags:
        if is_tp:
            tp += 1
        else:
            fp += 1
        precisions.append(tp / (tp + fp))
        recalls.append(tp / n_gt)
    envelope = list(precisions)
    for i in range(len(envelope) - 2, -1, -1):
        envelope[i] = max(envelope[i], envelope[i + 1])
    if interpolation == "all":
        # every TP raises recall by exactly one 1/n_gt step, so the area is
        # the interpolated precision summed at TP ranks, divided once by
        # n_gt; a perfect ranking yields exactly 1.0 with no float drift
        ap = sum(envelope[i] for i, is_tp in enumerate(flags) if is_tp) / n_gt
    elif interpolation == "11point":
        total = 0.0
        for k in range(11):
            r = k / 10.0
            p = 0.0
            for i in range(len(flags)):
                if recalls[i] >= r:
                    p = envelope[i]
                    break
            total += p
        ap = total / 11.0
    else:
        raise ValidationError(f"unknown interpolation {interpolation!r}")
    curve = PRCurve(confidences=list(confidences), precisions=precisions,
                    recalls=recalls, n_gt=n_gt, n_det=len(flags))
    return ap, curve


@dataclass
class EvalReport:
    """Per-class AP plus thresholded TP/FP/FN totals and their mean AP."""

    iou_threshold: float
    conf_threshold: float
    n_images: int
    class_stats: dict          # name -> {class_id, n_gt, n_det, ap, tp, fp, fn, ...}
    map: float                 # None when no class was evaluable (grouped reports)
    excluded: list             # class names with detections but no ground truth
    interpolation: str = "all"
    groups: dict = field(default_factory=dict)

    def to_dict(self):
        out = {
            "iou_threshold": self.iou_threshold,
            "conf_threshold": self.conf_threshold,
            "n_images": self.n_images,
            "interpolation": self.interpolation,
            "map": self.map,
            "excluded_classes": list(self.excluded),
            "classes": self.class_stats,
        }
        if self.groups:
            out["groups"] = {k: v.to_dict() for k, v in self.groups.items()}
        return out


def map_at(class_stats, iou_threshold, conf_threshold=0.6, n_images=0,
           interpolation="all", allow_empty=False) -> EvalReport:
    """Assemble an EvalReport; mAP is the mean AP over evaluable classes."""
    aps = [s["ap"] for s in class_stats.values() if s["evaluable"]]
    excluded = sorted(n for n, s in class_stats.items() if s["flagged"])
    if not aps:
        if not allow_empty:
            raise EmptyEvaluationError("no class has any ground truth to evaluate")
        mean_ap = None
    else:
        mean_ap = sum(aps) / len(aps)
    return EvalReport(iou_threshold=iou_threshold, conf_threshold=conf_threshold,
                      n_images=n_images, class_stats=class_stats, map=mean_ap,
                      excluded=excluded, interpolation=interpolation)


def _class_ids(gt_by_image, det_by_image, class_names):
    ids = set()
    for anns in gt_by_image.values():
        ids.update(a.class_id for a in anns)
    for dets in det_by_image.values():
        ids.update(d.class_id for d in dets)
    if class_names:
        ids.update(range(len(class_names)))
    return sorted(ids)


def _class_label(class_id, class_names):
    if class_names and class_id < len(class_names):
        return class_names[class_id]
    return f"class_{class_id}"


def evaluate(gt_by_image, det_by_image, iou_threshold=0.5, conf_threshold=0.6,
             class_names=None, interpolation="all", allow_empty=False,
             curves=None) -> EvalReport:
    """Evaluate detections against ground truth, both as {image_id: [obj]}.

    Matching never crosses image boundaries. Pass a dict as `curves` to
    receive the per-class PRCurve objects keyed like the report.
    """
    image_ids = sorted(set(gt_by_image) | set(det_by_image))
    class_stats = {}
    for class_id in _class_ids(gt_by_image, det_by_image, class_names):
        ranked = []  # (sort key, confidence, is_tp)
        n_gt = 0
        for image_id in image_ids:
            gts = [a for a in gt_by_image.get(image_id, []) if a.class_id == class_id]
            dets = [d for d in det_by_image.get(image_id, []) if d.class_id == class_id]
            n_gt += len(gts)
            outcome = match(dets, gts, iou_threshold)
            for rank_pos, det_idx in enumerate(outcome.order):
                conf = dets[det_idx].confidence
                ranked.append(((-conf, image_id, det_idx), conf, outcome.flags[rank_pos]))
        ranked.sort(key=lambda r: r[0])
        confs = [r[1] for r in ranked]
        flags = [r[2] for r in ranked]
        tp_thr = sum(1 for c, f in zip(confs, flags) if f and c >= conf_threshold)
        fp_thr = sum(1 for c, f in zip(confs, flags) if not f and c >= conf_threshold)
        evaluable = n_gt >= 1
        if evaluable:
            ap, curve = average_precision(flags, n_gt, confs, interpolation)
        else:
            ap, curve = None, PRCurve(confs, [], [], 0, len(flags))
        name = _class_label(class_id, class_names)
        class_stats[name] = {
            "class_id": class_id,
            "n_gt": n_gt,
            "n_det": len(flags),
            "ap": ap,
            "tp": tp_thr,
            "fp": fp_thr,
            "fn": n_gt - tp_thr,
            "evaluable": evaluable,
            "flagged": not evaluable and len(flags) > 0,
        }
        if curves is not None:
            curves[name] = curve
    if not class_stats:
        raise EmptyEvaluationError("no annotations or detections found")
    return map_at(class_stats, iou_threshold, conf_threshold, len(image_ids),
                  interpolation, allow_empty=allow_empty)


def group_by_tag(gt_by_image, det_by_image, tags, key, iou_threshold=0.5,
                 conf_threshold=0.6, class_names=None, interpolation="all"):
    """Independent EvalReport per tag value; untagged images group together."""
    groups = {}
    for image_id in sorted(set(gt_by_image) | set(det_by_image)):
        value = tags.get(image_id, {}).get(key, "untagged")
        groups.setdefault(str(value), []).append(image_id)
    out = {}
    for value in sorted(groups):
        ids = groups[value]
        out[value] = evaluate(
            {i: gt_by_image.get(i, []) for i in ids},
            {i: det_by_image.get(i, []) for i in ids},
            iou_threshold, conf_threshold, class_names, interpolation,
            allow_empty=True,
        )
    return out


def count_report(det_by_image, conf_threshold=0.6, gt_by_image=None, class_names=None):
    """Detections at or above the threshold, per class and per image.

    When ground truth is supplied each class also reports its labeled total
    and the predicted-minus-labeled delta.
    """
    if not 0.0 <= conf_threshold <= 1.0:
        raise ValidationError(f"confidence threshold must be in [0, 1], got {conf_threshold}")
    ids = set(det_by_image)
    if gt_by_image:
        ids |= set(gt_by_image)
    per_image = {}
    predicted = {}
    labeled = {}
    for image_id in sorted(ids):
        counts = {}
        for d in det_by_image.get(image_id, []):
            if d.confidence >= conf_threshold:
                name = _class_label(d.class_id, class_names)
                counts[name] = counts.get(name, 0) + 1
                predicted[name] = predicted.get(name, 0) + 1
        per_image[image_id] = counts
        if gt_by_image is not None:
            for a in gt_by_image.get(image_id, []):
                name = _class_label(a.class_id, class_names)
                labeled[name] = labeled.get(name, 0) + 1
    per_class = {}
    for name in sorted(set(predicted) | set(labeled)):
        entry = {"predicted": predicted.get(name, 0)}
        if gt_by_image is not None:
            entry["labeled"] = labeled.get(name, 0)
            entry["delta"] = entry["predicted"] - entry["labeled"]
        per_class[name] = entry
    return {
        "conf_threshold": conf_threshold,
        "per_class": per_class,
        "per_image": per_image,
        "total_predicted": sum(predicted.values()),
    }


def format_report(report: EvalReport) -> str:
    """Render an EvalReport as a fixed-width text table."""
    lines = []
    header = (f"{'class':<14} {'n_gt':>6} {'n_det':>6} {'AP':>8} "
              f"{'TP':>5} {'FP':>5} {'FN':>5}")
    lines.append(header)
    lines.append("-" * len(header))
    for name in sorted(report.class_stats):
        s = report.class_stats[name]
        ap = f"{s['ap']:.4f}" if s["ap"] is not None else "-"
        mark = " (no gt)" if s["flagged"] else ""
        lines.append(f"{name:<14} {s['n_gt']:>6} {s['n_det']:>6} {ap:>8} "
                     f"{s['tp']:>5} {s['fp']:>5} {s['fn']:>5}{mark}")
    map_text = f"{report.map:.4f}" if report.map is not None else "-"
    lines.append(f"mean AP over {sum(1 for s in report.class_stats.values() if s['evaluable'])} "
                 f"class(es) at IoU {report.iou_threshold:g}: {map_text}  "
                 f"(counts at conf >= {report.conf_threshold:g}, "
                 f"{report.n_images} images)")
    return "\n".join(lines) + "\n"
