"""Reading and writing of label files, detection files and dataset layouts.

Label files carry one object per line, `class cx cy w h` for ground truth
and `class cx cy w h conf` for detections, all coordinates normalized to
[0, 1] in center/size form and printed with exactly 6 decimal places.

Box validation tolerates an edge overhang of 1e-6: that is one ULP of the
6-decimal file format, so a box whose true corner sits exactly on the image
edge still parses after quantization. Anything beyond that is treated as
data corruption and rejected rather than clamped.
"""

import json
import math
import os
from dataclasses import dataclass, field

from palmforge.errors import ConfigError, ParseError, ValidationError

EDGE_TOL = 1e-6  # one ULP of the 6-decimal format
MICRO = 10 ** 6  # label coordinates quantize to integer micro-units


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in normalized center/size form."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0.0 and self.h > 0.0):
            raise ValidationError(f"box size must be positive, got w={self.w} h={self.h}")
        if self.w > 1.0 + EDGE_TOL or self.h > 1.0 + EDGE_TOL:
            raise ValidationError(f"box size exceeds image, got w={self.w} h={self.h}")
        x_min, y_min, x_max, y_max = self.corners()
        if (x_min < -EDGE_TOL or y_min < -EDGE_TOL
                or x_max > 1.0 + EDGE_TOL or y_max > 1.0 + EDGE_TOL):
            raise ValidationError(
                f"box straddles the image edge: corners "
                f"({x_min:.9f}, {y_min:.9f}, {x_max:.9f}, {y_max:.9f})"
            )

    def corners(self):
        """(x_min, y_min, x_max, y_max)."""
        return (self.cx - self.w / 2.0, self.cy - self.h / 2.0,
                self.cx + self.w / 2.0, self.cy + self.h / 2.0)

    @classmethod
    def from_corners(cls, x_min, y_min, x_max, y_max):
        return cls(cx=(x_min + x_max) / 2.0, cy=(y_min + y_max) / 2.0,
                   w=x_max - x_min, h=y_max - y_min)


@dataclass(frozen=True)
class GroundTruthAnnotation:
    class_id: int
    box: BBox

    def __post_init__(self):
        if self.class_id < 0:
            raise ValidationError(f"class id must be non-negative, got {self.class_id}")


@dataclass(frozen=True)
class Detection:
    class_id: int
    box: BBox
    confidence: float

    def __post_init__(self):
        if self.class_id < 0:
            raise ValidationError(f"class id must be non-negative, got {self.class_id}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValidationError(f"confidence must be in [0, 1], got {self.confidence}")


@dataclass
class ImageRecord:
    """One image's identity, annotation payload and metadata tags."""

    image_id: str
    split: str = ""
    width: int = 0
    height: int = 0
    annotations: list = field(default_factory=list)
    tags: dict = field(default_factory=dict)


def quantize6(x):
    """Round a normalized coordinate half-up to integer micro-units."""
    return int(math.floor(x * MICRO + 0.5))


def format6(x):
    return f"{x:.6f}"


def write_label_file(annotations) -> str:
    """Serialize ground-truth annotations; empty list gives an empty string."""
    lines = []
    for a in annotations:
        b = a.box
        lines.append(f"{a.class_id} {format6(b.cx)} {format6(b.cy)} "
                     f"{format6(b.w)} {format6(b.h)}\n")
    return "".join(lines)


def write_detection_file(detections) -> str:
    """Serialize detections with a trailing confidence field."""
    lines = []
    for d in detections:
        b = d.box
        lines.append(f"{d.class_id} {format6(b.cx)} {format6(b.cy)} "
                     f"{format6(b.w)} {format6(b.h)} {format6(d.confidence)}\n")
    return "".join(lines)


def _parse_lines(text, n_fields, path):
    for li, line in enumerate(text.splitlines(), start=1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) != n_fields:
            raise ParseError(f"expected {n_fields} fields, got {len(fields)}",
                             line=li, path=path)
        try:
            class_id = int(fields[0])
        except ValueError:
            raise ParseError(f"invalid class id {fields[0]!r}", line=li, path=path) from None
        try:
            values = [float(f) for f in fields[1:]]
        except ValueError:
            raise ParseError(f"invalid number in {line!r}", line=li, path=path) from None
        yield li, class_id, values


def _located(err, li, path):
    where = f"line {li}" if path is None else f"{path}: line {li}"
    return ValidationError(f"{where}: {err}")


def parse_label_file(text, path=None):
    """Parse ground-truth label text; tolerant of repeated spaces and a
    missing final newline. Raises ParseError (malformed line) or
    ValidationError (out-of-range coordinate)."""
    out = []
    for li, class_id, vals in _parse_lines(text, 5, path):
        try:
            out.append(GroundTruthAnnotation(class_id, BBox(*vals)))
        except ValidationError as err:
            raise _located(err, li, path) from None
    return out


def parse_detection_file(text, path=None):
    """Parse detection text (label fields plus confidence)."""
    out = []
    for li, class_id, vals in _parse_lines(text, 6, path):
        try:
            out.append(Detection(class_id, BBox(*vals[:4]), confidence=vals[4]))
        except ValidationError as err:
            raise _located(err, li, path) from None
    return out


def read_annotations_dir(path):
    """Read every .txt in a directory as ground truth: {image_id: [annotation]}."""
    return _read_dir(path, parse_label_file)


def read_detections_dir(path):
    """Read every .txt in a directory as detections: {image_id: [detection]}."""
    return _read_dir(path, parse_detection_file)


def _read_dir(path, parser):
    if not os.path.isdir(path):
        raise ConfigError(f"not a directory: {path}")
    out = {}
    for name in sorted(os.listdir(path)):
        if not name.endswith(".txt"):
            continue
        full = os.path.join(path, name)
        with open(full, "r", encoding="ascii") as f:
            out[name[:-4]] = parser(f.read(), path=full)
    return out


def read_tags_file(path):
    """Read the optional tags JSON: {image_id: {key: value}}."""
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    if not isinstance(data, dict):
        raise ValidationError(f"tags file {path} must hold an object at top level")
    return data


# --- dataset directory layout -------------------------------------------


SPLITS = ("train", "val")


def ensure_layout_dirs(root, overwrite=False):
    """Create the images/labels split directories under root.

    Refuses a pre-existing non-empty root unless overwrite is set; nothing
    is deleted, files are replaced individually.
    """
    if os.path.isdir(root) and os.listdir(root) and not overwrite:
        raise ConfigError(
            f"output root {root} exists and is not empty (pass overwrite to reuse)"
        )
    for sub in ("images", "labels"):
        for split in SPLITS:
            os.makedirs(os.path.join(root, sub, split), exist_ok=True)


def image_path(root, split, image_id):
    return os.path.join(root, "images", split, image_id + ".png")


def label_path(root, split, image_id):
    return os.path.join(root, "labels", split, image_id + ".txt")


def write_dataset_config(root, class_names):
    """Write the class-list / split-paths config consumed by detectors."""
    lines = ["train: images/train\n", "val: images/val\n", "names:\n"]
    lines += [f"  - {name}\n" for name in class_names]
    path = os.path.join(root, "dataset.yaml")
    with open(path, "w", encoding="ascii") as f:
        f.write("".join(lines))
    return path


def build_manifest(seed, class_names, records):
    """Assemble the dataset manifest from per-image records (in order)."""
    totals = {name: 0 for name in class_names}
    images = []
    for rec in records:
        counts = {name: 0 for name in class_names}
        for a in rec.annotations:
            counts[class_names[a.class_id]] += 1
        for name, n in counts.items():
            totals[name] += n
        images.append({
            "id": rec.image_id,
            "split": rec.split,
            "width": rec.width,
            "height": rec.height,
            "object_counts_per_class": counts,
            "tags": dict(rec.tags),
        })
    return {
        "seed": seed,
        "class_names": list(class_names),
        "images": images,
        "totals_per_class": totals,
    }


def write_manifest(root, manifest):
    path = os.path.join(root, "manifest.json")
    with open(path, "w", encoding="ascii") as f:
        f.write(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def emit_dataset_layout(root, rendered, class_names, seed, overwrite=False):
    """One-shot layout emission for in-memory images.

    rendered is a list of (ImageRecord, raster) pairs; every image gets a PNG
    plus a label file (possibly empty). Returns the manifest.
    """
    from palmforge.raster import save_png

    ensure_layout_dirs(root, overwrite=overwrite)
    for rec, pixels in rendered:
        save_png(pixels, image_path(root, rec.split, rec.image_id))
        with open(label_path(root, rec.split, rec.image_id), "w", encoding="ascii") as f:
            f.write(write_label_file(rec.annotations))
    write_dataset_config(root, class_names)
    manifest = build_manifest(seed, class_names, [rec for rec, _ in rendered])
    write_manifest(root, manifest)
    return manifest
