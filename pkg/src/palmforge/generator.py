"""Synthetic dataset generation: seeded sprite placement and compositing.

Every image is rendered from its own RNG stream, derived from
(master seed, split, image index) by a splitmix64 mix, so generation is a
pure function of (config, pool contents) and identical whether images are
rendered serially or across worker processes.

Per-image draw order (the determinism contract — do not reorder):
  1. background index
  2. one target count per configured class, in class order
  3. per object: sprite index, angle (only when rotation is on), scale,
     horizontal flip, vertical flip, then one (x, y) pair per placement
     attempt

Label boxes are quantized to the 6-decimal grid of the label format at
placement time and overlap/containment are enforced with integer
arithmetic on that grid, so the boxes in the written files are disjoint
and inside [0, 1] exactly, not merely up to float rounding.
"""

import os
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from palmforge import kernels
from palmforge.annotations import (
    BBox,
    GroundTruthAnnotation,
    ImageRecord,
    MICRO,
    SPLITS,
    build_manifest,
    ensure_layout_dirs,
    image_path,
    label_path,
    quantize6,
    write_dataset_config,
    write_label_file,
    write_manifest,
)
from palmforge.errors import ConfigError, GenerationError, SpriteTooLargeError
from palmforge.raster import Transform, apply_transform, load_raster, load_sprite, save_png

_MASK64 = (1 << 64) - 1
# splitmix64 constants (Steele, Lea & Flood's mixer)
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def _mix64(x):
    x &= _MASK64
    x = ((x ^ (x >> 30)) * _MIX1) & _MASK64
    x = ((x ^ (x >> 27)) * _MIX2) & _MASK64
    return (x ^ (x >> 31)) & _MASK64


def mix_seed(master, *tokens):
    """Mix a master seed with string/int tokens into a 64-bit seed."""
    h = _mix64((master + _GAMMA) & _MASK64)
    for token in tokens:
        if isinstance(token, str):
            data = token.encode("utf-8")
            h = _mix64(h ^ len(data))
            for b in data:
                h = _mix64((h + b + _GAMMA) & _MASK64)
        else:
            h = _mix64((h + (int(token) & _MASK64) + _GAMMA) & _MASK64)
    return h


def derive_image_seed(master_seed, split, image_index):
    """Stable per-image seed; distinct (split, index) pairs give distinct streams."""
    return mix_seed(master_seed, split, image_index)


@dataclass
class GeneratorConfig:
    seed: int = 0
    width: int = 1280
    height: int = 720
    train_count: int = 0
    val_count: int = 0
    bg_pool_train: str = ""
    bg_pool_val: str = ""
    sprite_pool: str = ""
    # class name -> {"train": (lo, hi), "val": (lo, hi)}, inclusive ranges
    count_ranges: dict = field(default_factory=dict)
    class_names: list = None  # explicit order; default: sorted pool subdirs
    scale_range: tuple = (0.8, 1.2)
    rotation: bool = True
    flip_prob_h: float = 0.5
    flip_prob_v: float = 0.5
    max_placement_attempts: int = 100
    strict_count: bool = False
    margin: int = 0  # extra spacing between boxes, in pixels

    def validate(self):
        if self.width < 1 or self.height < 1:
            raise ConfigError(f"output size must be positive, got {self.width}x{self.height}")
        if self.train_count < 0 or self.val_count < 0:
            raise ConfigError("image counts must be non-negative")
        lo, hi = self.scale_range
        if not (0.0 < lo <= hi <= 8.0):
            raise ConfigError(f"scale range must satisfy 0 < lo <= hi <= 8, got {self.scale_range}")
        for p in (self.flip_prob_h, self.flip_prob_v):
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"flip probability must be in [0, 1], got {p}")
        if self.max_placement_attempts < 1:
            raise ConfigError("max_placement_attempts must be positive")
        if self.margin < 0:
            raise ConfigError("margin must be non-negative")
        for name, ranges in self.count_ranges.items():
            for split in SPLITS:
                lo, hi = ranges[split]
                if not (0 <= lo <= hi):
                    raise ConfigError(f"count range for {name}/{split} must satisfy "
                                      f"0 <= min <= max, got ({lo}, {hi})")


def load_config(path, overrides=None) -> GeneratorConfig:
    """Read a generator config TOML; relative pool paths resolve against it."""
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
    cfg = config_from_dict(data, base, path)
    if overrides:
        cfg = replace(cfg, **overrides)
    cfg.validate()
    return cfg


def config_from_dict(data, base_dir, origin="config") -> GeneratorConfig:
    known = {
        "seed", "output_size", "train_count", "val_count", "bg_pool_train",
        "bg_pool_val", "sprite_pool", "counts", "classes", "scale_range",
        "rotation", "flip_prob", "flip_prob_h", "flip_prob_v",
        "max_placement_attempts", "strict_count", "margin",
    }
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"{origin}: unknown generator fields {sorted(unknown)}")

    def path_of(key):
        value = data.get(key, "")
        return os.path.join(base_dir, value) if value else ""

    size = data.get("output_size", [1280, 720])
    if not (isinstance(size, (list, tuple)) and len(size) == 2):
        raise ConfigError(f"{origin}: output_size must be [width, height]")
    counts = {}
    for name, spec in data.get("counts", {}).items():
        if isinstance(spec, dict):
            try:
                counts[name] = {s: tuple(spec[s]) for s in SPLITS}
            except KeyError as err:
                raise ConfigError(f"{origin}: counts.{name} needs {err} range") from None
        else:
            counts[name] = {s: tuple(spec) for s in SPLITS}
    flip = data.get("flip_prob", 0.5)
    return GeneratorConfig(
        seed=data.get("seed", 0),
        width=int(size[0]),
        height=int(size[1]),
        train_count=data.get("train_count", 0),
        val_count=data.get("val_count", 0),
        bg_pool_train=path_of("bg_pool_train"),
        bg_pool_val=path_of("bg_pool_val"),
        sprite_pool=path_of("sprite_pool"),
        count_ranges=counts,
        class_names=data.get("classes"),
        scale_range=tuple(data.get("scale_range", (0.8, 1.2))),
        rotation=data.get("rotation", True),
        flip_prob_h=data.get("flip_prob_h", flip),
        flip_prob_v=data.get("flip_prob_v", flip),
        max_placement_attempts=data.get("max_placement_attempts", 100),
        strict_count=data.get("strict_count", False),
        margin=data.get("margin", 0),
    )


@dataclass(frozen=True)
class Placement:
    source_id: str
    class_id: int
    transform: Transform
    x0: int
    y0: int
    box: BBox


class Pools:
    """Sprite and background pools, loaded once and read-only afterwards."""

    def __init__(self, sprites, backgrounds, class_names):
        self.sprites = sprites          # class name -> [Sprite]
        self.backgrounds = backgrounds  # split -> [(id, raster)]
        self.class_names = class_names


def load_pools(config: GeneratorConfig) -> Pools:
    if not os.path.isdir(config.sprite_pool):
        raise ConfigError(f"sprite pool directory not found: {config.sprite_pool}")
    subdirs = sorted(d for d in os.listdir(config.sprite_pool)
                     if os.path.isdir(os.path.join(config.sprite_pool, d)))
    class_names = list(config.class_names) if config.class_names else subdirs
    sprites = {}
    for name in class_names:
        class_dir = os.path.join(config.sprite_pool, name)
        if not os.path.isdir(class_dir):
            raise ConfigError(f"sprite pool has no class directory: {class_dir}")
        files = sorted(f for f in os.listdir(class_dir) if f.lower().endswith(".png"))
        sprites[name] = [load_sprite(os.path.join(class_dir, f), name) for f in files]
    for name, ranges in config.count_ranges.items():
        if name not in sprites:
            raise ConfigError(f"count range given for unknown class {name!r}")
        if not sprites[name] and any(ranges[s][1] > 0 for s in SPLITS):
            raise ConfigError(f"sprite pool for class {name!r} is empty")
    backgrounds = {}
    for split, pool_dir in (("train", config.bg_pool_train), ("val", config.bg_pool_val)):
        if not os.path.isdir(pool_dir):
            raise ConfigError(f"background pool directory not found: {pool_dir}")
        files = sorted(f for f in os.listdir(pool_dir)
                       if f.lower().endswith((".png", ".jpg", ".jpeg")))
        if not files:
            raise ConfigError(f"background pool is empty: {pool_dir}")
        backgrounds[split] = [(os.path.splitext(f)[0], load_raster(os.path.join(pool_dir, f)))
                              for f in files]
    return Pools(sprites, backgrounds, class_names)


def _quantized_box(x0, y0, w, h, img_w, img_h):
    """Quantize a pixel extent to the 6-decimal label grid.

    Returns (BBox, integer corner tuple). Corners are in half-micro units,
    so the full image spans [0, 2_000_000] per axis and overlap tests are
    exact. Boxes whose quantized corner would poke past the edge are nudged
    inward by at most one grid step.
    """
    cx_u = quantize6((x0 + w * 0.5) / img_w)
    cy_u = quantize6((y0 + h * 0.5) / img_h)
    w_u = quantize6(w / img_w)
    h_u = quantize6(h / img_h)
    if 2 * cx_u + w_u > 2 * MICRO:
        cx_u = (2 * MICRO - w_u) // 2
    if 2 * cx_u - w_u < 0:
        cx_u = (w_u + 1) // 2
    if 2 * cy_u + h_u > 2 * MICRO:
        cy_u = (2 * MICRO - h_u) // 2
    if 2 * cy_u - h_u < 0:
        cy_u = (h_u + 1) // 2
    corners = (2 * cx_u - w_u, 2 * cy_u - h_u, 2 * cx_u + w_u, 2 * cy_u + h_u)
    box = BBox(cx_u / MICRO, cy_u / MICRO, w_u / MICRO, h_u / MICRO)
    return box, corners


def _overlaps(c, others, mx, my):
    x0, y0, x1, y1 = c[0] - mx, c[1] - my, c[2] + mx, c[3] + my
    for ox0, oy0, ox1, oy1 in others:
        if x0 < ox1 and ox0 < x1 and y0 < oy1 and oy0 < y1:
            return True
    return False


def sample_placements(rng, bg_size, sprite_pools, targets, config, image_id="image"):
    """Draw transforms and non-overlapping positions for the targeted objects.

    targets maps class name -> object count for this image. Returns
    (placed, skips) where placed is a list of (Placement, transformed sprite)
    in placement order and skips counts objects abandoned after
    max_placement_attempts rejected positions.
    """
    img_w, img_h = bg_size
    margin_x = int(round(config.margin * 2 * MICRO / img_w))
    margin_y = int(round(config.margin * 2 * MICRO / img_h))
    placed = []
    corners = []
    skips = {}
    for class_id, name in enumerate(config.class_names):
        if name not in targets:
            continue
        pool = sprite_pools[name]
        for _ in range(targets[name]):
            sprite = pool[rng.randrange(len(pool))]
            angle = rng.uniform(0.0, 360.0) if config.rotation else 0.0
            scale = rng.uniform(*config.scale_range)
            flip_h = rng.random() < config.flip_prob_h
            flip_v = rng.random() < config.flip_prob_v
            transform = Transform(angle=angle, scale=scale, flip_h=flip_h, flip_v=flip_v)
            moved = apply_transform(sprite, transform)
            w_t, h_t = moved.width, moved.height
            if w_t > img_w or h_t > img_h:
                raise SpriteTooLargeError(
                    f"{image_id}: sprite {sprite.source_id!r} is {w_t}x{h_t} after "
                    f"{transform}, larger than the {img_w}x{img_h} output raster"
                )
            accepted = False
            for _ in range(config.max_placement_attempts):
                x0 = rng.randrange(img_w - w_t + 1)
                y0 = rng.randrange(img_h - h_t + 1)
                box, cand = _quantized_box(x0, y0, w_t, h_t, img_w, img_h)
                if _overlaps(cand, corners, margin_x, margin_y):
                    continue
                corners.append(cand)
                placed.append((Placement(sprite.source_id, class_id, transform,
                                         x0, y0, box), moved))
                accepted = True
                break
            if not accepted:
                skips[name] = skips.get(name, 0) + 1
    return placed, skips


def render_image(config: GeneratorConfig, pools: Pools, split, index):
    """Render one image; returns (pixels, ImageRecord, skips)."""
    if config.class_names is None:
        config = replace(config, class_names=pools.class_names)
    seed = derive_image_seed(config.seed, split, index)
    rng = random.Random(seed)
    image_id = f"{split}_{index:06d}"
    bgs = pools.backgrounds[split]
    _, bg = bgs[rng.randrange(len(bgs))]
    if bg.shape[1] != config.width or bg.shape[0] != config.height:
        bg = kernels.resize_bilinear(np.ascontiguousarray(bg), config.width, config.height)
    canvas = bg.copy()
    targets = {}
    for name in config.class_names:
        if name in config.count_ranges:
            lo, hi = config.count_ranges[name][split]
            targets[name] = rng.randint(lo, hi)
    placed, skips = sample_placements(rng, (config.width, config.height),
                                      pools.sprites, targets, config, image_id)
    if skips and config.strict_count:
        detail = ", ".join(f"{k}: {v}" for k, v in sorted(skips.items()))
        raise GenerationError(
            f"{image_id}: could not place every object (skipped {detail}) "
            f"with strict_count enabled"
        )
    for placement, sprite in placed:
        kernels.blend_over(canvas, np.ascontiguousarray(sprite.pixels),
                           placement.x0, placement.y0)
    annotations = [GroundTruthAnnotation(p.class_id, p.box) for p, _ in placed]
    record = ImageRecord(image_id=image_id, split=split, width=config.width,
                         height=config.height, annotations=annotations, tags={})
    return canvas, record, skips


_WORKER = {}


def _worker_init(config, out_root):
    _WORKER["config"] = config
    _WORKER["pools"] = load_pools(config)
    _WORKER["root"] = out_root


def _worker_render(task):
    split, index = task
    return _render_and_write(_WORKER["config"], _WORKER["pools"], _WORKER["root"],
                             split, index)


def _render_and_write(config, pools, out_root, split, index):
    pixels, record, skips = render_image(config, pools, split, index)
    save_png(pixels, image_path(out_root, split, record.image_id))
    with open(label_path(out_root, split, record.image_id), "w", encoding="ascii") as f:
        f.write(write_label_file(record.annotations))
    return record, skips


def generate_dataset(config: GeneratorConfig, out_root, jobs=1, overwrite=False,
                     progress=None):
    """Generate the full train/val dataset under out_root; returns the manifest.

    The output is a deterministic function of (config, pool contents); the
    jobs count changes wall time only, never bytes.
    """
    config.validate()
    pools = load_pools(config)
    if config.class_names is None:
        # pin the implicit class list before records/workers rely on it
        config = replace(config, class_names=pools.class_names)
    ensure_layout_dirs(out_root, overwrite=overwrite)
    tasks = [(split, i)
             for split, count in (("train", config.train_count), ("val", config.val_count))
             for i in range(count)]
    results = []
    if jobs <= 1:
        for n, (split, index) in enumerate(tasks):
            results.append(_render_and_write(config, pools, out_root, split, index))
            if progress:
                progress(n + 1, len(tasks))
    else:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_worker_init,
                                 initargs=(config, out_root)) as pool:
            for n, result in enumerate(pool.map(_worker_render, tasks, chunksize=4)):
                results.append(result)
                if progress:
                    progress(n + 1, len(tasks))
    records = [rec for rec, _ in results]
    manifest = build_manifest(config.seed, config.class_names, records)
    manifest["skips"] = [
        {"image_id": rec.image_id, "class": name, "count": count}
        for rec, skips in results
        for name, count in sorted(skips.items())
    ]
    write_dataset_config(out_root, config.class_names)
    write_manifest(out_root, manifest)
    return manifest


def expected_totals(config: GeneratorConfig, split):
    """Expected object totals per class for one split (uniform-range mean)."""
    count = config.train_count if split == "train" else config.val_count
    out = {}
    for name, ranges in config.count_ranges.items():
        lo, hi = ranges[split]
        out[name] = count * (lo + hi) / 2.0
    return out
