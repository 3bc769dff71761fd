"""Deterministic demo assets: sprite/background pools and packaged fixtures.

The text fixtures (counting set, altitude-tagged test set, experiment
bundle) ship as package data under palmforge/data. Image pools are drawn
procedurally from a seeded RNG instead, so the repository carries no
binary blobs; for a fixed seed and library stack the generated PNGs are
byte-stable.
"""

import os
import shutil
from importlib import resources

import numpy as np

from palmforge.raster import save_png

BG_COLORS = {
    "green": (62, 108, 48),
    "red": (152, 72, 38),
}

SPRITE_STYLES = {
    # (base RGB, lobes) - lobed radial blobs read as foliage from above
    "palm": ((34, 96, 40), 7),
    "okra": ((70, 130, 58), 4),
    "weed": ((90, 140, 70), 9),
    "tree_trunk": ((110, 78, 50), 2),
}


def data_path(*parts):
    """Path to a packaged data file or directory."""
    root = resources.files("palmforge.data")
    for part in parts:
        root = root.joinpath(part)
    return str(root)


def copy_fixture(name, dest):
    """Copy a packaged fixture tree (e.g. "counting") to dest; returns dest."""
    shutil.copytree(data_path(name), dest, dirs_exist_ok=True)
    return dest


def _sprite_pixels(rng, size, base_rgb, lobes):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    c = (size - 1) / 2.0
    r = np.hypot(xx - c, yy - c) / (size / 2.0)
    ang = np.arctan2(yy - c, xx - c)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    wobble = rng.uniform(0.15, 0.3)
    boundary = 0.62 + wobble * np.cos(lobes * ang + phase)
    mask = r <= boundary
    out = np.zeros((size, size, 4), dtype=np.uint8)
    noise = rng.integers(-18, 19, (size, size, 3))
    rgb = np.clip(np.array(base_rgb)[None, None, :] + noise, 0, 255)
    out[:, :, :3] = rgb.astype(np.uint8)
    out[:, :, 3] = np.where(mask, 255, 0).astype(np.uint8)
    # soften the rim so compositing exercises fractional alpha
    rim = mask & (r > boundary - 0.12)
    out[:, :, 3][rim] = 140
    return out


def write_sprite_pool(root, counts=None, seed=7, size_range=(32, 52)):
    """Create sprites/<class>/*.png pools; returns {class: [paths]}."""
    if counts is None:
        counts = {"palm": 5, "okra": 4, "weed": 3, "tree_trunk": 3}
    rng = np.random.default_rng(seed)
    out = {}
    for name in sorted(counts):
        base_rgb, lobes = SPRITE_STYLES.get(name, ((80, 120, 60), 5))
        class_dir = os.path.join(root, name)
        os.makedirs(class_dir, exist_ok=True)
        paths = []
        for i in range(counts[name]):
            size = int(rng.integers(size_range[0], size_range[1] + 1))
            path = os.path.join(class_dir, f"{name}_{i:02d}.png")
            save_png(_sprite_pixels(rng, size, base_rgb, lobes), path)
            paths.append(path)
        out[name] = paths
    return out


def _background_pixels(rng, width, height, base_rgb):
    coarse = rng.integers(-25, 26, (height // 8 + 1, width // 8 + 1, 3))
    noise = np.kron(coarse, np.ones((8, 8, 1), dtype=np.int64))[:height, :width]
    rgb = np.clip(np.array(base_rgb)[None, None, :] + noise, 0, 255)
    out = np.empty((height, width, 4), dtype=np.uint8)
    out[:, :, :3] = rgb.astype(np.uint8)
    out[:, :, 3] = 255
    return out


def write_background_pool(root, n, color="green", size=(1280, 720), seed=11):
    """Create n plain aerial-style backgrounds in root; returns paths."""
    rng = np.random.default_rng(seed)
    os.makedirs(root, exist_ok=True)
    if color == "mixed":
        palette = [BG_COLORS["green"], BG_COLORS["red"]]
    else:
        palette = [BG_COLORS[color]]
    paths = []
    for i in range(n):
        base = palette[i % len(palette)]
        path = os.path.join(root, f"bg_{color}_{i:02d}.png")
        save_png(_background_pixels(rng, size[0], size[1], base), path)
        paths.append(path)
    return paths


def write_demo_pools(root, colors=("green", "red", "mixed"), n_train=3, n_val=2,
                     size=(1280, 720), sprite_counts=None, seed=7):
    """Lay out pools/sprites plus pools/backgrounds/<color>/{train,val}.

    Returns the pools root. Suitable both for quick CLI demos and for the
    bundled experiment spec.
    """
    pools = os.path.join(root, "pools")
    write_sprite_pool(os.path.join(pools, "sprites"), counts=sprite_counts, seed=seed)
    for ci, color in enumerate(colors):
        base = os.path.join(pools, "backgrounds", color)
        write_background_pool(os.path.join(base, "train"), n_train, color, size,
                              seed=seed + 100 + ci)
        write_background_pool(os.path.join(base, "val"), n_val, color, size,
                              seed=seed + 200 + ci)
    return pools


def install_experiment_bundle(dest, size=(640, 360), seed=7):
    """Materialize the bundled experiment: spec, ground truth, detections, pools.

    Copies the packaged experiment fixture into dest and generates the image
    pools its spec refers to. Returns the spec path.
    """
    copy_fixture("experiment", dest)
    write_demo_pools(dest, size=size, seed=seed)
    return os.path.join(dest, "spec.toml")


def _main(argv):
    # `python -m palmforge.fixtures DEST` materializes every fixture for demos
    if len(argv) != 1:
        print("usage: python -m palmforge.fixtures DEST", file=__import__("sys").stderr)
        return 1
    dest = argv[0]
    install_experiment_bundle(os.path.join(dest, "experiment"))
    for name in ("counting", "testset"):
        copy_fixture(name, os.path.join(dest, name))
    print(dest)
    return 0


if __name__ == "__main__":
    import sys

    sys.exit(_main(sys.argv[1:]))
