import hashlib
import pathlib

import numpy as np
import pytest

from palmforge import fixtures
from palmforge.generator import GeneratorConfig


def tree_digest(root):
    """Hash of every file (path + bytes) under root, order-independent."""
    root = pathlib.Path(root)
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(p.relative_to(root).as_posix().encode())
            h.update(b"\0")
            h.update(p.read_bytes())
    return h.hexdigest()


def solid_sprite(w, h, rgba=(120, 200, 80, 255), class_name="palm", source_id="s"):
    from palmforge.raster import Sprite

    arr = np.empty((h, w, 4), dtype=np.uint8)
    arr[:, :] = rgba
    return Sprite(pixels=arr, class_name=class_name, source_id=source_id)


@pytest.fixture(scope="session")
def demo_pools(tmp_path_factory):
    """Shared pool tree: pools/sprites/<class>, pools/backgrounds/<color>/{train,val}."""
    root = tmp_path_factory.mktemp("pools")
    fixtures.write_demo_pools(root, colors=("green", "red", "mixed"),
                              n_train=2, n_val=1, size=(1280, 720))
    return str(root / "pools")


def pool_config(pools, **kw):
    """GeneratorConfig against the shared demo pools (green backgrounds)."""
    import os

    defaults = dict(
        seed=42,
        width=1280,
        height=720,
        train_count=2,
        val_count=1,
        bg_pool_train=os.path.join(pools, "backgrounds", "green", "train"),
        bg_pool_val=os.path.join(pools, "backgrounds", "green", "val"),
        sprite_pool=os.path.join(pools, "sprites"),
        count_ranges={"palm": {"train": (3, 6), "val": (3, 6)}},
    )
    defaults.update(kw)
    return GeneratorConfig(**defaults)
