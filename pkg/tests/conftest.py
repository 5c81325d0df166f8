import numpy as np
import pytest
from PIL import Image

from tumorgraph.data import CLASSES
from tumorgraph.graph import _Builder, attach_head


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def make_tiny_model(hidden=8, dropout_rate=0.0, classes=3, input_hw=(12, 12)):
    """A miniature graph exercising every layer kind: two conv units, a pool,
    a concat endpoint named mixed8, and the standard head."""
    b = _Builder((input_hw[0], input_hw[1], 3))
    net = b.conv_unit("input", 4, (3, 3), stride=2, padding="valid")
    left = b.conv_unit(net, 3, (1, 1), padding="same")
    right = b.pool(net, 3, 1, "avg", padding="same")
    right = b.conv_unit(right, 2, (3, 3), padding="same")
    b.pool(left, 2, 2, "max", padding="valid")  # exercise a max pool layer
    merged = b.concat([left, right], "mixed8")
    backbone = b.finish({"mixed8": merged})
    return attach_head(backbone, hidden=hidden, dropout_rate=dropout_rate, classes=classes)


@pytest.fixture
def tiny_model():
    return make_tiny_model()


def write_gray_png(path, array):
    arr = np.asarray(array)
    if arr.dtype == np.uint16:
        Image.fromarray(arr).save(path)  # PIL maps uint16 to I;16
    else:
        Image.fromarray(arr.astype(np.uint8), mode="L").save(path)


def build_manifest(root, spec, image_size=(20, 20), bit16_every=0, seed=0):
    """Write PNGs plus a manifest CSV.

    ``spec`` is a list of (label, split) pairs; returns the manifest path.
    Every ``bit16_every``-th image (if nonzero) is written as 16-bit.
    """
    rng = np.random.default_rng(seed)
    root.mkdir(parents=True, exist_ok=True)
    lines = ["path,label,split"]
    for i, (label, split) in enumerate(spec):
        name = f"img_{i:04d}.png"
        if bit16_every and i % bit16_every == 0:
            arr = rng.integers(0, 65536, size=image_size, dtype=np.uint16)
        else:
            arr = rng.integers(0, 256, size=image_size, dtype=np.uint8)
        write_gray_png(root / name, arr)
        lines.append(f"{name},{label},{split}")
    manifest = root / "manifest.csv"
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return manifest


def balanced_spec(per_class, split=""):
    return [(label, split) for label in CLASSES for _ in range(per_class)]
