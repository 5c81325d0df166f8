"""Manifest-driven dataset ingestion, resizing, normalization, and splitting.

The manifest is UTF-8 CSV with header ``path,label,split``: label is one of
glioma/meningioma/pituitary (this order fixes the output neurons), split is
blank or train/val. Images are grayscale PNG, 8- or 16-bit, any size;
relative paths resolve against the manifest's directory.

Pixels are resized with half-pixel-center bilinear interpolation and mapped
affinely onto [-1, 1] (the range the backbone's pretrained weights assume);
the single gray channel is replicated to the three input channels.
"""

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ImageDecodeError, ManifestError

CLASSES = ("glioma", "meningioma", "pituitary")
CLASS_INDEX = {name: i for i, name in enumerate(CLASSES)}
SPLIT_VALUES = ("", "train", "val")

_SHUFFLE_TAG = 15485863


@dataclass(frozen=True)
class ManifestEntry:
    path: Path
    label: str
    split: str  # "", "train", or "val"
    line: int   # 1-based manifest line, for error messages

    @property
    def label_index(self):
        return CLASS_INDEX[self.label]


@dataclass(frozen=True)
class Dataset:
    """Validated entries in manifest order, plus per-class counts."""

    entries: tuple
    class_counts: dict = field(compare=False)

    def __post_init__(self):
        counts = {name: 0 for name in CLASSES}
        for e in self.entries:
            counts[e.label] += 1
        object.__setattr__(self, "class_counts", counts)

    def __len__(self):
        return len(self.entries)

    def labels(self):
        return np.array([e.label_index for e in self.entries], dtype=np.int64)

    def summary(self):
        parts = ", ".join(f"{name} {self.class_counts[name]}" for name in CLASSES)
        return f"{len(self.entries)} entries ({parts})"


def one_hot(label):
    """Length-3 indicator over the fixed class order."""
    idx = CLASS_INDEX[label] if isinstance(label, str) else int(label)
    vec = np.zeros(3, dtype=np.float32)
    vec[idx] = 1.0
    return vec


def _check_decodable(path):
    try:
        with Image.open(path) as im:
            im.verify()
        with Image.open(path) as im:
            mode = im.mode
    except (OSError, UnidentifiedImageError, ValueError) as exc:
        raise ImageDecodeError(f"unreadable image {path}: {exc}") from None
    if mode not in ("L", "I", "I;16", "I;16B", "I;16L"):
        raise ImageDecodeError(f"image {path} is not 8/16-bit grayscale (mode {mode})")


def load_manifest(path, validate_images=True):
    """Parse and validate a manifest; returns a Dataset in file order."""
    path = Path(path)
    root = path.parent
    entries = []
    seen = {}
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ManifestError(f"cannot open manifest {path}: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["path", "label", "split"]:
            raise ManifestError(
                f"{path}: manifest header must be 'path,label,split', got {header!r}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 3:
                raise ManifestError(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
            raw_path, label, split = (cell.strip() for cell in row)
            if label not in CLASSES:
                raise ManifestError(
                    f"{path}:{lineno}: unknown label {label!r} (expected one of {', '.join(CLASSES)})"
                )
            if split not in SPLIT_VALUES:
                raise ManifestError(
                    f"{path}:{lineno}: split must be blank, 'train' or 'val', got {split!r}"
                )
            resolved = (root / raw_path).resolve() if not Path(raw_path).is_absolute() else Path(raw_path)
            key = str(resolved)
            if key in seen:
                raise ManifestError(
                    f"{path}:{lineno}: duplicate path {raw_path!r} (first seen on line {seen[key]})"
                )
            seen[key] = lineno
            entries.append(ManifestEntry(path=resolved, label=label, split=split, line=lineno))
    if not entries:
        raise ManifestError(f"{path}: empty dataset")
    if validate_images:
        for e in entries:
            _check_decodable(e.path)
    return Dataset(entries=tuple(entries), class_counts={})


def decode_image(path):
    """Read a grayscale PNG as (H, W) uint8/uint16 plus its max code value."""
    try:
        with Image.open(path) as im:
            mode = im.mode
            arr = np.asarray(im)
    except (OSError, UnidentifiedImageError, ValueError) as exc:
        raise ImageDecodeError(f"unreadable image {path}: {exc}") from None
    if mode == "L":
        return arr.astype(np.uint8), 255
    if mode in ("I;16", "I;16B", "I;16L"):
        return arr.astype(np.uint16), 65535
    if mode == "I" and arr.max(initial=0) <= 65535:
        return arr.astype(np.uint16), 65535
    raise ImageDecodeError(f"image {path} is not 8/16-bit grayscale (mode {mode})")


def resize_bilinear(image, out_h=150, out_w=150):
    """Bilinear resize with half-pixel sample centers; returns float32.

    Source coordinate for output index i is (i + 0.5) * (in / out) - 0.5,
    clamped to the image. A same-size resize is an exact copy.
    """
    arr = np.asarray(image)
    h, w = arr.shape[:2]
    src = arr.astype(np.float64, copy=False)

    def axis_coords(n_in, n_out):
        scale = n_in / n_out
        x = (np.arange(n_out, dtype=np.float64) + 0.5) * scale - 0.5
        x = np.clip(x, 0.0, n_in - 1.0)
        lo = np.floor(x).astype(np.int64)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, x - lo

    r0, r1, fr = axis_coords(h, out_h)
    c0, c1, fc = axis_coords(w, out_w)
    top = src[r0][:, c0] + fc[None, :] * (src[r0][:, c1] - src[r0][:, c0])
    bottom = src[r1][:, c0] + fc[None, :] * (src[r1][:, c1] - src[r1][:, c0])
    out = top + fr[:, None] * (bottom - top)
    return out.astype(np.float32)


def to_model_input(image, label, max_value=None):
    """Normalize one resized grayscale image into a ModelInput.

    Integer images infer ``max_value`` from the dtype; float images (e.g.
    resize output) must state the source bit depth. Value v maps to
    v / (max/2) - 1, so the code range [0, max] lands exactly on [-1, 1].
    """
    arr = np.asarray(image)
    if np.issubdtype(arr.dtype, np.integer):
        if max_value is None:
            max_value = 255 if arr.dtype == np.uint8 else 65535
    elif max_value is None:
        raise ValueError("float images need an explicit max_value")
    plane = arr.astype(np.float32) / np.float32(max_value / 2.0) - np.float32(1.0)
    stacked = np.repeat(plane[:, :, None], 3, axis=2)
    return ModelInput(image=stacked, label_onehot=one_hot(label),
                      label_index=CLASS_INDEX[label] if isinstance(label, str) else int(label))


@dataclass(frozen=True)
class ModelInput:
    """One network-ready sample: 150x150x3 in [-1, 1] plus its one-hot label."""

    image: np.ndarray
    label_onehot: np.ndarray
    label_index: int


def normalized_plane(path, size):
    """Decode, resize, and normalize one image to a single (H, W) channel."""
    raw, max_value = decode_image(path)
    resized = resize_bilinear(raw, size[0], size[1])
    return resized / np.float32(max_value / 2.0) - np.float32(1.0)


@dataclass
class SampleSet:
    """In-memory split: (N, H, W) float32 planes in [-1, 1] and int labels."""

    images: np.ndarray
    labels: np.ndarray

    def __len__(self):
        return self.images.shape[0]


def to_samples(ds, size=(150, 150)):
    """Materialize a Dataset as a SampleSet (decodes every image)."""
    planes = np.stack([normalized_plane(e.path, size) for e in ds.entries])
    return SampleSet(images=planes.astype(np.float32), labels=ds.labels())


def split(ds, train_fraction=0.8, seed=0, stratified=True):
    """Partition into (train, val) Datasets.

    Stratified mode targets floor(train_fraction * count) training entries
    per class; the remainder goes to validation. Entries carrying a fixed
    split are honored first and bypass the shuffle. Non-stratified mode
    applies the same floor rule to the whole dataset. Deterministic per
    seed; both outputs preserve manifest order.
    """
    if len(ds) == 0:
        raise ManifestError("cannot split an empty dataset")
    if not 0.0 <= train_fraction <= 1.0:
        raise ValueError(f"train_fraction must be in [0, 1], got {train_fraction!r}")
    rng = np.random.default_rng(np.random.SeedSequence([_SHUFFLE_TAG, int(seed)]))

    if stratified:
        groups = [[i for i, e in enumerate(ds.entries) if e.label == name] for name in CLASSES]
    else:
        groups = [list(range(len(ds)))]

    train_idx = []
    for name, group in zip(CLASSES if stratified else ("all",), groups):
        if not group:
            warnings.warn(f"class {name!r} has no samples", stacklevel=2)
            continue
        fixed_train = [i for i in group if ds.entries[i].split == "train"]
        floating = [i for i in group if not ds.entries[i].split]
        target = int(np.floor(train_fraction * len(group)))
        need = min(max(target - len(fixed_train), 0), len(floating))
        order = rng.permutation(len(floating))
        train_idx.extend(fixed_train)
        train_idx.extend(floating[j] for j in order[:need])

    train_set = set(train_idx)
    train_entries = tuple(e for i, e in enumerate(ds.entries) if i in train_set)
    val_entries = tuple(e for i, e in enumerate(ds.entries) if i not in train_set)
    return Dataset(entries=train_entries, class_counts={}), Dataset(entries=val_entries, class_counts={})
