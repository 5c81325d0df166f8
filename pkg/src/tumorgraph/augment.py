"""Seeded affine image augmentation: rotation, zoom, horizontal flip,
width/height shift, and shear.

Transforms compose about the image center as

    M = T_center . Flip . Shear . Zoom . Rotate . Translate . T_center^-1

and images are produced by inverse mapping: every output pixel applies
M^-1 and bilinear-samples the source, with nearest-edge or constant fill
for out-of-bounds reads. Quadrant rotations use exact 0/+-1 trigonometry,
so integer-exact transforms (90-degree rotations, integral shifts, flips)
reproduce the corresponding coordinate permutation bit-for-bit.

Per-sample seeds derive from (global seed, epoch, sample index), making
augmented streams identical for any worker count or iteration order.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import backend

# Domain tags keep the derived RNG streams distinct.
_AUGMENT_TAG = 104729


@dataclass(frozen=True)
class AugmentConfig:
    """Sampling ranges for one augmentation policy.

    Angles are degrees; shifts are fractions of the image extent; zoom is a
    +-fraction around 1. ``fill`` is "edge" (nearest-edge) or "constant"
    with ``fill_value``. The defaults are typical magnitudes for this kind
    of corpus and are recorded in every run report, since they are choices.
    """

    rotation_max: float = 15.0
    zoom_range: float = 0.1
    width_shift: float = 0.1
    height_shift: float = 0.1
    shear_max: float = 10.0
    horizontal_flip: bool = True
    interpolation: str = "bilinear"
    fill: str = "edge"
    fill_value: float = 0.0

    def __post_init__(self):
        for name in ("rotation_max", "zoom_range", "width_shift", "height_shift", "shear_max"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.zoom_range >= 1.0:
            raise ValueError("zoom_range must be < 1")
        if self.interpolation != "bilinear":
            raise ValueError(f"unsupported interpolation {self.interpolation!r}")
        if self.fill not in ("edge", "constant"):
            raise ValueError(f"fill must be 'edge' or 'constant', got {self.fill!r}")

    @property
    def is_identity(self):
        return (
            self.rotation_max == 0.0
            and self.zoom_range == 0.0
            and self.width_shift == 0.0
            and self.height_shift == 0.0
            and self.shear_max == 0.0
            and not self.horizontal_flip
        )


IDENTITY_CONFIG = AugmentConfig(
    rotation_max=0.0, zoom_range=0.0, width_shift=0.0, height_shift=0.0,
    shear_max=0.0, horizontal_flip=False,
)


@dataclass(frozen=True)
class AffineParams:
    """One sampled transform: degrees, zoom scalar, pixel shifts, flip."""

    theta: float = 0.0
    zoom: float = 1.0
    tx: float = 0.0
    ty: float = 0.0
    shear: float = 0.0
    flip: bool = False

    @property
    def is_identity(self):
        return (
            self.theta % 360.0 == 0.0
            and self.zoom == 1.0
            and self.tx == 0.0
            and self.ty == 0.0
            and self.shear % 360.0 == 0.0
            and not self.flip
        )


def sample_params(cfg, image_size, rng):
    """Draw one AffineParams uniformly from the config ranges.

    ``image_size`` is (H, W); shifts are converted to pixels here. Draw
    order is fixed (theta, zoom, tx, ty, shear, flip) so seeds reproduce.
    """
    h, w = image_size
    theta = rng.uniform(-cfg.rotation_max, cfg.rotation_max) if cfg.rotation_max else 0.0
    zoom = rng.uniform(1.0 - cfg.zoom_range, 1.0 + cfg.zoom_range) if cfg.zoom_range else 1.0
    tx = rng.uniform(-cfg.width_shift * w, cfg.width_shift * w) if cfg.width_shift else 0.0
    ty = rng.uniform(-cfg.height_shift * h, cfg.height_shift * h) if cfg.height_shift else 0.0
    shear = rng.uniform(-cfg.shear_max, cfg.shear_max) if cfg.shear_max else 0.0
    flip = bool(rng.random() < 0.5) if cfg.horizontal_flip else False
    return AffineParams(theta=theta, zoom=zoom, tx=tx, ty=ty, shear=shear, flip=flip)


def _cos_sin_deg(deg):
    # Exact values at quadrant angles keep 90-degree rotations integer-exact.
    r = deg % 360.0
    if r == 0.0:
        return 1.0, 0.0
    if r == 90.0:
        return 0.0, 1.0
    if r == 180.0:
        return -1.0, 0.0
    if r == 270.0:
        return 0.0, -1.0
    rad = math.radians(deg)
    return math.cos(rad), math.sin(rad)


def _tan_deg(deg):
    if deg % 180.0 == 0.0:
        return 0.0
    return math.tan(math.radians(deg))


def forward_matrix(p, image_size):
    """3x3 forward map (input pixel -> output pixel), x = column, y = row."""
    h, w = image_size
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    c, s = _cos_sin_deg(p.theta)
    t = _tan_deg(p.shear)
    z = p.zoom

    def mat(rows):
        return np.array(rows, dtype=np.float64)

    center = mat([[1, 0, cx], [0, 1, cy], [0, 0, 1]])
    uncenter = mat([[1, 0, -cx], [0, 1, -cy], [0, 0, 1]])
    flip = mat([[-1, 0, 0], [0, 1, 0], [0, 0, 1]]) if p.flip else np.eye(3)
    shear = mat([[1, t, 0], [0, 1, 0], [0, 0, 1]])
    zoom = mat([[z, 0, 0], [0, z, 0], [0, 0, 1]])
    rot = mat([[c, s, 0], [-s, c, 0], [0, 0, 1]])
    translate = mat([[1, 0, p.tx], [0, 1, p.ty], [0, 0, 1]])
    return center @ flip @ shear @ zoom @ rot @ translate @ uncenter


def _invert_affine(m):
    a, b, tx = m[0]
    c, d, ty = m[1]
    det = a * d - b * c
    ia, ib, ic, id_ = d / det, -b / det, -c / det, a / det
    return np.array(
        [[ia, ib, -(ia * tx + ib * ty)], [ic, id_, -(ic * tx + id_ * ty)]],
        dtype=np.float64,
    )


def apply_affine(image, p, cfg):
    """Warp one image (H,W) or (H,W,C) by the sampled params."""
    arr = np.asarray(image)
    squeeze = arr.ndim == 2
    if squeeze:
        arr = arr[:, :, None]
    if arr.size == 0:
        raise ValueError("cannot augment an empty image")
    int_dtype = arr.dtype if np.issubdtype(arr.dtype, np.integer) else None
    if int_dtype is not None:
        arr = arr.astype(np.float32)
    h, w = arr.shape[:2]
    inv = _invert_affine(forward_matrix(p, (h, w)))
    out = backend.warp_bilinear(arr, inv, cfg.fill, cfg.fill_value)
    if int_dtype is not None:
        out = np.rint(out).astype(int_dtype)
    return out[:, :, 0] if squeeze else out


def stream_rng(global_seed, epoch, sample_index):
    """Per-sample generator; independent of worker count and ordering."""
    return np.random.default_rng(
        np.random.SeedSequence([_AUGMENT_TAG, int(global_seed), int(epoch), int(sample_index)])
    )


def augment_stream(samples, cfg, global_seed, epoch):
    """Yield (augmented image, label) for an iterable of (image, label).

    Labels pass through untouched. Sample ``i`` always sees the transform
    drawn from seed (global_seed, epoch, i).
    """
    for i, (image, label) in enumerate(samples):
        params = sample_params(cfg, np.asarray(image).shape[:2], stream_rng(global_seed, epoch, i))
        yield apply_affine(image, params, cfg), label
