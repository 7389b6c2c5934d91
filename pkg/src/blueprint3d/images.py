"""Raster primitives: grayscale / 3-channel images, filtering, labeling, sampling.

All pixel data is stored as float32 in [0, 1] (8-bit sources divide by 255,
16-bit by 65535) so blueprints, depth maps and weight maps share one numeric
convention. Instances are immutable; every operation here is a pure function.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DimensionError, RangeError

# Conservative supremum of the summed per-channel Sobel response for inputs
# whose channels lie in [-1, 1]: |gx|,|gy| <= 8 per channel, so the summed
# 2-norm over three channels cannot exceed 24*sqrt(2). Dividing by it keeps
# sobel_magnitude provably inside [0, 1] without clipping.
SOBEL_NORM = 24.0 * np.sqrt(2.0)

_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class GrayImage:
    """Single-channel raster, row-major, values in [0, 1]."""

    data: np.ndarray  # (h, w) float32

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 2 or arr.size == 0:
            raise DimensionError(f"GrayImage needs a non-empty 2D array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("GrayImage values must be finite")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("GrayImage values must lie in [0, 1]")
        object.__setattr__(self, "data", _freeze(arr))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class VectorImage:
    """Three-channel raster of row-major 3-vectors (e.g. world-space normals)."""

    data: np.ndarray  # (h, w, 3) float32

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] == 0 or arr.shape[1] == 0:
            raise DimensionError(f"VectorImage needs a (h, w, 3) array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("VectorImage values must be finite")
        object.__setattr__(self, "data", _freeze(arr))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class LabelImage:
    """Integer component labels, 0 = background, 1..K ordered by descending area."""

    labels: np.ndarray  # (h, w) int32

    def __post_init__(self):
        arr = np.asarray(self.labels, dtype=np.int32)
        if arr.ndim != 2 or arr.size == 0:
            raise DimensionError(f"LabelImage needs a non-empty 2D array, got shape {arr.shape}")
        if arr.size and arr.min() < 0:
            raise ValueError("labels must be non-negative")
        present = np.unique(arr)
        expected = np.arange(0, arr.max() + 1) if arr.size else np.array([0])
        if arr.size and not np.array_equal(np.union1d(present, [0]), expected):
            raise ValueError("label set must be contiguous {0..K}")
        object.__setattr__(self, "labels", _freeze(arr))

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def count(self) -> int:
        return int(self.labels.max())


def sobel_magnitude(img: VectorImage) -> GrayImage:
    """Per-pixel Sobel gradient magnitude summed over the 3 channels.

    Uses the classic 3x3 kernels with replicate-border padding and divides by
    SOBEL_NORM, which maps the result into [0, 1].
    """
    if img.width < 3 or img.height < 3:
        raise DimensionError(f"sobel_magnitude needs at least 3x3 input, got {img.width}x{img.height}")
    data = img.data.astype(np.float64)
    padded = np.pad(data, ((1, 1), (1, 1), (0, 0)), mode="edge")
    total = np.zeros(data.shape[:2], dtype=np.float64)
    for c in range(3):
        p = padded[:, :, c]
        # 3x3 Sobel as shifted-slice arithmetic; p[1+dy, 1+dx] neighborhoods.
        gx = (
            (p[:-2, 2:] + 2.0 * p[1:-1, 2:] + p[2:, 2:])
            - (p[:-2, :-2] + 2.0 * p[1:-1, :-2] + p[2:, :-2])
        )
        gy = (
            (p[2:, :-2] + 2.0 * p[2:, 1:-1] + p[2:, 2:])
            - (p[:-2, :-2] + 2.0 * p[:-2, 1:-1] + p[:-2, 2:])
        )
        total += np.hypot(gx, gy)
    return GrayImage(np.clip(total / SOBEL_NORM, 0.0, 1.0).astype(np.float32))


def bilinear_sample(img: GrayImage, u: float, v: float) -> float:
    """Bilinear interpolation of the four pixel centers surrounding (u, v).

    Coordinates are pixel-center based: (0, 0) is the first pixel's center and
    (width-1, height-1) the last. Out-of-range coordinates raise RangeError;
    callers that want clamping must clamp explicitly.
    """
    if not (0.0 <= u <= img.width - 1) or not (0.0 <= v <= img.height - 1):
        raise RangeError(f"sample coordinate ({u}, {v}) outside [0, {img.width - 1}] x [0, {img.height - 1}]")
    return float(bilinear_sample_many(img.data, np.array([u]), np.array([v]))[0])


def bilinear_sample_many(data: np.ndarray, us: np.ndarray, vs: np.ndarray) -> np.ndarray:
    """Vectorized bilinear lookup on a (h, w) or (h, w, c) array.

    Coordinates are clamped to the valid pixel-center range, which is what the
    feature-sampling path wants; the scalar `bilinear_sample` wrapper enforces
    the strict-domain contract instead.
    """
    h, w = data.shape[:2]
    us = np.clip(np.asarray(us, dtype=np.float64), 0.0, w - 1.0)
    vs = np.clip(np.asarray(vs, dtype=np.float64), 0.0, h - 1.0)
    x0 = np.clip(np.floor(us).astype(np.int64), 0, w - 1)
    y0 = np.clip(np.floor(vs).astype(np.int64), 0, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = us - x0
    fy = vs - y0
    if data.ndim == 3:
        fx = fx[:, None]
        fy = fy[:, None]
    top = data[y0, x0] * (1.0 - fx) + data[y0, x1] * fx
    bot = data[y1, x0] * (1.0 - fx) + data[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


def connected_components(img: GrayImage, threshold: float) -> LabelImage:
    """8-connected labeling of pixels with value > threshold.

    Components are relabeled 1..K by descending pixel area (ties keep first-seen
    order), so label 1 is always the largest region.
    """
    mask = img.data > threshold
    raw, n = ndimage.label(mask, structure=_EIGHT_CONNECTED)
    if n == 0:
        return LabelImage(np.zeros_like(raw, dtype=np.int32))
    areas = np.bincount(raw.ravel(), minlength=n + 1)[1:]
    order = np.argsort(-areas, kind="stable")  # old label = order[rank] + 1
    remap = np.zeros(n + 1, dtype=np.int32)
    remap[order + 1] = np.arange(1, n + 1)
    return LabelImage(remap[raw])


def component_bounding_boxes(labels: LabelImage) -> list[tuple[int, int, int, int]]:
    """Tight (x, y, w, h) box per label, in label order 1..K."""
    boxes = []
    for sl in ndimage.find_objects(labels.labels):
        if sl is None:
            continue
        ys, xs = sl
        boxes.append((xs.start, ys.start, xs.stop - xs.start, ys.stop - ys.start))
    return boxes


def resize_bilinear(img: GrayImage, width: int, height: int) -> GrayImage:
    """Resample to (width, height) with bilinear filtering on pixel centers."""
    if width < 1 or height < 1:
        raise DimensionError("resize target must be at least 1x1")
    sx = img.width / width
    sy = img.height / height
    us = (np.arange(width) + 0.5) * sx - 0.5
    vs = (np.arange(height) + 0.5) * sy - 0.5
    uu, vv = np.meshgrid(us, vs)
    out = bilinear_sample_many(img.data, uu.ravel(), vv.ravel()).reshape(height, width)
    return GrayImage(np.clip(out, 0.0, 1.0).astype(np.float32))
