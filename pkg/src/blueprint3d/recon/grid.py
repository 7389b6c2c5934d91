"""Regular scalar grids over the model bounding box, plus the binary dump."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ..errors import DimensionError, FormatError, RangeError
from ..field.model import PixelAlignedField, query_points

_MAGIC = b"SGRD"
_VERSION = 1
_HEADER = 4 + 4 * 4 + 8 * 3 + 8 * 3  # magic, version + dims, origin, spacing


def _frozen(a: np.ndarray) -> np.ndarray:
    a = a.copy()
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ScalarGrid:
    """Axis-aligned node lattice of squashed-distance values in [0, 1].

    Node (i, j, k) sits at origin + spacing * (i, j, k); values is indexed
    the same way, x first.
    """

    values: np.ndarray  # (nx, ny, nz) float32
    origin: np.ndarray  # (3,) world position of node (0, 0, 0)
    spacing: np.ndarray  # (3,) world step between nodes, per axis

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.ndim != 3 or min(v.shape) < 2:
            raise DimensionError(f"grid needs at least 2 nodes per axis, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise RangeError("grid values must be finite")
        if float(v.min()) < 0.0 or float(v.max()) > 1.0:
            raise RangeError("grid values must lie in [0, 1]")
        o = np.asarray(self.origin, dtype=np.float64)
        s = np.asarray(self.spacing, dtype=np.float64)
        if o.shape != (3,) or s.shape != (3,):
            raise DimensionError(f"origin and spacing must be (3,), got {o.shape} and {s.shape}")
        if not (np.all(np.isfinite(o)) and np.all(np.isfinite(s))):
            raise RangeError("origin and spacing must be finite")
        if np.any(s <= 0):
            raise RangeError(f"spacing must be positive, got {s}")
        object.__setattr__(self, "values", _frozen(v))
        object.__setattr__(self, "origin", _frozen(o))
        object.__setattr__(self, "spacing", _frozen(s))

    @property
    def resolution(self) -> tuple[int, int, int]:
        return tuple(self.values.shape)

    def axis_coords(self, axis: int) -> np.ndarray:
        """World coordinates of the node planes along one axis."""
        return self.origin[axis] + self.spacing[axis] * np.arange(self.values.shape[axis])

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        far = self.origin + self.spacing * (np.array(self.values.shape) - 1)
        return self.origin.copy(), far


@dataclass(frozen=True)
class ReconstructConfig:
    """Grid evaluation and iso-surface extraction settings."""

    grid_resolution: int = 256  # nodes across the box along x; voxels stay cubical
    iso: float = 0.5
    keep_largest: bool = True

    def __post_init__(self):
        if int(self.grid_resolution) != self.grid_resolution or self.grid_resolution < 2:
            raise RangeError(f"grid_resolution must be an integer >= 2, got {self.grid_resolution}")
        object.__setattr__(self, "grid_resolution", int(self.grid_resolution))
        if not 0.0 < float(self.iso) < 1.0:
            raise RangeError(f"iso threshold must lie strictly in (0, 1), got {self.iso}")
        object.__setattr__(self, "iso", float(self.iso))


def evaluate_grid(field: PixelAlignedField, bbox, cfg: ReconstructConfig) -> ScalarGrid:
    """Sample field.value on a regular lattice covering bbox plus a 2 voxel
    margin on every side.

    The step is set by grid_resolution nodes across the box along x and is
    shared by all axes, so voxels are cubical and the other axes get node
    counts proportional to their extents. Evaluation runs slab by slab to
    keep memory flat; the result is deterministic.
    """
    bmin = np.asarray(bbox[0], dtype=np.float64).reshape(3)
    bmax = np.asarray(bbox[1], dtype=np.float64).reshape(3)
    extent = bmax - bmin
    if not np.all(extent > 0):
        raise RangeError(f"bounding box must have positive extent, got {extent}")
    h = extent[0] / (cfg.grid_resolution - 1)
    # fencepost +1, inflation +4; the epsilon keeps exact ratios from rounding up
    counts = np.ceil(extent / h - 1e-9).astype(int) + 5
    center = (bmin + bmax) / 2.0
    origin = center - (counts - 1) * h / 2.0
    ys = origin[1] + h * np.arange(counts[1])
    zs = origin[2] + h * np.arange(counts[2])
    yy, zz = np.meshgrid(ys, zs, indexing="ij")
    pts = np.empty((yy.size, 3), dtype=np.float64)
    pts[:, 1] = yy.ravel()
    pts[:, 2] = zz.ravel()
    values = np.empty(tuple(counts), dtype=np.float32)
    for i in range(counts[0]):
        pts[:, 0] = origin[0] + h * i
        value, _, _, _ = query_points(field, pts)
        values[i] = value.reshape(counts[1], counts[2])
    return ScalarGrid(values, origin, np.full(3, h))


def save_grid(path, grid: ScalarGrid) -> None:
    """Write the little-endian "SGRD" dump: dims, origin, spacing, values."""
    nx, ny, nz = grid.values.shape
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<IIII", _VERSION, nx, ny, nz))
        f.write(struct.pack("<3d", *grid.origin))
        f.write(struct.pack("<3d", *grid.spacing))
        f.write(np.ascontiguousarray(grid.values, dtype="<f4").tobytes())


def load_grid(path) -> ScalarGrid:
    """Read a dump written by save_grid; raises FormatError on any damage."""
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 4 or blob[:4] != _MAGIC:
        raise FormatError("not a grid dump: bad magic")
    if len(blob) < _HEADER:
        raise FormatError(f"grid dump header is truncated at {len(blob)} bytes")
    version, nx, ny, nz = struct.unpack_from("<IIII", blob, 4)
    if version != _VERSION:
        raise FormatError(f"unsupported grid dump version {version}")
    origin = np.frombuffer(blob, dtype="<f8", count=3, offset=20).astype(np.float64)
    spacing = np.frombuffer(blob, dtype="<f8", count=3, offset=44).astype(np.float64)
    need = _HEADER + 4 * nx * ny * nz
    if len(blob) < need:
        raise FormatError(f"grid dump is truncated: need {need} bytes, have {len(blob)}")
    if len(blob) > need:
        raise FormatError(f"grid dump has {len(blob) - need} trailing bytes")
    values = np.frombuffer(blob, dtype="<f4", count=nx * ny * nz, offset=_HEADER)
    try:
        return ScalarGrid(values.reshape(nx, ny, nz), origin, spacing)
    except (DimensionError, RangeError) as e:
        raise FormatError(f"grid dump contents are invalid: {e}") from e
