"""Triangle meshes, point clouds and the model-unit normalization transform.

Frame convention used everywhere: X = longitudinal (vehicle length),
Y = lateral (width), Z = up. normalize_mesh scales the X extent to 1 and moves
the bounding-box center to the origin, so "model units" are car lengths.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DegenerateMesh, DimensionError


def _frozen(arr, dtype) -> np.ndarray:
    out = np.ascontiguousarray(np.asarray(arr, dtype=dtype))
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class TriangleMesh:
    """Indexed triangle soup with optional per-face group ids."""

    vertices: np.ndarray  # (n, 3) float64
    triangles: np.ndarray  # (m, 3) int32, indices into vertices
    groups: np.ndarray | None = None  # (m,) int32 face-group ids

    def __post_init__(self):
        v = _frozen(self.vertices, np.float64)
        t = _frozen(self.triangles, np.int32)
        if v.ndim != 2 or v.shape[1] != 3:
            raise DimensionError(f"vertices must be (n, 3), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("vertex coordinates must be finite")
        if t.ndim != 2 or t.shape[1] != 3:
            raise DimensionError(f"triangles must be (m, 3), got {t.shape}")
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise ValueError("triangle index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        if self.groups is not None:
            g = _frozen(self.groups, np.int32)
            if g.shape != (len(t),):
                raise DimensionError(f"groups must be ({len(t)},), got {g.shape}")
            if g.size and g.min() < 0:
                raise ValueError("group ids must be non-negative")
            object.__setattr__(self, "groups", g)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        if self.n_vertices == 0:
            raise DegenerateMesh("mesh has no vertices")
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def triangle_normals(self) -> np.ndarray:
        """Unit geometric normals, (m, 3); zero vector for degenerate faces."""
        tri = self.vertices[self.triangles]
        n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        length = np.linalg.norm(n, axis=1, keepdims=True)
        return np.where(length > 1e-30, n / np.maximum(length, 1e-30), 0.0)

    def triangle_areas(self) -> np.ndarray:
        tri = self.vertices[self.triangles]
        n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        return 0.5 * np.linalg.norm(n, axis=1)


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray  # (n, 3) float64
    normals: np.ndarray | None = None  # (n, 3) unit vectors
    attributes: dict = field(default_factory=dict)  # name -> (n,) float64

    def __post_init__(self):
        p = _frozen(self.points, np.float64)
        if p.ndim != 2 or p.shape[1] != 3:
            raise DimensionError(f"points must be (n, 3), got {p.shape}")
        if not np.all(np.isfinite(p)):
            raise ValueError("point coordinates must be finite")
        object.__setattr__(self, "points", p)
        if self.normals is not None:
            nrm = _frozen(self.normals, np.float64)
            if nrm.shape != p.shape:
                raise DimensionError("normals must match point count")
            lengths = np.linalg.norm(nrm, axis=1)
            if lengths.size and np.max(np.abs(lengths - 1.0)) > 1e-4:
                raise ValueError("normals must be unit length within 1e-4")
            object.__setattr__(self, "normals", nrm)
        attrs = {}
        for name, arr in self.attributes.items():
            a = _frozen(arr, np.float64)
            if a.shape != (len(p),):
                raise DimensionError(f"attribute {name!r} must be ({len(p)},), got {a.shape}")
            attrs[name] = a
        object.__setattr__(self, "attributes", attrs)

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class Transform:
    """Similarity transform x -> scale * x + offset (uniform scale, no rotation)."""

    scale: float
    offset: np.ndarray  # (3,) float64

    def __post_init__(self):
        off = _frozen(self.offset, np.float64)
        if off.shape != (3,):
            raise DimensionError(f"offset must be (3,), got {off.shape}")
        if not (np.isfinite(self.scale) and self.scale != 0.0):
            raise ValueError("scale must be finite and nonzero")
        object.__setattr__(self, "offset", off)

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) * self.scale + self.offset

    def invert(self) -> "Transform":
        return Transform(1.0 / self.scale, -self.offset / self.scale)

    @classmethod
    def identity(cls) -> "Transform":
        return cls(1.0, np.zeros(3))


def normalize_mesh(mesh: TriangleMesh) -> tuple[TriangleMesh, Transform]:
    """Scale so the X extent is exactly 1 and center the bounding box at the origin.

    Returns the normalized mesh and the transform that was applied, so callers
    can map reconstructed geometry back to the source frame.
    """
    bmin, bmax = mesh.bounds()
    x_extent = float(bmax[0] - bmin[0])
    if x_extent <= 0.0:
        raise DegenerateMesh(f"X extent is {x_extent}, nothing to normalize")
    scale = 1.0 / x_extent
    center = 0.5 * (bmin + bmax)
    transform = Transform(scale, -center * scale)
    out = TriangleMesh(transform.apply(mesh.vertices), mesh.triangles, mesh.groups)
    return out, transform


def edge_incidence(mesh: TriangleMesh) -> np.ndarray:
    """Count of incident triangles per undirected edge, shape (n_edges,)."""
    t = mesh.triangles.astype(np.int64)
    edges = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]], axis=0)
    edges.sort(axis=1)
    keys = edges[:, 0] * mesh.n_vertices + edges[:, 1]
    _, counts = np.unique(keys, return_counts=True)
    return counts


def is_watertight(mesh: TriangleMesh) -> bool:
    """True iff every undirected edge borders exactly two triangles."""
    if mesh.n_triangles == 0:
        return False
    return bool(np.all(edge_incidence(mesh) == 2))


def euler_characteristic(mesh: TriangleMesh) -> int:
    """V - E + F over the vertices actually referenced by triangles."""
    t = mesh.triangles.astype(np.int64)
    v = len(np.unique(t))
    f = mesh.n_triangles
    e = len(edge_incidence(mesh))
    return v - e + f
