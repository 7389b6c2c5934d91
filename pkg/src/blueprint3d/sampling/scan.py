"""Surface scanning: virtual orthographic cameras around a mesh produce a
point cloud with normals, edge strength, and relative height, plus the depth
buffers needed to decide inside/outside by occlusion."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateMesh, RangeError
from ..geometry import (
    KdTree,
    RasterBuffers,
    TriangleMesh,
    PointCloud,
    kd_build,
    rasterize,
    sample_depth,
    shade,
    unproject_pixels,
    view_for_direction,
)
from ..images import sobel_magnitude

_PHI = (1.0 + np.sqrt(5.0)) / 2.0


def camera_directions(n_cams: int) -> np.ndarray:
    """The six axis directions followed by the twelve icosahedron vertex
    directions, truncated to n_cams. Fixed order, unit vectors."""
    axes = np.array(
        [
            [1.0, 0.0, 0.0],
            [-1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, -1.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.0, 0.0, -1.0],
        ]
    )
    ico = []
    for a in (1.0, -1.0):
        for b in (_PHI, -_PHI):
            ico.append([0.0, a, b])
            ico.append([a, b, 0.0])
            ico.append([b, 0.0, a])
    ico = np.asarray(ico) / np.sqrt(1.0 + _PHI * _PHI)
    dirs = np.vstack([axes, ico])
    if not (6 <= n_cams <= len(dirs)):
        raise RangeError(f"n_cams must be in [6, {len(dirs)}], got {n_cams}")
    return dirs[:n_cams]


@dataclass(frozen=True)
class SurfaceScan:
    cloud: PointCloud  # normals set; attributes: edge, relH
    buffers: tuple[RasterBuffers, ...]
    tree: KdTree
    eps: float  # depth-test slack in model units

    def __len__(self) -> int:
        return len(self.cloud)

    @property
    def points(self) -> np.ndarray:
        return self.cloud.points

    @property
    def normals(self) -> np.ndarray:
        return self.cloud.normals


def scan_mesh(mesh: TriangleMesh, n_cams: int = 14, resolution: int = 160) -> SurfaceScan:
    """Back-project every covered depth pixel of n_cams orthographic cameras.

    Per point: unit normal of the hit triangle, edge = sobel magnitude of that
    camera's normal image at the pixel, relH = height above the mesh bottom
    over the Z extent. resolution is pixels across the mesh's largest extent.
    """
    if mesh.n_triangles == 0:
        raise DegenerateMesh("cannot scan an empty mesh")
    bmin, bmax = mesh.bounds()
    extent = bmax - bmin
    z_span = max(float(extent[2]), 1e-12)
    px = float(extent.max()) / resolution  # world size of one pixel
    normals = mesh.triangle_normals()

    pts, nrms, edges = [], [], []
    buffers = []
    for axis in camera_directions(n_cams):
        view = view_for_direction(axis, bmin, bmax, resolution=1.0 / px, margin=px)
        buf = rasterize(mesh, view)
        buffers.append(buf)
        _, nrm_img, _ = shade(mesh, buf)
        edge_img = sobel_magnitude(nrm_img)
        vs, us = np.nonzero(buf.mask)
        if len(vs) == 0:
            continue
        pts.append(unproject_pixels(view, us.astype(np.float64), vs.astype(np.float64), buf.depth[vs, us]))
        nrms.append(normals[buf.tri[vs, us]])
        edges.append(edge_img.data[vs, us].astype(np.float64))

    if not pts:
        raise DegenerateMesh("mesh rasterized to nothing in every scan camera")
    points = np.vstack(pts)
    relh = np.clip((points[:, 2] - bmin[2]) / z_span, 0.0, 1.0)
    cloud = PointCloud(
        points,
        normals=np.vstack(nrms),
        attributes={"edge": np.concatenate(edges), "relH": relh},
    )
    return SurfaceScan(cloud, tuple(buffers), kd_build(cloud), eps=0.75 * px)


def occluded_everywhere(scan: SurfaceScan, points: np.ndarray, eps: float | None = None) -> np.ndarray:
    """True where a point is behind the first surface in every camera."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    eps = scan.eps if eps is None else eps
    inside = np.ones(len(points), dtype=bool)
    for buf in scan.buffers:
        stored, own = sample_depth(buf, points)
        inside &= own > stored + eps
        if not inside.any():
            break
    return inside


def signed_distance(scan: SurfaceScan, p, eps: float | None = None) -> float:
    """Distance to the nearest scan point, negative iff occluded in every
    camera's depth buffer (with eps slack)."""
    from ..geometry import kd_nearest

    q = np.asarray(p, dtype=np.float64)
    _, dist = kd_nearest(scan.tree, q)
    sign = -1.0 if occluded_everywhere(scan, q[None, :], eps)[0] else 1.0
    return sign * dist


def signed_distance_many(
    scan: SurfaceScan, points: np.ndarray, eps: float | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized signed_distance: returns (sdf, nearest scan-point index)."""
    from ..geometry import kd_nearest_many

    points = np.asarray(points, dtype=np.float64)
    idx, dist = kd_nearest_many(scan.tree, points)
    inside = occluded_everywhere(scan, points, eps)
    return np.where(inside, -dist, dist), idx
