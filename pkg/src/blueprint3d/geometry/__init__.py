"""Meshes, cameras, rasterization, spatial queries and reference shapes."""

from .mesh import PointCloud, Transform, TriangleMesh, edge_incidence, euler_characteristic, is_watertight, normalize_mesh
from .kdtree import KdTree, kd_build, kd_nearest, kd_nearest_cone, kd_nearest_many
from .raster3d import (
    CANONICAL_VIEWS,
    OrthoView,
    RasterBuffers,
    ViewKind,
    project_points,
    rasterize,
    render_view,
    sample_depth,
    shade,
    unproject_pixels,
    view_for_bounds,
    view_for_direction,
)
from .inside import ray_parity_inside, ray_parity_inside_many
from .meshio import load_mesh, save_mesh, save_point_cloud_ply

__all__ = [
    "PointCloud",
    "Transform",
    "TriangleMesh",
    "edge_incidence",
    "euler_characteristic",
    "is_watertight",
    "normalize_mesh",
    "KdTree",
    "kd_build",
    "kd_nearest",
    "kd_nearest_cone",
    "kd_nearest_many",
    "CANONICAL_VIEWS",
    "OrthoView",
    "RasterBuffers",
    "ViewKind",
    "project_points",
    "rasterize",
    "render_view",
    "sample_depth",
    "shade",
    "unproject_pixels",
    "view_for_bounds",
    "view_for_direction",
    "ray_parity_inside",
    "ray_parity_inside_many",
    "load_mesh",
    "save_mesh",
    "save_point_cloud_ply",
]
