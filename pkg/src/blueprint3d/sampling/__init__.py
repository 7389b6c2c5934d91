"""Surface scanning, visual hulls, adaptive weights and training samples."""

from .hull import VoxelGrid, silhouette_views, view_axes, visual_hull
from .samples import SampleSet, draw_samples, read_samples, tsdf_map, write_samples
from .scan import (
    SurfaceScan,
    camera_directions,
    occluded_everywhere,
    scan_mesh,
    signed_distance,
    signed_distance_many,
)
from .weights import (
    SamplerConfig,
    SampleWeights,
    compute_weights,
    nearest_block,
    nearest_cone_block,
    thickness_weights,
    w_normal,
)

__all__ = [
    "SampleSet",
    "SamplerConfig",
    "SampleWeights",
    "SurfaceScan",
    "VoxelGrid",
    "camera_directions",
    "compute_weights",
    "draw_samples",
    "nearest_block",
    "nearest_cone_block",
    "occluded_everywhere",
    "read_samples",
    "scan_mesh",
    "signed_distance",
    "signed_distance_many",
    "silhouette_views",
    "thickness_weights",
    "tsdf_map",
    "view_axes",
    "visual_hull",
    "w_normal",
]
