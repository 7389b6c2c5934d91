"""Grid evaluation, iso-surface extraction, cleanup and quality metrics."""

from .grid import ReconstructConfig, ScalarGrid, evaluate_grid, load_grid, save_grid
from .mc import enclosed_volume, largest_component, marching_cubes
from .metrics import eval_metrics, surface_sample
from .reconstruct import reconstruct, resize_views_to_trained

__all__ = [
    "ReconstructConfig",
    "ScalarGrid",
    "evaluate_grid",
    "load_grid",
    "save_grid",
    "enclosed_volume",
    "largest_component",
    "marching_cubes",
    "eval_metrics",
    "surface_sample",
    "reconstruct",
    "resize_views_to_trained",
]
