"""End-to-end mesh recovery from a labeled blueprint and trained weights."""

from __future__ import annotations

from ..errors import ManualRequired, SizeMismatch
from ..field.layers import ParamSet
from ..field.model import FieldConfig, build_field
from ..geometry.mesh import TriangleMesh
from ..images import resize_bilinear
from ..views import BoundingBox, ViewEntry, ViewSet
from .grid import ReconstructConfig, evaluate_grid
from .mc import largest_component, marching_cubes


def resize_views_to_trained(views: ViewSet, trained_dim: int) -> ViewSet:
    """Scale all four views by one common factor so the largest view
    dimension equals trained_dim.

    A single factor preserves the views' relative proportions and therefore
    the model geometry; scaling each view on its own would stretch the
    bounding box. Blueprints whose largest view dimension is within 20
    percent of trained_dim are accepted, everything else is rejected since
    feature statistics drift too far from what the weights saw.
    """
    largest = max(max(e.box.w, e.box.h) for e in views.entries)
    if not 0.8 * trained_dim <= largest <= 1.2 * trained_dim:
        raise SizeMismatch(
            f"largest view dimension is {largest}px but the weights were trained on "
            f"{trained_dim}px inputs; only blueprints within 20 percent of that size "
            f"reconstruct reliably, so re-render the blueprint near {trained_dim}px"
        )
    if largest == trained_dim:
        return views
    f = trained_dim / largest
    entries = []
    for e in views.entries:
        w = max(1, round(e.box.w * f))
        h = max(1, round(e.box.h * f))
        img = resize_bilinear(e.image, w, h)
        box = BoundingBox(round(e.box.x * f), round(e.box.y * f), w, h)
        entries.append(ViewEntry(img, box, e.label))
    sw = max(round(views.source_size[0] * f), max(e.box.x + e.box.w for e in entries))
    sh = max(round(views.source_size[1] * f), max(e.box.y + e.box.h for e in entries))
    return ViewSet((sw, sh), tuple(entries))


def reconstruct(
    views: ViewSet,
    weights: tuple[FieldConfig, ParamSet],
    cfg: ReconstructConfig = ReconstructConfig(),
) -> TriangleMesh:
    """Blueprint to closed mesh.

    Resizes the views to the trained input size, encodes them, evaluates the
    field over the model bounding box, extracts the cfg.iso level set and,
    when cfg.keep_largest is set, drops every component but the one with the
    largest enclosed volume. An everywhere-outside field yields an empty
    mesh rather than an error.
    """
    field_cfg, params = weights
    if not views.is_finalized:
        raise ManualRequired("view labels are unresolved; label all four views before reconstructing")
    views = resize_views_to_trained(views, field_cfg.encoder.max_input_dim)
    field = build_field(field_cfg, params, views)
    grid = evaluate_grid(field, field.bounds, cfg)
    mesh = marching_cubes(grid, cfg.iso)
    if cfg.keep_largest and mesh.n_triangles:
        mesh = largest_component(mesh)
    return mesh
