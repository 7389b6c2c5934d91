"""Visual hull: carve a voxel grid by the four orthographic silhouettes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionError, EmptyHull
from ..geometry import CANONICAL_VIEWS, OrthoView, TriangleMesh, ViewKind, project_points, rasterize
from ..images import GrayImage
from ..views import BoundingBox, Facing, LabelKind, ViewEntry, ViewLabel, ViewSet


@dataclass(frozen=True)
class VoxelGrid:
    origin: np.ndarray  # (3,) world position of the grid's min corner
    spacing: float  # cubic voxel edge length
    occupancy: np.ndarray  # (nx, ny, nz) bool

    def __post_init__(self):
        origin = np.asarray(self.origin, dtype=np.float64)
        occ = np.asarray(self.occupancy)
        if origin.shape != (3,):
            raise DimensionError("origin must be a 3-vector")
        if occ.ndim != 3 or occ.dtype != bool:
            raise DimensionError("occupancy must be a 3D bool array")
        if not self.spacing > 0:
            raise DimensionError("spacing must be positive")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "occupancy", occ)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.occupancy.shape

    def centers(self) -> np.ndarray:
        """World centers of all voxels, shape (nx, ny, nz, 3)."""
        nx, ny, nz = self.shape
        ii, jj, kk = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
        idx = np.stack([ii, jj, kk], axis=-1).astype(np.float64)
        return self.origin + (idx + 0.5) * self.spacing

    def world_to_index(self, points: np.ndarray) -> np.ndarray:
        return np.floor((np.asarray(points, dtype=np.float64) - self.origin) / self.spacing).astype(np.int64)

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Occupancy lookup; False outside the grid."""
        idx = self.world_to_index(np.atleast_2d(points))
        nx, ny, nz = self.shape
        ok = np.all((idx >= 0) & (idx < [nx, ny, nz]), axis=1)
        out = np.zeros(len(idx), dtype=bool)
        if ok.any():
            sel = idx[ok]
            out[ok] = self.occupancy[sel[:, 0], sel[:, 1], sel[:, 2]]
        return out

    def boundary_points(self) -> np.ndarray:
        """World centers of occupied voxels touching free space (6-neighborhood;
        the grid border counts as free)."""
        occ = self.occupancy
        interior = np.zeros_like(occ)
        interior[1:-1, 1:-1, 1:-1] = (
            occ[1:-1, 1:-1, 1:-1]
            & occ[:-2, 1:-1, 1:-1]
            & occ[2:, 1:-1, 1:-1]
            & occ[1:-1, :-2, 1:-1]
            & occ[1:-1, 2:, 1:-1]
            & occ[1:-1, 1:-1, :-2]
            & occ[1:-1, 1:-1, 2:]
        )
        shell = occ & ~interior
        idx = np.argwhere(shell).astype(np.float64)
        return self.origin + (idx + 0.5) * self.spacing


def view_axes(kind: LabelKind | ViewKind, facing: Facing = Facing.POSITIVE) -> tuple[np.ndarray, np.ndarray]:
    """Camera (axis, up) for a labeled view; negative facing flips the look
    axis, which mirrors the image horizontally."""
    axis, up = (np.array(v, dtype=np.float64) for v in CANONICAL_VIEWS[ViewKind(kind.value)])
    if facing == Facing.NEGATIVE:
        axis = -axis
    return axis, up


def silhouette_views(mesh: TriangleMesh, resolution: int, gap: int = 16) -> ViewSet:
    """Four-view ViewSet whose images are coverage masks (dark = object),
    laid out like synth_blueprint. resolution = pixel width of side/top."""
    from ..geometry import view_for_bounds

    bmin, bmax = mesh.bounds()
    images = {}
    for kind in (LabelKind.SIDE, LabelKind.TOP, LabelKind.FRONT, LabelKind.BACK):
        view = view_for_bounds(ViewKind(kind.value), bmin, bmax, resolution=resolution)
        mask = rasterize(mesh, view).mask
        images[kind] = GrayImage(1.0 - mask.astype(np.float32))
    side, top = images[LabelKind.SIDE], images[LabelKind.TOP]
    front, back = images[LabelKind.FRONT], images[LabelKind.BACK]
    left_w = max(side.width, top.width)
    positions = {
        LabelKind.SIDE: (gap, gap),
        LabelKind.TOP: (gap, gap + side.height + gap),
        LabelKind.FRONT: (gap + left_w + gap, gap),
        LabelKind.BACK: (gap + left_w + gap, gap + front.height + gap),
    }
    sheet_w = gap + left_w + gap + max(front.width, back.width) + gap
    sheet_h = gap + max(side.height + gap + top.height, front.height + gap + back.height) + gap
    entries = tuple(
        ViewEntry(
            images[kind],
            BoundingBox(*positions[kind], images[kind].width, images[kind].height),
            ViewLabel(kind, Facing.POSITIVE),
        )
        for kind in (LabelKind.SIDE, LabelKind.TOP, LabelKind.FRONT, LabelKind.BACK)
    )
    return ViewSet((sheet_w, sheet_h), entries)


def visual_hull(views: ViewSet, res: int, px_per_unit: float | None = None) -> VoxelGrid:
    """Voxel grid carved by all four silhouettes (dark pixels = object).

    A voxel survives iff its center projects into the silhouette of every
    view; Front and Back both test the X projection. px_per_unit defaults to
    the Side view's width, i.e. a normalized mesh spanning X extent 1.
    """
    if not views.is_finalized:
        raise DimensionError("visual_hull needs a finalized ViewSet")
    if res < 2:
        raise DimensionError("res must be at least 2")
    side = views.entry(LabelKind.SIDE)
    top = views.entry(LabelKind.TOP)
    ppu = float(px_per_unit) if px_per_unit else float(side.box.w)

    # world extents from the view rects: X and Z from Side, Y from Top height
    ex = side.box.w / ppu
    ez = side.box.h / ppu
    ey = top.box.h / ppu
    spacing = ex / res
    shape = tuple(max(1, int(round(e / spacing))) for e in (ex, ey, ez))
    origin = np.array([-ex / 2.0, -ey / 2.0, -ez / 2.0])

    grid = VoxelGrid(origin, spacing, np.ones(shape, dtype=bool))
    centers = grid.centers().reshape(-1, 3)
    occ = np.ones(len(centers), dtype=bool)

    for entry in views.entries:
        mask = entry.image.data < 0.5
        if not mask.any():
            raise EmptyHull(f"{entry.label.kind.value} silhouette is empty")
        axis, up = view_axes(entry.label.kind, entry.label.facing)
        h, w = mask.shape
        view = OrthoView(axis=axis, up=up, rect=(w / ppu, h / ppu), resolution=ppu)
        vw, vh = view.image_size()
        # the rect/ppu rounding must reproduce the crop's pixel size
        if (vw, vh) != (w, h):
            raise DimensionError(f"{entry.label.kind.value} view rect maps to {vw}x{vh}, image is {w}x{h}")
        u, v = project_points(view, centers)
        iu = np.rint(u).astype(np.int64)
        iv = np.rint(v).astype(np.int64)
        ok = (iu >= 0) & (iu < w) & (iv >= 0) & (iv < h)
        hit = np.zeros(len(centers), dtype=bool)
        hit[ok] = mask[iv[ok], iu[ok]]
        occ &= hit

    occupancy = occ.reshape(shape)
    if not occupancy.any():
        raise EmptyHull("silhouette intersection is empty")
    return VoxelGrid(origin, spacing, occupancy)
