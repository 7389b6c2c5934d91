"""Orthographic cameras and a deterministic software z-buffer rasterizer.

Cameras are origin-centered: the view rect spans [-rect_w/2, rect_w/2] along
the camera's right vector and [-rect_h/2, rect_h/2] along up. Pixel mapping is
the area convention u = (s / rect_w + 0.5) * W - 0.5, so pixel centers sit on
integer coordinates and the rect edge maps to -0.5 / W - 0.5. The same mapping
is used when sampling encoder features, which is what keeps the field
pixel-aligned with these renders.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from ..errors import DegenerateMesh, DimensionError, RangeError
from ..images import GrayImage, VectorImage
from .mesh import TriangleMesh


class ViewKind(str, Enum):
    FRONT = "front"
    BACK = "back"
    SIDE = "side"
    TOP = "top"


# kind -> (view axis = looking direction, up vector). Front camera sits on +X
# and looks along -X; Side sits on +Y; Top looks down -Z with +Y toward the
# top of the image so length runs along image x for every wide view.
CANONICAL_VIEWS: dict[ViewKind, tuple[tuple[float, float, float], tuple[float, float, float]]] = {
    ViewKind.FRONT: ((-1.0, 0.0, 0.0), (0.0, 0.0, 1.0)),
    ViewKind.BACK: ((1.0, 0.0, 0.0), (0.0, 0.0, 1.0)),
    ViewKind.SIDE: ((0.0, -1.0, 0.0), (0.0, 0.0, 1.0)),
    ViewKind.TOP: ((0.0, 0.0, -1.0), (0.0, 1.0, 0.0)),
}


@dataclass(frozen=True)
class OrthoView:
    """Orthographic camera. axis is the looking direction; kind is None for
    auxiliary scan cameras that are not one of the four blueprint views."""

    axis: np.ndarray  # (3,) unit looking direction
    up: np.ndarray  # (3,) unit, perpendicular to axis
    rect: tuple[float, float]  # (width, height) in model units
    resolution: float  # pixels per model unit
    kind: ViewKind | None = None

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=np.float64)
        up = np.asarray(self.up, dtype=np.float64)
        if axis.shape != (3,) or up.shape != (3,):
            raise DimensionError("axis and up must be 3-vectors")
        na, nu = np.linalg.norm(axis), np.linalg.norm(up)
        if na < 1e-12 or nu < 1e-12:
            raise ValueError("axis and up must be nonzero")
        axis = axis / na
        up = up / nu
        if abs(float(axis @ up)) > 1e-9:
            raise ValueError("axis must be perpendicular to up")
        w, h = float(self.rect[0]), float(self.rect[1])
        if w <= 0.0 or h <= 0.0:
            raise ValueError(f"rect must be strictly positive, got {(w, h)}")
        if self.resolution <= 0.0:
            raise ValueError("resolution must be positive")
        for name, val in (("axis", axis), ("up", up)):
            val = np.ascontiguousarray(val)
            val.flags.writeable = False
            object.__setattr__(self, name, val)
        object.__setattr__(self, "rect", (w, h))

    @property
    def right(self) -> np.ndarray:
        # right = up x axis gives a basis with right x up = axis
        return np.cross(self.up, self.axis)

    def image_size(self) -> tuple[int, int]:
        w = max(1, int(round(self.rect[0] * self.resolution)))
        h = max(1, int(round(self.rect[1] * self.resolution)))
        return w, h


def view_for_bounds(kind: ViewKind, bmin, bmax, resolution: float, margin: float = 0.0) -> OrthoView:
    """Canonical view whose rect exactly covers an axis-aligned bounding box."""
    bmin = np.asarray(bmin, dtype=np.float64)
    bmax = np.asarray(bmax, dtype=np.float64)
    axis, up = (np.array(v) for v in CANONICAL_VIEWS[kind])
    right = np.cross(up, axis)
    extent = bmax - bmin
    w = float(np.abs(right) @ extent) + 2.0 * margin
    h = float(np.abs(up) @ extent) + 2.0 * margin
    return OrthoView(axis=axis, up=up, rect=(w, h), resolution=resolution, kind=kind)


def view_for_direction(
    axis, bmin, bmax, resolution: float, margin: float = 0.0, up=None
) -> OrthoView:
    """View along an arbitrary direction; the origin-centered rect covers the
    given bounding box. When `up` is omitted, world +Z is projected out of the
    axis (falling back to +X for near-vertical directions)."""
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    if up is None:
        ref = np.array([0.0, 0.0, 1.0]) if abs(axis[2]) < 0.99 else np.array([1.0, 0.0, 0.0])
        up = ref - (ref @ axis) * axis
    up = np.asarray(up, dtype=np.float64)
    up = up / np.linalg.norm(up)
    right = np.cross(up, axis)
    ends = np.stack([np.asarray(bmin, dtype=np.float64), np.asarray(bmax, dtype=np.float64)])
    corners = np.array(
        [[ends[i, 0], ends[j, 1], ends[k, 2]] for i in (0, 1) for j in (0, 1) for k in (0, 1)]
    )
    w = 2.0 * float(np.abs(corners @ right).max()) + 2.0 * margin
    h = 2.0 * float(np.abs(corners @ up).max()) + 2.0 * margin
    return OrthoView(axis=axis, up=up, rect=(w, h), resolution=resolution, kind=None)


def project_points(view: OrthoView, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """World points -> continuous pixel coordinates (u, v), pixel centers at integers."""
    points = np.asarray(points, dtype=np.float64)
    w, h = view.image_size()
    s_r = points @ view.right
    s_u = points @ view.up
    u = (s_r / view.rect[0] + 0.5) * w - 0.5
    v = (-s_u / view.rect[1] + 0.5) * h - 0.5
    return u, v


def unproject_pixels(view: OrthoView, ix: np.ndarray, iy: np.ndarray, depth: np.ndarray) -> np.ndarray:
    """Inverse of project_points at pixel centers; depth is the raw dot(p, axis)."""
    w, h = view.image_size()
    s_r = ((np.asarray(ix, dtype=np.float64) + 0.5) / w - 0.5) * view.rect[0]
    s_u = -(((np.asarray(iy, dtype=np.float64) + 0.5) / h - 0.5) * view.rect[1])
    d = np.asarray(depth, dtype=np.float64)
    return (
        s_r[:, None] * view.right[None, :]
        + s_u[:, None] * view.up[None, :]
        + d[:, None] * view.axis[None, :]
    )


@dataclass(frozen=True)
class RasterBuffers:
    """Raw rasterization output. depth is dot(p, axis) with +inf background
    (smaller = nearer the camera); tri is the winning triangle index or -1."""

    view: OrthoView
    depth: np.ndarray  # (h, w) float64
    tri: np.ndarray  # (h, w) int32

    @property
    def mask(self) -> np.ndarray:
        return self.tri >= 0


def _top_left(du: float, dv: float) -> bool:
    # In y-down pixel space with inside == nonnegative edge function, an edge
    # owns its zero set iff it is a top edge (horizontal, running +u) or a
    # left edge (running -v).
    return (dv == 0.0 and du > 0.0) or dv < 0.0


def rasterize(mesh: TriangleMesh, view: OrthoView) -> RasterBuffers:
    if mesh.n_triangles == 0:
        raise DegenerateMesh("cannot rasterize a mesh with no triangles")
    w, h = view.image_size()
    depth = np.full((h, w), np.inf, dtype=np.float64)
    tri_buf = np.full((h, w), -1, dtype=np.int32)

    us, vs = project_points(view, mesh.vertices)
    d_axis = mesh.vertices @ view.axis

    tris = mesh.triangles
    for t in range(len(tris)):
        i0, i1, i2 = tris[t]
        u0, u1, u2 = us[i0], us[i1], us[i2]
        v0, v1, v2 = vs[i0], vs[i1], vs[i2]
        area2 = (u1 - u0) * (v2 - v0) - (u2 - u0) * (v1 - v0)
        if area2 == 0.0:
            continue
        if area2 < 0.0:  # orient so every edge function is >= 0 inside
            u1, u2 = u2, u1
            v1, v2 = v2, v1
            area2 = -area2
            d0, d1, d2 = d_axis[i0], d_axis[i2], d_axis[i1]
        else:
            d0, d1, d2 = d_axis[i0], d_axis[i1], d_axis[i2]

        x_lo = max(0, int(np.ceil(min(u0, u1, u2))))
        x_hi = min(w - 1, int(np.floor(max(u0, u1, u2))))
        y_lo = max(0, int(np.ceil(min(v0, v1, v2))))
        y_hi = min(h - 1, int(np.floor(max(v0, v1, v2))))
        if x_lo > x_hi or y_lo > y_hi:
            continue
        px = np.arange(x_lo, x_hi + 1, dtype=np.float64)
        py = np.arange(y_lo, y_hi + 1, dtype=np.float64)
        gx, gy = np.meshgrid(px, py)

        # edge functions; e_k pairs with the vertex opposite edge k
        e0 = (u2 - u1) * (gy - v1) - (v2 - v1) * (gx - u1)
        e1 = (u0 - u2) * (gy - v2) - (v0 - v2) * (gx - u2)
        e2 = (u1 - u0) * (gy - v0) - (v1 - v0) * (gx - u0)
        inside = (
            (e0 > 0.0) | ((e0 == 0.0) & _top_left(u2 - u1, v2 - v1))
        ) & (
            (e1 > 0.0) | ((e1 == 0.0) & _top_left(u0 - u2, v0 - v2))
        ) & (
            (e2 > 0.0) | ((e2 == 0.0) & _top_left(u1 - u0, v1 - v0))
        )
        if not inside.any():
            continue
        d = (e0 * d0 + e1 * d1 + e2 * d2) / area2
        win = depth[y_lo : y_hi + 1, x_lo : x_hi + 1]
        closer = inside & (d < win)
        win[closer] = d[closer]
        tri_buf[y_lo : y_hi + 1, x_lo : x_hi + 1][closer] = t

    return RasterBuffers(view=view, depth=depth, tri=tri_buf)


def render_view(mesh: TriangleMesh, view: OrthoView) -> tuple[GrayImage, VectorImage, GrayImage]:
    """Depth (normalized to [0,1] over the mesh bounds, background 1), world
    normals (zero where uncovered), and a binary coverage mask."""
    return shade(mesh, rasterize(mesh, view))


def shade(mesh: TriangleMesh, buf: RasterBuffers) -> tuple[GrayImage, VectorImage, GrayImage]:
    """render_view images from an existing rasterization of the same mesh."""
    view = buf.view
    d_axis = mesh.vertices @ view.axis
    d_min, d_max = float(d_axis.min()), float(d_axis.max())
    span = max(d_max - d_min, 1e-12)
    mask = buf.mask

    depth = np.ones_like(buf.depth)
    depth[mask] = np.clip((buf.depth[mask] - d_min) / span, 0.0, 1.0)

    normals = mesh.triangle_normals()
    nrm_img = np.zeros((*buf.depth.shape, 3), dtype=np.float64)
    nrm_img[mask] = normals[buf.tri[mask]]

    return (
        GrayImage(depth.astype(np.float32)),
        VectorImage(nrm_img.astype(np.float32)),
        GrayImage(mask.astype(np.float32)),
    )


def sample_depth(buf: RasterBuffers, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Depth-buffer lookup at each point's projected pixel (nearest pixel).

    Returns (buffer depth, point depth along the view axis); buffer depth is
    +inf where the projection is uncovered or falls outside the image.
    """
    points = np.asarray(points, dtype=np.float64)
    w, h = buf.view.image_size()
    u, v = project_points(buf.view, points)
    ix = np.rint(u).astype(np.int64)
    iy = np.rint(v).astype(np.int64)
    in_img = (ix >= 0) & (ix < w) & (iy >= 0) & (iy < h)
    stored = np.full(len(points), np.inf)
    stored[in_img] = buf.depth[iy[in_img], ix[in_img]]
    return stored, points @ buf.view.axis


def require_covered(buf: RasterBuffers) -> None:
    if not buf.mask.any():
        raise RangeError("rasterization produced an empty mask")
