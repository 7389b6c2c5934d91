"""Blueprint view handling: cutting a sheet into four views, identifying them,
augmenting them for training, and synthesizing blueprints from meshes.

Blueprints are dark lines on a light background throughout; a "blank" row or
column is one whose every pixel is at least blank_threshold bright. A per-pixel
test (rather than a row mean) is required for thin-line drawings: one dark line
crossing a 500px row moves its mean by well under 1%, so any mean-based test
either splits through content or never finds a separator.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .errors import CutFailed, DimensionError, IdentificationFailed, ManualRequired, TieUnresolved
from .geometry import TriangleMesh, ViewKind, rasterize, shade, view_for_bounds
from .images import GrayImage, SOBEL_NORM, component_bounding_boxes, connected_components, sobel_magnitude

DEFAULT_BLANK_THRESHOLD = 0.98
_LINE_DARKNESS = 0.92


class LabelKind(str, Enum):
    FRONT = "front"
    BACK = "back"
    SIDE = "side"
    TOP = "top"
    UNRESOLVED = "unresolved"


class Facing(str, Enum):
    POSITIVE = "positive_axis"
    NEGATIVE = "negative_axis"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class BoundingBox:
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            object.__setattr__(self, name, int(getattr(self, name)))
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box must have positive size, got {self.w}x{self.h}")
        if self.x < 0 or self.y < 0:
            raise ValueError("box origin must be non-negative")

    @property
    def area(self) -> int:
        return self.w * self.h

    def to_json(self) -> dict:
        return {"x": self.x, "y": self.y, "w": self.w, "h": self.h}

    @classmethod
    def from_json(cls, d: dict) -> "BoundingBox":
        return cls(int(d["x"]), int(d["y"]), int(d["w"]), int(d["h"]))


@dataclass(frozen=True)
class ViewLabel:
    kind: LabelKind
    facing: Facing = Facing.UNKNOWN


@dataclass(frozen=True)
class ViewEntry:
    image: GrayImage
    box: BoundingBox
    label: ViewLabel
    alt_image: GrayImage | None = None  # windows-removed variant, when known

    def __post_init__(self):
        if (self.image.width, self.image.height) != (self.box.w, self.box.h):
            raise DimensionError(
                f"view image {self.image.width}x{self.image.height} does not match box {self.box.w}x{self.box.h}"
            )
        if self.alt_image is not None and self.alt_image.data.shape != self.image.data.shape:
            raise DimensionError("alt image must match the view image size")


@dataclass(frozen=True)
class ViewSet:
    source_size: tuple[int, int]  # (width, height) of the blueprint sheet
    entries: tuple[ViewEntry, ...]

    def __post_init__(self):
        entries = tuple(self.entries)
        if len(entries) != 4:
            raise DimensionError(f"a view set holds exactly 4 views, got {len(entries)}")
        sw, sh = self.source_size
        for e in entries:
            if e.box.x + e.box.w > sw or e.box.y + e.box.h > sh:
                raise ValueError(f"box {e.box} exceeds source size {self.source_size}")
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "source_size", (int(sw), int(sh)))

    @property
    def is_finalized(self) -> bool:
        kinds = sorted(e.label.kind.value for e in self.entries)
        if kinds != ["back", "front", "side", "top"]:
            return False
        return all(e.label.facing != Facing.UNKNOWN for e in self.entries)

    def entry(self, kind: LabelKind | str) -> ViewEntry:
        kind = LabelKind(kind)
        for e in self.entries:
            if e.label.kind == kind:
                return e
        raise KeyError(f"no {kind.value} view in set")

    def to_json(self) -> dict:
        return {
            "source_size": [self.source_size[0], self.source_size[1]],
            "views": [
                {"box": e.box.to_json(), "kind": e.label.kind.value, "facing": e.label.facing.value}
                for e in self.entries
            ],
        }


def crop(img: GrayImage, box: BoundingBox) -> GrayImage:
    if box.x + box.w > img.width or box.y + box.h > img.height:
        raise ValueError(f"box {box} exceeds image {img.width}x{img.height}")
    return GrayImage(img.data[box.y : box.y + box.h, box.x : box.x + box.w])


def viewset_from_json(payload: dict, source: GrayImage) -> ViewSet:
    sw, sh = payload["source_size"]
    if (source.width, source.height) != (int(sw), int(sh)):
        raise DimensionError(
            f"source image is {source.width}x{source.height}, descriptor says {sw}x{sh}"
        )
    entries = []
    for v in payload["views"]:
        box = BoundingBox.from_json(v["box"])
        label = ViewLabel(LabelKind(v["kind"]), Facing(v["facing"]))
        entries.append(ViewEntry(crop(source, box), box, label))
    return ViewSet((int(sw), int(sh)), tuple(entries))


# ---------------------------------------------------------------- cutting


def _tight_region(data: np.ndarray, region, thr: float):
    """Shrink (x0, y0, x1, y1) to its non-blank content; None if fully blank."""
    x0, y0, x1, y1 = region
    sub = data[y0:y1, x0:x1]
    rows = np.flatnonzero(sub.min(axis=1) < thr)
    if rows.size == 0:
        return None
    cols = np.flatnonzero(sub[rows[0] : rows[-1] + 1].min(axis=0) < thr)
    return (x0 + cols[0], y0 + rows[0], x0 + cols[-1] + 1, y0 + rows[-1] + 1)


def _widest_blank_run(data: np.ndarray, region, thr: float):
    """Widest interior run of blank rows/cols: (width, axis, start, stop) or None."""
    x0, y0, x1, y1 = region
    sub = data[y0:y1, x0:x1]
    best = None
    for axis, blank in ((0, sub.min(axis=1) >= thr), (1, sub.min(axis=0) >= thr)):
        padded = np.concatenate([[False], blank, [False]])
        starts = np.flatnonzero(padded[1:] & ~padded[:-1])
        stops = np.flatnonzero(~padded[1:] & padded[:-1])
        for s, e in zip(starts, stops):
            width = e - s
            # regions are pre-trimmed, so every run is interior
            if best is None or width > best[0]:
                best = (width, axis, s, e)
    return best


def line_cut(
    img: GrayImage, expected: int, blank_threshold: float = DEFAULT_BLANK_THRESHOLD
) -> list[BoundingBox]:
    """Recursively split at the widest blank row/column run until `expected`
    content regions remain. A row/column is blank when all its pixels are at
    least blank_threshold bright. Returns tight boxes sorted by (y, x)."""
    if expected < 1:
        raise ValueError("expected must be >= 1")
    data = img.data
    whole = _tight_region(data, (0, 0, img.width, img.height), blank_threshold)
    if whole is None:
        raise CutFailed("image is entirely blank")
    leaves = [whole]
    while len(leaves) < expected:
        best = None  # (width, leaf index, axis, start, stop)
        for i, region in enumerate(leaves):
            run = _widest_blank_run(data, region, blank_threshold)
            if run is None:
                continue
            width, axis, s, e = run
            if best is None or width > best[0]:
                best = (width, i, axis, s, e)
        if best is None:
            raise CutFailed(f"only {len(leaves)} regions reachable, wanted {expected}")
        _, i, axis, s, e = best
        x0, y0, x1, y1 = leaves.pop(i)
        if axis == 0:  # blank rows: split into top/bottom
            parts = [(x0, y0, x1, y0 + s), (x0, y0 + e, x1, y1)]
        else:  # blank columns: left/right
            parts = [(x0, y0, x0 + s, y1), (x0 + e, y0, x1, y1)]
        for part in parts:
            tight = _tight_region(data, part, blank_threshold)
            if tight is not None:  # trimming never drops a side of an interior run
                leaves.append(tight)
    leaves.sort(key=lambda r: (r[1], r[0]))
    return [BoundingBox(x0, y0, x1 - x0, y1 - y0) for x0, y0, x1, y1 in leaves]


def contour_cut(img: GrayImage, min_area: int = 25) -> list[BoundingBox]:
    """Bounding boxes of connected ink regions with box area >= min_area,
    sorted by descending box area. Ink is any pixel darker than 0.5."""
    ink = GrayImage((img.data < 0.5).astype(np.float32))
    labels = connected_components(ink, 0.5)
    boxes = [BoundingBox(*b) for b in component_bounding_boxes(labels)]
    boxes = [b for b in boxes if b.area >= min_area]
    boxes.sort(key=lambda b: (-b.area, b.y, b.x))
    return boxes


# ---------------------------------------------------------------- identify


def identify_views(boxes: list[BoundingBox]) -> list[tuple[BoundingBox, ViewLabel]]:
    """Label the four largest boxes: widest pair -> taller is Top, other is
    Side; remaining two are Unresolved (front/back is the user's call)."""
    if len(boxes) < 4:
        raise IdentificationFailed(f"need at least 4 boxes, got {len(boxes)}")
    by_area = sorted(boxes, key=lambda b: -b.area)
    if len(by_area) > 4 and by_area[3].area == by_area[4].area:
        tied = [b for b in by_area if b.area == by_area[3].area]
        raise TieUnresolved("area tie at the 4-box cutoff", tied)
    four = by_area[:4]
    by_width = sorted(four, key=lambda b: -b.w)
    if by_width[1].w == by_width[2].w:
        tied = [b for b in by_width if b.w == by_width[1].w]
        raise TieUnresolved("width tie while picking the two widest views", tied)
    a, b = by_width[0], by_width[1]
    if a.h == b.h:
        raise TieUnresolved("top/side height tie", [a, b])
    top, side = (a, b) if a.h > b.h else (b, a)
    out = [
        (top, ViewLabel(LabelKind.TOP)),
        (side, ViewLabel(LabelKind.SIDE)),
        (by_width[2], ViewLabel(LabelKind.UNRESOLVED)),
        (by_width[3], ViewLabel(LabelKind.UNRESOLVED)),
    ]
    return out


def extract_views(img: GrayImage, expected: int = 4, min_area: int = 25) -> ViewSet:
    """line_cut, falling back to contour_cut, then identify_views.

    Raises ManualRequired when neither cutter yields enough boxes, and
    TieUnresolved when identification hits an exact size tie.
    """
    boxes: list[BoundingBox] | None = None
    try:
        cut = line_cut(img, expected)
        if len(cut) == expected:
            boxes = cut
    except CutFailed:
        boxes = None
    if boxes is None:
        boxes = contour_cut(img, min_area=min_area)
    try:
        labeled = identify_views(boxes)
    except IdentificationFailed as exc:
        raise ManualRequired(f"automatic view extraction failed: {exc}") from exc
    entries = tuple(ViewEntry(crop(img, box), box, label) for box, label in labeled)
    return ViewSet((img.width, img.height), entries)


# ---------------------------------------------------------------- augment


@dataclass(frozen=True)
class AugmentConfig:
    noise_amplitude: float = 0.0
    block_artifact_strength: float = 0.0
    extra_line_count: int = 0
    window_removal: bool = False
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.noise_amplitude <= 1.0):
            raise ValueError("noise_amplitude must be in [0, 1]")
        if not (0.0 <= self.block_artifact_strength <= 1.0):
            raise ValueError("block_artifact_strength must be in [0, 1]")
        if self.extra_line_count < 0:
            raise ValueError("extra_line_count must be >= 0")


def _block_average(data: np.ndarray, block: int = 8) -> np.ndarray:
    h, w = data.shape
    out = np.empty_like(data)
    for by in range(0, h, block):
        for bx in range(0, w, block):
            tile = data[by : by + block, bx : bx + block]
            out[by : by + block, bx : bx + block] = tile.mean()
    return out


def _draw_segment(data: np.ndarray, x0, y0, x1, y1, value: float) -> None:
    n = int(max(abs(x1 - x0), abs(y1 - y0))) + 1
    ts = np.linspace(0.0, 1.0, n)
    xs = np.rint(x0 + (x1 - x0) * ts).astype(np.int64)
    ys = np.rint(y0 + (y1 - y0) * ts).astype(np.int64)
    data[ys, xs] = value


def augment(views: ViewSet, cfg: AugmentConfig) -> ViewSet:
    """Training-time corruption: window substitution, extra line segments,
    8x8 block artifacts, then uniform pixel noise. Pure function of cfg.seed."""
    rng = np.random.default_rng(np.uint64(cfg.seed))
    out = []
    for e in views.entries:
        img = e.image
        if cfg.window_removal and e.alt_image is not None:
            img = e.alt_image
        data = img.data.astype(np.float64)
        if cfg.extra_line_count > 0:
            ink = data[data < 0.5]
            h, w = data.shape
            for _ in range(cfg.extra_line_count):
                x0, x1 = rng.integers(0, w, size=2)
                y0, y1 = rng.integers(0, h, size=2)
                value = float(rng.choice(ink)) if ink.size else 0.0
                _draw_segment(data, x0, y0, x1, y1, value)
        if cfg.block_artifact_strength > 0.0:
            blocky = _block_average(data)
            data = (1.0 - cfg.block_artifact_strength) * data + cfg.block_artifact_strength * blocky
        if cfg.noise_amplitude > 0.0:
            noise = rng.uniform(-cfg.noise_amplitude, cfg.noise_amplitude, size=data.shape)
            data = data + noise
        new_img = GrayImage(np.clip(data, 0.0, 1.0).astype(np.float32)) if (
            cfg.noise_amplitude or cfg.block_artifact_strength or cfg.extra_line_count or (cfg.window_removal and e.alt_image is not None)
        ) else img
        out.append(replace(e, image=new_img))
    return ViewSet(views.source_size, tuple(out))


# ---------------------------------------------------------------- synthesis

_LAYOUT_GAP = 16
# left column: side over top (the two length-wide views); right: front over back
_LAYOUT_ORDER = (LabelKind.SIDE, LabelKind.TOP, LabelKind.FRONT, LabelKind.BACK)


def _line_image(
    mesh: TriangleMesh,
    view,
    line_threshold: float,
    depth_threshold: float,
    sobel_floor: float,
) -> GrayImage:
    buf = rasterize(mesh, view)
    depth, normal, _ = shade(mesh, buf)

    # deadband below sobel_floor: tessellation facets on smooth surfaces give
    # small normal steps that are shading variation, not drawn lines; a unit
    # normal step (crease, silhouette) lands at ~0.118 normalized and saturates
    sob = sobel_magnitude(normal).data.astype(np.float64)
    ink_sobel = np.clip((sob - sobel_floor) / (line_threshold - sobel_floor), 0.0, 1.0)

    # silhouette outline: covered pixels whose 4-neighborhood leaves the mask
    # (image border counts as uncovered, so a full-rect silhouette still gets
    # its rectangle outline)
    m = buf.mask
    inner = np.zeros_like(m)
    inner[1:-1, 1:-1] = (
        m[1:-1, 1:-1] & m[:-2, 1:-1] & m[2:, 1:-1] & m[1:-1, :-2] & m[1:-1, 2:]
    )
    outline = m & ~inner

    d = depth.data.astype(np.float64)
    disc = np.zeros_like(d, dtype=bool)
    dx = np.abs(np.diff(d, axis=1)) > depth_threshold
    dy = np.abs(np.diff(d, axis=0)) > depth_threshold
    disc[:, :-1] |= dx
    disc[:, 1:] |= dx
    disc[:-1, :] |= dy
    disc[1:, :] |= dy

    grp = np.zeros_like(disc)
    if mesh.groups is not None:
        gid = np.where(buf.mask, mesh.groups[np.maximum(buf.tri, 0)], -1)
        gx = (gid[:, :-1] != gid[:, 1:]) & (gid[:, :-1] >= 0) & (gid[:, 1:] >= 0)
        gy = (gid[:-1, :] != gid[1:, :]) & (gid[:-1, :] >= 0) & (gid[1:, :] >= 0)
        grp[:, :-1] |= gx
        grp[:, 1:] |= gx
        grp[:-1, :] |= gy
        grp[1:, :] |= gy

    # light-background component images multiplied together: union of dark lines
    out = (
        (1.0 - _LINE_DARKNESS * ink_sobel)
        * (1.0 - _LINE_DARKNESS * disc)
        * (1.0 - _LINE_DARKNESS * grp)
        * (1.0 - _LINE_DARKNESS * outline)
    )
    return GrayImage(out.astype(np.float32))


def synth_blueprint(
    mesh: TriangleMesh,
    resolution: int,
    glass_groups=frozenset(),
    line_threshold: float = 0.12,
    depth_threshold: float = 0.04,
    sobel_floor: float = 0.05,
    gap: int = _LAYOUT_GAP,
) -> ViewSet:
    """Render a four-view line blueprint of a normalized mesh.

    `resolution` is the pixel width of the length-wise (side/top) views. When
    glass_groups names face groups, each view also carries a windows-removed
    variant rendered without those faces (picked up by augment).
    """
    bmin, bmax = mesh.bounds()
    if abs((bmax[0] - bmin[0]) - 1.0) > 1e-6:
        raise ValueError("synth_blueprint expects a normalized mesh (X extent 1)")
    if resolution < 8:
        raise DimensionError("resolution must be at least 8 px")

    glass = frozenset(int(g) for g in glass_groups)
    alt_mesh = None
    if glass and mesh.groups is not None:
        keep = ~np.isin(mesh.groups, list(glass))
        if keep.any() and not keep.all():
            alt_mesh = TriangleMesh(mesh.vertices, mesh.triangles[keep], mesh.groups[keep])

    images: dict[LabelKind, GrayImage] = {}
    alts: dict[LabelKind, GrayImage | None] = {}
    for kind in _LAYOUT_ORDER:
        view = view_for_bounds(ViewKind(kind.value), bmin, bmax, resolution=resolution)
        images[kind] = _line_image(mesh, view, line_threshold, depth_threshold, sobel_floor)
        alts[kind] = (
            _line_image(alt_mesh, view, line_threshold, depth_threshold, sobel_floor)
            if alt_mesh
            else None
        )

    side, top = images[LabelKind.SIDE], images[LabelKind.TOP]
    front, back = images[LabelKind.FRONT], images[LabelKind.BACK]
    left_w = max(side.width, top.width)
    right_w = max(front.width, back.width)
    sheet_w = gap + left_w + gap + right_w + gap
    sheet_h = gap + max(side.height + gap + top.height, front.height + gap + back.height) + gap

    positions = {
        LabelKind.SIDE: (gap, gap),
        LabelKind.TOP: (gap, gap + side.height + gap),
        LabelKind.FRONT: (gap + left_w + gap, gap),
        LabelKind.BACK: (gap + left_w + gap, gap + front.height + gap),
    }
    entries = []
    for kind in _LAYOUT_ORDER:
        img = images[kind]
        x, y = positions[kind]
        entries.append(
            ViewEntry(
                img,
                BoundingBox(x, y, img.width, img.height),
                ViewLabel(LabelKind(kind.value), Facing.POSITIVE),
                alt_image=alts[kind],
            )
        )
    return ViewSet((sheet_w, sheet_h), tuple(entries))


def render_sheet(views: ViewSet) -> GrayImage:
    """Paste the view crops onto a white canvas at their boxes."""
    w, h = views.source_size
    canvas = np.ones((h, w), dtype=np.float32)
    for e in views.entries:
        canvas[e.box.y : e.box.y + e.box.h, e.box.x : e.box.x + e.box.w] = e.image.data
    return GrayImage(canvas)
