"""Blueprint view extraction, identification, augmentation, synthesis.

Cutting tests compare against construction coordinates of programmatically
assembled sheets; contour tests against a flood-fill oracle; synthesis tests
against closed-form expectations for cubes and spheres.
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from blueprint3d.errors import (
    CutFailed,
    DimensionError,
    IdentificationFailed,
    ManualRequired,
    TieUnresolved,
)
from blueprint3d.geometry import TriangleMesh, normalize_mesh
from blueprint3d.geometry.shapes import box_mesh, car_proxy_mesh, cube_mesh, uv_sphere_mesh
from blueprint3d.images import GrayImage
from blueprint3d.views import (
    AugmentConfig,
    BoundingBox,
    Facing,
    LabelKind,
    ViewEntry,
    ViewLabel,
    ViewSet,
    augment,
    contour_cut,
    crop,
    extract_views,
    identify_views,
    line_cut,
    render_sheet,
    synth_blueprint,
    viewset_from_json,
)


def sheet_with_rects(size, rects, value=0.0, outline=False):
    """White sheet with filled (or outlined) dark rectangles at (x, y, w, h)."""
    w, h = size
    img = np.ones((h, w), dtype=np.float32)
    for x, y, rw, rh in rects:
        if outline:
            img[y, x : x + rw] = value
            img[y + rh - 1, x : x + rw] = value
            img[y : y + rh, x] = value
            img[y : y + rh, x + rw - 1] = value
        else:
            img[y : y + rh, x : x + rw] = value
    return GrayImage(img)


def boxes_equal_within(boxes, rects, tol=1):
    assert len(boxes) == len(rects)
    got = sorted((b.x, b.y, b.w, b.h) for b in boxes)
    want = sorted(rects)
    for g, t in zip(got, want):
        gx, gy, gw, gh = g
        tx, ty, tw, th = t
        assert abs(gx - tx) <= tol and abs(gy - ty) <= tol
        assert abs(gx + gw - (tx + tw)) <= tol and abs(gy + gh - (ty + th)) <= tol


# ------------------------------------------------------------------ line_cut


RECTS_2X2 = [(10, 8, 40, 30), (60, 8, 25, 30), (10, 44, 40, 20), (60, 44, 25, 20)]


def test_line_cut_2x2_filled_exact():
    img = sheet_with_rects((100, 72), RECTS_2X2)
    boxes = line_cut(img, 4)
    boxes_equal_within(boxes, RECTS_2X2, tol=0)


def test_line_cut_2x2_outlined_exact():
    img = sheet_with_rects((100, 72), RECTS_2X2, outline=True)
    boxes = line_cut(img, 4)
    boxes_equal_within(boxes, RECTS_2X2, tol=0)


def test_line_cut_blank_image_fails():
    with pytest.raises(CutFailed):
        line_cut(GrayImage(np.ones((40, 40), dtype=np.float32)), 4)


def test_line_cut_solid_rect_cannot_reach_four():
    img = sheet_with_rects((60, 60), [(10, 10, 40, 40)])
    with pytest.raises(CutFailed):
        line_cut(img, 4)
    assert len(line_cut(img, 1)) == 1


def test_line_cut_single_box_tight():
    img = sheet_with_rects((60, 60), [(7, 12, 21, 17)])
    (b,) = line_cut(img, 1)
    assert (b.x, b.y, b.w, b.h) == (7, 12, 21, 17)


def test_line_cut_uneven_grid():
    rects = [(5, 5, 30, 10), (45, 5, 12, 42), (5, 25, 18, 22), (28, 25, 9, 22)]
    img = sheet_with_rects((70, 60), rects)
    boxes = line_cut(img, 4)
    boxes_equal_within(boxes, rects, tol=0)


def test_line_cut_thin_line_is_content_not_separator():
    # a 1px dark line crossing a wide sheet barely moves any row mean, but it
    # is content: splits happen in the truly blank bands around it, and the
    # line ends up inside a box rather than being cut through
    img = np.ones((70, 400), dtype=np.float32)
    img[10:30, 10:390] = 0.0  # upper rect
    img[35, 5:395] = 0.1  # thin line between the rects
    img[42:60, 10:390] = 0.0  # lower rect
    boxes = line_cut(GrayImage(img), 3)
    assert sorted((b.y, b.h) for b in boxes) == [(10, 20), (35, 1), (42, 18)]
    # with expected=2 the split uses the widest blank band (rows 36..41),
    # so the line joins the upper box instead of vanishing
    two = sorted(line_cut(GrayImage(img), 2), key=lambda b: b.y)
    assert [(b.y, b.h) for b in two] == [(10, 26), (42, 18)]


# ---------------------------------------------------------------- contour_cut


def flood_count(mask):
    mask = mask.copy()
    n = 0
    h, w = mask.shape
    for sy in range(h):
        for sx in range(w):
            if mask[sy, sx]:
                n += 1
                stack = [(sy, sx)]
                mask[sy, sx] = False
                while stack:
                    y, x = stack.pop()
                    for dy in (-1, 0, 1):
                        for dx in (-1, 0, 1):
                            ny, nx = y + dy, x + dx
                            if 0 <= ny < h and 0 <= nx < w and mask[ny, nx]:
                                mask[ny, nx] = False
                                stack.append((ny, nx))
    return n


def test_contour_cut_min_area_filters():
    rects = [(5, 5, 20, 20), (40, 5, 15, 15), (5, 40, 12, 12), (40, 40, 10, 10), (60, 60, 2, 2)]
    img = sheet_with_rects((70, 70), rects)
    boxes = contour_cut(img, min_area=25)
    boxes_equal_within(boxes, rects[:4], tol=0)
    areas = [b.area for b in boxes]
    assert areas == sorted(areas, reverse=True)


def test_contour_cut_overlapping_bboxes_disjoint_pixels():
    # L-shape and a blob inside its bbox notch: disjoint pixels, overlapping boxes
    img = np.ones((40, 40), dtype=np.float32)
    img[5:35, 5:10] = 0.0
    img[30:35, 5:35] = 0.0  # L
    img[8:20, 20:32] = 0.0  # blob inside the L's bbox
    n = flood_count(img < 0.5)
    boxes = contour_cut(GrayImage(img), min_area=4)
    assert n == 2 and len(boxes) == 2


def test_contour_cut_blank_empty():
    assert contour_cut(GrayImage(np.ones((20, 20), dtype=np.float32))) == []


def test_contour_cut_count_matches_flood_oracle():
    rng = np.random.default_rng(7)
    img = np.ones((80, 80), dtype=np.float32)
    for _ in range(6):
        x, y = rng.integers(0, 70, size=2)
        w, h = rng.integers(3, 10, size=2)
        img[y : y + h, x : x + w] = 0.0
    n = flood_count(img < 0.5)
    assert len(contour_cut(GrayImage(img), min_area=1)) == n


# -------------------------------------------------------------- identify_views


SPEC_BOXES = [
    BoundingBox(0, 0, 400, 160),
    BoundingBox(0, 200, 400, 120),
    BoundingBox(450, 0, 140, 120),
    BoundingBox(450, 150, 140, 118),
    BoundingBox(600, 0, 8, 6),
    BoundingBox(600, 20, 5, 5),
]


def test_identify_views_example():
    out = identify_views(SPEC_BOXES)
    labels = {(b.w, b.h): lab.kind for b, lab in out}
    assert labels[(400, 160)] == LabelKind.TOP
    assert labels[(400, 120)] == LabelKind.SIDE
    assert labels[(140, 120)] == LabelKind.UNRESOLVED
    assert labels[(140, 118)] == LabelKind.UNRESOLVED
    assert all(lab.facing == Facing.UNKNOWN for _, lab in out)


@settings(max_examples=60, deadline=None)
@given(st.permutations(SPEC_BOXES))
def test_identify_views_order_invariant(perm):
    out = identify_views(list(perm))
    assert {(b.w, b.h): lab.kind for b, lab in out} == {
        (400, 160): LabelKind.TOP,
        (400, 120): LabelKind.SIDE,
        (140, 120): LabelKind.UNRESOLVED,
        (140, 118): LabelKind.UNRESOLVED,
    }


def test_identify_views_height_tie():
    boxes = [
        BoundingBox(0, 0, 400, 120),
        BoundingBox(0, 200, 400, 120),
        BoundingBox(450, 0, 140, 120),
        BoundingBox(450, 150, 140, 118),
    ]
    with pytest.raises(TieUnresolved) as exc:
        identify_views(boxes)
    assert len(exc.value.candidates) == 2


def test_identify_views_width_tie():
    boxes = [
        BoundingBox(0, 0, 400, 160),
        BoundingBox(0, 200, 400, 120),
        BoundingBox(450, 0, 400, 30),
        BoundingBox(450, 150, 140, 118),
    ]
    with pytest.raises(TieUnresolved):
        identify_views(boxes)


def test_identify_views_cutoff_area_tie():
    boxes = [
        BoundingBox(0, 0, 400, 160),
        BoundingBox(0, 200, 400, 120),
        BoundingBox(450, 0, 140, 120),
        BoundingBox(450, 150, 100, 50),
        BoundingBox(600, 0, 50, 100),
    ]
    with pytest.raises(TieUnresolved) as exc:
        identify_views(boxes)
    assert len(exc.value.candidates) == 2


def test_identify_views_too_few():
    with pytest.raises(IdentificationFailed):
        identify_views(SPEC_BOXES[:3])


# --------------------------------------------------------------- extract_views


def test_extract_views_grid_sheet():
    rects = [(10, 8, 60, 30), (80, 8, 25, 30), (10, 44, 60, 24), (80, 44, 25, 24)]
    img = sheet_with_rects((115, 76), rects)
    vs = extract_views(img)
    boxes_equal_within([e.box for e in vs.entries], rects, tol=0)
    kinds = sorted(e.label.kind.value for e in vs.entries)
    assert kinds == ["side", "top", "unresolved", "unresolved"]
    # top is the taller of the two widest (60 wide): heights 30 vs 24
    assert vs.entry("top").box.h == 30
    assert vs.entry("side").box.h == 24
    for e in vs.entries:
        assert np.array_equal(e.image.data, img.data[e.box.y : e.box.y + e.box.h, e.box.x : e.box.x + e.box.w])


def test_extract_views_falls_back_to_contours():
    # pinwheel of four bars around a small center blob: every row and every
    # column crosses some rectangle, so no guillotine separator exists and
    # line_cut cannot even make the first split
    bars = [(5, 5, 70, 12), (77, 5, 10, 70), (17, 77, 64, 10), (5, 19, 10, 66)]
    center = (30, 34, 24, 20)
    img = sheet_with_rects((95, 95), bars + [center])
    with pytest.raises(CutFailed):
        line_cut(img, 4)
    vs = extract_views(img)
    boxes_equal_within([e.box for e in vs.entries], bars, tol=0)
    # the widest two bars are 70 and 64 wide; the 70-wide one is taller
    assert (vs.entry("top").box.w, vs.entry("top").box.h) == (70, 12)
    assert (vs.entry("side").box.w, vs.entry("side").box.h) == (64, 10)


def test_extract_views_too_few_blobs():
    img = sheet_with_rects((80, 80), [(5, 5, 30, 30), (45, 45, 20, 20)])
    with pytest.raises(ManualRequired):
        extract_views(img)


def test_extract_views_propagates_ties():
    rects = [(5, 5, 40, 30), (55, 5, 40, 30), (5, 45, 20, 20), (55, 45, 20, 25)]
    img = sheet_with_rects((105, 80), rects)
    with pytest.raises(TieUnresolved):
        extract_views(img)


# ----------------------------------------------------------- ViewSet plumbing


def make_viewset():
    # outlined rects: crops have light interiors so augmentation ink is visible
    rects = [(10, 8, 60, 30), (80, 8, 25, 30), (10, 44, 60, 24), (80, 44, 25, 24)]
    img = sheet_with_rects((115, 76), rects, outline=True)
    return extract_views(img), img


def test_viewset_json_round_trip():
    vs, img = make_viewset()
    payload = vs.to_json()
    assert payload["source_size"] == [115, 76]
    assert all(set(v) == {"box", "kind", "facing"} for v in payload["views"])
    back = viewset_from_json(payload, img)
    for a, b in zip(vs.entries, back.entries):
        assert a.box == b.box and a.label == b.label
        assert np.array_equal(a.image.data, b.image.data)


def test_viewset_json_rejects_wrong_source():
    vs, img = make_viewset()
    small = GrayImage(np.ones((10, 10), dtype=np.float32))
    with pytest.raises(DimensionError):
        viewset_from_json(vs.to_json(), small)


def test_viewset_finalized_predicate():
    vs, _ = make_viewset()
    assert not vs.is_finalized
    fixed = []
    pending = [LabelKind.FRONT, LabelKind.BACK]
    for e in vs.entries:
        kind = e.label.kind if e.label.kind != LabelKind.UNRESOLVED else pending.pop()
        fixed.append(ViewEntry(e.image, e.box, ViewLabel(kind, Facing.POSITIVE)))
    assert ViewSet(vs.source_size, tuple(fixed)).is_finalized


def test_viewset_crop_must_match_box():
    img = GrayImage(np.ones((20, 20), dtype=np.float32))
    with pytest.raises(DimensionError):
        ViewEntry(img, BoundingBox(0, 0, 10, 10), ViewLabel(LabelKind.TOP))


# -------------------------------------------------------------------- augment


def test_augment_identity_at_zero():
    vs, _ = make_viewset()
    out = augment(vs, AugmentConfig(seed=3))
    for a, b in zip(vs.entries, out.entries):
        assert a.box == b.box
        assert np.array_equal(a.image.data, b.image.data)


def test_augment_deterministic():
    vs, _ = make_viewset()
    cfg = AugmentConfig(noise_amplitude=0.08, block_artifact_strength=0.4, extra_line_count=3, seed=11)
    a = augment(vs, cfg)
    b = augment(vs, cfg)
    for ea, eb in zip(a.entries, b.entries):
        assert np.array_equal(ea.image.data, eb.image.data)
    c = augment(vs, AugmentConfig(noise_amplitude=0.08, block_artifact_strength=0.4, extra_line_count=3, seed=12))
    assert any(not np.array_equal(ea.image.data, ec.image.data) for ea, ec in zip(a.entries, c.entries))


def test_augment_noise_bound():
    vs, _ = make_viewset()
    out = augment(vs, AugmentConfig(noise_amplitude=0.1, seed=5))
    for a, b in zip(vs.entries, out.entries):
        assert np.max(np.abs(a.image.data.astype(np.float64) - b.image.data)) <= 0.1 + 1e-7
        assert b.image.data.min() >= 0.0 and b.image.data.max() <= 1.0


def test_augment_preserves_boxes():
    vs, _ = make_viewset()
    cfg = AugmentConfig(noise_amplitude=0.05, block_artifact_strength=0.3, extra_line_count=2, seed=2)
    out = augment(vs, cfg)
    assert [e.box for e in out.entries] == [e.box for e in vs.entries]
    assert out.source_size == vs.source_size


def test_augment_extra_lines_add_ink():
    vs, _ = make_viewset()
    out = augment(vs, AugmentConfig(extra_line_count=4, seed=9))
    changed = sum(
        not np.array_equal(a.image.data, b.image.data) for a, b in zip(vs.entries, out.entries)
    )
    assert changed == 4


def test_augment_window_removal_uses_alt():
    vs, _ = make_viewset()
    entries = tuple(
        ViewEntry(e.image, e.box, e.label, alt_image=GrayImage(np.ones_like(e.image.data)))
        for e in vs.entries
    )
    vs_alt = ViewSet(vs.source_size, entries)
    out = augment(vs_alt, AugmentConfig(window_removal=True, seed=0))
    for e in out.entries:
        assert e.image.data.min() == 1.0
    # without alt variants the flag is a no-op
    out2 = augment(vs, AugmentConfig(window_removal=True, seed=0))
    for a, b in zip(vs.entries, out2.entries):
        assert np.array_equal(a.image.data, b.image.data)


def test_augment_config_validation():
    with pytest.raises(ValueError):
        AugmentConfig(noise_amplitude=1.5)
    with pytest.raises(ValueError):
        AugmentConfig(block_artifact_strength=-0.1)
    with pytest.raises(ValueError):
        AugmentConfig(extra_line_count=-1)


# ------------------------------------------------------------ synth_blueprint


def test_synth_cube_views_are_rect_outlines():
    cube, _ = normalize_mesh(cube_mesh(1.0))
    vs = synth_blueprint(cube, 96)
    for e in vs.entries:
        ink = e.image.data < 0.5
        assert ink[0].all() and ink[-1].all() and ink[:, 0].all() and ink[:, -1].all()
        assert ink[2:-2, 2:-2].sum() == 0


def test_synth_grouped_cube_gets_interior_line():
    # two half-cubes sharing the x=0 plane, distinct face groups
    left = box_mesh((-0.5, -0.5, -0.5), (0.0, 0.5, 0.5), group_base=0)
    right = box_mesh((0.0, -0.5, -0.5), (0.5, 0.5, 0.5), group_base=6)
    mesh = TriangleMesh(
        np.vstack([left.vertices, right.vertices]),
        np.vstack([left.triangles, right.triangles + left.n_vertices]).astype(np.int32),
        np.concatenate([left.groups, right.groups]).astype(np.int32),
    )
    vs = synth_blueprint(mesh, 96)
    side = vs.entry("side").image.data
    mid = side.shape[1] // 2
    interior = side[3:-3]
    # a vertical line at the group boundary, nothing elsewhere in the interior
    assert (interior[:, mid - 1 : mid + 1] < 0.5).all(axis=1).any()
    assert (interior[:, 5 : mid - 3] < 0.5).sum() == 0
    assert (interior[:, mid + 3 : -5] < 0.5).sum() == 0


def test_synth_sphere_ring_only():
    sph, _ = normalize_mesh(uv_sphere_mesh(0.5, n_lat=48, n_lon=96))
    vs = synth_blueprint(sph, 128)
    f = vs.entry("front").image.data
    h, w = f.shape
    yy, xx = np.mgrid[0:h, 0:w]
    r = np.hypot(yy - (h - 1) / 2, xx - (w - 1) / 2) / ((h - 1) / 2)
    edge = 1.0 - f
    ring = edge[(r > 0.9) & (r <= 1.02)].mean()
    interior = edge[r < 0.7].mean()
    assert ring > 0.1
    assert interior < 0.1 * ring


def test_synth_requires_normalized_mesh():
    with pytest.raises(ValueError):
        synth_blueprint(cube_mesh(2.0), 64)


def test_synth_layout_and_facings():
    mesh, _ = normalize_mesh(car_proxy_mesh())
    vs = synth_blueprint(mesh, 200, gap=12)
    assert {e.label.kind for e in vs.entries} == {
        LabelKind.SIDE,
        LabelKind.TOP,
        LabelKind.FRONT,
        LabelKind.BACK,
    }
    assert all(e.label.facing == Facing.POSITIVE for e in vs.entries)
    assert vs.is_finalized
    side, top = vs.entry("side"), vs.entry("top")
    front, back = vs.entry("front"), vs.entry("back")
    # side/top in the left column, front/back right, 12px gaps
    assert side.box.x == top.box.x == 12
    assert front.box.x == back.box.x == 12 + max(side.box.w, top.box.w) + 12
    assert top.box.y == side.box.y + side.box.h + 12
    assert side.box.w == top.box.w == 200
    # boxes fit inside the sheet
    w, h = vs.source_size
    for e in vs.entries:
        assert e.box.x + e.box.w <= w and e.box.y + e.box.h <= h


def test_synth_glass_groups_make_alt_images():
    mesh, _ = normalize_mesh(car_proxy_mesh())
    # the car's +Y cap is group 1; treat it as glass to force a visible change
    vs = synth_blueprint(mesh, 128, glass_groups={1})
    side = vs.entry("side")
    assert side.alt_image is not None
    assert not np.array_equal(side.alt_image.data, side.image.data)
    vs_plain = synth_blueprint(mesh, 128)
    assert vs_plain.entry("side").alt_image is None


def test_synth_empty_after_glass_keeps_no_alt():
    cube, _ = normalize_mesh(cube_mesh(1.0))
    vs = synth_blueprint(cube, 64, glass_groups={0, 1, 2, 3, 4, 5})
    assert all(e.alt_image is None for e in vs.entries)


# ------------------------------------------------------------------ round trip


def test_sheet_round_trip_within_one_px():
    mesh, _ = normalize_mesh(car_proxy_mesh())
    vs = synth_blueprint(mesh, 256)
    sheet = render_sheet(vs)
    out = extract_views(sheet)
    truth = {e.label.kind: e.box for e in vs.entries}
    got_top = out.entry("top").box
    got_side = out.entry("side").box
    for got, want in ((got_top, truth[LabelKind.TOP]), (got_side, truth[LabelKind.SIDE])):
        assert abs(got.x - want.x) <= 1 and abs(got.y - want.y) <= 1
        assert abs(got.x + got.w - want.x - want.w) <= 1
        assert abs(got.y + got.h - want.y - want.h) <= 1


def test_render_sheet_matches_crops():
    vs, img = make_viewset()
    sheet = render_sheet(vs)
    assert sheet.data.shape == (76, 115)
    for e in vs.entries:
        assert np.array_equal(
            sheet.data[e.box.y : e.box.y + e.box.h, e.box.x : e.box.x + e.box.w], e.image.data
        )


def test_crop_bounds_checked():
    img = GrayImage(np.ones((10, 10), dtype=np.float32))
    with pytest.raises(ValueError):
        crop(img, BoundingBox(5, 5, 10, 10))
