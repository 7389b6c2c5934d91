"""Pixel-aligned implicit field over four orthographic blueprint views.

A query point is orthographically projected into each view, per-view encoder
features are sampled bilinearly at the projected pixel, the four feature
vectors are concatenated with the world-space coordinate, and an MLP predicts
(value, normal, edge). Views never mix before the MLP, so the front of a
vehicle cannot bleed into the back through the encoder.

World frame: the model bounding box is origin-centered, axes X longitudinal,
Y lateral, Z up, matching the visual hull conventions. View rects derive from
each view's own crop box, so differently sized views are fine.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionError, RangeError
from ..geometry import OrthoView, project_points
from ..views import LabelKind, ViewSet
from .encoder import EncoderConfig, build_encoder_params, encode_tensor
from .layers import ParamSet, Tensor, add, concat, mul, reduce_mean, reduce_sum, sub
from .mlp import build_mlp_params, mlp_forward
from ..sampling.hull import view_axes

VIEW_ORDER = (LabelKind.FRONT, LabelKind.BACK, LabelKind.SIDE, LabelKind.TOP)


@dataclass(frozen=True)
class FieldConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    mlp_hidden: tuple[int, ...] = (256, 128, 64)

    def __post_init__(self):
        object.__setattr__(self, "mlp_hidden", tuple(int(h) for h in self.mlp_hidden))
        if len(self.mlp_hidden) < 1 or any(h < 1 for h in self.mlp_hidden):
            raise RangeError("mlp_hidden needs at least one positive width")

    @property
    def n_features(self) -> int:
        return 4 * self.encoder.feature_depth + 3


def init_weights(cfg: FieldConfig, seed: int = 0) -> ParamSet:
    """Encoder parameters first, MLP parameters second; this declaration
    order is the checkpoint tensor layout."""
    rng = np.random.default_rng(seed)
    params = build_encoder_params(cfg.encoder, rng, prefix="enc")
    mlp = build_mlp_params(cfg.n_features, cfg.mlp_hidden, rng, prefix="mlp")
    for name, t in mlp.items():
        params.add(name, t.data)
    return params


def geometry_for_views(
    views: ViewSet, px_per_unit: float | None = None
) -> tuple[tuple[OrthoView, OrthoView, OrthoView, OrthoView], tuple[np.ndarray, np.ndarray]]:
    """Orthographic cameras (front, back, side, top order) plus the
    origin-centered model bounding box, scaled so px_per_unit blueprint
    pixels equal one model unit (defaults to the side view's width, i.e.
    a model normalized to unit length)."""
    if not views.is_finalized:
        raise DimensionError("geometry_for_views needs a finalized ViewSet")
    side = views.entry(LabelKind.SIDE)
    top = views.entry(LabelKind.TOP)
    ppu = float(px_per_unit) if px_per_unit else float(side.box.w)
    if ppu <= 0:
        raise RangeError("px_per_unit must be positive")
    cams = []
    for kind in VIEW_ORDER:
        entry = views.entry(kind)
        axis, up = view_axes(kind, entry.label.facing)
        w, h = entry.box.w, entry.box.h
        cam = OrthoView(axis=axis, up=up, rect=(w / ppu, h / ppu), resolution=ppu)
        cw, ch = cam.image_size()
        if (cw, ch) != (w, h):
            raise DimensionError(f"{kind.value} view rect maps to {cw}x{ch}, image is {w}x{h}")
        cams.append(cam)
    ex = side.box.w / ppu
    ez = side.box.h / ppu
    ey = top.box.h / ppu
    half = np.array([ex, ey, ez]) / 2.0
    return tuple(cams), (-half, half)


def gather_features(
    fmaps: list[Tensor], cams: tuple[OrthoView, ...], initial_steps: int, pts: np.ndarray
) -> tuple[Tensor, np.ndarray]:
    """Project points into every view, sample its feature map, concatenate
    the per-view features with the world coordinates.

    Returns the (n, 4*depth + 3) feature batch and an (n, 4) out-of-frame
    mask (clamped samples are still returned for those entries).
    """
    from .layers import bilinear_gather

    pts = np.asarray(pts, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise DimensionError(f"points must be (n, 3), got {pts.shape}")
    scale = float(2**initial_steps)
    parts = []
    oof = np.zeros((len(pts), len(cams)), dtype=bool)
    for i, (fmap, cam) in enumerate(zip(fmaps, cams)):
        u, v = project_points(cam, pts)
        # feature pixel j is centered on input pixel j * 2^initial_steps
        samples, out = bilinear_gather(fmap, u / scale, v / scale)
        parts.append(samples)
        oof[:, i] = out
    parts.append(Tensor(pts.astype(fmaps[0].data.dtype)))
    return concat(parts, axis=1), oof


def field_forward(
    params: ParamSet,
    cfg: FieldConfig,
    images: list[Tensor],
    cams: tuple[OrthoView, ...],
    pts: np.ndarray,
) -> tuple[Tensor, Tensor, Tensor, np.ndarray]:
    """Differentiable full pass: encode four view images, gather point
    features, run the MLP. Images follow VIEW_ORDER."""
    fmaps = [encode_tensor(params, cfg.encoder, img, prefix="enc") for img in images]
    x, oof = gather_features(fmaps, cams, cfg.encoder.initial_downsample_steps, pts)
    value, normal, edge = mlp_forward(params, x, prefix="mlp")
    return value, normal, edge, oof


def loss_terms(
    pred_value: Tensor,
    pred_normal: Tensor,
    pred_edge: Tensor,
    sample_value: np.ndarray,
    sample_normal: np.ndarray,
    sample_edge: np.ndarray,
    is_surface: np.ndarray,
    lam: tuple[float, float, float] = (1.0, 0.1, 0.1),
) -> tuple[Tensor, Tensor, Tensor, Tensor]:
    """Batch loss: lam_value * (dv)^2 averaged over the batch, plus
    lam_normal * (1 - <n_hat, n>) and lam_edge * (de)^2 averaged over the
    surface-derived records only (uniform records carry no meaningful
    normal/edge targets). Returns (total, value_term, normal_term, edge_term).
    """
    lam_value, lam_normal, lam_edge = (float(x) for x in lam)
    if min(lam_value, lam_normal, lam_edge) < 0:
        raise RangeError("loss weights must be non-negative")
    dtype = pred_value.data.dtype
    sv = np.asarray(sample_value, dtype=dtype)
    sn = np.asarray(sample_normal, dtype=dtype)
    se = np.asarray(sample_edge, dtype=dtype)
    mask = np.asarray(is_surface, dtype=dtype)
    n_surf = max(float(mask.sum()), 1.0)
    dv = sub(pred_value, Tensor(sv))
    value_term = mul(reduce_mean(mul(dv, dv)), dtype.type(lam_value))
    dot = reduce_sum(mul(pred_normal, Tensor(sn)), axis=1)
    normal_term = mul(
        reduce_sum(mul(sub(Tensor(np.ones_like(mask)), dot), Tensor(mask))),
        dtype.type(lam_normal / n_surf),
    )
    de = sub(pred_edge, Tensor(se))
    edge_term = mul(reduce_sum(mul(mul(de, de), Tensor(mask))), dtype.type(lam_edge / n_surf))
    total = add(add(value_term, normal_term), edge_term)
    return total, value_term, normal_term, edge_term


@dataclass(frozen=True)
class PixelAlignedField:
    """Inference bundle: frozen weights, per-view feature maps, cameras."""

    cfg: FieldConfig
    params: ParamSet
    fmaps: tuple[np.ndarray, ...]
    cams: tuple[OrthoView, ...]
    bounds: tuple[np.ndarray, np.ndarray]


def build_field(
    cfg: FieldConfig, params: ParamSet, views: ViewSet, px_per_unit: float | None = None
) -> PixelAlignedField:
    cams, bounds = geometry_for_views(views, px_per_unit)
    fmaps = []
    for kind in VIEW_ORDER:
        img = views.entry(kind).image
        t = encode_tensor(params, cfg.encoder, Tensor(img.data[None, :, :]), prefix="enc")
        fmaps.append(t.data)
    return PixelAlignedField(cfg=cfg, params=params, fmaps=tuple(fmaps), cams=cams, bounds=bounds)


def query_points(
    field: PixelAlignedField, pts: np.ndarray, chunk: int = 65536
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Evaluate the field at (n, 3) points. Returns value (n,), unit normal
    (n, 3), edge (n,), out-of-frame mask (n, 4). Pure and chunked."""
    pts = np.asarray(pts, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise DimensionError(f"points must be (n, 3), got {pts.shape}")
    fmaps = [Tensor(f) for f in field.fmaps]
    steps = field.cfg.encoder.initial_downsample_steps
    n = len(pts)
    value = np.empty(n, dtype=np.float32)
    normal = np.empty((n, 3), dtype=np.float32)
    edge = np.empty(n, dtype=np.float32)
    oof = np.empty((n, 4), dtype=bool)
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        x, out = gather_features(fmaps, field.cams, steps, pts[lo:hi])
        v, nrm, e = mlp_forward(field.params, x, prefix="mlp")
        value[lo:hi] = v.data
        normal[lo:hi] = nrm.data
        edge[lo:hi] = e.data
        oof[lo:hi] = out
    return value, normal, edge, oof
