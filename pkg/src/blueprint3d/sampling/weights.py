"""Adaptive per-point sampling weights over a surface scan.

weight = wEdge * wNormal + wHullDist * wHullDistNormal + wThickness, then
normalized into a probability distribution. Each factor targets a region the
reconstruction must not starve: strong image edges, downward-facing underbody
panels, deviations from the outer hull, and thin double-sided structures.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from ..errors import RangeError
from .hull import VoxelGrid
from .scan import SurfaceScan

_BLOCK_ENTRIES = 16_000_000  # ~128 MB of float64 per distance block


@dataclass(frozen=True)
class SamplerConfig:
    n_samples: int = 22000
    surface_sigma: float = 0.01
    uniform_fraction: float = 0.10
    truncation: float = 0.10
    hull_resolution: int = 128
    thickness_angle_threshold: float = 120.0  # degrees
    edge_floor: float = 0.05
    hull_dist_normal_floor: float = 0.2  # beta
    dist_floor: float = 0.01
    hull_dist_scale: float = 0.25  # fraction of the hull diagonal that saturates wHullDist
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 1:
            raise RangeError("n_samples must be positive")
        if not (0.0 <= self.uniform_fraction < 1.0):
            raise RangeError("uniform_fraction must be in [0, 1)")
        for name in ("surface_sigma", "truncation", "dist_floor", "hull_dist_scale"):
            if not getattr(self, name) > 0:
                raise RangeError(f"{name} must be positive")
        if self.hull_resolution < 2:
            raise RangeError("hull_resolution must be at least 2")
        if not (0.0 < self.thickness_angle_threshold < 180.0):
            raise RangeError("thickness_angle_threshold must be in (0, 180) degrees")
        if not (0.0 <= self.edge_floor <= 1.0):
            raise RangeError("edge_floor must be in [0, 1]")
        if not (0.0 <= self.hull_dist_normal_floor <= 1.0):
            raise RangeError("hull_dist_normal_floor must be in [0, 1]")


@dataclass(frozen=True)
class SampleWeights:
    w_edge: np.ndarray
    w_normal: np.ndarray
    w_hull_dist: np.ndarray
    w_hull_dist_normal: np.ndarray
    w_thickness: np.ndarray
    weight: np.ndarray  # normalized; sums to 1

    def __len__(self) -> int:
        return len(self.weight)


def w_normal(relh, normal_up):
    """Piecewise prior against oversampling the car's underbody: weight 1
    unless the point sits at mid height (0.05 <= relH <= 0.5) AND faces nearly
    straight down (up-component <= -0.95); those get their relH as weight."""
    relh_arr = np.asarray(relh, dtype=np.float64)
    up_arr = np.asarray(normal_up, dtype=np.float64)
    if relh_arr.min() < 0.0 or relh_arr.max() > 1.0:
        raise RangeError("relH must be in [0, 1]")
    if up_arr.min() < -1.0 - 1e-9 or up_arr.max() > 1.0 + 1e-9:
        raise RangeError("normal up-component must be in [-1, 1]")
    out = np.where((relh_arr < 0.05) | (relh_arr > 0.5) | (up_arr > -0.95), 1.0, relh_arr)
    if np.isscalar(relh) and np.isscalar(normal_up):
        return float(out)
    return out


def nearest_block(targets: np.ndarray, queries: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exact nearest target per query via chunked distance blocks.

    Ties break to the lowest target index (np.argmin picks the first). Meant
    for bulk annotation; the k-d tree serves the per-query exact contract.
    """
    targets = np.asarray(targets, dtype=np.float64)
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    if len(targets) == 0:
        raise RangeError("nearest_block needs at least one target")
    t2 = np.einsum("ij,ij->i", targets, targets)
    chunk = max(1, _BLOCK_ENTRIES // len(targets))
    idx = np.empty(len(queries), dtype=np.int64)
    dist = np.empty(len(queries), dtype=np.float64)
    for lo in range(0, len(queries), chunk):
        q = queries[lo : lo + chunk]
        d2 = t2[None, :] - 2.0 * (q @ targets.T)
        best = np.argmin(d2, axis=1)
        rows = np.arange(len(q))
        d = d2[rows, best] + np.einsum("ij,ij->i", q, q)
        idx[lo : lo + chunk] = best
        dist[lo : lo + chunk] = np.sqrt(np.maximum(d, 0.0))
    return idx, dist


def nearest_cone_block(
    targets: np.ndarray,
    target_normals: np.ndarray,
    queries: np.ndarray,
    query_normals: np.ndarray,
    max_dot: float,
) -> tuple[np.ndarray, np.ndarray]:
    """nearest_block restricted to targets whose normal opposes the query's:
    dot(target_normal, query_normal) < max_dot. (-1, inf) when none qualifies."""
    targets = np.asarray(targets, dtype=np.float64)
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    t2 = np.einsum("ij,ij->i", targets, targets)
    chunk = max(1, _BLOCK_ENTRIES // max(len(targets), 1))
    idx = np.full(len(queries), -1, dtype=np.int64)
    dist = np.full(len(queries), np.inf)
    for lo in range(0, len(queries), chunk):
        q = queries[lo : lo + chunk]
        qn = query_normals[lo : lo + chunk]
        d2 = t2[None, :] - 2.0 * (q @ targets.T)
        d2[qn @ target_normals.T >= max_dot] = np.inf
        best = np.argmin(d2, axis=1)
        rows = np.arange(len(q))
        bd = d2[rows, best]
        ok = np.isfinite(bd)
        q2 = np.einsum("ij,ij->i", q, q)
        idx[lo : lo + chunk] = np.where(ok, best, -1)
        dist[lo : lo + chunk] = np.where(ok, np.sqrt(np.maximum(bd + q2, 0.0)), np.inf)
    return idx, dist


def thickness_weights(scan: SurfaceScan, cfg: SamplerConfig | None = None) -> np.ndarray:
    """Thin-structure weight in [0, 1].

    Per axis, points split by the sign of that normal component; each point
    finds its nearest opposing point (normal angle beyond the threshold) in
    the other half. Close opposing surfaces mean thin geometry: the candidate
    is dist_floor / max(dist, dist_floor), and the final weight is the max
    over the three axes. Both split halves share one distance matrix per
    axis (the relation is symmetric), scanned by rows and by columns.
    """
    cfg = cfg or SamplerConfig()
    pts = scan.points
    nrm = scan.normals
    max_dot = float(np.cos(np.deg2rad(cfg.thickness_angle_threshold)))
    out = np.zeros(len(pts))
    for axis in range(3):
        pos = nrm[:, axis] >= 0.0
        pi = np.flatnonzero(pos)
        ni = np.flatnonzero(~pos)
        if len(pi) == 0 or len(ni) == 0:
            continue
        p_pts, p_nrm = pts[pi], nrm[pi]
        n_pts, n_nrm = pts[ni], nrm[ni]
        p2 = np.einsum("ij,ij->i", p_pts, p_pts)
        n2 = np.einsum("ij,ij->i", n_pts, n_pts)
        best_p = np.full(len(pi), np.inf)
        best_n = np.full(len(ni), np.inf)
        chunk = max(1, _BLOCK_ENTRIES // len(ni))
        for lo in range(0, len(pi), chunk):
            hi = lo + chunk
            d2 = p2[lo:hi, None] + n2[None, :] - 2.0 * (p_pts[lo:hi] @ n_pts.T)
            d2[p_nrm[lo:hi] @ n_nrm.T >= max_dot] = np.inf
            best_p[lo:hi] = d2.min(axis=1)
            np.minimum(best_n, d2.min(axis=0), out=best_n)
        for sel, bd2 in ((pi, best_p), (ni, best_n)):
            dist = np.sqrt(np.maximum(bd2, 0.0))
            cand = np.where(np.isfinite(dist), cfg.dist_floor / np.maximum(dist, cfg.dist_floor), 0.0)
            out[sel] = np.maximum(out[sel], cand)
    return out


def compute_weights(scan: SurfaceScan, hull: VoxelGrid, cfg: SamplerConfig | None = None) -> SampleWeights:
    cfg = cfg or SamplerConfig()
    edge = scan.cloud.attributes["edge"]
    relh = scan.cloud.attributes["relH"]

    w_edge = np.clip(edge, cfg.edge_floor, 1.0)
    wn = w_normal(relh, scan.normals[:, 2])

    boundary = hull.boundary_points()
    if len(boundary) == 0:
        raise RangeError("hull has no boundary voxels")
    extent = hull.spacing * np.asarray(hull.shape, dtype=np.float64)
    scale = cfg.hull_dist_scale * float(np.linalg.norm(extent))
    bdist, _ = cKDTree(boundary).query(scan.points, workers=-1)
    w_hull = np.clip(bdist / scale, 0.0, 1.0)

    w_hull_normal = cfg.hull_dist_normal_floor + (1.0 - cfg.hull_dist_normal_floor) * wn
    w_thick = thickness_weights(scan, cfg)

    raw = w_edge * wn + w_hull * w_hull_normal + w_thick
    total = float(raw.sum())
    if not total > 0.0:
        raise RangeError("all sample weights are zero; cannot normalize")
    return SampleWeights(w_edge, wn, w_hull, w_hull_normal, w_thick, raw / total)
