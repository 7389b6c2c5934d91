"""Inside/outside testing by ray-crossing parity.

Independent of the scan-based signed distance path: used as the sign oracle on
watertight test shapes. Rays that graze an edge, vertex, or coplanar triangle
are detected and retried with a perturbed direction.
"""

from __future__ import annotations

import numpy as np

from ..errors import RangeError
from .mesh import TriangleMesh

_DEFAULT_DIR = np.array([0.5773502691896258, 0.5773502691896258, 0.5773502691896258])
_MAX_RETRIES = 16
_EPS = 1e-9


def _cast(origin: np.ndarray, direction: np.ndarray, v0, e1, e2, cross_mag) -> tuple[int, bool]:
    """Moller-Trumbore over all triangles. Returns (crossing count, suspicious)."""
    pvec = np.cross(direction, e2)
    det = np.einsum("ij,ij->i", e1, pvec)
    tvec = origin - v0

    # direction almost in a triangle's plane: crossing is ill-defined only when
    # the origin also sits in that plane, otherwise the triangle is a clean miss
    near_parallel = np.abs(det) < _EPS * cross_mag
    if near_parallel.any():
        n = np.cross(e1[near_parallel], e2[near_parallel])
        plane_dist = np.abs(np.einsum("ij,ij->i", tvec[near_parallel], n))
        if np.any(plane_dist < _EPS * cross_mag[near_parallel]):
            return 0, True

    safe_det = np.where(near_parallel, 1.0, det)
    inv = 1.0 / safe_det
    u = np.einsum("ij,ij->i", tvec, pvec) * inv
    qvec = np.cross(tvec, e1)
    v = qvec @ direction * inv
    t = np.einsum("ij,ij->i", e2, qvec) * inv

    live = ~near_parallel
    hit = live & (u >= 0.0) & (v >= 0.0) & (u + v <= 1.0) & (t > 0.0)
    grazing = (
        live
        & (u > -_EPS) & (v > -_EPS) & (u + v < 1.0 + _EPS) & (t > -_EPS)
        & (
            (np.abs(u) < _EPS)
            | (np.abs(v) < _EPS)
            | (np.abs(1.0 - u - v) < _EPS)
            | (np.abs(t) < _EPS)
        )
    )
    return int(np.count_nonzero(hit)), bool(grazing.any())


def ray_parity_inside(mesh: TriangleMesh, p, direction=None, seed: int = 0) -> bool:
    """True iff a ray from p crosses the surface an odd number of times."""
    p = np.asarray(p, dtype=np.float64)
    bmin, bmax = mesh.bounds()
    if np.any(p < bmin) or np.any(p > bmax):
        return False

    tri = mesh.vertices[mesh.triangles]
    v0 = tri[:, 0]
    e1 = tri[:, 1] - v0
    e2 = tri[:, 2] - v0
    cross_mag = np.maximum(np.linalg.norm(np.cross(e1, e2), axis=1), 1e-300)

    d = _DEFAULT_DIR if direction is None else np.asarray(direction, dtype=np.float64)
    d = d / np.linalg.norm(d)
    rng = np.random.default_rng(seed)
    for _ in range(_MAX_RETRIES):
        crossings, suspicious = _cast(p, d, v0, e1, e2, cross_mag)
        if not suspicious:
            return crossings % 2 == 1
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
    raise RangeError(f"ray parity unresolved after {_MAX_RETRIES} direction retries at {p.tolist()}")


def ray_parity_inside_many(mesh: TriangleMesh, points: np.ndarray, seed: int = 0) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    return np.fromiter(
        (ray_parity_inside(mesh, q, seed=seed + i) for i, q in enumerate(points)),
        dtype=bool,
        count=len(points),
    )
