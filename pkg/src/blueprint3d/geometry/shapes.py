"""Reference shapes with analytic membership functions.

Every mesh here is watertight with outward-facing triangles, so the scan-based
signed distance can be validated against exact inside/outside answers. The car
proxy (body box + cabin + tail fin) and the cube-with-fin are the fixtures the
end-to-end and sampling-adaptivity checks train on.
"""

from __future__ import annotations

import numpy as np

from .mesh import TriangleMesh


def _quads_to_tris(quads, flip=False):
    tris = []
    for a, b, c, d in quads:
        if flip:
            tris.extend([(a, c, b), (a, d, c)])
        else:
            tris.extend([(a, b, c), (a, c, d)])
    return tris


# ---------------------------------------------------------------- box


def box_mesh(bmin, bmax, group_base: int = 0) -> TriangleMesh:
    """Axis-aligned box; face groups: -Z, +Z, +X, -X, -Y, +Y (+group_base)."""
    x0, y0, z0 = np.asarray(bmin, dtype=np.float64)
    x1, y1, z1 = np.asarray(bmax, dtype=np.float64)
    v = np.array(
        [
            [x0, y0, z0], [x1, y0, z0], [x1, y1, z0], [x0, y1, z0],
            [x0, y0, z1], [x1, y0, z1], [x1, y1, z1], [x0, y1, z1],
        ]
    )
    quads = [
        (0, 3, 2, 1),  # -Z
        (4, 5, 6, 7),  # +Z
        (1, 2, 6, 5),  # +X
        (0, 4, 7, 3),  # -X
        (0, 1, 5, 4),  # -Y
        (2, 3, 7, 6),  # +Y
    ]
    tris = _quads_to_tris(quads)
    groups = np.repeat(np.arange(6, dtype=np.int32) + group_base, 2)
    return TriangleMesh(v, np.asarray(tris, dtype=np.int32), groups)


def cube_mesh(side: float = 1.0, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    c = np.asarray(center, dtype=np.float64)
    h = side / 2.0
    return box_mesh(c - h, c + h)


def box_inside(points, bmin, bmax) -> np.ndarray:
    p = np.atleast_2d(np.asarray(points, dtype=np.float64))
    bmin = np.asarray(bmin, dtype=np.float64)
    bmax = np.asarray(bmax, dtype=np.float64)
    return np.all((p >= bmin) & (p <= bmax), axis=1)


# ---------------------------------------------------------------- sphere


def uv_sphere_mesh(radius: float = 0.5, center=(0.0, 0.0, 0.0), n_lat: int = 24, n_lon: int = 48) -> TriangleMesh:
    c = np.asarray(center, dtype=np.float64)
    verts = [c + [0.0, 0.0, radius]]
    for i in range(1, n_lat):
        theta = np.pi * i / n_lat
        for j in range(n_lon):
            phi = 2.0 * np.pi * j / n_lon
            verts.append(
                c + radius * np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])
            )
    verts.append(c + [0.0, 0.0, -radius])
    south = len(verts) - 1

    def ring(i, j):
        return 1 + (i - 1) * n_lon + (j % n_lon)

    tris = []
    for j in range(n_lon):
        tris.append((0, ring(1, j), ring(1, j + 1)))
    for i in range(1, n_lat - 1):
        for j in range(n_lon):
            a, b = ring(i, j), ring(i, j + 1)
            d, cc = ring(i + 1, j), ring(i + 1, j + 1)
            tris.extend([(a, d, cc), (a, cc, b)])
    for j in range(n_lon):
        tris.append((south, ring(n_lat - 1, j + 1), ring(n_lat - 1, j)))
    return TriangleMesh(np.asarray(verts), np.asarray(tris, dtype=np.int32))


def sphere_inside(points, radius: float = 0.5, center=(0.0, 0.0, 0.0)) -> np.ndarray:
    p = np.atleast_2d(np.asarray(points, dtype=np.float64)) - np.asarray(center, dtype=np.float64)
    return np.einsum("ij,ij->i", p, p) <= radius * radius


# ---------------------------------------------------------------- torus


def torus_mesh(major: float = 0.35, minor: float = 0.12, n_major: int = 48, n_minor: int = 24) -> TriangleMesh:
    """Torus around the Z axis, centered at the origin."""
    verts = np.empty((n_major * n_minor, 3))
    for i in range(n_major):
        phi = 2.0 * np.pi * i / n_major
        for j in range(n_minor):
            psi = 2.0 * np.pi * j / n_minor
            rad = major + minor * np.cos(psi)
            verts[i * n_minor + j] = (rad * np.cos(phi), rad * np.sin(phi), minor * np.sin(psi))

    def vid(i, j):
        return (i % n_major) * n_minor + (j % n_minor)

    quads = []
    for i in range(n_major):
        for j in range(n_minor):
            quads.append((vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)))
    return TriangleMesh(verts, np.asarray(_quads_to_tris(quads), dtype=np.int32))


def torus_inside(points, major: float = 0.35, minor: float = 0.12) -> np.ndarray:
    p = np.atleast_2d(np.asarray(points, dtype=np.float64))
    ring = np.hypot(p[:, 0], p[:, 1]) - major
    return ring * ring + p[:, 2] * p[:, 2] <= minor * minor


# ---------------------------------------------------------------- extrusion


def _ear_clip(poly: np.ndarray) -> list[tuple[int, int, int]]:
    """Triangulate a simple CCW polygon by ear clipping; O(n^2), exact floats."""

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    idx = list(range(len(poly)))
    tris: list[tuple[int, int, int]] = []
    spins = 0
    while len(idx) > 3:
        spins += 1
        if spins > 4 * len(poly) ** 2:
            raise ValueError("ear clipping made no progress; polygon not simple CCW?")
        clipped = False
        for k in range(len(idx)):
            i0, i1, i2 = idx[k - 1], idx[k], idx[(k + 1) % len(idx)]
            a, b, c = poly[i0], poly[i1], poly[i2]
            if cross(a, b, c) <= 0.0:
                continue
            blocked = False
            for m in idx:
                if m in (i0, i1, i2):
                    continue
                p = poly[m]
                if cross(a, b, p) >= 0.0 and cross(b, c, p) >= 0.0 and cross(c, a, p) >= 0.0:
                    blocked = True
                    break
            if not blocked:
                tris.append((i0, i1, i2))
                del idx[k]
                clipped = True
                break
        if not clipped:
            raise ValueError("no ear found; polygon not simple CCW?")
    tris.append((idx[0], idx[1], idx[2]))
    return tris


def extruded_profile_mesh(profile_xz: np.ndarray, y_half: float) -> TriangleMesh:
    """Prism: a simple CCW polygon in the XZ plane swept along Y.

    Face groups: 0 = -Y cap, 1 = +Y cap, 2+k = wall over profile edge k, so
    profile corners become group boundaries (feature lines in renders).
    """
    poly = np.asarray(profile_xz, dtype=np.float64)
    if poly.ndim != 2 or poly.shape[1] != 2 or len(poly) < 3:
        raise ValueError(f"profile must be (k>=3, 2), got {poly.shape}")
    k = len(poly)
    neg = np.column_stack([poly[:, 0], np.full(k, -y_half), poly[:, 1]])
    pos = np.column_stack([poly[:, 0], np.full(k, +y_half), poly[:, 1]])
    verts = np.vstack([neg, pos])

    cap = _ear_clip(poly)
    tris: list[tuple[int, int, int]] = []
    groups: list[int] = []
    for a, b, c in cap:  # -Y cap keeps the CCW profile orientation
        tris.append((a, b, c))
        groups.append(0)
    for a, b, c in cap:  # +Y cap is mirrored
        tris.append((k + a, k + c, k + b))
        groups.append(1)
    for e in range(k):
        a, b = e, (e + 1) % k
        quad = (a, k + a, k + b, b)  # outward for CCW profiles
        tris.extend([(quad[0], quad[1], quad[2]), (quad[0], quad[2], quad[3])])
        groups.extend([2 + e, 2 + e])
    return TriangleMesh(verts, np.asarray(tris, dtype=np.int32), np.asarray(groups, dtype=np.int32))


# ---------------------------------------------------------------- car proxy

# side profile of the car proxy, CCW in (x, z): body box [0,3.6]x[0,0.9],
# cabin box [1.0,2.4]x[0.9,1.6], tail fin box [0.1,0.4]x[0.9,1.45]
CAR_PROFILE = np.array(
    [
        (0.0, 0.0),
        (3.6, 0.0),
        (3.6, 0.9),
        (2.4, 0.9),
        (2.4, 1.6),
        (1.0, 1.6),
        (1.0, 0.9),
        (0.4, 0.9),
        (0.4, 1.45),
        (0.1, 1.45),
        (0.1, 0.9),
        (0.0, 0.9),
    ]
)
# wider than tall (z extent 1.6), like a real car: keeps the top view strictly
# the tallest of the two length-wise views
CAR_Y_HALF = 0.9


def car_proxy_mesh() -> TriangleMesh:
    """Watertight body+cabin+fin composite in its raw (unnormalized) frame."""
    return extruded_profile_mesh(CAR_PROFILE, CAR_Y_HALF)


def car_proxy_inside(points) -> np.ndarray:
    """Analytic membership in the raw frame: union of the three boxes."""
    p = np.atleast_2d(np.asarray(points, dtype=np.float64))
    body = box_inside(p, (0.0, -CAR_Y_HALF, 0.0), (3.6, CAR_Y_HALF, 0.9))
    cabin = box_inside(p, (1.0, -CAR_Y_HALF, 0.9), (2.4, CAR_Y_HALF, 1.6))
    fin = box_inside(p, (0.1, -CAR_Y_HALF, 0.9), (0.4, CAR_Y_HALF, 1.45))
    return body | cabin | fin


# ---------------------------------------------------------------- cube + fin

_FIN_X = (0.48, 0.52)
_FIN_Y = (0.2, 0.8)
_FIN_TOP = 1.8

# face groups >= 6 belong to the fin (walls and top)
FIN_GROUPS = frozenset(range(6, 11))


def fin_cube_mesh() -> TriangleMesh:
    """Unit cube with a thin vertical fin on top, watertight via a cutout in
    the cube's top face. The fin is 0.04 thick along X."""
    fx0, fx1 = _FIN_X
    fy0, fy1 = _FIN_Y
    v = np.array(
        [
            [0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],  # cube bottom
            [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1],  # cube top corners
            [fx0, fy0, 1], [fx1, fy0, 1], [fx1, fy1, 1], [fx0, fy1, 1],  # rim
            [fx0, fy0, _FIN_TOP], [fx1, fy0, _FIN_TOP], [fx1, fy1, _FIN_TOP], [fx0, fy1, _FIN_TOP],
        ],
        dtype=np.float64,
    )
    tris: list[tuple[int, int, int]] = []
    groups: list[int] = []

    def add_quads(quads, gid):
        new = _quads_to_tris(quads)
        tris.extend(new)
        groups.extend([gid] * len(new))

    add_quads([(0, 3, 2, 1)], 0)  # bottom -Z
    add_quads([(0, 1, 5, 4)], 1)  # -Y
    add_quads([(1, 2, 6, 5)], 2)  # +X
    add_quads([(2, 3, 7, 6)], 3)  # +Y
    add_quads([(3, 0, 4, 7)], 4)  # -X
    # top face ring around the fin cutout, CCW seen from above
    outer = (4, 5, 6, 7)
    inner = (8, 9, 10, 11)
    for s in range(4):
        o0, o1 = outer[s], outer[(s + 1) % 4]
        i0, i1 = inner[s], inner[(s + 1) % 4]
        add_quads([(o0, o1, i1, i0)], 5)
    add_quads([(8, 9, 13, 12)], 6)  # fin -Y
    add_quads([(9, 10, 14, 13)], 7)  # fin +X
    add_quads([(10, 11, 15, 14)], 8)  # fin +Y
    add_quads([(11, 8, 12, 15)], 9)  # fin -X
    add_quads([(12, 13, 14, 15)], 10)  # fin top
    return TriangleMesh(v, np.asarray(tris, dtype=np.int32), np.asarray(groups, dtype=np.int32))


def fin_cube_inside(points) -> np.ndarray:
    p = np.atleast_2d(np.asarray(points, dtype=np.float64))
    cube = box_inside(p, (0, 0, 0), (1, 1, 1))
    fin = box_inside(p, (_FIN_X[0], _FIN_Y[0], 1.0), (_FIN_X[1], _FIN_Y[1], _FIN_TOP))
    return cube | fin
