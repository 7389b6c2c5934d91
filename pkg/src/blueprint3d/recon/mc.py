"""Iso-surface extraction and floating-artifact removal.

The 256-entry case table is generated at import time instead of copied from
a reference listing: for every corner sign pattern the inside region leaves
a directed boundary chord on each crossed cube face, the chords stitch into
closed polygon loops, and each loop is triangulated directly (3 edges) or
fanned from its own centroid vertex (see _build_table for why a centroid
and not a polygon vertex). The generator asserts, case by case, that the
chords cover every sign-changing edge exactly once, which is the
precondition for watertight output.
"""

from __future__ import annotations

import numpy as np

from ..errors import DegenerateMesh, RangeError
from ..geometry.mesh import TriangleMesh
from .grid import ScalarGrid

# Cube corner k sits at lattice offset (k & 1, k >> 1 & 1, k >> 2 & 1).
_CORNERS = np.array([[(k >> a) & 1 for a in range(3)] for k in range(8)], dtype=np.float64)

# The 12 cube edges as lexicographically sorted corner pairs; each runs along
# one axis away from its anchor corner.
_EDGES = tuple(
    sorted((a, b) for a in range(8) for b in range(8) if a < b and ((a ^ b) & (a ^ b) - 1) == 0)
)
_EDGE_INDEX = {e: i for i, e in enumerate(_EDGES)}
_EDGE_AXIS = tuple((a ^ b).bit_length() - 1 for a, b in _EDGES)
_EDGE_ANCHOR = tuple((a & 1, a >> 1 & 1, a >> 2 & 1) for a, _ in _EDGES)


def _face_cycles() -> tuple[tuple[int, ...], ...]:
    """Corner cycle of each cube face, counterclockwise seen from outside."""
    cycles = []
    for axis in range(3):
        for side in (0, 1):
            normal = np.zeros(3)
            normal[axis] = 1.0 if side else -1.0
            ids = [k for k in range(8) if (k >> axis) & 1 == side]
            center = _CORNERS[ids].mean(axis=0)
            t1 = np.zeros(3)
            t1[(axis + 1) % 3] = 1.0
            t2 = np.cross(normal, t1)  # (t1, t2, normal) right handed
            ang = [np.arctan2((_CORNERS[k] - center) @ t2, (_CORNERS[k] - center) @ t1) for k in ids]
            cycles.append(tuple(k for _, k in sorted(zip(ang, ids))))
    return tuple(cycles)


def _case_loops(code: int, face_cycles) -> tuple[tuple[int, ...], ...]:
    """Directed polygon loops, as cut-edge index sequences, for one pattern.

    On every face the inside corners form maximal runs along the corner
    cycle; each run emits one chord from the cut edge where the run ends to
    the cut edge where it begins. The pairing depends only on the face's own
    corner signs, so the two cells sharing a face emit the same chord with
    opposite directions, which keeps the surface sealed across cells, and an
    ambiguous face (both diagonals inside) splits its two inside corners
    rather than joining them, the same choice on both sides.
    """
    inside = [(code >> k) & 1 for k in range(8)]
    nxt: dict[int, int] = {}
    for cyc in face_cycles:
        states = [inside[k] for k in cyc]
        if all(states) or not any(states):
            continue
        m = len(cyc)
        for i in range(m):
            if states[i] and not states[i - 1]:
                j = i
                while states[(j + 1) % m]:
                    j = (j + 1) % m
                begin = _EDGE_INDEX[tuple(sorted((cyc[i - 1], cyc[i])))]
                end = _EDGE_INDEX[tuple(sorted((cyc[j], cyc[(j + 1) % m])))]
                if end in nxt:
                    raise AssertionError(f"case {code}: two chords leave edge {end}")
                nxt[end] = begin
    cut = {i for i, (a, b) in enumerate(_EDGES) if inside[a] != inside[b]}
    if set(nxt) != cut or set(nxt.values()) != cut:
        raise AssertionError(f"case {code}: chords do not cover the cut edges")
    loops = []
    seen: set[int] = set()
    for start in sorted(cut):
        if start in seen:
            continue
        loop = [start]
        seen.add(start)
        cur = nxt[start]
        while cur != start:
            loop.append(cur)
            seen.add(cur)
            cur = nxt[cur]
        if len(loop) < 3:
            raise AssertionError(f"case {code}: degenerate {len(loop)}-edge loop")
        loops.append(tuple(loop))
    return tuple(loops)


def _build_table():
    """Per case: triangles plus the loops that need a centroid vertex.

    A 3-edge loop becomes one triangle whose edges are all face chords, so
    both cells on a shared face emit it once each. Longer loops are fanned
    from their own centroid vertex: fanning from a polygon vertex would cut
    diagonals between cut-edge vertices, and two cells sharing a face can
    pick the same diagonal, stacking four triangles on one edge. A centroid
    belongs to exactly one cell, so every spoke has exactly two incident
    triangles by construction. Triangle entries below 12 are cut-edge ids,
    12 + j means the centroid of that case's j-th fanned loop.
    """
    face_cycles = _face_cycles()
    mids = np.array([(_CORNERS[a] + _CORNERS[b]) / 2.0 for a, b in _EDGES])
    # Winding probe on the single-corner case: the triangle must face away
    # from the inside corner. The construction is uniform, so one probe
    # settles all 256 cases.
    probe = _case_loops(1, face_cycles)[0]
    p = mids[list(probe)]
    d = float(np.cross(p[1] - p[0], p[2] - p[0]) @ (p.mean(axis=0) - _CORNERS[0]))
    if d == 0.0:
        raise AssertionError("winding probe is degenerate")
    flip = d < 0.0
    tri_table = []
    cent_table = []
    for code in range(256):
        tris = []
        fanned = []
        for loop in _case_loops(code, face_cycles):
            if flip:
                loop = loop[::-1]
            if len(loop) == 3:
                tris.append(loop)
            else:
                j = len(fanned)
                fanned.append(loop)
                for i in range(len(loop)):
                    tris.append((12 + j, loop[i], loop[(i + 1) % len(loop)]))
        tri_table.append(tuple(tris))
        cent_table.append(tuple(fanned))
    return tuple(tri_table), tuple(cent_table)


_MC_TRIANGLES, _MC_CENT_LOOPS = _build_table()


def marching_cubes(grid: ScalarGrid, iso: float = 0.5) -> TriangleMesh:
    """Extract the iso level set with linear interpolation along cut edges.

    Nodes exactly at iso are nudged up by 1e-7 so every cell has a clean
    sign pattern, and the grid is padded with one layer of outside nodes so
    the level set also closes where the inside region touches the boundary.
    Vertices on shared cube edges are welded; winding is outward.
    """
    iso = float(iso)
    if not 0.0 < iso < 1.0:
        raise RangeError(f"iso threshold must lie strictly in (0, 1), got {iso}")
    v = np.pad(np.asarray(grid.values, dtype=np.float64), 1, constant_values=0.0)
    v = np.where(v == iso, iso + 1e-7, v)
    inside = v > iso
    nx, ny, nz = v.shape
    origin = grid.origin - grid.spacing

    # One interpolated vertex per sign-changing lattice edge; x edges first,
    # then y, then z, each block in scan order. Edge identity is what welds
    # shared vertices.
    vid = []
    verts = []
    base = 0
    for axis in range(3):
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        a, b = v[tuple(lo)], v[tuple(hi)]
        cut = inside[tuple(lo)] != inside[tuple(hi)]
        ids = np.full(cut.shape, -1, dtype=np.int64)
        count = int(cut.sum())
        ids[cut] = base + np.arange(count)
        base += count
        node = np.argwhere(cut).astype(np.float64)
        node[:, axis] += (iso - a[cut]) / (b[cut] - a[cut])
        verts.append(origin + node * grid.spacing)
        vid.append(ids)
    if base == 0:
        return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int32))
    vertices = np.concatenate(verts, axis=0)

    cases = np.zeros((nx - 1, ny - 1, nz - 1), dtype=np.int32)
    for k in range(8):
        dx, dy, dz = k & 1, (k >> 1) & 1, (k >> 2) & 1
        cases |= inside[dx : dx + nx - 1, dy : dy + ny - 1, dz : dz + nz - 1].astype(np.int32) << k
    ci = np.argwhere((cases != 0) & (cases != 255))
    cc = cases[ci[:, 0], ci[:, 1], ci[:, 2]]
    chunks = []
    cent_verts = []
    cursor = base
    for code in np.unique(cc):
        cells = ci[cc == code]

        def egid(e):
            return vid[_EDGE_AXIS[e]][
                cells[:, 0] + _EDGE_ANCHOR[e][0],
                cells[:, 1] + _EDGE_ANCHOR[e][1],
                cells[:, 2] + _EDGE_ANCHOR[e][2],
            ]

        cents = None
        if _MC_CENT_LOOPS[code]:
            cents = np.empty((len(cells), len(_MC_CENT_LOOPS[code])), dtype=np.int64)
            for j, loop in enumerate(_MC_CENT_LOOPS[code]):
                gids = np.stack([egid(e) for e in loop], axis=1)
                cent_verts.append(vertices[gids].mean(axis=1))
                cents[:, j] = cursor + np.arange(len(cells))
                cursor += len(cells)
        for tri in _MC_TRIANGLES[code]:
            cols = [cents[:, r - 12] if r >= 12 else egid(r) for r in tri]
            chunks.append(np.stack(cols, axis=1))
    if cent_verts:
        vertices = np.concatenate([vertices] + cent_verts, axis=0)
    triangles = np.concatenate(chunks, axis=0).astype(np.int32)
    return TriangleMesh(vertices, triangles)


def enclosed_volume(mesh: TriangleMesh) -> float:
    """Signed volume by the divergence theorem; positive for outward winding."""
    if mesh.n_triangles == 0:
        return 0.0
    tri = mesh.vertices[mesh.triangles]
    return float(np.einsum("ij,ij->i", tri[:, 0], np.cross(tri[:, 1], tri[:, 2])).sum() / 6.0)


def largest_component(mesh: TriangleMesh) -> TriangleMesh:
    """Keep only the vertex-connected component enclosing the most volume.

    Volume is the absolute divergence-theorem volume per component, so thin
    floating artifacts lose to the main body even when they have many faces.
    Idempotent.
    """
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components

    if mesh.n_triangles == 0:
        raise DegenerateMesh("largest_component needs a non-empty mesh")
    t = mesh.triangles.astype(np.int64)
    n = mesh.n_vertices
    rows = np.concatenate([t[:, 0], t[:, 1], t[:, 2]])
    cols = np.concatenate([t[:, 1], t[:, 2], t[:, 0]])
    adj = coo_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(n, n))
    n_comp, labels = connected_components(adj, directed=False)
    tri_label = labels[t[:, 0]]
    tri = mesh.vertices[t]
    contrib = np.einsum("ij,ij->i", tri[:, 0], np.cross(tri[:, 1], tri[:, 2])) / 6.0
    volumes = np.bincount(tri_label, weights=contrib, minlength=n_comp)
    keep = int(np.argmax(np.abs(volumes)))
    sel = tri_label == keep
    kept = t[sel]
    used = np.unique(kept)
    remap = np.full(n, -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    groups = mesh.groups[sel] if mesh.groups is not None else None
    return TriangleMesh(mesh.vertices[used], remap[kept].astype(np.int32), groups)
