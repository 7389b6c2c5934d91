"""Mesh file IO: OBJ (text, with face groups), binary STL, binary little-endian PLY.

Positions survive a round-trip to 1e-6 in model units; STL stores float32 so
that bound assumes normalized-scale coordinates. Group ids are preserved
structurally through OBJ "g" statements (ids renumbered by first appearance).
"""

from __future__ import annotations

import struct

import numpy as np

from ..errors import MeshParseError
from .mesh import PointCloud, TriangleMesh

_FORMATS = ("obj", "stl", "ply")


def save_mesh(mesh: TriangleMesh, fmt: str) -> bytes:
    if fmt == "obj":
        return _save_obj(mesh)
    if fmt == "stl":
        return _save_stl(mesh)
    if fmt == "ply":
        return _save_ply(mesh)
    raise ValueError(f"unknown mesh format {fmt!r}, expected one of {_FORMATS}")


def load_mesh(data: bytes, fmt: str) -> TriangleMesh:
    if fmt == "obj":
        return _load_obj(data)
    if fmt == "stl":
        return _load_stl(data)
    if fmt == "ply":
        return _load_ply(data)
    raise ValueError(f"unknown mesh format {fmt!r}, expected one of {_FORMATS}")


# ---------------------------------------------------------------- OBJ


def _save_obj(mesh: TriangleMesh) -> bytes:
    lines = []
    for x, y, z in mesh.vertices:
        lines.append(f"v {x:.9g} {y:.9g} {z:.9g}")
    current = None
    for t, (a, b, c) in enumerate(mesh.triangles):
        if mesh.groups is not None and mesh.groups[t] != current:
            current = int(mesh.groups[t])
            lines.append(f"g g{current}")
        lines.append(f"f {a + 1} {b + 1} {c + 1}")
    return ("\n".join(lines) + "\n").encode("ascii")


def _load_obj(data: bytes) -> TriangleMesh:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MeshParseError("OBJ is not valid UTF-8", offset=exc.start) from exc
    vertices: list[tuple[float, float, float]] = []
    triangles: list[tuple[int, int, int]] = []
    groups: list[int] = []
    group_ids: dict[str, int] = {}
    current_group = None
    saw_group = False

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        key = parts[0]
        if key == "v":
            if len(parts) < 4:
                raise MeshParseError("vertex needs 3 coordinates", line=lineno)
            try:
                vertices.append((float(parts[1]), float(parts[2]), float(parts[3])))
            except ValueError:
                raise MeshParseError(f"bad vertex coordinate in {line!r}", line=lineno) from None
        elif key == "g":
            name = parts[1] if len(parts) > 1 else ""
            current_group = group_ids.setdefault(name, len(group_ids))
            saw_group = True
        elif key == "f":
            if len(parts) < 4:
                raise MeshParseError("face needs at least 3 vertices", line=lineno)
            idx = []
            for token in parts[1:]:
                head = token.split("/")[0]
                try:
                    i = int(head)
                except ValueError:
                    raise MeshParseError(f"bad face index {token!r}", line=lineno) from None
                if i < 0:
                    i = len(vertices) + i  # negative indices reference backwards
                else:
                    i = i - 1
                if not (0 <= i < len(vertices)):
                    raise MeshParseError(f"face index {token!r} out of range", line=lineno)
                idx.append(i)
            for k in range(1, len(idx) - 1):  # fan-triangulate polygons
                triangles.append((idx[0], idx[k], idx[k + 1]))
                groups.append(current_group if current_group is not None else 0)
        # vn / vt / s / o / usemtl / mtllib carry no geometry we keep
    if not vertices:
        raise MeshParseError("OBJ contains no vertices", line=1)
    return TriangleMesh(
        np.asarray(vertices, dtype=np.float64),
        np.asarray(triangles, dtype=np.int32).reshape(-1, 3),
        np.asarray(groups, dtype=np.int32) if saw_group else None,
    )


# ---------------------------------------------------------------- STL


def _save_stl(mesh: TriangleMesh) -> bytes:
    header = b"binary STL" + b"\0" * 70
    out = [header, struct.pack("<I", mesh.n_triangles)]
    normals = mesh.triangle_normals()
    tri = mesh.vertices[mesh.triangles]
    for t in range(mesh.n_triangles):
        out.append(struct.pack("<3f", *normals[t].astype(np.float32)))
        for corner in range(3):
            out.append(struct.pack("<3f", *tri[t, corner].astype(np.float32)))
        out.append(struct.pack("<H", 0))
    return b"".join(out)


def _load_stl(data: bytes) -> TriangleMesh:
    if len(data) < 84:
        raise MeshParseError("STL shorter than its 84-byte preamble", offset=len(data))
    (count,) = struct.unpack_from("<I", data, 80)
    expected = 84 + count * 50
    if len(data) != expected:
        raise MeshParseError(f"STL length {len(data)} != {expected} for {count} triangles", offset=84)
    raw = np.frombuffer(data, dtype=np.uint8, count=count * 50, offset=84).reshape(count, 50)
    coords = raw[:, 12:48].copy().view("<f4").reshape(count, 3, 3).astype(np.float64)
    # weld exact duplicates so the index structure is recovered
    flat = coords.reshape(-1, 3)
    verts, inverse = np.unique(flat, axis=0, return_inverse=True)
    return TriangleMesh(verts, inverse.reshape(count, 3).astype(np.int32))


# ---------------------------------------------------------------- PLY


def _save_ply(mesh: TriangleMesh) -> bytes:
    header = (
        "ply\n"
        "format binary_little_endian 1.0\n"
        f"element vertex {mesh.n_vertices}\n"
        "property float x\nproperty float y\nproperty float z\n"
        f"element face {mesh.n_triangles}\n"
        "property list uchar int vertex_indices\n"
        "end_header\n"
    ).encode("ascii")
    body = [mesh.vertices.astype("<f4").tobytes()]
    for a, b, c in mesh.triangles:
        body.append(struct.pack("<B3i", 3, a, b, c))
    return header + b"".join(body)


def save_point_cloud_ply(cloud: PointCloud, colors: np.ndarray | None = None) -> bytes:
    """Diagnostic point-cloud PLY; colors is an optional (n, 3) uint8 array."""
    props = "property float x\nproperty float y\nproperty float z\n"
    chunks = [cloud.points.astype("<f4")]
    if cloud.normals is not None:
        props += "property float nx\nproperty float ny\nproperty float nz\n"
        chunks.append(cloud.normals.astype("<f4"))
    interleaved = np.concatenate([c.reshape(len(cloud), -1) for c in chunks], axis=1).astype("<f4")
    records = interleaved.tobytes() if colors is None else None
    if colors is not None:
        colors = np.asarray(colors, dtype=np.uint8)
        if colors.shape != (len(cloud), 3):
            raise ValueError(f"colors must be ({len(cloud)}, 3) uint8")
        props += "property uchar red\nproperty uchar green\nproperty uchar blue\n"
        rows = []
        for i in range(len(cloud)):
            rows.append(interleaved[i].tobytes() + colors[i].tobytes())
        records = b"".join(rows)
    header = (
        "ply\nformat binary_little_endian 1.0\n"
        f"element vertex {len(cloud)}\n" + props + "element face 0\n"
        "property list uchar int vertex_indices\nend_header\n"
    ).encode("ascii")
    return header + records


def _load_ply(data: bytes) -> TriangleMesh:
    end_tag = b"end_header\n"
    end = data.find(end_tag)
    if not data.startswith(b"ply\n") or end < 0:
        raise MeshParseError("missing PLY header", offset=0)
    header = data[:end].decode("ascii", errors="replace").splitlines()
    body_at = end + len(end_tag)

    if not any(line.strip() == "format binary_little_endian 1.0" for line in header):
        raise MeshParseError("only binary little-endian PLY is supported", offset=4)

    n_vertex = n_face = 0
    vertex_props: list[str] = []
    element = None
    for line in header[1:]:
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "element":
            element = parts[1]
            if element == "vertex":
                n_vertex = int(parts[2])
            elif element == "face":
                n_face = int(parts[2])
        elif parts[0] == "property" and element == "vertex":
            if parts[1] not in ("float", "float32"):
                raise MeshParseError(f"unsupported vertex property type {parts[1]!r}", offset=4)
            vertex_props.append(parts[-1])
        elif parts[0] == "property" and element == "face":
            if parts[1] != "list" or parts[2] not in ("uchar", "uint8") or parts[3] not in ("int", "int32"):
                raise MeshParseError("unsupported face list property", offset=4)
    for axis in ("x", "y", "z"):
        if axis not in vertex_props:
            raise MeshParseError(f"vertex element lacks property {axis!r}", offset=4)

    stride = 4 * len(vertex_props)
    need = n_vertex * stride
    if len(data) - body_at < need:
        raise MeshParseError("vertex block truncated", offset=len(data))
    table = np.frombuffer(data, dtype="<f4", count=n_vertex * len(vertex_props), offset=body_at)
    table = table.reshape(n_vertex, len(vertex_props)).astype(np.float64)
    cols = [vertex_props.index(a) for a in ("x", "y", "z")]
    vertices = table[:, cols]

    offset = body_at + need
    triangles = np.empty((n_face, 3), dtype=np.int32)
    row = 0
    for _ in range(n_face):
        if offset >= len(data):
            raise MeshParseError("face block truncated", offset=offset)
        n = data[offset]
        offset += 1
        if offset + 4 * n > len(data):
            raise MeshParseError("face record truncated", offset=offset)
        idx = struct.unpack_from(f"<{n}i", data, offset)
        offset += 4 * n
        if n < 3:
            raise MeshParseError(f"face with {n} vertices", offset=offset)
        for k in range(1, n - 1):
            if row >= len(triangles):
                triangles = np.vstack([triangles, np.zeros((n_face, 3), dtype=np.int32)])
            triangles[row] = (idx[0], idx[k], idx[k + 1])
            row += 1
    return TriangleMesh(vertices, triangles[:row])
