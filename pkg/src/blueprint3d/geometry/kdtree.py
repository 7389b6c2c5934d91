"""Exact nearest-neighbor k-d tree.

Median split on the widest axis, bucketed leaves, lexicographic (coordinate,
index) ordering so construction is deterministic. Queries return the true
nearest neighbor; ties break to the lower point index, matching a brute-force
argmin over the original point order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionError
from .mesh import PointCloud

_BUCKET = 16
_LEAF = -1


@dataclass(frozen=True)
class KdTree:
    points: np.ndarray  # (n, 3) float64, original order
    perm: np.ndarray  # (n,) int64, leaf-contiguous permutation
    node_axis: np.ndarray  # (k,) int32, _LEAF marks a leaf
    node_split: np.ndarray  # (k,) float64
    node_a: np.ndarray  # (k,) int32: left child, or leaf start into perm
    node_b: np.ndarray  # (k,) int32: right child, or leaf end

    def __len__(self) -> int:
        return len(self.points)


def kd_build(cloud) -> KdTree:
    points = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3 or len(points) == 0:
        raise DimensionError(f"kd_build needs a non-empty (n, 3) cloud, got shape {points.shape}")
    points = np.ascontiguousarray(points)
    perm = np.arange(len(points), dtype=np.int64)
    axis_l, split_l, a_l, b_l = [], [], [], []

    def build(lo: int, hi: int) -> int:
        node = len(axis_l)
        axis_l.append(_LEAF)
        split_l.append(0.0)
        a_l.append(lo)
        b_l.append(hi)
        if hi - lo <= _BUCKET:
            return node
        seg = perm[lo:hi]
        sub = points[seg]
        axis = int(np.argmax(sub.max(axis=0) - sub.min(axis=0)))
        order = np.lexsort((seg, sub[:, axis]))
        perm[lo:hi] = seg[order]
        mid = (lo + hi) // 2
        axis_l[node] = axis
        split_l[node] = float(points[perm[mid], axis])
        a_l[node] = build(lo, mid)
        b_l[node] = build(mid, hi)
        return node

    build(0, len(points))
    return KdTree(
        points,
        perm,
        np.asarray(axis_l, dtype=np.int32),
        np.asarray(split_l, dtype=np.float64),
        np.asarray(a_l, dtype=np.int32),
        np.asarray(b_l, dtype=np.int32),
    )


def kd_nearest(tree: KdTree, p) -> tuple[int, float]:
    """Exact nearest neighbor of p: (point index, Euclidean distance)."""
    q = np.asarray(p, dtype=np.float64)
    points, perm = tree.points, tree.perm
    node_axis, node_split = tree.node_axis, tree.node_split
    node_a, node_b = tree.node_a, tree.node_b
    best_d2 = np.inf
    best_i = -1
    # stack of (node, squared distance from q to the node's split slab)
    stack = [(0, 0.0)]
    while stack:
        node, bound = stack.pop()
        if bound > best_d2:  # == must still be visited: a tie may hide a lower index
            continue
        axis = node_axis[node]
        if axis == _LEAF:
            idx = perm[node_a[node] : node_b[node]]
            d2 = np.sum((points[idx] - q) ** 2, axis=1)
            m = d2.min()
            if m < best_d2:
                best_d2 = m
                best_i = int(idx[d2 == m].min())
            elif m == best_d2:
                best_i = min(best_i, int(idx[d2 == m].min()))
            continue
        diff = q[axis] - node_split[node]
        near, far = (node_a[node], node_b[node]) if diff < 0.0 else (node_b[node], node_a[node])
        stack.append((far, diff * diff))
        stack.append((near, bound))
    return best_i, float(np.sqrt(best_d2))


def _merge_leaf_batch(best_d2, best_i, lq, d2, cand):
    """Fold leaf candidate blocks (one row per worklist item) into the per-query
    running (best_d2, best_i), with ties breaking to the lower point index."""
    m2 = d2.min(axis=1)
    i2 = np.where(d2 == m2[:, None], cand, np.iinfo(np.int64).max).min(axis=1)
    # lexicographic (d2, index) minimum per query: sorting puts it first
    order = np.lexsort((i2, m2, lq))
    lq, m2, i2 = lq[order], m2[order], i2[order]
    first = np.ones(len(lq), dtype=bool)
    first[1:] = lq[1:] != lq[:-1]
    fq, fm, fi = lq[first], m2[first], i2[first]
    upd = (fm < best_d2[fq]) | ((fm == best_d2[fq]) & (fi < best_i[fq]))
    best_d2[fq[upd]] = fm[upd]
    best_i[fq[upd]] = fi[upd]


def kd_nearest_many(tree: KdTree, queries: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """kd_nearest over rows of (m, 3); returns (indices, distances).

    Same result as looping kd_nearest, computed breadth-first over all
    queries at once: one vectorized descent to each query's home leaf for a
    warm bound, then a shared worklist of (query, node, slab bound) items
    that prunes against the running best exactly like the scalar traversal.
    """
    queries = np.asarray(queries, dtype=np.float64)
    points, perm = tree.points, tree.perm
    node_axis, node_split = tree.node_axis, tree.node_split
    node_a, node_b = tree.node_a, tree.node_b
    m = len(queries)
    best_d2 = np.full(m, np.inf)
    best_i = np.full(m, np.iinfo(np.int64).max, dtype=np.int64)
    cols = np.arange(_BUCKET, dtype=np.int64)

    def leaf_candidates(lq, ln):
        lo = node_a[ln].astype(np.int64)
        hi = node_b[ln].astype(np.int64)
        # pad every bucket to _BUCKET wide by repeating its last member
        gather = lo[:, None] + np.minimum(cols[None, :], (hi - lo - 1)[:, None])
        cand = perm[gather]
        d2 = ((points[cand] - queries[lq, None, :]) ** 2).sum(axis=-1)
        _merge_leaf_batch(best_d2, best_i, lq, d2, cand)

    # warm start: descend every query to its home leaf
    node = np.zeros(m, dtype=np.int64)
    while True:
        rows = np.flatnonzero(node_axis[node] != _LEAF)
        if not len(rows):
            break
        ln = node[rows]
        left = queries[rows, node_axis[ln]] < node_split[ln]
        node[rows] = np.where(left, node_a[ln], node_b[ln])
    leaf_candidates(np.arange(m, dtype=np.int64), node)

    # full traversal from the root under the warm bounds; the worklist is
    # expanded at most `chunk` items per round, smallest slab bounds first, so
    # the running best tightens before the frontier can balloon
    chunk = 1 << 17
    wq = np.arange(m, dtype=np.int64)
    wn = np.zeros(m, dtype=np.int64)
    wb = np.zeros(m, dtype=np.float64)
    while len(wq):
        keep = wb <= best_d2[wq]  # == must still be visited: ties may hide lower indices
        wq, wn, wb = wq[keep], wn[keep], wb[keep]
        if not len(wq):
            break
        if len(wq) > chunk:
            sel = np.argpartition(wb, chunk - 1)[:chunk]
            hold = np.ones(len(wq), dtype=bool)
            hold[sel] = False
            pend = (wq[hold], wn[hold], wb[hold])
            wq, wn, wb = wq[sel], wn[sel], wb[sel]
        else:
            pend = None
        ax = node_axis[wn]
        leaf = ax == _LEAF
        if leaf.any():
            leaf_candidates(wq[leaf], wn[leaf])
        intern = ~leaf
        iq, inode, ib = wq[intern], wn[intern], wb[intern]
        diff = queries[iq, ax[intern]] - node_split[inode]
        go_left = diff < 0.0
        a = node_a[inode].astype(np.int64)
        b = node_b[inode].astype(np.int64)
        parts_q = [iq, iq]
        parts_n = [np.where(go_left, a, b), np.where(go_left, b, a)]
        parts_b = [ib, diff * diff]
        if pend is not None:
            parts_q.append(pend[0])
            parts_n.append(pend[1])
            parts_b.append(pend[2])
        wq = np.concatenate(parts_q)
        wn = np.concatenate(parts_n)
        wb = np.concatenate(parts_b)
    return best_i, np.sqrt(best_d2)


def kd_nearest_cone(
    tree: KdTree, p, normals: np.ndarray, query_normal: np.ndarray, max_dot: float
) -> tuple[int, float]:
    """Nearest neighbor among points whose unit normal n_i satisfies
    dot(n_i, query_normal) < max_dot (an opposition cone around -query_normal).

    `normals` is indexed like tree.points. Returns (-1, inf) when no point
    passes the test; ties break to the lower index like kd_nearest.
    """
    q = np.asarray(p, dtype=np.float64)
    qn = np.asarray(query_normal, dtype=np.float64)
    points, perm = tree.points, tree.perm
    node_axis, node_split = tree.node_axis, tree.node_split
    node_a, node_b = tree.node_a, tree.node_b
    best_d2 = np.inf
    best_i = -1
    stack = [(0, 0.0)]
    while stack:
        node, bound = stack.pop()
        if bound > best_d2:
            continue
        axis = node_axis[node]
        if axis == _LEAF:
            idx = perm[node_a[node] : node_b[node]]
            ok = normals[idx] @ qn < max_dot
            if not ok.any():
                continue
            idx = idx[ok]
            d2 = np.sum((points[idx] - q) ** 2, axis=1)
            m = d2.min()
            if m < best_d2:
                best_d2 = m
                best_i = int(idx[d2 == m].min())
            elif m == best_d2 and best_i >= 0:
                best_i = min(best_i, int(idx[d2 == m].min()))
            continue
        diff = q[axis] - node_split[node]
        near, far = (node_a[node], node_b[node]) if diff < 0.0 else (node_b[node], node_a[node])
        stack.append((far, diff * diff))
        stack.append((near, bound))
    return best_i, float(np.sqrt(best_d2))  # (-1, inf) when nothing passes
