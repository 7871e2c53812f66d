"""Region-growing instance segmentation over semantic voxel grids.

Every voxel starts as its own seed cluster; clusters merge with 6-adjacent
(optionally 26-adjacent) clusters that carry the same label until nothing
more can merge or the iteration budget runs out. With the default budget
(one iteration per occupied voxel) the result is exactly the connected
components of the equal-label adjacency graph.
"""
from __future__ import annotations

from typing import Optional

import numpy as np

from .errors import ValidationError
from .grid import InstanceGrid, SemanticGrid, pack_keys

FACE_OFFSETS = np.array(
    [(1, 0, 0), (0, 1, 0), (0, 0, 1)], dtype=np.int64
)


def _all_offsets_26() -> np.ndarray:
    offs = [
        (dx, dy, dz)
        for dx in (-1, 0, 1)
        for dy in (-1, 0, 1)
        for dz in (-1, 0, 1)
        if (dx, dy, dz) > (0, 0, 0)
    ]
    return np.array(offs, dtype=np.int64)


def _same_label_edges(semantics: SemanticGrid, connectivity: int) -> np.ndarray:
    """(E, 2) row pairs of adjacent voxels with identical labels."""
    idx = semantics.indices.astype(np.int64)
    lo, hi = semantics.bbox
    extents = hi - lo + 1
    keys = pack_keys(idx, lo, extents)
    # canonical order means keys are already sorted ascending
    offsets = FACE_OFFSETS if connectivity == 6 else _all_offsets_26()
    edges = []
    for off in offsets:
        nbr = idx + off
        inside = ((nbr >= lo) & (nbr <= hi)).all(axis=1)
        rows = np.flatnonzero(inside)
        if len(rows) == 0:
            continue
        nbr_keys = pack_keys(nbr[rows], lo, extents)
        pos = np.searchsorted(keys, nbr_keys)
        pos = np.minimum(pos, len(keys) - 1)
        hit = keys[pos] == nbr_keys
        src = rows[hit]
        dst = pos[hit]
        same = semantics.labels[src] == semantics.labels[dst]
        if same.any():
            edges.append(np.stack([src[same], dst[same]], axis=1))
    if not edges:
        return np.zeros((0, 2), dtype=np.int64)
    return np.concatenate(edges, axis=0)


def _exact_components(n: int, edges: np.ndarray) -> np.ndarray:
    """Union-find connected components; returns a root row per voxel."""
    parent = np.arange(n, dtype=np.int64)

    def find(i: int) -> int:
        root = i
        while parent[root] != root:
            root = parent[root]
        while parent[i] != root:  # path compression
            parent[i], i = root, parent[i]
        return root

    for a, b in edges.tolist():
        ra, rb = find(a), find(b)
        if ra != rb:
            if ra < rb:
                parent[rb] = ra
            else:
                parent[ra] = rb
    return np.array([find(i) for i in range(n)], dtype=np.int64)


def _bounded_components(n: int, edges: np.ndarray, max_iters: int) -> np.ndarray:
    """Synchronous min-cluster propagation, one merge step per iteration."""
    cluster = np.arange(n, dtype=np.int64)
    if len(edges) == 0:
        return cluster
    a, b = edges[:, 0], edges[:, 1]
    for _ in range(max_iters):
        nxt = cluster.copy()
        np.minimum.at(nxt, a, cluster[b])
        np.minimum.at(nxt, b, cluster[a])
        if np.array_equal(nxt, cluster):
            break
        cluster = nxt
    return cluster


def grow_instances(
    semantics: SemanticGrid,
    max_iters: Optional[int] = None,
    connectivity: int = 6,
) -> InstanceGrid:
    """Segment a semantic grid into label-pure connected instances.

    max_iters defaults to the number of occupied voxels, which guarantees
    convergence to exact connected components. Instance ids are renumbered
    0..K-1 in first-seen canonical scan order.
    """
    n = len(semantics)
    if n == 0:
        raise ValidationError("grow_instances requires a non-empty semantic grid")
    if connectivity not in (6, 26):
        raise ValidationError(f"connectivity must be 6 or 26, got {connectivity}")
    if max_iters is None:
        max_iters = n
    if max_iters < 1:
        raise ValidationError("max_iters must be a positive integer")

    edges = _same_label_edges(semantics, connectivity)
    if max_iters >= n:
        cluster = _exact_components(n, edges)
    else:
        cluster = _bounded_components(n, edges, max_iters)

    # renumber roots in first-seen scan order over the canonical voxel order
    first_seen: dict[int, int] = {}
    ids = np.empty(n, dtype=np.int64)
    for row, root in enumerate(cluster.tolist()):
        inst = first_seen.setdefault(root, len(first_seen))
        ids[row] = inst
    return InstanceGrid(semantics.indices, ids, assume_canonical=True)
