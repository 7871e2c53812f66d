"""Sparse voxel-grid data model for embedding maps and ground truth.

All grids store their voxels in canonical (x, y, z) lexicographic order,
which makes archives byte-deterministic and set comparisons cheap. Grids
are immutable after construction and safe to share across workers.
"""
from __future__ import annotations

from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import ValidationError

INT32_MIN = -(2**31)
INT32_MAX = 2**31 - 1

# Per-axis extent limit so packed int64 voxel keys cannot overflow.
MAX_AXIS_EXTENT = 2**20


def _as_index_array(indices) -> np.ndarray:
    arr = np.asarray(indices)
    if arr.size == 0:
        return np.zeros((0, 3), dtype=np.int32)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValidationError(f"voxel indices must have shape (N, 3), got {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        raise ValidationError("voxel indices must be integers")
    if arr.min() < INT32_MIN or arr.max() > INT32_MAX:
        raise ValidationError("voxel index component does not fit in 32 bits")
    return arr.astype(np.int32, copy=False)


def sort_canonical(indices: np.ndarray) -> np.ndarray:
    """Return the permutation that sorts voxel rows by (x, y, z)."""
    return np.lexsort((indices[:, 2], indices[:, 1], indices[:, 0]))


def _is_sorted_unique(indices: np.ndarray) -> bool:
    if len(indices) < 2:
        return True
    diff = indices[1:] != indices[:-1]
    # strict lexicographic increase: first differing column must increase
    greater = indices[1:] > indices[:-1]
    first_diff = diff.argmax(axis=1)
    rows = np.arange(len(first_diff))
    return bool(diff.any(axis=1).all() and greater[rows, first_diff].all())


def pack_keys(indices: np.ndarray, origin: np.ndarray, extents: np.ndarray) -> np.ndarray:
    """Pack (N, 3) voxel indices into int64 scalar keys for fast lookup."""
    if (extents > MAX_AXIS_EXTENT).any():
        raise ValidationError(
            f"grid bounding box exceeds {MAX_AXIS_EXTENT} cells on one axis"
        )
    off = (indices - origin).astype(np.int64)
    return (off[:, 0] * extents[1] + off[:, 1]) * extents[2] + off[:, 2]


class LabelVocabulary:
    """Ordered list of unique label strings; ids are positions 0..L-1."""

    def __init__(self, labels: Iterable[str]):
        labels = tuple(str(x) for x in labels)
        if len(set(labels)) != len(labels):
            raise ValidationError("vocabulary labels must be unique")
        self.labels = labels
        self._ids = {name: i for i, name in enumerate(labels)}

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, label_id: int) -> str:
        return self.labels[label_id]

    def __eq__(self, other) -> bool:
        return isinstance(other, LabelVocabulary) and self.labels == other.labels

    def __repr__(self) -> str:
        return f"LabelVocabulary({list(self.labels)!r})"

    def id_of(self, name: str) -> int:
        if name not in self._ids:
            raise ValidationError(f"label {name!r} not in vocabulary")
        return self._ids[name]

    def __contains__(self, name: str) -> bool:
        return name in self._ids


class _SparseGrid:
    """Shared canonical-order storage for (N, 3) voxel indices."""

    def __init__(self, indices, *, assume_canonical: bool = False):
        indices = _as_index_array(indices)
        if not assume_canonical:
            order = sort_canonical(indices)
            indices = indices[order]
            self._order = order
        else:
            self._order = None
        if not _is_sorted_unique(indices):
            raise ValidationError("duplicate voxel index in grid")
        indices.setflags(write=False)
        self.indices = indices
        self._key_cache: Optional[dict] = None

    def __len__(self) -> int:
        return len(self.indices)

    @property
    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        """(min_corner, max_corner) of occupied voxels, inclusive."""
        if len(self.indices) == 0:
            zero = np.zeros(3, dtype=np.int64)
            return zero, zero - 1
        return (
            self.indices.min(axis=0).astype(np.int64),
            self.indices.max(axis=0).astype(np.int64),
        )

    def row_of(self, index: Sequence[int]) -> Optional[int]:
        """Row position of a voxel index, or None if unoccupied."""
        if self._key_cache is None:
            self._key_cache = {
                tuple(row): i for i, row in enumerate(self.indices.tolist())
            }
        return self._key_cache.get(tuple(int(c) for c in index))

    def same_keys(self, other: "_SparseGrid") -> bool:
        return self.indices is other.indices or np.array_equal(
            self.indices, other.indices
        )


class EmbeddingGrid(_SparseGrid):
    """Sparse voxel -> embedding map at a fixed cell size.

    Vectors are stored as float32 rows aligned with ``indices``.
    """

    def __init__(self, cell_size, dim, indices, vectors, *, assume_canonical=False):
        cell_size = float(np.float32(cell_size))
        if not cell_size > 0:
            raise ValidationError(f"cell_size must be > 0, got {cell_size}")
        dim = int(dim)
        if dim < 1:
            raise ValidationError(f"embedding dim must be >= 1, got {dim}")
        super().__init__(indices, assume_canonical=assume_canonical)
        vectors = np.asarray(vectors, dtype=np.float32)
        if vectors.size == 0:
            vectors = vectors.reshape(0, dim)
        if vectors.ndim != 2 or vectors.shape != (len(self.indices), dim):
            raise ValidationError(
                f"vectors must have shape ({len(self.indices)}, {dim}), "
                f"got {vectors.shape}"
            )
        if not np.isfinite(vectors).all():
            raise ValidationError("embedding components must be finite")
        if self._order is not None:
            vectors = vectors[self._order]
        vectors.setflags(write=False)
        self.cell_size = cell_size
        self.dim = dim
        self.vectors = vectors

    @classmethod
    def from_cells(cls, cell_size, dim, cells: Mapping) -> "EmbeddingGrid":
        keys = np.array(list(cells.keys()), dtype=np.int64).reshape(len(cells), 3)
        vecs = np.array(list(cells.values()), dtype=np.float32).reshape(
            len(cells), dim
        )
        return cls(cell_size, dim, keys, vecs)

    def vector_at(self, index) -> Optional[np.ndarray]:
        row = self.row_of(index)
        return None if row is None else self.vectors[row]


class SemanticGrid(_SparseGrid):
    """Sparse voxel -> ground-truth label id map with its vocabulary."""

    def __init__(self, indices, labels, vocabulary: LabelVocabulary, *, assume_canonical=False):
        super().__init__(indices, assume_canonical=assume_canonical)
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape != (len(self.indices),):
            raise ValidationError(
                f"labels must have shape ({len(self.indices)},), got {labels.shape}"
            )
        if len(labels) and (labels.min() < 0 or labels.max() >= len(vocabulary)):
            raise ValidationError(
                f"label id outside vocabulary of size {len(vocabulary)}"
            )
        labels = labels.astype(np.uint16)
        if self._order is not None:
            labels = labels[self._order]
        labels.setflags(write=False)
        self.labels = labels
        self.vocabulary = vocabulary

    def label_at(self, index) -> Optional[int]:
        row = self.row_of(index)
        return None if row is None else int(self.labels[row])


class InstanceGrid(_SparseGrid):
    """Sparse voxel -> instance id map; ids are contiguous 0..K-1."""

    def __init__(self, indices, ids, *, assume_canonical=False):
        super().__init__(indices, assume_canonical=assume_canonical)
        ids = np.asarray(ids, dtype=np.int64)
        if ids.shape != (len(self.indices),):
            raise ValidationError(
                f"instance ids must have shape ({len(self.indices)},), got {ids.shape}"
            )
        if len(ids):
            if ids.min() < 0:
                raise ValidationError("instance ids must be non-negative")
            distinct = np.unique(ids)
            if distinct[0] != 0 or distinct[-1] != len(distinct) - 1:
                raise ValidationError("instance ids must form a contiguous 0..K-1 range")
            self.instance_count = len(distinct)
        else:
            self.instance_count = 0
        ids = ids.astype(np.uint32)
        if self._order is not None:
            ids = ids[self._order]
        ids.setflags(write=False)
        self.ids = ids


class MapBundle:
    """An embedding grid plus optional semantic and instance ground truth."""

    def __init__(
        self,
        embeddings: EmbeddingGrid,
        semantics: Optional[SemanticGrid] = None,
        instances: Optional[InstanceGrid] = None,
        map_id: str = "",
    ):
        if semantics is not None and not embeddings.same_keys(semantics):
            raise ValidationError(
                "semantic grid key set must equal embedding grid key set"
            )
        if instances is not None and not embeddings.same_keys(instances):
            raise ValidationError(
                "instance grid key set must equal embedding grid key set"
            )
        self.embeddings = embeddings
        self.semantics = semantics
        self.instances = instances
        self.map_id = str(map_id)

    def __len__(self) -> int:
        return len(self.embeddings)

    @property
    def cell_size(self) -> float:
        return self.embeddings.cell_size

    @property
    def dim(self) -> int:
        return self.embeddings.dim


def _integer_ratio(new_cell_size: float, cell_size: float) -> int:
    ratio = float(new_cell_size) / float(cell_size)
    k = int(round(ratio))
    if k < 1 or abs(ratio - k) > 1e-4 * max(k, 1):
        raise ValidationError(
            f"new cell size {new_cell_size} is not a positive integer multiple "
            f"of {cell_size} (ratio {ratio:.6f})"
        )
    return k


def regrid(bundle: MapBundle, new_cell_size: float) -> MapBundle:
    """Aggregate a bundle to a coarser cell size.

    The target cell size must be an integer multiple k of the native one.
    Each output voxel covers a k^3 block: its embedding is the mean of the
    occupied children, its label the children's majority label (ties go to
    the lowest label id), and instances are regrown on the regridded
    semantics.
    """
    k = _integer_ratio(new_cell_size, bundle.cell_size)
    emb = bundle.embeddings
    parents = emb.indices.astype(np.int64) // k
    # group children by parent voxel
    uniq, inverse = np.unique(parents, axis=0, return_inverse=True)
    n_out = len(uniq)

    sums = np.zeros((n_out, emb.dim), dtype=np.float64)
    np.add.at(sums, inverse, emb.vectors.astype(np.float64))
    counts = np.bincount(inverse, minlength=n_out).astype(np.float64)
    means = (sums / counts[:, None]).astype(np.float32) if n_out else np.zeros(
        (0, emb.dim), dtype=np.float32
    )

    # np.unique(axis=0) returns rows sorted lexicographically, which is
    # already the canonical order.
    new_emb = EmbeddingGrid(
        float(np.float32(new_cell_size)), emb.dim, uniq, means, assume_canonical=True
    )

    new_sem = None
    new_inst = None
    if bundle.semantics is not None:
        votes = _majority_labels(inverse, bundle.semantics.labels, n_out)
        new_sem = SemanticGrid(
            uniq, votes, bundle.semantics.vocabulary, assume_canonical=True
        )
        if bundle.instances is not None:
            from .instances import grow_instances

            new_inst = grow_instances(new_sem)
    return MapBundle(new_emb, new_sem, new_inst, map_id=bundle.map_id)


def _majority_labels(parent_idx: np.ndarray, labels: np.ndarray, n_out: int) -> np.ndarray:
    """Per-parent majority vote over child labels, ties to the lowest id."""
    if n_out == 0:
        return np.zeros(0, dtype=np.int64)
    pairs = np.stack([parent_idx.astype(np.int64), labels.astype(np.int64)], axis=1)
    uniq_pairs, pair_counts = np.unique(pairs, axis=0, return_counts=True)
    # order by (parent asc, count desc, label asc); the first row per parent
    # is then the majority label with the lowest-id tie-break
    order = np.lexsort((uniq_pairs[:, 1], -pair_counts, uniq_pairs[:, 0]))
    ordered = uniq_pairs[order]
    _, first = np.unique(ordered[:, 0], return_index=True)
    return ordered[first, 1]


def footprint_bytes(bundle: MapBundle) -> int:
    """Exact serialized size of the bundle in the LSM archive format."""
    from .archive import HEADER_SIZE, record_size, vocabulary_block_size

    vocab = (
        bundle.semantics.vocabulary.labels if bundle.semantics is not None else ()
    )
    return (
        HEADER_SIZE
        + vocabulary_block_size(vocab)
        + len(bundle) * record_size(bundle.dim)
    )


def l2_normalize(grid: EmbeddingGrid) -> EmbeddingGrid:
    """Return a grid whose embeddings all have unit Euclidean norm."""
    norms = np.linalg.norm(grid.vectors.astype(np.float64), axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if len(zero):
        voxel = tuple(int(c) for c in grid.indices[zero[0]])
        raise ValidationError(f"cannot normalize zero-norm embedding at voxel {voxel}")
    unit = (grid.vectors.astype(np.float64) / norms[:, None]).astype(np.float32)
    return EmbeddingGrid(grid.cell_size, grid.dim, grid.indices, unit, assume_canonical=True)


def norm_stats(grid: EmbeddingGrid) -> dict:
    """Mean and maximum embedding norm over the grid."""
    if len(grid) == 0:
        raise ValidationError("norm_stats requires a non-empty grid")
    norms = np.linalg.norm(grid.vectors.astype(np.float64), axis=1)
    return {"mean_norm": float(norms.mean()), "max_norm": float(norms.max())}
