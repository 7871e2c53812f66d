"""Seeded synthetic map generator for desk-scale verification.

Builds K spatially disjoint voxel blobs whose embeddings scatter around
mutually orthogonal class directions with a configurable angular noise.
Class directions depend only on (K, D) so that maps generated from
different seeds stay comparable label-by-label; the seed drives voxel
noise only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .archive import QueryLexicon
from .errors import ValidationError
from .grid import EmbeddingGrid, LabelVocabulary, MapBundle, SemanticGrid
from .instances import grow_instances

# entropy prefix keeping direction frames independent of voxel-noise seeds
_DIRECTION_STREAM = 0x4C534D

OTHER_KEY = "other"


@dataclass(frozen=True)
class SyntheticSpec:
    class_count: int
    voxels_per_class: int
    dim: int
    angular_noise: float = 0.0
    cell_size: float = 0.05
    blob_extent: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.class_count < 1:
            raise ValidationError("class_count must be >= 1")
        if self.dim < 2:
            raise ValidationError("dim must be >= 2")
        if self.voxels_per_class < 1:
            raise ValidationError("voxels_per_class must be >= 1")
        if self.angular_noise < 0:
            raise ValidationError("angular_noise must be >= 0")
        if self.cell_size <= 0:
            raise ValidationError("cell_size must be > 0")

    @property
    def extent(self) -> int:
        if self.blob_extent is not None:
            if self.blob_extent**3 < self.voxels_per_class:
                raise ValidationError(
                    f"blob_extent {self.blob_extent} holds at most "
                    f"{self.blob_extent ** 3} voxels, need {self.voxels_per_class}"
                )
            return self.blob_extent
        extent = max(1, math.ceil(self.voxels_per_class ** (1.0 / 3.0) - 1e-9))
        while extent**3 < self.voxels_per_class:
            extent += 1
        return extent


def class_directions(class_count: int, dim: int) -> Tuple[np.ndarray, np.ndarray]:
    """(K, D) mutually orthogonal unit directions plus an "other" direction.

    Directions come from a seeded random orthonormal frame, so any two
    distinct class means sit 90 degrees apart. The "other" direction is
    exactly orthogonal to every class mean when K < D; for K = D it is the
    normalized diagonal, the direction minimizing the largest |cosine|.
    """
    if class_count > dim:
        raise ValidationError(
            f"cannot separate {class_count} class directions by >= 60 degrees "
            f"in {dim} dimensions; need class_count <= dim"
        )
    rng = np.random.default_rng(
        np.random.SeedSequence([_DIRECTION_STREAM, class_count, dim])
    )
    gauss = rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(gauss)
    q = q * np.sign(np.diag(r))  # sign-fixed for determinism
    means = q[:, :class_count].T.astype(np.float32)
    if class_count < dim:
        other = q[:, class_count].astype(np.float32)
    else:
        diag = q.sum(axis=1)
        other = (diag / np.linalg.norm(diag)).astype(np.float32)
    return means, other


def _blob_positions(extent: int, count: int, base_x: int) -> np.ndarray:
    """First ``count`` cells of an extent^3 cube in (x, y, z) scan order."""
    i = np.arange(count, dtype=np.int64)
    x = i // (extent * extent) + base_x
    y = (i // extent) % extent
    z = i % extent
    return np.stack([x, y, z], axis=1)


def _noisy_directions(
    rng: np.random.Generator, mu: np.ndarray, count: int, angular_noise: float
) -> np.ndarray:
    mu64 = mu.astype(np.float64)
    if angular_noise == 0.0:
        return np.tile(mu64, (count, 1))
    gauss = rng.standard_normal((count, len(mu64)))
    tangent = gauss - (gauss @ mu64)[:, None] * mu64
    norms = np.linalg.norm(tangent, axis=1)
    theta = rng.normal(0.0, angular_noise, size=count)
    theta[norms < 1e-12] = 0.0
    norms[norms < 1e-12] = 1.0
    unit_tangent = tangent / norms[:, None]
    return np.cos(theta)[:, None] * mu64 + np.sin(theta)[:, None] * unit_tangent


def generate_synthetic_map(spec: SyntheticSpec) -> Tuple[MapBundle, QueryLexicon]:
    """Deterministic synthetic bundle plus the lexicon of exact class means."""
    means, other = class_directions(spec.class_count, spec.dim)
    extent = spec.extent
    rng = np.random.default_rng(spec.seed)

    index_blocks = []
    vector_blocks = []
    label_blocks = []
    for c in range(spec.class_count):
        base_x = c * (extent + 2)  # gap of 2 keeps blobs disjoint and non-adjacent
        index_blocks.append(_blob_positions(extent, spec.voxels_per_class, base_x))
        vector_blocks.append(
            _noisy_directions(rng, means[c], spec.voxels_per_class, spec.angular_noise)
        )
        label_blocks.append(np.full(spec.voxels_per_class, c, dtype=np.int64))

    indices = np.concatenate(index_blocks, axis=0)
    vectors = np.concatenate(vector_blocks, axis=0).astype(np.float32)
    labels = np.concatenate(label_blocks)

    names = [f"class_{c:02d}" for c in range(spec.class_count)]
    vocabulary = LabelVocabulary(names)
    embeddings = EmbeddingGrid(spec.cell_size, spec.dim, indices, vectors)
    semantics = SemanticGrid(indices, labels, vocabulary)
    instances = grow_instances(semantics)
    bundle = MapBundle(
        embeddings,
        semantics,
        instances,
        map_id=f"synth-k{spec.class_count}-d{spec.dim}-s{spec.seed}",
    )

    entries = {name: means[c] for c, name in enumerate(names)}
    entries[OTHER_KEY] = other
    lexicon = QueryLexicon(spec.dim, entries)
    return bundle, lexicon
