"""Shared fixtures and independent oracle implementations.

The oracles here are deliberately naive (loops, direct convolution,
breadth-first search, iterative matrix square roots) so they stay
independent of the vectorized code paths they check.
"""
from __future__ import annotations

import math
from collections import deque

import numpy as np
import pytest

from lsmeval.grid import (
    EmbeddingGrid,
    InstanceGrid,
    LabelVocabulary,
    MapBundle,
    SemanticGrid,
)


# --- builders ---------------------------------------------------------------


def make_embedding_grid(cells: dict, cell_size=0.05, dim=None) -> EmbeddingGrid:
    dim = dim if dim is not None else len(next(iter(cells.values())))
    return EmbeddingGrid.from_cells(cell_size, dim, cells)


def make_bundle_from_labels(
    label_cells: dict,
    vocabulary,
    dim=4,
    cell_size=0.05,
    map_id="toy",
    embeddings=None,
) -> MapBundle:
    """Bundle whose embeddings default to one-hot vectors per label."""
    vocab = (
        vocabulary
        if isinstance(vocabulary, LabelVocabulary)
        else LabelVocabulary(vocabulary)
    )
    indices = np.array(list(label_cells.keys()), dtype=np.int64).reshape(-1, 3)
    labels = np.array(list(label_cells.values()), dtype=np.int64)
    if embeddings is None:
        embeddings = np.zeros((len(labels), dim), dtype=np.float32)
        embeddings[np.arange(len(labels)), labels % dim] = 1.0
    grid = EmbeddingGrid(cell_size, dim, indices, embeddings)
    semantics = SemanticGrid(indices, labels, vocab)
    return MapBundle(grid, semantics, map_id=map_id)


def random_bundle(rng: np.random.Generator, with_instances=True) -> MapBundle:
    """Small random bundle for round-trip and footprint checks."""
    n = int(rng.integers(0, 40))
    dim = int(rng.integers(1, 9))
    label_count = int(rng.integers(1, 5))
    coords = rng.integers(-20, 20, size=(n, 3))
    coords = np.unique(coords, axis=0)
    n = len(coords)
    vectors = rng.standard_normal((n, dim)).astype(np.float32)
    cell = float(rng.choice([0.02, 0.05, 0.1]))
    grid = EmbeddingGrid(cell, dim, coords, vectors)
    semantics = None
    instances = None
    if rng.random() < 0.8:
        names = [f"label{i}" for i in range(label_count)]
        labels = rng.integers(0, label_count, size=n)
        semantics = SemanticGrid(coords, labels, LabelVocabulary(names))
        if with_instances and rng.random() < 0.7 and n > 0:
            from lsmeval.instances import grow_instances

            instances = grow_instances(semantics)
    return MapBundle(grid, semantics, instances, map_id=f"rand{rng.integers(1e6)}")


def bundles_equal(a: MapBundle, b: MapBundle) -> bool:
    if len(a) != len(b) or a.dim != b.dim:
        return False
    if not np.isclose(a.cell_size, b.cell_size):
        return False
    if not np.array_equal(a.embeddings.indices, b.embeddings.indices):
        return False
    if not np.array_equal(a.embeddings.vectors, b.embeddings.vectors):
        return False
    if (a.semantics is None) != (b.semantics is None):
        return False
    if a.semantics is not None:
        if a.semantics.vocabulary.labels != b.semantics.vocabulary.labels:
            return False
        if not np.array_equal(a.semantics.labels, b.semantics.labels):
            return False
    if (a.instances is None) != (b.instances is None):
        return False
    if a.instances is not None and not np.array_equal(a.instances.ids, b.instances.ids):
        return False
    return True


# --- oracles ----------------------------------------------------------------


def confusion_oracle(universe, pred_set, truth_set):
    """Per-voxel confusion enumeration over the explicit universe."""
    tp = fp = fn = 0
    for voxel in universe:
        p = voxel in pred_set
        t = voxel in truth_set
        if p and t:
            tp += 1
        elif p:
            fp += 1
        elif t:
            fn += 1
    return tp, fp, fn


def bfs_components_oracle(label_cells: dict, connectivity=6) -> dict:
    """Connected components of equal-label voxels via breadth-first search.

    Returns voxel -> component id, numbered in first-seen order over the
    (x, y, z)-sorted voxel list.
    """
    if connectivity == 6:
        offsets = [
            (1, 0, 0),
            (-1, 0, 0),
            (0, 1, 0),
            (0, -1, 0),
            (0, 0, 1),
            (0, 0, -1),
        ]
    else:
        offsets = [
            (dx, dy, dz)
            for dx in (-1, 0, 1)
            for dy in (-1, 0, 1)
            for dz in (-1, 0, 1)
            if (dx, dy, dz) != (0, 0, 0)
        ]
    assignment = {}
    next_id = 0
    for start in sorted(label_cells):
        if start in assignment:
            continue
        label = label_cells[start]
        queue = deque([start])
        assignment[start] = next_id
        while queue:
            x, y, z = queue.popleft()
            for dx, dy, dz in offsets:
                nbr = (x + dx, y + dy, z + dz)
                if (
                    nbr in label_cells
                    and nbr not in assignment
                    and label_cells[nbr] == label
                ):
                    assignment[nbr] = next_id
                    queue.append(nbr)
        next_id += 1
    return assignment


def naive_dilate(dense: np.ndarray) -> np.ndarray:
    out = np.zeros_like(dense)
    sx, sy, sz = dense.shape
    for x in range(sx):
        for y in range(sy):
            for z in range(sz):
                if not dense[x, y, z]:
                    continue
                for dx in (-1, 0, 1):
                    for dy in (-1, 0, 1):
                        for dz in (-1, 0, 1):
                            nx, ny, nz = x + dx, y + dy, z + dz
                            if 0 <= nx < sx and 0 <= ny < sy and 0 <= nz < sz:
                                out[nx, ny, nz] = True
    return out


def naive_erode(dense: np.ndarray) -> np.ndarray:
    out = np.zeros_like(dense)
    sx, sy, sz = dense.shape
    for x in range(sx):
        for y in range(sy):
            for z in range(sz):
                keep = True
                for dx in (-1, 0, 1):
                    for dy in (-1, 0, 1):
                        for dz in (-1, 0, 1):
                            nx, ny, nz = x + dx, y + dy, z + dz
                            if not (0 <= nx < sx and 0 <= ny < sy and 0 <= nz < sz):
                                keep = False  # outside counts as false
                            elif not dense[nx, ny, nz]:
                                keep = False
                out[x, y, z] = keep
    return out


def naive_blur(dense: np.ndarray, sigma: float) -> np.ndarray:
    """Direct 3D convolution with the product Gaussian kernel."""
    if sigma <= 0:
        return dense.astype(np.float64)
    radius = math.ceil(3.0 * sigma)
    axis = np.arange(-radius, radius + 1, dtype=np.float64)
    k1 = np.exp(-0.5 * (axis / sigma) ** 2)
    k1 /= k1.sum()
    kernel = k1[:, None, None] * k1[None, :, None] * k1[None, None, :]
    out = np.zeros(dense.shape, dtype=np.float64)
    sx, sy, sz = dense.shape
    field = dense.astype(np.float64)
    for x in range(sx):
        for y in range(sy):
            for z in range(sz):
                acc = 0.0
                for ix, dx in enumerate(range(-radius, radius + 1)):
                    for iy, dy in enumerate(range(-radius, radius + 1)):
                        for iz, dz in enumerate(range(-radius, radius + 1)):
                            nx, ny, nz = x + dx, y + dy, z + dz
                            if 0 <= nx < sx and 0 <= ny < sy and 0 <= nz < sz:
                                acc += field[nx, ny, nz] * kernel[ix, iy, iz]
                out[x, y, z] = acc
    return out


def deviation_oracle(samples) -> float:
    """Plain-loop average absolute cosine deviation from the mean vector."""
    samples = [np.asarray(s, dtype=np.float64) for s in samples]
    center = sum(samples) / len(samples)
    total = 0.0
    for s in samples:
        cos = float(s @ center / (np.linalg.norm(s) * np.linalg.norm(center)))
        total += abs(1.0 - cos)
    return total / len(samples)


def scalar_w2_oracle(mu1, var1, mu2, var2) -> float:
    """1-D closed form: (mu1-mu2)^2 + (sigma1-sigma2)^2."""
    return (mu1 - mu2) ** 2 + (math.sqrt(var1) - math.sqrt(var2)) ** 2


def denman_beavers_sqrt(matrix: np.ndarray, iters=60) -> np.ndarray:
    """Iterative matrix square root (needs a nonsingular input)."""
    x = matrix.astype(np.float64)
    y = np.eye(len(matrix))
    for _ in range(iters):
        x_next = 0.5 * (x + np.linalg.inv(y))
        y_next = 0.5 * (y + np.linalg.inv(x))
        x, y = x_next, y_next
    return x


def w2_denman_beavers_oracle(mu1, cov1, mu2, cov2) -> float:
    root2 = denman_beavers_sqrt(cov2)
    cross = denman_beavers_sqrt(root2 @ cov1 @ root2)
    delta = np.asarray(mu1, dtype=np.float64) - np.asarray(mu2, dtype=np.float64)
    return float(
        delta @ delta + np.trace(cov1) + np.trace(cov2) - 2.0 * np.trace(cross)
    )


def random_psd(rng: np.random.Generator, dim: int, min_eig=0.0) -> np.ndarray:
    basis = rng.standard_normal((dim, dim))
    cov = basis @ basis.T / dim
    return cov + min_eig * np.eye(dim)


def random_mask_flags(rng: np.random.Generator, n: int, density=0.5) -> np.ndarray:
    return rng.random(n) < density


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
