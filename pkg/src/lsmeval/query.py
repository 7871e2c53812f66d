"""Open-vocabulary querying of embedding grids.

Implements cosine scoring, the VLMaps-style binary query (query vs
"other" followed by closing, blur, thresholding, and dilation) and the
semantic-segmentation assignment mode.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ValidationError
from .grid import EmbeddingGrid
from .morphology import BinaryMask, binary_closing, binary_dilation, gaussian_blur


@dataclass(frozen=True)
class PostProcessParams:
    """Knobs of the binary-query post-processing chain.

    All-zero parameters leave the raw mask untouched.
    """

    closing_iters: int = 1
    blur_sigma: float = 1.0
    threshold: float = 0.5
    dilation_iters: int = 1

    def __post_init__(self):
        if self.closing_iters < 0 or self.dilation_iters < 0:
            raise ValidationError("morphology iteration counts must be >= 0")
        if self.blur_sigma < 0:
            raise ValidationError("blur_sigma must be >= 0")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValidationError("threshold must lie in [0, 1]")

    @classmethod
    def raw(cls) -> "PostProcessParams":
        return cls(closing_iters=0, blur_sigma=0.0, threshold=0.0, dilation_iters=0)


class ScoreField:
    """Per-voxel similarity scores aligned with an embedding grid."""

    def __init__(self, universe: np.ndarray, scores: np.ndarray):
        scores = np.asarray(scores, dtype=np.float64)
        if scores.shape != (len(universe),):
            raise ValidationError("score field must align with its universe")
        scores.setflags(write=False)
        self.universe = universe
        self.scores = scores

    def stats(self) -> dict:
        if len(self.scores) == 0:
            return {"min": 0.0, "max": 0.0, "mean": 0.0}
        return {
            "min": float(self.scores.min()),
            "max": float(self.scores.max()),
            "mean": float(self.scores.mean()),
        }


class LabelField:
    """Per-voxel assigned label ids aligned with an embedding grid."""

    def __init__(self, universe: np.ndarray, labels: np.ndarray):
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape != (len(universe),):
            raise ValidationError("label field must align with its universe")
        labels.setflags(write=False)
        self.universe = universe
        self.labels = labels


def _check_query_vector(q, dim: int) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (dim,):
        raise ValidationError(f"query embedding has shape {q.shape}, expected ({dim},)")
    norm = np.linalg.norm(q)
    if norm == 0.0:
        raise ValidationError("query embedding must be non-zero")
    return q / norm


def cosine_similarity(a, b) -> float:
    """cos(a, b), clamped to [-1, 1] against rounding."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValidationError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValidationError("cosine similarity undefined for zero vectors")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def score_map(grid: EmbeddingGrid, q) -> ScoreField:
    """Cosine similarity of every map embedding to the query.

    Zero-norm map embeddings score -1 so they are never preferred.
    """
    unit_q = _check_query_vector(q, grid.dim)
    vectors = grid.vectors.astype(np.float64)
    norms = np.linalg.norm(vectors, axis=1)
    scores = np.full(len(grid), -1.0)
    occupied = norms > 0.0
    scores[occupied] = np.clip((vectors[occupied] @ unit_q) / norms[occupied], -1.0, 1.0)
    return ScoreField(grid.indices, scores)


def prompt_average(embeddings: Sequence) -> np.ndarray:
    """Component-wise mean of the embeddings, L2-normalized."""
    if len(embeddings) == 0:
        raise ValidationError("prompt_average needs at least one embedding")
    stack = np.asarray(embeddings, dtype=np.float64)
    if stack.ndim != 2:
        raise ValidationError("prompt embeddings must share a common dimension")
    mean = stack.mean(axis=0)
    norm = np.linalg.norm(mean)
    if norm == 0.0:
        raise ValidationError("prompt embeddings average to the zero vector")
    return mean / norm


def raw_binary_mask(grid: EmbeddingGrid, q, negatives) -> BinaryMask:
    """Voxels whose most similar query is q (ties count as positive)."""
    query_scores = score_map(grid, q).scores
    if isinstance(negatives, np.ndarray) and negatives.ndim == 1:
        negatives = [negatives]
    best_negative = np.full(len(grid), -np.inf)
    for negative in negatives:
        best_negative = np.maximum(best_negative, score_map(grid, negative).scores)
    return BinaryMask(grid.indices, query_scores >= best_negative)


def apply_post_processing(mask: BinaryMask, params: PostProcessParams) -> BinaryMask:
    """Closing, blur, thresholding, and dilation, in that order."""
    out = mask
    if params.closing_iters > 0:
        out = binary_closing(out, params.closing_iters)
    if params.blur_sigma > 0 or params.threshold > 0:
        blurred = gaussian_blur(out, params.blur_sigma)
        if params.threshold > 0:
            kept = blurred >= params.threshold
        else:
            # tau = 0 keeps the blurred support so that all-zero parameters
            # reproduce the raw mask instead of the whole universe
            kept = blurred > 0.0
        out = BinaryMask(out.universe, kept)
    if params.dilation_iters > 0:
        out = binary_dilation(out, params.dilation_iters)
    return out


def vlmaps_binary_query(
    grid: EmbeddingGrid,
    q,
    other,
    params: Optional[PostProcessParams] = None,
    extra_negatives: Sequence = (),
) -> BinaryMask:
    """Binary query against the "other" embedding with post-processing.

    extra_negatives extends the comparison set beyond the single "other"
    string; the default follows the original single-negative formulation.
    """
    if params is None:
        params = PostProcessParams()
    negatives = [other, *extra_negatives]
    raw = raw_binary_mask(grid, q, negatives)
    return apply_post_processing(raw, params)


def segmentation_assign(grid: EmbeddingGrid, label_embeddings: Sequence) -> LabelField:
    """Assign each voxel the label with the highest cosine similarity.

    Ties resolve to the lowest label id; zero-norm map embeddings score -1
    against every label and therefore land on label 0.
    """
    if len(label_embeddings) == 0:
        raise ValidationError("segmentation needs at least one label embedding")
    units = np.stack(
        [_check_query_vector(e, grid.dim) for e in label_embeddings], axis=0
    )
    vectors = grid.vectors.astype(np.float64)
    norms = np.linalg.norm(vectors, axis=1)
    scores = np.full((len(grid), len(label_embeddings)), -1.0)
    occupied = norms > 0.0
    scores[occupied] = np.clip((vectors[occupied] @ units.T) / norms[occupied, None], -1.0, 1.0)
    # argmax returns the first maximum, which is the lowest label id
    return LabelField(grid.indices, scores.argmax(axis=1))


def mask_from_labels(field: LabelField, label_id: int) -> BinaryMask:
    """Positives are the voxels assigned the given label."""
    if label_id < 0:
        raise ValidationError("label id must be non-negative")
    return BinaryMask(field.universe, field.labels == int(label_id))
