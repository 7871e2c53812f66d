"""Queryability and distinctness metrics.

Queryability: binary-classification quality of query masks against ground
truth, with macro and micro aggregation. Distinctness: average absolute
cosine deviation ratios within a map, and closed-form Wasserstein
2-distances between Gaussian summaries of per-label embedding populations
across maps, plus the supporting statistics (median ratios,
Kruskal-Wallis ordering).
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import rankdata

from .errors import NumericalError, TooFewSamplesError, ValidationError
from .grid import EmbeddingGrid, SemanticGrid
from .morphology import BinaryMask, require_same_universe

DEFAULT_N_MIN = 20
DEFAULT_DIAGONAL_LOADING = 1e-10


@dataclass(frozen=True)
class BinaryMetrics:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float
    iou: float
    degenerate: Tuple[str, ...] = ()

    def as_dict(self) -> dict:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "iou": self.iou,
            "degenerate": list(self.degenerate),
        }


def _safe_ratio(num: float, den: float, name: str, degenerate: list) -> float:
    if den == 0:
        degenerate.append(name)
        return 0.0
    return num / den


def metrics_from_counts(tp: int, fp: int, fn: int) -> BinaryMetrics:
    degenerate: list = []
    precision = _safe_ratio(tp, tp + fp, "precision", degenerate)
    recall = _safe_ratio(tp, tp + fn, "recall", degenerate)
    f1 = _safe_ratio(2 * precision * recall, precision + recall, "f1", degenerate)
    iou = _safe_ratio(tp, tp + fp + fn, "iou", degenerate)
    return BinaryMetrics(
        tp=int(tp),
        fp=int(fp),
        fn=int(fn),
        precision=precision,
        recall=recall,
        f1=f1,
        iou=iou,
        degenerate=tuple(degenerate),
    )


def binary_metrics(pred: BinaryMask, truth: BinaryMask) -> BinaryMetrics:
    """Confusion counts and derived scores of a prediction mask."""
    require_same_universe(pred, truth)
    tp = int(np.count_nonzero(pred.flags & truth.flags))
    fp = int(np.count_nonzero(pred.flags & ~truth.flags))
    fn = int(np.count_nonzero(~pred.flags & truth.flags))
    return metrics_from_counts(tp, fp, fn)


def aggregate_queryability(records: Sequence[Tuple[str, str, BinaryMetrics, bool]]) -> dict:
    """Macro and micro summaries over (map, query, metrics, truth_empty) rows.

    Macro averages each metric over rows whose ground truth is non-empty;
    micro pools confusion counts over every row.
    """
    if len(records) == 0:
        raise ValidationError("cannot aggregate an empty record set")
    macro_rows = [m for _, _, m, truth_empty in records if not truth_empty]
    macro = {"count": len(macro_rows), "degenerate": len(macro_rows) == 0}
    for name in ("precision", "recall", "f1", "iou"):
        values = [getattr(m, name) for m in macro_rows]
        macro[name] = float(np.mean(values)) if values else 0.0

    tp = sum(m.tp for _, _, m, _ in records)
    fp = sum(m.fp for _, _, m, _ in records)
    fn = sum(m.fn for _, _, m, _ in records)
    pooled = metrics_from_counts(tp, fp, fn)
    micro = {
        "count": len(records),
        "degenerate": len(pooled.degenerate) > 0,
        "precision": pooled.precision,
        "recall": pooled.recall,
        "f1": pooled.f1,
        "iou": pooled.iou,
        "tp": tp,
        "fp": fp,
        "fn": fn,
    }
    return {"macro": macro, "micro": micro}


@dataclass(frozen=True, eq=False)
class SampleSet:
    map_id: str
    label_id: Optional[int]  # None marks the map-wide set
    samples: np.ndarray  # (n, D) float64

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 2:
            raise ValidationError("samples must be a 2-D array")
        if not np.isfinite(samples).all():
            raise ValidationError("samples must be finite")
        object.__setattr__(self, "samples", samples)

    @property
    def count(self) -> int:
        return len(self.samples)

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    def normalized(self) -> "SampleSet":
        norms = np.linalg.norm(self.samples, axis=1)
        if (norms == 0).any():
            raise ValidationError("cannot normalize zero-norm sample")
        return SampleSet(self.map_id, self.label_id, self.samples / norms[:, None])


def _per_label_rng(seed: int, map_id: str, label_id: int) -> np.random.Generator:
    digest = hashlib.sha256(map_id.encode("utf-8")).digest()
    map_hash = int.from_bytes(digest[:8], "big")
    return np.random.default_rng(np.random.SeedSequence([seed, label_id, map_hash]))


def subsample_count(population: int, ratio: float) -> int:
    # round half up so a 0.1 ratio of 100 voxels is exactly 10
    return max(1, min(population, math.floor(population * ratio + 0.5)))


def stratified_subsample(
    semantics: SemanticGrid,
    embeddings: EmbeddingGrid,
    ratio: float,
    seed: int,
    map_id: Optional[str] = None,
) -> Tuple[List[SampleSet], SampleSet]:
    """Per-label uniform subsamples preserving the label distribution.

    Each label draws max(1, round(ratio * n)) voxels without replacement
    from its own generator, seeded by (seed, map id, label id) so results
    never depend on worker scheduling. The map-level set is the union of
    the per-label samples.
    """
    if not 0.0 < ratio <= 1.0:
        raise ValidationError(f"subsample ratio must lie in (0, 1], got {ratio}")
    if not semantics.same_keys(embeddings):
        raise ValidationError("semantic and embedding grids must share voxels")
    if map_id is None:
        map_id = ""
    per_label: List[SampleSet] = []
    union_blocks = []
    for label_id in range(len(semantics.vocabulary)):
        rows = np.flatnonzero(semantics.labels == label_id)
        if len(rows) == 0:
            continue
        take = subsample_count(len(rows), ratio)
        rng = _per_label_rng(seed, map_id, label_id)
        chosen = np.sort(rng.choice(len(rows), size=take, replace=False))
        samples = embeddings.vectors[rows[chosen]].astype(np.float64)
        per_label.append(SampleSet(map_id, label_id, samples))
        union_blocks.append(samples)
    map_level = SampleSet(
        map_id,
        None,
        np.concatenate(union_blocks, axis=0)
        if union_blocks
        else np.zeros((0, embeddings.dim)),
    )
    return per_label, map_level


def avg_abs_deviation(samples: SampleSet) -> float:
    """Mean absolute cosine distance of the samples to their mean vector."""
    if samples.count == 0:
        raise ValidationError("average absolute deviation needs samples")
    center = samples.samples.mean(axis=0)
    center_norm = np.linalg.norm(center)
    if center_norm == 0.0:
        raise ValidationError("sample mean is the zero vector")
    norms = np.linalg.norm(samples.samples, axis=1)
    if (norms == 0).any():
        raise ValidationError("zero-norm sample has no cosine deviation")
    cosines = np.clip(
        (samples.samples @ center) / (norms * center_norm), -1.0, 1.0
    )
    return float(np.abs(1.0 - cosines).mean())


@dataclass(frozen=True)
class IntraRecord:
    map_id: str
    label_id: int
    d_label: float
    d_map: float
    ratio: float


def intra_map_ratio(label_set: SampleSet, map_set: SampleSet) -> IntraRecord:
    """Label deviation over map-wide deviation; lower means more distinct."""
    d_label = avg_abs_deviation(label_set)
    d_map = avg_abs_deviation(map_set)
    if d_map == 0.0:
        raise ValidationError(
            f"map {map_set.map_id!r} has zero map-wide deviation; ratio undefined"
        )
    if label_set.label_id is None:
        raise ValidationError("intra-map ratio needs a per-label sample set")
    return IntraRecord(
        map_id=label_set.map_id,
        label_id=label_set.label_id,
        d_label=d_label,
        d_map=d_map,
        ratio=d_label / d_map,
    )


@dataclass(frozen=True, eq=False)
class GaussianSummary:
    mean: np.ndarray  # (D,)
    cov: np.ndarray  # (D, D) symmetric PSD
    count: int

    @property
    def dim(self) -> int:
        return len(self.mean)


def _psd_project(matrix: np.ndarray, loading: float) -> np.ndarray:
    sym = 0.5 * (matrix + matrix.T)
    eigvals, eigvecs = np.linalg.eigh(sym)
    eigvals = np.clip(eigvals, 0.0, None)
    projected = (eigvecs * eigvals) @ eigvecs.T
    projected = 0.5 * (projected + projected.T)
    if loading > 0:
        projected = projected + loading * np.eye(len(projected))
    return projected


def gaussian_summary(
    samples: SampleSet,
    n_min: int = DEFAULT_N_MIN,
    diagonal_loading: float = DEFAULT_DIAGONAL_LOADING,
) -> GaussianSummary:
    """Mean and population covariance of a sample set, projected to PSD.

    Raises TooFewSamplesError below n_min so pipelines can record the skip.
    """
    if samples.count < n_min:
        raise TooFewSamplesError(
            samples.map_id, samples.label_id, samples.count, n_min
        )
    mean = samples.samples.mean(axis=0)
    centered = samples.samples - mean
    cov = (centered.T @ centered) / samples.count  # population divisor n
    cov = _psd_project(cov, diagonal_loading)
    return GaussianSummary(mean=mean, cov=cov, count=samples.count)


def _sqrtm_psd(matrix: np.ndarray) -> np.ndarray:
    eigvals, eigvecs = np.linalg.eigh(0.5 * (matrix + matrix.T))
    eigvals = np.clip(eigvals, 0.0, None)
    root = (eigvecs * np.sqrt(eigvals)) @ eigvecs.T
    return 0.5 * (root + root.T)


def wasserstein2(g1: GaussianSummary, g2: GaussianSummary) -> float:
    """Closed-form squared Wasserstein-2 distance between Gaussian summaries.

    ||mu1 - mu2||^2 + tr(P1 + P2 - 2 (P2^1/2 P1 P2^1/2)^1/2), with the inner
    square roots taken through symmetric eigendecompositions whose
    eigenvalues are clamped at zero.
    """
    if g1.dim != g2.dim:
        raise ValidationError(f"dimension mismatch: {g1.dim} vs {g2.dim}")
    delta = g1.mean - g2.mean
    root2 = _sqrtm_psd(g2.cov)
    cross = _sqrtm_psd(root2 @ g1.cov @ root2)
    value = float(delta @ delta + np.trace(g1.cov) + np.trace(g2.cov) - 2.0 * np.trace(cross))
    if not math.isfinite(value):
        raise NumericalError("Wasserstein distance evaluated to a non-finite value")
    return max(value, 0.0)


@dataclass(frozen=True)
class DistinctnessPair:
    map_a: str
    label_a: int
    map_b: str
    label_b: int
    distance: float
    matching: bool


@dataclass(frozen=True)
class SkippedSampleSet:
    map_id: str
    label_id: int
    count: int
    n_min: int


@dataclass
class InterMapResult:
    pairs: List[DistinctnessPair] = field(default_factory=list)
    skipped: List[SkippedSampleSet] = field(default_factory=list)

    def matching_distances(self) -> List[float]:
        return [p.distance for p in self.pairs if p.matching]

    def non_matching_distances(self) -> List[float]:
        return [p.distance for p in self.pairs if not p.matching]


def inter_map_distances(
    sample_sets: Iterable[SampleSet],
    n_min: int = DEFAULT_N_MIN,
    diagonal_loading: float = DEFAULT_DIAGONAL_LOADING,
    include_same_map: bool = False,
) -> InterMapResult:
    """Wasserstein-2 distances between per-(map, label) populations.

    By default only cross-map pairs are formed; include_same_map adds
    same-map different-label pairs. Sets below n_min are skipped and
    recorded.
    """
    sets = list(sample_sets)
    map_ids = sorted({s.map_id for s in sets})
    if len(map_ids) < 2 and not include_same_map:
        raise ValidationError("inter-map distances need sample sets from >= 2 maps")

    result = InterMapResult()
    summaries = []
    for s in sorted(sets, key=lambda s: (s.map_id, s.label_id)):
        if s.label_id is None:
            raise ValidationError("inter-map distances take per-label sample sets")
        try:
            summaries.append((s, gaussian_summary(s, n_min, diagonal_loading)))
        except TooFewSamplesError as skip:
            result.skipped.append(
                SkippedSampleSet(skip.map_id, skip.label_id, skip.count, skip.n_min)
            )

    for i in range(len(summaries)):
        set_a, g_a = summaries[i]
        for j in range(i + 1, len(summaries)):
            set_b, g_b = summaries[j]
            if set_a.map_id == set_b.map_id:
                if not include_same_map or set_a.label_id == set_b.label_id:
                    continue
            result.pairs.append(
                DistinctnessPair(
                    map_a=set_a.map_id,
                    label_a=set_a.label_id,
                    map_b=set_b.map_id,
                    label_b=set_b.label_id,
                    distance=wasserstein2(g_a, g_b),
                    matching=set_a.label_id == set_b.label_id,
                )
            )
    return result


def median_ratio(pairs: Sequence[DistinctnessPair]) -> float:
    """median(non-matching) / median(matching); +inf when matching is 0."""
    matching = [p.distance for p in pairs if p.matching]
    non_matching = [p.distance for p in pairs if not p.matching]
    if not matching or not non_matching:
        raise ValidationError(
            "median ratio needs both matching and non-matching pairs"
        )
    med_match = float(np.median(matching))
    med_non = float(np.median(non_matching))
    if med_match == 0.0:
        return math.inf
    return med_non / med_match


def kruskal_wallis(group_a: Sequence[float], group_b: Sequence[float]) -> float:
    """Two-group Kruskal-Wallis H with mid-rank ties and tie correction.

    A pooled sample with every value identical yields H = 0.
    """
    a = np.asarray(group_a, dtype=np.float64)
    b = np.asarray(group_b, dtype=np.float64)
    if len(a) == 0 or len(b) == 0:
        raise ValidationError("both groups must be non-empty")
    pooled = np.concatenate([a, b])
    n = len(pooled)
    ranks = rankdata(pooled)
    r_a = ranks[: len(a)].sum()
    r_b = ranks[len(a):].sum()
    h = 12.0 / (n * (n + 1)) * (r_a**2 / len(a) + r_b**2 / len(b)) - 3.0 * (n + 1)
    _, counts = np.unique(pooled, return_counts=True)
    tie_term = float((counts.astype(np.float64) ** 3 - counts).sum())
    correction = 1.0 - tie_term / (n**3 - n)
    if correction <= 0.0:
        return 0.0
    return float(h / correction)
