"""Evaluation protocol orchestration and report emission.

Runners load map archives, execute the queryability / distinctness /
resolution-sweep protocols, and assemble JSON-ready reports whose bytes
are deterministic for identical configs, inputs, and seeds regardless of
worker count.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .archive import QueryLexicon, load_lexicon, read_map_archive
from .errors import ValidationError
from .grid import MapBundle, footprint_bytes, l2_normalize, norm_stats, regrid
from .metrics import (
    BinaryMetrics,
    IntraRecord,
    SampleSet,
    aggregate_queryability,
    binary_metrics,
    inter_map_distances,
    intra_map_ratio,
    kruskal_wallis,
    median_ratio,
    stratified_subsample,
)
from .morphology import BinaryMask
from .query import (
    PostProcessParams,
    mask_from_labels,
    prompt_average,
    segmentation_assign,
    vlmaps_binary_query,
)

MODES = ("vlmaps", "segmentation")


@dataclass(frozen=True)
class EvalConfig:
    map_paths: Tuple[str, ...] = ()
    lexicon_path: Optional[str] = None
    mode: str = "vlmaps"
    params: PostProcessParams = PostProcessParams()
    prompt_templates: Optional[Tuple[str, ...]] = None
    negative_key: str = "other"
    subsample_ratio: float = 0.1
    seed: int = 0
    resolutions: Tuple[float, ...] = (0.02, 0.05, 0.1, 0.2)
    normalize: bool = False
    same_map_negatives: bool = False
    n_min: int = 20
    workers: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0.0 < self.subsample_ratio <= 1.0:
            raise ValidationError("subsample ratio must lie in (0, 1]")
        if list(self.resolutions) != sorted(self.resolutions):
            raise ValidationError("resolution ladder must be ascending")
        if self.workers < 1:
            raise ValidationError("workers must be >= 1")

    def echo(self) -> dict:
        fields = asdict(self)
        # execution knob, not an evaluation parameter: reports stay
        # byte-identical across worker counts
        fields.pop("workers")
        return _plain(fields)


@dataclass
class Report:
    kind: str
    config: dict
    tool_version: str = __version__
    queryability: Optional[dict] = None
    distinctness: Optional[dict] = None
    norms: Optional[dict] = None
    footprints: Optional[list] = None
    resolutions: Optional[list] = None

    def to_json_dict(self) -> dict:
        doc = {
            "schema_version": 1,
            "tool_version": self.tool_version,
            "kind": self.kind,
            "config": self.config,
        }
        for name in ("queryability", "distinctness", "norms", "footprints", "resolutions"):
            value = getattr(self, name)
            if value is not None:
                doc[name] = value
        return doc


def _plain(value):
    """Recursively convert numpy scalars/arrays to JSON-ready Python types."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    return value


def load_bundles(config: EvalConfig) -> List[MapBundle]:
    if not config.map_paths:
        raise ValidationError("no map archives configured")
    bundles = [read_map_archive(path) for path in config.map_paths]
    return sorted(bundles, key=lambda b: b.map_id)


def resolve_term(
    lexicon: QueryLexicon,
    term: str,
    templates: Optional[Sequence[str]] = None,
) -> np.ndarray:
    """Lexicon embedding of a term, prompt-averaged when templates are set.

    Each template contains a ``{}`` placeholder; the templated phrases must
    all be present in the lexicon (the toolkit never runs an encoder).
    """
    if not templates:
        return lexicon[term]
    phrases = [t.replace("{}", term) for t in templates]
    return prompt_average([lexicon[p] for p in phrases])


def truth_mask(bundle: MapBundle, label_id: int) -> BinaryMask:
    sem = bundle.semantics
    if sem is None:
        raise ValidationError(f"map {bundle.map_id!r} carries no semantics")
    return BinaryMask(bundle.embeddings.indices, sem.labels == label_id)


def prediction_mask(
    bundle: MapBundle,
    lexicon: QueryLexicon,
    query: str,
    mode: str,
    params: PostProcessParams,
    templates: Optional[Sequence[str]] = None,
    negative_key: str = "other",
    assignment=None,
) -> BinaryMask:
    """Query mask via the configured mode; shared by CLI and server paths."""
    if mode == "segmentation":
        sem = bundle.semantics
        if sem is None:
            raise ValidationError("segmentation mode needs map semantics")
        if assignment is None:
            assignment = segmentation_assignment(bundle, lexicon, templates)
        return mask_from_labels(assignment, sem.vocabulary.id_of(query))
    q = resolve_term(lexicon, query, templates)
    other = resolve_term(lexicon, negative_key, templates)
    return vlmaps_binary_query(bundle.embeddings, q, other, params)


def segmentation_assignment(bundle, lexicon, templates=None):
    sem = bundle.semantics
    if sem is None:
        raise ValidationError("segmentation mode needs map semantics")
    label_embeddings = [
        resolve_term(lexicon, name, templates) for name in sem.vocabulary.labels
    ]
    return segmentation_assign(bundle.embeddings, label_embeddings)


def _metrics_row(map_id: str, query: str, label_id: int, pred, truth) -> dict:
    m = binary_metrics(pred, truth)
    return {
        "map_id": map_id,
        "query": query,
        "label_id": label_id,
        "truth_count": truth.count,
        "pred_count": pred.count,
        "truth_empty": truth.count == 0,
        **m.as_dict(),
    }


def _row_metrics(row: dict) -> BinaryMetrics:
    return BinaryMetrics(
        tp=row["tp"],
        fp=row["fp"],
        fn=row["fn"],
        precision=row["precision"],
        recall=row["recall"],
        f1=row["f1"],
        iou=row["iou"],
        degenerate=tuple(row["degenerate"]),
    )


def _queryability_section(
    bundles: Sequence[MapBundle],
    lexicon: QueryLexicon,
    config: EvalConfig,
) -> dict:
    tasks = []
    assignments: Dict[str, object] = {}
    for bundle in bundles:
        if bundle.semantics is None:
            raise ValidationError(f"map {bundle.map_id!r} carries no semantics")
        for name in bundle.semantics.vocabulary.labels:
            if name not in lexicon:
                raise ValidationError(
                    f"lexicon cannot resolve vocabulary label {name!r} "
                    f"of map {bundle.map_id!r}"
                )
        if config.mode == "segmentation":
            assignments[bundle.map_id] = segmentation_assignment(
                bundle, lexicon, config.prompt_templates
            )
        for label_id, name in enumerate(bundle.semantics.vocabulary.labels):
            tasks.append((bundle, label_id, name))

    def run(task):
        bundle, label_id, name = task
        pred = prediction_mask(
            bundle,
            lexicon,
            name,
            config.mode,
            config.params,
            config.prompt_templates,
            config.negative_key,
            assignment=assignments.get(bundle.map_id),
        )
        return _metrics_row(bundle.map_id, name, label_id, pred, truth_mask(bundle, label_id))

    if config.workers == 1:
        rows = [run(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            rows = list(pool.map(run, tasks))
    rows.sort(key=lambda r: (r["map_id"], r["query"]))
    records = [
        (r["map_id"], r["query"], _row_metrics(r), r["truth_empty"]) for r in rows
    ]
    summary = aggregate_queryability(records)
    return _plain({"rows": rows, "macro": summary["macro"], "micro": summary["micro"]})


def run_queryability(
    config: EvalConfig,
    bundles: Optional[Sequence[MapBundle]] = None,
    lexicon: Optional[QueryLexicon] = None,
) -> Report:
    """Per-(map, query) binary metrics plus macro/micro summaries."""
    if bundles is None:
        bundles = load_bundles(config)
    if lexicon is None:
        if config.lexicon_path is None:
            raise ValidationError("queryability needs a lexicon")
        lexicon = load_lexicon(config.lexicon_path)
    section = _queryability_section(bundles, lexicon, config)
    norms = {b.map_id: norm_stats(b.embeddings) for b in bundles if len(b) > 0}
    return Report(
        kind="queryability",
        config=config.echo(),
        queryability=section,
        norms=_plain(norms),
    )


def _intra_rows(records: Sequence[IntraRecord]) -> list:
    rows = [
        {
            "map_id": r.map_id,
            "label_id": r.label_id,
            "d_label": r.d_label,
            "d_map": r.d_map,
            "ratio": r.ratio,
        }
        for r in records
    ]
    rows.sort(key=lambda r: (r["map_id"], r["label_id"]))
    return rows


def run_distinctness(
    config: EvalConfig,
    bundles: Optional[Sequence[MapBundle]] = None,
) -> Report:
    """Intra-map ratios and cross-map Wasserstein distinctness tables."""
    if bundles is None:
        bundles = load_bundles(config)
    if not bundles:
        raise ValidationError("distinctness needs at least one map")

    intra_records: List[IntraRecord] = []
    label_sets: List[SampleSet] = []
    norms = {}
    label_names: Dict[int, str] = {}
    for bundle in sorted(bundles, key=lambda b: b.map_id):
        if bundle.semantics is None:
            raise ValidationError(f"map {bundle.map_id!r} carries no semantics")
        embeddings = bundle.embeddings
        if config.normalize:
            embeddings = l2_normalize(embeddings)
        norms[bundle.map_id] = norm_stats(bundle.embeddings)
        per_label, map_level = stratified_subsample(
            bundle.semantics,
            embeddings,
            config.subsample_ratio,
            config.seed,
            map_id=bundle.map_id,
        )
        for sample_set in per_label:
            label_names.setdefault(
                sample_set.label_id,
                bundle.semantics.vocabulary[sample_set.label_id],
            )
            intra_records.append(intra_map_ratio(sample_set, map_level))
        label_sets.extend(per_label)

    intra_rows = _intra_rows(intra_records)
    ratios = [r["ratio"] for r in intra_rows]
    intra_section = {
        "rows": intra_rows,
        "histogram": histogram_kde(ratios, bins=20) if ratios else None,
        "mean_ratio": float(np.mean(ratios)) if ratios else None,
    }

    map_ids = sorted({s.map_id for s in label_sets})
    if len(map_ids) < 2 and not config.same_map_negatives:
        inter_section = {
            "pairs": [],
            "skipped": [],
            "reason": "inter-map distinctness needs at least 2 maps",
        }
    else:
        result = inter_map_distances(
            label_sets,
            n_min=config.n_min,
            include_same_map=config.same_map_negatives,
        )
        pairs = [
            {
                "map_a": p.map_a,
                "label_a": p.label_a,
                "map_b": p.map_b,
                "label_b": p.label_b,
                "distance": p.distance,
                "matching": p.matching,
            }
            for p in result.pairs
        ]
        pairs.sort(key=lambda p: (p["map_a"], p["label_a"], p["map_b"], p["label_b"]))
        matching = result.matching_distances()
        non_matching = result.non_matching_distances()
        inter_section = {
            "pairs": pairs,
            "skipped": [
                {
                    "map_id": s.map_id,
                    "label_id": s.label_id,
                    "count": s.count,
                    "n_min": s.n_min,
                }
                for s in sorted(result.skipped, key=lambda s: (s.map_id, s.label_id))
            ],
            "median_matching": float(np.median(matching)) if matching else None,
            "median_non_matching": float(np.median(non_matching))
            if non_matching
            else None,
        }
        if matching and non_matching:
            ratio = median_ratio(result.pairs)
            inter_section["median_ratio"] = None if math.isinf(ratio) else ratio
            inter_section["median_ratio_infinite"] = math.isinf(ratio)
            inter_section["labels"] = _label_separability(
                result.pairs, label_names
            )

    return Report(
        kind="distinctness",
        config=config.echo(),
        distinctness=_plain({"intra": intra_section, "inter": inter_section}),
        norms=_plain(norms),
    )


def _label_separability(pairs, label_names: Dict[int, str]) -> list:
    """Per-label matching/non-matching box stats ordered by KW statistic."""
    by_label: Dict[int, dict] = {}
    for p in pairs:
        for label_id in {p.label_a, p.label_b} if not p.matching else {p.label_a}:
            entry = by_label.setdefault(label_id, {"matching": [], "non_matching": []})
            entry["matching" if p.matching else "non_matching"].append(p.distance)
    rows = []
    for label_id in sorted(by_label):
        entry = by_label[label_id]
        if not entry["matching"] or not entry["non_matching"]:
            continue
        rows.append(
            {
                "label_id": label_id,
                "label": label_names.get(label_id, str(label_id)),
                "kw_h": kruskal_wallis(entry["matching"], entry["non_matching"]),
                "matching_count": len(entry["matching"]),
                "non_matching_count": len(entry["non_matching"]),
                "matching_box": box_stats(entry["matching"]),
                "non_matching_box": box_stats(entry["non_matching"]),
            }
        )
    rows.sort(key=lambda r: (-r["kw_h"], r["label_id"]))
    return rows


def run_resolution_sweep(
    config: EvalConfig,
    bundles: Optional[Sequence[MapBundle]] = None,
    lexicon: Optional[QueryLexicon] = None,
) -> Report:
    """Regrid to each ladder resolution and evaluate footprint + queryability."""
    if bundles is None:
        bundles = load_bundles(config)
    if lexicon is None:
        if config.lexicon_path is None:
            raise ValidationError("resolution sweep needs a lexicon")
        lexicon = load_lexicon(config.lexicon_path)
    if not config.resolutions:
        raise ValidationError("resolution ladder must not be empty")

    sections = []
    for resolution in config.resolutions:
        regridded = sorted(
            (regrid(b, resolution) for b in bundles), key=lambda b: b.map_id
        )
        footprints = [
            {
                "map_id": b.map_id,
                "voxel_count": len(b),
                "bytes": footprint_bytes(b),
            }
            for b in regridded
        ]
        sections.append(
            {
                "resolution": float(resolution),
                "footprints": footprints,
                "queryability": _queryability_section(regridded, lexicon, config),
            }
        )
    return Report(kind="sweep", config=config.echo(), resolutions=_plain(sections))


def report_json_bytes(report: Report) -> bytes:
    text = json.dumps(
        report.to_json_dict(), indent=2, sort_keys=True, allow_nan=False
    )
    return (text + "\n").encode("utf-8")


def _csv_bytes(rows: Sequence[dict], columns: Sequence[str]) -> bytes:
    buffer = io.StringIO(newline="")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_csv_cell(row.get(c)) for c in columns])
    return buffer.getvalue().encode("utf-8")


def _csv_cell(value):
    if isinstance(value, (list, tuple)):
        return ";".join(str(v) for v in value)
    if isinstance(value, bool):
        return str(value).lower()
    if value is None:
        return ""
    return value


QUERYABILITY_COLUMNS = (
    "map_id",
    "query",
    "label_id",
    "truth_count",
    "pred_count",
    "truth_empty",
    "tp",
    "fp",
    "fn",
    "precision",
    "recall",
    "f1",
    "iou",
    "degenerate",
)
INTRA_COLUMNS = ("map_id", "label_id", "d_label", "d_map", "ratio")
PAIR_COLUMNS = ("map_a", "label_a", "map_b", "label_b", "distance", "matching")
FOOTPRINT_COLUMNS = ("resolution", "map_id", "voxel_count", "bytes")


def emit_report(report: Report, out_path, format: str = "json") -> List[Path]:
    """Write the report; returns the paths written.

    JSON emits a single deterministic document. CSV emits one file per
    table into a directory named by out_path.
    """
    out_path = Path(out_path)
    if format == "json":
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_bytes(report_json_bytes(report))
        return [out_path]
    if format != "csv":
        raise ValidationError(f"unknown report format {format!r}")

    out_path.mkdir(parents=True, exist_ok=True)
    written = []

    def table(name: str, rows, columns):
        target = out_path / f"{name}.csv"
        target.write_bytes(_csv_bytes(rows, columns))
        written.append(target)

    if report.queryability is not None:
        table("queryability", report.queryability["rows"], QUERYABILITY_COLUMNS)
    if report.distinctness is not None:
        table("intra", report.distinctness["intra"]["rows"], INTRA_COLUMNS)
        table("pairs", report.distinctness["inter"]["pairs"], PAIR_COLUMNS)
    if report.resolutions is not None:
        sweep_rows = []
        footprint_rows = []
        for section in report.resolutions:
            for row in section["queryability"]["rows"]:
                sweep_rows.append({"resolution": section["resolution"], **row})
            for row in section["footprints"]:
                footprint_rows.append({"resolution": section["resolution"], **row})
        table("sweep", sweep_rows, ("resolution",) + QUERYABILITY_COLUMNS)
        table("footprints", footprint_rows, FOOTPRINT_COLUMNS)
    return written


def histogram_kde(values: Sequence[float], bins: int, bandwidth: Optional[float] = None) -> dict:
    """Equal-width histogram plus a Gaussian KDE sampled at 256 points.

    Default bandwidth is Scott's rule, sigma_hat * n^(-1/5).
    """
    data = np.asarray(values, dtype=np.float64)
    if data.size == 0:
        raise ValidationError("histogram needs at least one value")
    if bins < 1:
        raise ValidationError("bins must be >= 1")
    lo, hi = float(data.min()), float(data.max())
    if lo == hi:
        edges = np.linspace(lo - 0.5, hi + 0.5, bins + 1)
    else:
        edges = np.linspace(lo, hi, bins + 1)
    counts, _ = np.histogram(data, bins=edges)

    n = data.size
    if bandwidth is None:
        sigma = float(data.std(ddof=1)) if n > 1 else 0.0
        bandwidth = sigma * n ** (-1.0 / 5.0)
    if bandwidth <= 0:
        bandwidth = 1e-9 * max(1.0, abs(hi))
    grid = np.linspace(lo - 4.0 * bandwidth, hi + 4.0 * bandwidth, 256)
    deltas = (grid[:, None] - data[None, :]) / bandwidth
    density = np.exp(-0.5 * deltas**2).sum(axis=1) / (
        n * bandwidth * math.sqrt(2.0 * math.pi)
    )
    return _plain(
        {
            "bin_edges": edges,
            "counts": counts,
            "curve_x": grid,
            "curve_density": density,
            "bandwidth": float(bandwidth),
        }
    )


def box_stats(values: Sequence[float]) -> dict:
    """Quartiles (midpoint interpolation) with 1.5 IQR whiskers clipped to data."""
    data = np.asarray(values, dtype=np.float64)
    if data.size == 0:
        raise ValidationError("box stats need at least one value")
    q1, median, q3 = (
        float(v) for v in np.percentile(data, [25, 50, 75], method="midpoint")
    )
    iqr = q3 - q1
    lo_limit = q1 - 1.5 * iqr
    hi_limit = q3 + 1.5 * iqr
    inside = data[(data >= lo_limit) & (data <= hi_limit)]
    return {
        "median": median,
        "q1": q1,
        "q3": q3,
        "whisker_lo": float(inside.min()),
        "whisker_hi": float(inside.max()),
        "outlier_count": int(data.size - inside.size),
    }
