"""Read-only HTTP service exposing loaded maps and live query execution.

Maps are loaded once at startup into immutable shared state. Every
endpoint is side-effect free, and query results are numerically identical
to the CLI path for the same parameters.
"""
from __future__ import annotations

import json
import threading
from pathlib import Path
from typing import Literal, Optional

import httpx
import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .archive import load_lexicon, read_map_archive
from .errors import LexiconError, LsmEvalError, ValidationError
from .grid import MapBundle
from .metrics import binary_metrics
from .query import PostProcessParams, mask_from_labels, score_map, vlmaps_binary_query
from .report import (
    prediction_mask,
    resolve_term,
    segmentation_assignment,
    truth_mask,
)

AXES = {"x": 0, "y": 1, "z": 2}


class PostProcessBody(BaseModel):
    closing_iters: int = Field(default=1, ge=0)
    blur_sigma: float = Field(default=1.0, ge=0.0)
    threshold: float = Field(default=0.5, ge=0.0, le=1.0)
    dilation_iters: int = Field(default=1, ge=0)

    def to_params(self) -> PostProcessParams:
        return PostProcessParams(
            closing_iters=self.closing_iters,
            blur_sigma=self.blur_sigma,
            threshold=self.threshold,
            dilation_iters=self.dilation_iters,
        )


class QueryBody(BaseModel):
    key: Optional[str] = None
    embedding: Optional[list[float]] = None
    mode: Literal["vlmaps", "segmentation"] = "vlmaps"
    params: PostProcessBody = Field(default_factory=PostProcessBody)
    prompt_engineering: bool = False
    negative_key: str = "other"
    truth_label: Optional[int] = None
    axis: Literal["x", "y", "z"] = "z"
    aggregate: Literal["max", "mean"] = "max"


class EncodeBody(BaseModel):
    text: str


def rle_encode(flags: np.ndarray) -> dict:
    """Run-length encoding of mask flags over the sorted voxel order."""
    total = len(flags)
    if total == 0:
        return {"total": 0, "first": False, "runs": [], "positive_count": 0}
    changes = np.flatnonzero(flags[1:] != flags[:-1]) + 1
    bounds = np.concatenate([[0], changes, [total]])
    runs = np.diff(bounds).tolist()
    return {
        "total": total,
        "first": bool(flags[0]),
        "runs": [int(r) for r in runs],
        "positive_count": int(flags.sum()),
    }


def project_values(
    universe: np.ndarray, values: np.ndarray, axis: str, aggregate: str = "max"
) -> dict:
    """Project per-voxel values along an axis onto the remaining plane.

    Rows follow the second remaining axis, columns the first; cells with
    no voxels hold 0.
    """
    drop = AXES[axis]
    keep = [a for a in range(3) if a != drop]
    if len(universe) == 0:
        return {
            "axis": axis,
            "aggregate": aggregate,
            "width": 0,
            "height": 0,
            "offset": [0, 0],
            "values": [],
        }
    cols = universe[:, keep[0]].astype(np.int64)
    rows = universe[:, keep[1]].astype(np.int64)
    col0, row0 = cols.min(), rows.min()
    width = int(cols.max() - col0 + 1)
    height = int(rows.max() - row0 + 1)
    flat = (rows - row0) * width + (cols - col0)
    values = values.astype(np.float64)
    if aggregate == "max":
        image = np.full(width * height, -np.inf)
        np.maximum.at(image, flat, values)
        image[np.isneginf(image)] = 0.0
    elif aggregate == "mean":
        sums = np.zeros(width * height)
        counts = np.zeros(width * height)
        np.add.at(sums, flat, values)
        np.add.at(counts, flat, 1.0)
        image = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
    else:
        raise ValidationError(f"unknown aggregate {aggregate!r}")
    return {
        "axis": axis,
        "aggregate": aggregate,
        "width": width,
        "height": height,
        "offset": [int(col0), int(row0)],
        "values": [float(v) for v in image],
    }


class _ServerState:
    def __init__(self, maps_dir, lexicon_path, encoder_url, prompts_path):
        self.maps: dict[str, MapBundle] = {}
        self.diagnostics: list[dict] = []
        for path in sorted(Path(maps_dir).glob("*.lsm")):
            try:
                bundle = read_map_archive(path)
                self.maps[bundle.map_id] = bundle
            except LsmEvalError as exc:
                self.diagnostics.append({"path": str(path), "error": str(exc)})
        self.lexicon = load_lexicon(lexicon_path)
        self.encoder_url = encoder_url
        self.templates = None
        if prompts_path is not None:
            doc = json.loads(Path(prompts_path).read_text(encoding="utf-8"))
            if not isinstance(doc, list) or not all(isinstance(t, str) for t in doc):
                raise ValidationError(
                    "prompt template file must hold a JSON list of strings"
                )
            self.templates = tuple(doc)
        self._assignments: dict = {}
        self._lock = threading.Lock()

    def assignment(self, bundle: MapBundle, templates):
        cache_key = (bundle.map_id, templates is not None)
        with self._lock:
            if cache_key not in self._assignments:
                self._assignments[cache_key] = segmentation_assignment(
                    bundle, self.lexicon, templates
                )
            return self._assignments[cache_key]


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message})


def create_app(
    maps_dir,
    lexicon_path,
    encoder_url: Optional[str] = None,
    prompts_path=None,
    ui_dir=None,
    encoder_transport=None,
) -> FastAPI:
    state = _ServerState(maps_dir, lexicon_path, encoder_url, prompts_path)
    app = FastAPI(title="lsmeval explorer", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(RequestValidationError)
    async def malformed_request(request: Request, exc: RequestValidationError):
        return _error(400, f"malformed request: {exc.errors()[:3]}")

    @app.get("/api/maps")
    def list_maps():
        entries = [
            {
                "map_id": b.map_id,
                "cell_size": b.cell_size,
                "dim": b.dim,
                "voxel_count": len(b),
                "labels": list(b.semantics.vocabulary.labels)
                if b.semantics is not None
                else [],
            }
            for b in state.maps.values()
        ]
        entries.sort(key=lambda e: e["map_id"])
        return {"maps": entries, "diagnostics": state.diagnostics}

    @app.post("/api/maps/{map_id}/query")
    def query_map(map_id: str, body: QueryBody):
        bundle = state.maps.get(map_id)
        if bundle is None:
            return _error(404, f"unknown map {map_id!r}")
        if (body.key is None) == (body.embedding is None):
            return _error(400, "exactly one of 'key' or 'embedding' must be set")

        templates = state.templates if body.prompt_engineering else None
        if body.prompt_engineering and state.templates is None:
            return _error(400, "prompt engineering requested but no templates configured")

        try:
            if body.key is not None:
                if not body.prompt_engineering and body.key not in state.lexicon:
                    return _error(400, f"unknown lexicon key {body.key!r}")
                if body.mode == "segmentation":
                    if bundle.semantics is None:
                        return _error(400, "segmentation mode needs map semantics")
                    if body.key not in bundle.semantics.vocabulary:
                        return _error(
                            400, f"key {body.key!r} is not a vocabulary label"
                        )
                q_embedding = resolve_term(state.lexicon, body.key, templates)
            else:
                q_embedding = np.asarray(body.embedding, dtype=np.float64)
                if q_embedding.shape != (bundle.dim,):
                    return _error(
                        422,
                        f"embedding has dim {len(body.embedding)}, map has {bundle.dim}",
                    )
                if body.mode == "segmentation":
                    return _error(
                        400, "segmentation mode queries a vocabulary label key"
                    )

            if state.lexicon.dim != bundle.dim:
                return _error(
                    422,
                    f"lexicon dim {state.lexicon.dim} != map dim {bundle.dim}",
                )

            if body.mode == "segmentation":
                assignment = state.assignment(bundle, templates)
                label_id = bundle.semantics.vocabulary.id_of(body.key)
                mask = mask_from_labels(assignment, label_id)
            elif body.key is not None:
                mask = prediction_mask(
                    bundle,
                    state.lexicon,
                    body.key,
                    "vlmaps",
                    body.params.to_params(),
                    templates,
                    body.negative_key,
                )
            else:
                other = resolve_term(state.lexicon, body.negative_key, templates)
                mask = vlmaps_binary_query(
                    bundle.embeddings, q_embedding, other, body.params.to_params()
                )

            scores = score_map(bundle.embeddings, q_embedding)
            metrics = None
            if body.truth_label is not None:
                if bundle.semantics is None:
                    return _error(400, "map carries no semantics for metric feedback")
                if not 0 <= body.truth_label < len(bundle.semantics.vocabulary):
                    return _error(400, f"truth label {body.truth_label} out of range")
                metrics = binary_metrics(
                    mask, truth_mask(bundle, body.truth_label)
                ).as_dict()
        except LexiconError as exc:
            return _error(400, str(exc))
        except LsmEvalError as exc:
            return _error(422, str(exc))

        return {
            "map_id": map_id,
            "mask": rle_encode(mask.flags),
            "score_stats": scores.stats(),
            "projection": project_values(
                bundle.embeddings.indices, scores.scores, body.axis, body.aggregate
            ),
            "mask_projection": project_values(
                bundle.embeddings.indices,
                mask.flags.astype(np.float64),
                body.axis,
                "max",
            ),
            "metrics": metrics,
        }

    @app.get("/api/maps/{map_id}/groundtruth")
    def groundtruth(map_id: str, label: int, axis: str = "z"):
        bundle = state.maps.get(map_id)
        if bundle is None:
            return _error(404, f"unknown map {map_id!r}")
        if axis not in AXES:
            return _error(400, f"axis must be one of x, y, z, got {axis!r}")
        if bundle.semantics is None:
            return _error(400, "map carries no semantics")
        if not 0 <= label < len(bundle.semantics.vocabulary):
            return _error(400, f"label {label} out of range")
        mask = truth_mask(bundle, label)
        return project_values(
            bundle.embeddings.indices, mask.flags.astype(np.float64), axis, "max"
        )

    @app.post("/api/encode")
    def encode(body: EncodeBody):
        if state.encoder_url is None:
            return _error(501, "no encoder configured (start with --encoder-url)")
        try:
            with httpx.Client(transport=encoder_transport, timeout=30.0) as client:
                upstream = client.post(state.encoder_url, json={"text": body.text})
                upstream.raise_for_status()
                payload = upstream.json()
        except httpx.HTTPError as exc:
            return _error(502, f"encoder upstream failure: {exc}")
        embedding = payload.get("embedding")
        if not isinstance(embedding, list):
            return _error(502, "encoder upstream returned no embedding")
        if len(embedding) != state.lexicon.dim:
            return _error(
                422,
                f"encoder returned dim {len(embedding)}, lexicon has {state.lexicon.dim}",
            )
        return {"embedding": [float(v) for v in embedding]}

    if ui_dir is not None and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
