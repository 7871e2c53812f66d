#!/usr/bin/env python3
"""Regenerate the frontend test fixtures from the real server and CLI paths.

Usage: python3 tools/make_ui_fixtures.py

Writes frontend/tests/fixtures/*.json. The fixture map is deterministic,
so reruns produce identical files.
"""
from __future__ import annotations

import json
import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

from lsmeval.archive import write_lexicon, write_map_archive
from lsmeval.report import EvalConfig, run_queryability
from lsmeval.server import create_app
from lsmeval.synthetic import SyntheticSpec, generate_synthetic_map

ROOT = Path(__file__).resolve().parent.parent
FIXTURE_DIR = ROOT / "frontend" / "tests" / "fixtures"

SPEC = SyntheticSpec(
    class_count=3,
    voxels_per_class=60,
    dim=8,
    angular_noise=0.0,
    cell_size=0.01,
    seed=9,
)

RAW_PARAMS = {
    "closing_iters": 0,
    "blur_sigma": 0.0,
    "threshold": 0.0,
    "dilation_iters": 0,
}

FIXED_REQUESTS = [
    {"key": "class_00", "mode": "segmentation", "params": RAW_PARAMS, "truth_label": 0},
    {"key": "class_01", "mode": "segmentation", "params": RAW_PARAMS, "truth_label": 1},
    {"key": "class_02", "mode": "segmentation", "params": RAW_PARAMS, "truth_label": 2},
]


def main() -> None:
    FIXTURE_DIR.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        bundle, lexicon = generate_synthetic_map(SPEC)
        write_map_archive(bundle, tmp / f"{bundle.map_id}.lsm")
        write_lexicon(lexicon, tmp / "lexicon.json")

        config = EvalConfig(
            map_paths=(str(tmp / f"{bundle.map_id}.lsm"),),
            lexicon_path=str(tmp / "lexicon.json"),
            mode="segmentation",
        )
        report = run_queryability(config)
        (FIXTURE_DIR / "cli_rows.json").write_text(
            json.dumps(report.queryability["rows"], indent=2, sort_keys=True) + "\n"
        )

        client = TestClient(create_app(tmp, tmp / "lexicon.json"))

        captured = []
        for request in FIXED_REQUESTS:
            response = client.post(f"/api/maps/{bundle.map_id}/query", json=request)
            response.raise_for_status()
            captured.append({"request": request, "response": response.json()})
        (FIXTURE_DIR / "query_responses.json").write_text(
            json.dumps(captured, indent=2, sort_keys=True) + "\n"
        )

        thresholds = []
        for threshold in (0.05, 0.2, 0.35, 0.5, 0.65, 0.8, 0.95):
            request = {
                "key": "class_00",
                "mode": "vlmaps",
                "params": {
                    "closing_iters": 0,
                    "blur_sigma": 1.0,
                    "threshold": threshold,
                    "dilation_iters": 0,
                },
            }
            response = client.post(f"/api/maps/{bundle.map_id}/query", json=request)
            response.raise_for_status()
            thresholds.append(
                {
                    "threshold": threshold,
                    "positive_count": response.json()["mask"]["positive_count"],
                }
            )
        (FIXTURE_DIR / "thresholds.json").write_text(
            json.dumps(thresholds, indent=2, sort_keys=True) + "\n"
        )

        encode = client.post("/api/encode", json={"text": "sofa"})
        (FIXTURE_DIR / "encode_unconfigured.json").write_text(
            json.dumps(
                {"status": encode.status_code, "body": encode.json()},
                indent=2,
                sort_keys=True,
            )
            + "\n"
        )

        (FIXTURE_DIR / "meta.json").write_text(
            json.dumps({"map_id": bundle.map_id}, indent=2) + "\n"
        )
    print(f"wrote fixtures to {FIXTURE_DIR}")


if __name__ == "__main__":
    main()
