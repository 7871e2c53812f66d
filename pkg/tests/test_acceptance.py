"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines.
Oracles here are independent of the library code paths they check:
set-based confusion counting, breadth-first components, shifted-copy
morphology, direct (non-separable) 3D convolution, per-axis scalar
Wasserstein forms, and Denman-Beavers matrix square roots.
"""
from __future__ import annotations

import json
import math
import time
from contextlib import contextmanager

import numpy as np
import pytest

from lsmeval.archive import write_lexicon, write_map_archive
from lsmeval.grid import footprint_bytes, regrid
from lsmeval.instances import grow_instances
from lsmeval.metrics import (
    GaussianSummary,
    SampleSet,
    avg_abs_deviation,
    binary_metrics,
    gaussian_summary,
    inter_map_distances,
    intra_map_ratio,
    kruskal_wallis,
    median_ratio,
    stratified_subsample,
    wasserstein2,
)
from lsmeval.morphology import BinaryMask, binary_closing, binary_dilation, gaussian_blur
from lsmeval.report import (
    EvalConfig,
    report_json_bytes,
    run_distinctness,
    run_queryability,
    run_resolution_sweep,
)
from lsmeval.synthetic import SyntheticSpec, generate_synthetic_map

from conftest import bfs_components_oracle, denman_beavers_sqrt

RNG = np.random.default_rng(0xACCE97)


@contextmanager
def criterion(label: str):
    started = time.perf_counter()
    try:
        yield
    except Exception:
        print(f"[FAIL] {label}")
        raise
    print(f"[PASS] {label} ({time.perf_counter() - started:.2f}s)")


def random_universe(rng, side=16, keep=0.5):
    cube = np.mgrid[0:side, 0:side, 0:side].reshape(3, -1).T.astype(np.int32)
    return np.ascontiguousarray(cube[rng.random(len(cube)) < keep])


# --- criterion 1: metric-oracle equivalence ----------------------------------


def test_criterion_1_binary_metrics_match_brute_force():
    with criterion("1 binary_metrics equals brute-force confusion on 200 pairs"):
        started = time.perf_counter()
        for _ in range(200):
            universe = random_universe(RNG)
            if len(universe) == 0:
                continue
            pred_flags = RNG.random(len(universe)) < RNG.random()
            truth_flags = RNG.random(len(universe)) < RNG.random()
            m = binary_metrics(
                BinaryMask(universe, pred_flags), BinaryMask(universe, truth_flags)
            )
            tp = fp = fn = 0
            pred_set = {tuple(v) for v, f in zip(universe, pred_flags) if f}
            truth_set = {tuple(v) for v, f in zip(universe, truth_flags) if f}
            for voxel in map(tuple, universe):
                p, t = voxel in pred_set, voxel in truth_set
                tp += p and t
                fp += p and not t
                fn += t and not p
            assert (m.tp, m.fp, m.fn) == (tp, fp, fn)
            assert m.precision == (tp / (tp + fp) if tp + fp else 0.0)
            assert m.recall == (tp / (tp + fn) if tp + fn else 0.0)
            assert m.iou == (tp / (tp + fp + fn) if tp + fp + fn else 0.0)
        assert time.perf_counter() - started < 5.0


# --- criterion 2: wasserstein correctness -------------------------------------


def _summary(mean, cov):
    return GaussianSummary(
        mean=np.asarray(mean, dtype=np.float64),
        cov=np.asarray(cov, dtype=np.float64),
        count=1000,
    )


def _random_psd(dim, min_eig=0.0):
    basis = RNG.standard_normal((dim, dim))
    return basis @ basis.T / dim + min_eig * np.eye(dim)


def test_criterion_2_wasserstein_correctness():
    with criterion("2 wasserstein identity/symmetry, diagonal and 2-D oracles"):
        started = time.perf_counter()
        # (a) zero on identical summaries, symmetric on random PSD pairs
        for _ in range(100):
            dim = int(RNG.integers(1, 17))
            g1 = _summary(RNG.standard_normal(dim), _random_psd(dim))
            g2 = _summary(RNG.standard_normal(dim), _random_psd(dim))
            assert wasserstein2(g1, g1) <= 1e-9
            assert abs(wasserstein2(g1, g2) - wasserstein2(g2, g1)) <= 1e-8

        # (b) diagonal covariances against the per-axis scalar closed form
        for _ in range(100):
            dim = int(RNG.integers(1, 9))
            mu1, mu2 = RNG.standard_normal((2, dim))
            var1 = RNG.uniform(0.05, 4.0, dim)
            var2 = RNG.uniform(0.05, 4.0, dim)
            got = wasserstein2(
                _summary(mu1, np.diag(var1)), _summary(mu2, np.diag(var2))
            )
            expected = float(
                np.sum((mu1 - mu2) ** 2)
                + np.sum((np.sqrt(var1) - np.sqrt(var2)) ** 2)
            )
            assert abs(got - expected) <= 1e-6 * max(abs(expected), 1e-12)

        # (c) full 2-D covariances against a Denman-Beavers iterative oracle
        for _ in range(100):
            mu1, mu2 = RNG.standard_normal((2, 2))
            cov1 = _random_psd(2, min_eig=0.05)
            cov2 = _random_psd(2, min_eig=0.05)
            got = wasserstein2(_summary(mu1, cov1), _summary(mu2, cov2))
            root2 = denman_beavers_sqrt(cov2)
            cross = denman_beavers_sqrt(root2 @ cov1 @ root2)
            expected = float(
                (mu1 - mu2) @ (mu1 - mu2)
                + np.trace(cov1)
                + np.trace(cov2)
                - 2.0 * np.trace(cross)
            )
            assert abs(got - expected) <= 1e-6 * max(abs(expected), 1e-12)
        assert time.perf_counter() - started < 30.0


# --- criterion 3: average absolute deviation (Eq. 1 behavior) -----------------


def test_criterion_3_deviation_and_ratio_invariance():
    with criterion("3 deviation zero/hand value, ratio scaling invariance"):
        identical = SampleSet("m", 0, np.tile(RNG.standard_normal(6), (30, 1)))
        assert avg_abs_deviation(identical) == pytest.approx(0.0, abs=1e-12)

        orthogonal = SampleSet("m", 0, np.array([[1.0, 0.0], [0.0, 1.0]]))
        assert avg_abs_deviation(orthogonal) == pytest.approx(0.29289, abs=1e-5)

        # ratios are invariant when every sample is scaled by one positive
        # factor (cosine ignores magnitude, the mean direction is unchanged)
        for _ in range(20):
            label_samples = RNG.standard_normal((12, 5))
            map_samples = RNG.standard_normal((40, 5))
            scale = float(RNG.uniform(0.01, 250.0))
            base = intra_map_ratio(
                SampleSet("m", 1, label_samples), SampleSet("m", None, map_samples)
            ).ratio
            scaled = intra_map_ratio(
                SampleSet("m", 1, scale * label_samples),
                SampleSet("m", None, scale * map_samples),
            ).ratio
            assert scaled == pytest.approx(base, rel=1e-9)

        # with normalize-first sample sets, even heterogeneous per-sample
        # positive scaling cannot move the ratio
        label_samples = RNG.standard_normal((12, 5))
        map_samples = RNG.standard_normal((40, 5))
        label_scales = RNG.uniform(0.1, 50.0, size=(12, 1))
        map_scales = RNG.uniform(0.1, 50.0, size=(40, 1))
        base = intra_map_ratio(
            SampleSet("m", 1, label_samples).normalized(),
            SampleSet("m", None, map_samples).normalized(),
        ).ratio
        scaled = intra_map_ratio(
            SampleSet("m", 1, label_scales * label_samples).normalized(),
            SampleSet("m", None, map_scales * map_samples).normalized(),
        ).ratio
        assert scaled == pytest.approx(base, rel=1e-9)


# --- criterion 4: region growing vs connected components ----------------------


def test_criterion_4_region_growing_matches_components():
    with criterion("4 region growing equals BFS components on 50 grids"):
        started = time.perf_counter()
        from lsmeval.grid import LabelVocabulary, SemanticGrid

        vocab = LabelVocabulary([f"l{i}" for i in range(4)])
        for _ in range(50):
            occupied = RNG.random((16, 16, 16)) < 0.45
            labels = RNG.integers(0, 4, size=(16, 16, 16))
            cells = {
                (int(x), int(y), int(z)): int(labels[x, y, z])
                for x, y, z in np.argwhere(occupied)
            }
            if not cells:
                continue
            idx = np.array(list(cells.keys()), dtype=np.int64)
            grid = SemanticGrid(idx, np.array(list(cells.values())), vocab)
            out = grow_instances(grid)
            got = {
                tuple(int(c) for c in row): int(i)
                for row, i in zip(out.indices, out.ids)
            }
            assert got == bfs_components_oracle(cells)
            # label purity
            for instance in range(out.instance_count):
                members = out.ids == instance
                assert len(np.unique(grid.labels[members])) == 1
        assert time.perf_counter() - started < 10.0


# --- criterion 5: morphology and blur vs naive references ---------------------


def _shift_accumulate(dense, combine, init):
    """Brute-force box morphology: combine over all 27 shifted copies."""
    out = np.full(dense.shape, init, dtype=bool)
    sx, sy, sz = dense.shape
    padded = np.zeros((sx + 2, sy + 2, sz + 2), dtype=bool)
    padded[1:-1, 1:-1, 1:-1] = dense
    for dx in (0, 1, 2):
        for dy in (0, 1, 2):
            for dz in (0, 1, 2):
                window = padded[dx : dx + sx, dy : dy + sy, dz : dz + sz]
                out = combine(out, window)
    return out


def _brute_dilate(dense):
    return _shift_accumulate(dense, np.logical_or, False)


def _brute_erode(dense):
    return _shift_accumulate(dense, np.logical_and, True)


def _brute_blur(dense, sigma):
    """Direct convolution with the full 3D product kernel (not separable)."""
    radius = math.ceil(3.0 * sigma)
    axis = np.arange(-radius, radius + 1, dtype=np.float64)
    k1 = np.exp(-0.5 * (axis / sigma) ** 2)
    k1 /= k1.sum()
    kernel = k1[:, None, None] * k1[None, :, None] * k1[None, None, :]
    sx, sy, sz = dense.shape
    padded = np.zeros((sx + 2 * radius, sy + 2 * radius, sz + 2 * radius))
    padded[radius:-radius, radius:-radius, radius:-radius] = dense
    out = np.zeros(dense.shape)
    for ix in range(2 * radius + 1):
        for iy in range(2 * radius + 1):
            for iz in range(2 * radius + 1):
                out += kernel[ix, iy, iz] * padded[
                    ix : ix + sx, iy : iy + sy, iz : iz + sz
                ]
    return out


def test_criterion_5_morphology_and_blur_match_references():
    with criterion("5 morphology exact / blur within 1e-6 vs naive references"):
        side = 16
        cube = np.mgrid[0:side, 0:side, 0:side].reshape(3, -1).T.astype(np.int32)
        universe = np.ascontiguousarray(cube)
        for _ in range(50):
            flags = RNG.random(len(universe)) < RNG.uniform(0.1, 0.6)
            mask = BinaryMask(universe, flags)
            dense = flags.reshape(side, side, side)

            dilated = binary_dilation(mask, 1)
            assert np.array_equal(
                dilated.flags, _brute_dilate(dense).reshape(-1)
            )

            closed = binary_closing(mask, 1)
            assert np.array_equal(
                closed.flags, _brute_erode(_brute_dilate(dense)).reshape(-1)
            )

            sigma = float(RNG.uniform(0.4, 1.6))
            blurred = gaussian_blur(mask, sigma)
            expected = _brute_blur(dense.astype(np.float64), sigma).reshape(-1)
            assert np.abs(blurred - expected).max() < 1e-6


# --- criterion 6: synthetic end-to-end -----------------------------------------


def test_criterion_6_synthetic_end_to_end(tmp_path):
    with criterion("6 synthetic end-to-end F1/intra/inter thresholds"):
        started = time.perf_counter()
        bundles = {}
        lexicon = None
        for seed in (101, 202):
            spec = SyntheticSpec(
                class_count=5,
                voxels_per_class=2000,
                dim=64,
                angular_noise=0.05,
                cell_size=0.01,
                seed=seed,
            )
            bundle, lexicon = generate_synthetic_map(spec)
            bundles[seed] = bundle
            write_map_archive(bundle, tmp_path / f"{bundle.map_id}.lsm")
        write_lexicon(lexicon, tmp_path / "lexicon.json")

        config = EvalConfig(
            map_paths=tuple(str(p) for p in sorted(tmp_path.glob("*.lsm"))),
            lexicon_path=str(tmp_path / "lexicon.json"),
            mode="segmentation",
            subsample_ratio=0.1,
            seed=0,
        )
        queryability = run_queryability(config)
        for row in queryability.queryability["rows"]:
            assert row["f1"] >= 0.99, f"per-class F1 below 0.99: {row}"

        distinctness = run_distinctness(config)
        for row in distinctness.distinctness["intra"]["rows"]:
            assert row["ratio"] < 0.5, f"intra ratio too high: {row}"

        inter = distinctness.distinctness["inter"]
        assert inter["median_matching"] < inter["median_non_matching"]
        assert inter["median_ratio"] >= 2.0
        assert time.perf_counter() - started < 60.0


# --- criterion 7: resolution behavior -------------------------------------------


def test_criterion_7_resolution_footprints_and_native_sweep(tmp_path):
    with criterion("7 footprints strictly decrease; sizes exact; native sweep"):
        spec = SyntheticSpec(
            class_count=2,
            voxels_per_class=8000,  # a solid 20^3 cube per class
            dim=8,
            angular_noise=0.0,
            cell_size=0.01,
            seed=77,
        )
        bundle, lexicon = generate_synthetic_map(spec)
        write_map_archive(bundle, tmp_path / f"{bundle.map_id}.lsm")
        write_lexicon(lexicon, tmp_path / "lexicon.json")

        ladder = (0.02, 0.05, 0.1, 0.2)
        sizes = []
        for resolution in ladder:
            coarse = regrid(bundle, resolution)
            predicted = footprint_bytes(coarse)
            path = tmp_path / f"r{resolution}.lsm"
            written = write_map_archive(coarse, path)
            assert predicted == written == path.stat().st_size
            sizes.append(predicted)
        assert all(a > b for a, b in zip(sizes, sizes[1:]))

        config = EvalConfig(
            map_paths=(str(tmp_path / f"{bundle.map_id}.lsm"),),
            lexicon_path=str(tmp_path / "lexicon.json"),
            mode="segmentation",
            resolutions=(bundle.cell_size,),
        )
        sweep = run_resolution_sweep(config)
        plain = run_queryability(config)
        sweep_bytes = json.dumps(
            sweep.resolutions[0]["queryability"], sort_keys=True
        ).encode()
        plain_bytes = json.dumps(plain.queryability, sort_keys=True).encode()
        assert sweep_bytes == plain_bytes


# --- criterion 8: determinism ----------------------------------------------------


def test_criterion_8_reports_are_byte_deterministic(tmp_path):
    with criterion("8 byte-identical reports across runs and worker counts"):
        for seed in (11, 12):
            spec = SyntheticSpec(
                class_count=4,
                voxels_per_class=300,
                dim=16,
                angular_noise=0.08,
                cell_size=0.01,
                seed=seed,
            )
            bundle, lexicon = generate_synthetic_map(spec)
            write_map_archive(bundle, tmp_path / f"{bundle.map_id}.lsm")
        write_lexicon(lexicon, tmp_path / "lexicon.json")

        def config(workers):
            return EvalConfig(
                map_paths=tuple(str(p) for p in sorted(tmp_path.glob("*.lsm"))),
                lexicon_path=str(tmp_path / "lexicon.json"),
                mode="vlmaps",
                subsample_ratio=0.5,
                seed=42,
                workers=workers,
            )

        q_first = report_json_bytes(run_queryability(config(1)))
        q_second = report_json_bytes(run_queryability(config(1)))
        q_parallel = report_json_bytes(run_queryability(config(8)))
        assert q_first == q_second == q_parallel

        d_first = report_json_bytes(run_distinctness(config(1)))
        d_second = report_json_bytes(run_distinctness(config(8)))
        assert d_first == d_second


# --- criterion 9: kruskal-wallis ---------------------------------------------------


def test_criterion_9_kruskal_wallis_values():
    with criterion("9 kruskal-wallis exact value, symmetry, all-ties zero"):
        h = kruskal_wallis([1.0, 2.0, 3.0], [4.0, 5.0, 6.0])
        assert h == pytest.approx(3.857142857, abs=1e-9)
        assert kruskal_wallis([4.0, 5.0, 6.0], [1.0, 2.0, 3.0]) == pytest.approx(
            h, abs=1e-12
        )
        assert kruskal_wallis([3.0, 3.0, 3.0], [3.0, 3.0]) == 0.0
