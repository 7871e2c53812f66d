import math

import numpy as np
import pytest

from lsmeval.errors import ValidationError
from lsmeval.morphology import BinaryMask
from lsmeval.query import (
    PostProcessParams,
    cosine_similarity,
    mask_from_labels,
    prompt_average,
    raw_binary_mask,
    score_map,
    segmentation_assign,
    vlmaps_binary_query,
)

from conftest import make_embedding_grid


def test_cosine_self_is_one():
    v = [0.2, -1.0, 3.5]
    assert cosine_similarity(v, v) == pytest.approx(1.0)


def test_cosine_orthogonal_is_zero():
    assert cosine_similarity([1.0, 0.0], [0.0, 1.0]) == pytest.approx(0.0, abs=1e-12)


def test_cosine_hand_value():
    assert cosine_similarity([1.0, 0.0], [1.0, 1.0]) == pytest.approx(
        0.70710678, abs=1e-6
    )


def test_cosine_errors():
    with pytest.raises(ValidationError):
        cosine_similarity([0.0, 0.0], [1.0, 0.0])
    with pytest.raises(ValidationError):
        cosine_similarity([1.0, 0.0], [1.0, 0.0, 0.0])


def test_score_map_all_equal_query():
    q = [0.5, 0.5, 0.0]
    grid = make_embedding_grid({(i, 0, 0): q for i in range(3)})
    field = score_map(grid, q)
    assert np.allclose(field.scores, 1.0)


def test_score_map_opposites():
    q = np.array([1.0, 0.0])
    grid = make_embedding_grid({(0, 0, 0): q, (1, 0, 0): -q})
    field = score_map(grid, q)
    assert sorted(field.scores.tolist()) == pytest.approx([-1.0, 1.0])


def test_score_map_constructed_angles():
    q = [1.0, 0.0]
    grid = make_embedding_grid(
        {
            (0, 0, 0): [1.0, 0.0],
            (1, 0, 0): [math.cos(math.pi / 3), math.sin(math.pi / 3)],
            (2, 0, 0): [0.0, 1.0],
        }
    )
    field = score_map(grid, q)
    assert field.scores.tolist() == pytest.approx([1.0, 0.5, 0.0], abs=1e-7)


def test_score_map_zero_norm_voxel_scores_minus_one():
    grid = make_embedding_grid({(0, 0, 0): [0.0, 0.0], (1, 0, 0): [1.0, 0.0]})
    field = score_map(grid, [1.0, 0.0])
    assert field.scores.tolist() == pytest.approx([-1.0, 1.0])


def test_prompt_average_single_phrase_normalizes():
    out = prompt_average([[3.0, 4.0]])
    assert out.tolist() == pytest.approx([0.6, 0.8])


def test_prompt_average_zero_mean_errors():
    with pytest.raises(ValidationError):
        prompt_average([[1.0, 0.0], [-1.0, 0.0]])


def test_prompt_average_two_unit_vectors():
    out = prompt_average([[1.0, 0.0], [0.0, 1.0]])
    assert out.tolist() == pytest.approx([0.7071067811865475] * 2)


# --- vlmaps binary query ------------------------------------------------------


def test_all_voxels_closer_to_query_all_positive():
    q = np.array([1.0, 0.0])
    other = np.array([0.0, 1.0])
    grid = make_embedding_grid({(i, 0, 0): [1.0, 0.1 * i] for i in range(4)})
    mask = vlmaps_binary_query(grid, q, other, PostProcessParams.raw())
    assert mask.count == 4


def test_query_equal_other_ties_positive():
    q = np.array([1.0, 1.0])
    grid = make_embedding_grid({(i, 0, 0): [0.3, 0.7 * i] for i in range(3)})
    mask = vlmaps_binary_query(grid, q, q, PostProcessParams.raw())
    assert mask.count == 3


def test_all_zero_params_yield_raw_mask(rng):
    dim = 4
    cells = {
        (int(x), int(y), int(z)): rng.standard_normal(dim)
        for x, y, z in rng.integers(0, 6, size=(40, 3))
    }
    grid = make_embedding_grid(cells, dim=dim)
    q = rng.standard_normal(dim)
    other = rng.standard_normal(dim)
    raw = raw_binary_mask(grid, q, [other])
    cooked = vlmaps_binary_query(grid, q, other, PostProcessParams.raw())
    assert np.array_equal(raw.flags, cooked.flags)


def test_isolated_positive_removed_by_blur_threshold():
    # one positive among an 11^3 block of negatives; blurred peak ~0.064 < 0.5
    q = np.array([1.0, 0.0])
    other = np.array([0.0, 1.0])
    cells = {}
    for x in range(11):
        for y in range(11):
            for z in range(11):
                cells[(x, y, z)] = [0.0, 1.0]
    cells[(5, 5, 5)] = [1.0, 0.0]
    grid = make_embedding_grid(cells)
    params = PostProcessParams(
        closing_iters=0, blur_sigma=1.0, threshold=0.5, dilation_iters=0
    )
    mask = vlmaps_binary_query(grid, q, other, params)
    assert mask.count == 0


def test_mask_invariant_under_query_scaling(rng):
    dim = 6
    cells = {
        (int(x), int(y), int(z)): rng.standard_normal(dim)
        for x, y, z in rng.integers(0, 5, size=(30, 3))
    }
    grid = make_embedding_grid(cells, dim=dim)
    q = rng.standard_normal(dim)
    other = rng.standard_normal(dim)
    params = PostProcessParams()
    base = vlmaps_binary_query(grid, q, other, params)
    scaled = vlmaps_binary_query(grid, 37.5 * q, other, params)
    assert np.array_equal(base.flags, scaled.flags)


def test_extra_negatives_tighten_the_mask():
    q = np.array([1.0, 0.0, 0.0])
    other = np.array([0.0, 0.0, 1.0])
    decoy = np.array([0.0, 1.0, 0.0])
    grid = make_embedding_grid(
        {(0, 0, 0): [1.0, 0.0, 0.0], (1, 0, 0): [0.1, 1.0, 0.0]}
    )
    plain = vlmaps_binary_query(grid, q, other, PostProcessParams.raw())
    narrowed = vlmaps_binary_query(
        grid, q, other, PostProcessParams.raw(), extra_negatives=[decoy]
    )
    assert plain.count == 2
    assert narrowed.count == 1


# --- segmentation -------------------------------------------------------------


def test_segmentation_exact_match_wins():
    labels = [np.eye(4)[i] for i in range(4)]
    grid = make_embedding_grid({(0, 0, 0): np.eye(4)[3]})
    field = segmentation_assign(grid, labels)
    assert field.labels.tolist() == [3]


def test_segmentation_tie_goes_to_lowest_id():
    labels = [np.array([1.0, 0.0]), np.array([0.0, 1.0])]
    grid = make_embedding_grid({(0, 0, 0): [1.0, 1.0]})
    field = segmentation_assign(grid, labels)
    assert field.labels.tolist() == [0]


def test_segmentation_prefers_nearer_angle():
    ten = math.radians(10)
    eighty = math.radians(80)
    labels = [
        np.array([math.cos(ten), math.sin(ten)]),
        np.array([math.cos(eighty), math.sin(eighty)]),
    ]
    grid = make_embedding_grid({(0, 0, 0): [1.0, 0.0]})
    assert segmentation_assign(grid, labels).labels.tolist() == [0]


def test_segmentation_requires_labels():
    grid = make_embedding_grid({(0, 0, 0): [1.0, 0.0]})
    with pytest.raises(ValidationError):
        segmentation_assign(grid, [])


def test_mask_from_labels_counts():
    grid = make_embedding_grid(
        {(0, 0, 0): [1.0, 0.0], (1, 0, 0): [1.0, 0.0], (2, 0, 0): [0.0, 1.0]}
    )
    field = segmentation_assign(grid, [np.array([1.0, 0.0]), np.array([0.0, 1.0])])
    assert mask_from_labels(field, 0).count == 2
    assert mask_from_labels(field, 1).count == 1
    assert mask_from_labels(field, 5).count == 0  # absent label -> empty mask
