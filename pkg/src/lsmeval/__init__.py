"""Evaluation toolkit for latent semantic maps.

Voxel grids whose cells carry visual-language embeddings are scored on
queryability (binary-classification quality of open-vocabulary query
masks) and distinctness (within-map deviation ratios and cross-map
Gaussian Wasserstein-2 distances of per-label embedding populations).
"""

__version__ = "0.1.0"

from .archive import (  # noqa: F401
    QueryLexicon,
    load_lexicon,
    read_map_archive,
    write_lexicon,
    write_map_archive,
)
from .grid import (  # noqa: F401
    EmbeddingGrid,
    InstanceGrid,
    LabelVocabulary,
    MapBundle,
    SemanticGrid,
    footprint_bytes,
    l2_normalize,
    norm_stats,
    regrid,
)
from .instances import grow_instances  # noqa: F401
from .metrics import (  # noqa: F401
    BinaryMetrics,
    DistinctnessPair,
    GaussianSummary,
    IntraRecord,
    SampleSet,
    aggregate_queryability,
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
from .morphology import (  # noqa: F401
    BinaryMask,
    binary_closing,
    binary_dilation,
    binary_erosion,
    gaussian_blur,
)
from .query import (  # noqa: F401
    LabelField,
    PostProcessParams,
    ScoreField,
    cosine_similarity,
    mask_from_labels,
    prompt_average,
    score_map,
    segmentation_assign,
    vlmaps_binary_query,
)
from .synthetic import SyntheticSpec, generate_synthetic_map  # noqa: F401
