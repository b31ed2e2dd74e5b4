"""Upper bounds on AP improvement from contextual relations over detections.

Given ground-truth annotations and a detector's output, this toolkit
computes, per object category, how much average precision could possibly
be gained by combining detector confidence with any contextual relation
(or any other auxiliary signal), identifies the most promising relations,
and measures which false-detection error types such context can and
cannot correct.
"""

__version__ = "0.1.0"

from .ap import (
    Bin,
    BinGrid,
    ConfidenceBins,
    NoTrueDetections,
    RankedBinSequence,
    ap_equal_bins,
    ap_general,
    ap_general_exact,
    ap_naive,
    build_bins,
    discretize_confidence,
    grid_from_counts,
    heuristic_rank,
    permutation_oracle,
    rank_by_index,
)
from .bounds import (
    BoundResult,
    CategoryAnalysis,
    RandomBaseline,
    SearchConfig,
    analyze_bundle,
    analyze_category,
    baseline_bound,
    best_relation_search,
    bound_for_relation,
    iou_sweep,
    random_baseline,
)
from .capacity import (
    CapacityResult,
    InsufficientSamples,
    capacity,
    max_capacity,
    select_balanced,
)
from .dataset import (
    BoundingBox,
    DatasetBundle,
    DatasetError,
    Detection,
    GroundTruthObject,
    ImageInfo,
    group_objects_by_image,
    load_bundle,
    load_detections,
    load_ground_truth,
    validate_bundle,
    write_detections,
    write_ground_truth,
)
from .matching import (
    ErrorType,
    EvaluatedDetection,
    MatchConfig,
    classify_error,
    evaluate_bundle,
    iou,
    match_detections,
)
from .relations import (
    And,
    Constant,
    ContextIndex,
    CoOccurrence,
    Or,
    Random,
    Relation,
    Spatial,
    SpatialFrameConfig,
    annotate_context,
    compose_pairs,
    enumerate_atomic_relations,
    eval_relation,
    relation_string,
    spatial_cell,
)
from .synth import GenerationError, PlantedPair, SynthConfig, generate, parse_config_text

__all__ = [name for name in dir() if not name.startswith("_")]
