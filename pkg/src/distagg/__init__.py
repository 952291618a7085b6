"""Task-agnostic aggregation of crowdsourced annotations by modeling
pairwise distances between labels rather than the labels themselves."""

__version__ = "0.1.0"

from .core import (
    AggregationResult,
    AnnotationDataset,
    DistanceDataset,
    LabelScore,
    Selection,
    build_distance_dataset,
    evaluate_against_gold,
    load_dataset,
)
from .labels import (
    Box,
    BoxSet,
    Category,
    Keypoint,
    KeypointSet,
    Label,
    Number,
    Ranking,
    Span,
    SpanSet,
    TaskKind,
    TokenSequence,
    Vector,
    Vertex,
)
from .merge import dmr
from .metrics import (
    available_metrics,
    default_metric_for,
    evaluation_fn,
    get_metric,
    krippendorff_alpha,
)
from .partition import partition_cluster, partition_oracle, pdmrr, psr
from .select import (
    MaddConfig,
    MaddFit,
    MasConfig,
    MasFit,
    aggregate_bau,
    aggregate_sad,
    dawid_skene_binary,
    fit_madd,
    fit_mas,
    fit_smas,
    majority_vote,
    random_user,
)
from .simulate import SimConfig, SimTruth, SweepGrid, run_sweep, simulate

__all__ = [name for name in dir() if not name.startswith("_")]
