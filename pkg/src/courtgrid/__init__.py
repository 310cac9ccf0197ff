"""courtgrid: multiresolution low-rank tensor classifiers for ball-handler
shot prediction, with playstyle clustering and heatmap performance profiles.
"""

from .cluster import (
    ARCHETYPE_NAMES,
    ClusterModel,
    PCAModel,
    assign_playstyles,
    kmeans,
    pca_fit,
    silhouette,
    standardize,
)
from .discretize import (
    CourtGeometry,
    DefenderGridSpec,
    FinegrainMap,
    ResolutionPair,
    court_cell,
    decode_cell,
    defender_cells,
    extend_cell,
    finegrain_map,
)
from .estimators import MRTLClassifier, PlaystyleClusterer
from .ingest import (
    DatasetSplit,
    LabeledSample,
    SynergyRow,
    TrackingFrame,
    label_frames,
    parse_samples,
    parse_synergy_table,
    serialize_samples,
    split_dataset,
)
from .model import (
    EncodedBatch,
    FullRankModel,
    LossReport,
    LowRankModel,
    SampleEncoding,
    forward_full,
    forward_lowrank,
    init_lowrank_from_full,
    load_model,
    loss_and_grad,
    save_model,
    temporal_penalty,
)
from .profiler import (
    Heatmap,
    context_heatmaps,
    export_heatmap,
    general_heatmaps,
    player_profiles,
)
from .synth import PlantedSpec, bayes_oracle, generate, make_planted_spec
from .tensor_ops import align_factors, cp_als, cp_reconstruct
from .trainer import (
    Metrics,
    ResolutionSchedule,
    TrainConfig,
    TrainReport,
    default_schedule,
    evaluate,
    run_pipeline,
    train_full_rank,
    train_low_rank,
    tune_threshold,
)

__version__ = "0.1.0"
