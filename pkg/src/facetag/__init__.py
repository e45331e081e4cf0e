"""facetag: batch person labelling for video archives.

Tags face-tracks from precomputed evidence (face/speaker embeddings,
candidate names, image-search results) in two passes: identity models built
from search-result clusters plus temporal corroboration, then audio-visual
score fusion and query expansion to lift recall at fixed precision.
"""

from .core import (
    Embedding,
    Linkage,
    Partition,
    agglomerative_cluster,
    average_pool,
    cosine_similarity,
    l2_normalize,
    largest_cluster,
)
from .errors import (
    BundleFormatError,
    BundleValidationError,
    ConfigError,
    DegenerateVectorError,
    DimensionMismatchError,
    EmptyInputError,
    EmptyPoolError,
    FacetagError,
    MissingGroundTruthError,
    NotFamousError,
    SourceHasNoTimeError,
)
from .evidence import (
    EvidenceBundle,
    FaceTrack,
    NameOccurrence,
    NameSource,
    SearchResult,
    SearchResultSet,
    SpeechTurn,
    load_bundle,
    normalize_name,
    overlapping_turns,
    save_bundle,
    tracks_in_window,
)
from .evaluation import (
    CalibratedThresholds,
    MetricCounts,
    MetricReport,
    alpha_sweep,
    average_precision,
    calibrate_pipeline,
    calibrate_threshold,
    fame_census,
    mean_average_precision,
    score_tags,
)
from .identity import (
    Fame,
    FameStatus,
    FamousConfig,
    IdentityModel,
    Provenance,
    SpeakerModel,
    build_face_model,
    build_face_models,
    build_speaker_model,
    classify_famous,
    classify_names,
)
from .pipeline import COMBO_ORDER, PipelineResult, run_pipeline
from .stage1 import Stage1Config, Tag, TagStage, corroborate, run_stage1, tag_famous
from .stage2 import (
    Stage2Config,
    Stage2Order,
    fuse_scores,
    fusion_tag,
    qe_tag,
    query_expand,
    run_stage2,
)
from .synth import (
    IdentityProfile,
    SynthConfig,
    brute_force_ap,
    generate_bundle,
    naive_cluster_reference,
    standard_fixture_config,
    sweep_fixture_config,
)

__version__ = "0.1.0"
