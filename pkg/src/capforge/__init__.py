"""capforge: batch captioning pipeline for 3D asset datasets.

Turns a manifest of 3D assets into a captioned, ethically filtered,
cost-accounted text-3D dataset by orchestrating pluggable caption,
embedding, and summarization backends.
"""

from .core import (
    AssetRecord,
    CameraPose,
    CandidateCaption,
    CaptionMode,
    DetectorScores,
    FinalCaption,
    LicenseClass,
    PipelineConfig,
    ViewCaption,
    parse_license,
    render_license,
    validate_asset,
)
from .backends import (
    BackendEndpoint,
    BackendSet,
    EmbeddingVector,
    TokenUsage,
    count_tokens,
    http_backend_set,
    mock_backend_set,
)
from .costs import CostBreakdown, CostRates, compare_to_human, gpu_stage_cost, llm_token_cost, pipeline_cost
from .crowd import CrowdCaption, WorkerRecord, WorkerResponse, clean_captions, detect_scam_workers, import_ab_export
from .filtering import (
    FilterReport,
    apply_filter_chain,
    blocklist_filter,
    detector_filter,
    license_filter,
    load_blocklist,
    render_info_filter,
)
from .geometry import (
    NormalizationTransform,
    RenderPlan,
    emit_render_plan,
    generate_camera_rig,
    normalize_to_unit_cube,
)
from .metrics import (
    Direction,
    GaussianStats,
    Orientation,
    ScoreMatrix,
    ab_aggregate,
    clip_score,
    fid,
    gaussian_stats,
    matrix_sqrt_psd,
    r_precision,
    retrieval_precision,
)
from .pipeline import (
    SelectionResult,
    build_summary_prompt,
    consolidate,
    cosine_similarity,
    qa_caption,
    run_pipeline,
    select_caption,
)
from .store import caption_length_stats, export_captions, read_manifest, write_manifest

__version__ = "0.1.0"

__all__ = [
    "AssetRecord",
    "BackendEndpoint",
    "BackendSet",
    "CameraPose",
    "CandidateCaption",
    "CaptionMode",
    "CostBreakdown",
    "CostRates",
    "CrowdCaption",
    "DetectorScores",
    "Direction",
    "EmbeddingVector",
    "FilterReport",
    "FinalCaption",
    "GaussianStats",
    "LicenseClass",
    "NormalizationTransform",
    "Orientation",
    "PipelineConfig",
    "RenderPlan",
    "ScoreMatrix",
    "SelectionResult",
    "TokenUsage",
    "ViewCaption",
    "WorkerRecord",
    "WorkerResponse",
    "ab_aggregate",
    "apply_filter_chain",
    "blocklist_filter",
    "build_summary_prompt",
    "caption_length_stats",
    "clean_captions",
    "clip_score",
    "compare_to_human",
    "consolidate",
    "cosine_similarity",
    "count_tokens",
    "detect_scam_workers",
    "detector_filter",
    "emit_render_plan",
    "export_captions",
    "fid",
    "gaussian_stats",
    "generate_camera_rig",
    "gpu_stage_cost",
    "http_backend_set",
    "import_ab_export",
    "license_filter",
    "llm_token_cost",
    "load_blocklist",
    "matrix_sqrt_psd",
    "mock_backend_set",
    "normalize_to_unit_cube",
    "parse_license",
    "pipeline_cost",
    "qa_caption",
    "r_precision",
    "read_manifest",
    "render_info_filter",
    "render_license",
    "retrieval_precision",
    "run_pipeline",
    "select_caption",
    "validate_asset",
    "write_manifest",
]
