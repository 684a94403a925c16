"""Local modality substitution for instruction corpora.

Turns text-only instances into text-image-text interleaved instances by
localizing a span, rendering it to pixels (with LaTeX routing and fallback),
and applying a seeded perceptual distortion; also ships the cross-modal
alignment diagnostics (integration rate, pairwise cross-modal distance, and
the loss-decomposition identity checker) computed from hidden-state dumps.
"""

from .corpus import (
    ContentPart,
    CorpusError,
    CorpusParseError,
    CurationManifest,
    DuplicateIdError,
    Instance,
    JsonlWriter,
    emit_interleaved,
    load_instances,
    write_instances,
)
from .distort import DistortionChoice, apply_distortion, blur, rotate, shadow_or_stain, wave
from .hsd import HiddenStateDump, HsdFormatError, build_dump, read_hsd, write_hsd
from .metrics import (
    DecompositionResult,
    GaussianMoments,
    MetricError,
    MirReport,
    PcdReport,
    RunningMoments,
    decomposition_check,
    fit_gaussian,
    frechet_distance,
    mir,
    pairwise_cross_modal_distance,
)
from .pipeline import (
    LomoRewriter,
    PipelineConfig,
    RunStats,
    curate,
    derive_instance_seed,
    match_modality_ratio,
    selected_for_rewrite,
    transform_instance,
)
from .render import (
    LatexRenderError,
    RenderConfig,
    RenderedCarrier,
    Route,
    render_latex,
    render_routed,
    render_text,
    trim_margins,
)
from .rendered_eval import QuestionRasterizer, render_question, transform_benchmark
from .segmentation import (
    Block,
    ChunkSequence,
    PositionMode,
    SpanLocalizer,
    SpanSplit,
    chunk_formula_aware,
    contains_math,
    count_sentences,
    extract_span,
    localize,
)

__version__ = "0.1.0"

__all__ = [
    "Block",
    "ChunkSequence",
    "ContentPart",
    "CorpusError",
    "CorpusParseError",
    "CurationManifest",
    "DecompositionResult",
    "DistortionChoice",
    "DuplicateIdError",
    "GaussianMoments",
    "HiddenStateDump",
    "HsdFormatError",
    "Instance",
    "JsonlWriter",
    "LatexRenderError",
    "LomoRewriter",
    "MetricError",
    "MirReport",
    "PcdReport",
    "PipelineConfig",
    "PositionMode",
    "QuestionRasterizer",
    "RenderConfig",
    "RenderedCarrier",
    "Route",
    "RunStats",
    "RunningMoments",
    "SpanLocalizer",
    "SpanSplit",
    "apply_distortion",
    "blur",
    "build_dump",
    "chunk_formula_aware",
    "contains_math",
    "count_sentences",
    "curate",
    "decomposition_check",
    "derive_instance_seed",
    "emit_interleaved",
    "extract_span",
    "fit_gaussian",
    "frechet_distance",
    "load_instances",
    "localize",
    "match_modality_ratio",
    "mir",
    "pairwise_cross_modal_distance",
    "read_hsd",
    "render_latex",
    "render_question",
    "render_routed",
    "render_text",
    "rotate",
    "selected_for_rewrite",
    "shadow_or_stain",
    "transform_benchmark",
    "transform_instance",
    "trim_margins",
    "wave",
    "write_hsd",
    "write_instances",
]
