"""Dual-anchor introspective decoding engine and evaluation kit."""

from .core import (
    AnchorSelection,
    AttentionSummary,
    BackendFailure,
    CalibratedDistribution,
    CandidateMask,
    ContextTooLong,
    DaidError,
    DecodeConfig,
    EmptyDataset,
    InvalidProfile,
    MassOutOfRange,
    ModelDims,
    NonFinite,
    ShapeMismatch,
    StepDiagnostics,
    StepIntrospection,
    VisualSpan,
    WrongStrategy,
    validate_introspection,
)
from .anchoring import compute_vas, select_anchors, select_shadow, select_spotlight
from .calibration import apply_constraint, calibrate_logits, decode_step, plausibility_set
from .backend import (
    BackendDescriptor,
    SeeingThenForgetting,
    SyntheticProfile,
    TokenPreference,
    ToyBackend,
    build_toy_backend,
    load_profile,
)
from .decoder import (
    STRATEGIES,
    GenerationResult,
    StopCriteria,
    anchor_trace,
    generate,
)
from .traceio import (
    BadMagic,
    TraceBackend,
    TraceError,
    TraceExhausted,
    TraceHeader,
    TraceRecord,
    Truncated,
    UnsupportedVersion,
    read_trace,
    trace_backend,
    write_trace,
)
from .evalkit import (
    BinaryQaRecord,
    CaptionEval,
    ProbeResult,
    SweepItem,
    SweepRow,
    SweepSpec,
    bench_latency,
    chair_i,
    chair_s,
    layer_probe,
    load_dataset_jsonl,
    pope_scores,
    run_sweep,
)

__version__ = "0.1.0"
