"""Agentic image geolocation: evidence-driven probing over pluggable tools.

The package is organized in layers:

- :mod:`geoprobe.geo` — geographic primitives (points, distances, the
  admin-region gazetteer, reverse geocoding, city-name normalization).
- :mod:`geoprobe.state` — the candidate space over the region tree,
  evidence projection, two-stage backtracking, finalization.
- :mod:`geoprobe.actions` — capability modules, tools, action argument
  schemas, and the decision envelope a planning backend must emit.
- :mod:`geoprobe.planner` — the scripted salience policy and the
  HTTP-backed planning backend, plus prompt/context assembly.
- :mod:`geoprobe.executor` — bounded-parallel tool execution, the
  evidence extractors, and ablation gating.
- :mod:`geoprobe.recorder` — append-only hash-chained episode traces,
  replay verification, and bounded context compression.
- :mod:`geoprobe.engine` — the decision/execution/projection loop.
- :mod:`geoprobe.synthworld` — deterministic synthetic worlds and
  in-process tool adapters for offline testing.
- :mod:`geoprobe.live_tools` / :mod:`geoprobe.stub_server` — HTTP tool
  adapters with retries/backoff and a loopback stub server.
- :mod:`geoprobe.bench` — benchmark datasets, the metric suite, report
  rendering, and the benchmark runner.
- :mod:`geoprobe.config` / :mod:`geoprobe.cli` — run configuration and
  the command-line entry points.
"""

from .actions import (
    ARG_SCHEMAS,
    COMPOSITION,
    Action,
    ActionIssue,
    CapabilityModule,
    Decision,
    Tool,
    parse_decision,
    render_action_schema,
    validate_action,
)
from .bench import (
    DATASET_SUFFIX,
    DEFAULT_MIX,
    DEFAULT_THRESHOLDS_KM,
    BenchEntry,
    BenchmarkRun,
    BenchmarkSample,
    MetricBlock,
    MetricsReport,
    SceneCategory,
    acc_city,
    acc_loglat,
    classify_scene,
    compute_report,
    difficulty_counts,
    load_dataset,
    location_compliance,
    make_benchmark,
    render_text_table,
    round2,
    run_benchmark,
    save_dataset,
    stratify,
    threshold_accuracy,
)
from .canonical import canonical_hash, canonical_json, sha256_hex
from .config import (
    BackendSpec,
    RunConfig,
    ToolsSpec,
    build_backend,
    load_config,
    validate_files,
)
from .engine import (
    DEFAULT_CONTEXT_BUDGET,
    DEFAULT_MAX_STEPS,
    EpisodeResult,
    derive_poi_hint,
    run_episode,
    run_synthetic_episode,
)
from .errors import (
    BackendUnavailableError,
    BudgetTooSmallError,
    ConfigError,
    DatasetError,
    DecisionParseError,
    EmptyDatasetError,
    EmptyPredictionsError,
    GazetteerFileError,
    GeoprobeError,
    HashMismatchError,
    InsufficientEvidenceError,
    SeqGapError,
    TraceFormatError,
    UnknownRegionError,
    UnmatchedPredictionError,
)
from .executor import (
    ALL_TOOLS,
    LABEL_FULL,
    LABEL_NO_IMAGE_SEARCH,
    LABEL_NO_TEXT_SEARCH,
    LABEL_NO_TOOLS,
    AblationConfig,
    ToolResult,
    execute_batch,
    extract_evidence,
    load_tag_table,
    save_tag_table,
)
from .geo import (
    EARTH_RADIUS_KM,
    AdminRegion,
    Gazetteer,
    GeoPoint,
    RegionLevel,
    haversine_km,
    load_gazetteer,
    normalize_city_name,
    region_contains,
    reverse_geocode,
    save_gazetteer,
)
from .live_tools import (
    EndpointConfig,
    LiveAdapter,
    LocalCropAdapter,
    endpoints_for_base,
    live_adapters,
)
from .planner import (
    LlmBackend,
    PlannerContext,
    ScriptedBackend,
    scripted_salience_policy,
)
from .recorder import (
    CompressedContext,
    EventKind,
    ReplayReport,
    Trace,
    TraceHeader,
    TraceRecorder,
    TrajectoryEvent,
    compress,
    load_trace,
    replay,
)
from .state import (
    ApplyReport,
    CandidateSpace,
    EpisodeState,
    EpisodeStatus,
    Evidence,
    PoiHint,
    Prediction,
    Provenance,
    apply_evidence,
    apply_evidence_report,
    consistent,
    finalize,
    project,
)
from .stub_server import StubToolServer
from .synthworld import (
    Clue,
    ClueKind,
    Difficulty,
    SceneDescriptor,
    SynthWorld,
    SyntheticToolbox,
    Truth,
    compatible_cities,
    generate_world,
    load_world,
    sample_episode,
    save_world,
    synthetic_adapters,
)

__version__ = "0.1.0"

__all__ = [
    "ARG_SCHEMAS",
    "ALL_TOOLS",
    "AblationConfig",
    "Action",
    "ActionIssue",
    "AdminRegion",
    "ApplyReport",
    "BackendSpec",
    "BackendUnavailableError",
    "BenchEntry",
    "BenchmarkRun",
    "BenchmarkSample",
    "BudgetTooSmallError",
    "COMPOSITION",
    "CandidateSpace",
    "CapabilityModule",
    "Clue",
    "ClueKind",
    "CompressedContext",
    "ConfigError",
    "DATASET_SUFFIX",
    "DEFAULT_CONTEXT_BUDGET",
    "DEFAULT_MAX_STEPS",
    "DEFAULT_MIX",
    "DEFAULT_THRESHOLDS_KM",
    "DatasetError",
    "Decision",
    "DecisionParseError",
    "Difficulty",
    "EARTH_RADIUS_KM",
    "EmptyDatasetError",
    "EmptyPredictionsError",
    "EndpointConfig",
    "EpisodeResult",
    "EpisodeState",
    "EpisodeStatus",
    "EventKind",
    "Evidence",
    "Gazetteer",
    "GazetteerFileError",
    "GeoPoint",
    "GeoprobeError",
    "HashMismatchError",
    "InsufficientEvidenceError",
    "LABEL_FULL",
    "LABEL_NO_IMAGE_SEARCH",
    "LABEL_NO_TEXT_SEARCH",
    "LABEL_NO_TOOLS",
    "LiveAdapter",
    "LlmBackend",
    "LocalCropAdapter",
    "MetricBlock",
    "MetricsReport",
    "PlannerContext",
    "PoiHint",
    "Prediction",
    "Provenance",
    "RegionLevel",
    "ReplayReport",
    "RunConfig",
    "SceneCategory",
    "SceneDescriptor",
    "ScriptedBackend",
    "SeqGapError",
    "StubToolServer",
    "SynthWorld",
    "SyntheticToolbox",
    "Tool",
    "ToolResult",
    "ToolsSpec",
    "Trace",
    "TraceFormatError",
    "TraceHeader",
    "TraceRecorder",
    "TrajectoryEvent",
    "Truth",
    "UnknownRegionError",
    "UnmatchedPredictionError",
    "acc_city",
    "acc_loglat",
    "apply_evidence",
    "apply_evidence_report",
    "build_backend",
    "canonical_hash",
    "canonical_json",
    "classify_scene",
    "compatible_cities",
    "compress",
    "compute_report",
    "consistent",
    "derive_poi_hint",
    "difficulty_counts",
    "endpoints_for_base",
    "execute_batch",
    "extract_evidence",
    "finalize",
    "generate_world",
    "haversine_km",
    "load_config",
    "load_dataset",
    "load_gazetteer",
    "load_tag_table",
    "load_trace",
    "load_world",
    "location_compliance",
    "make_benchmark",
    "normalize_city_name",
    "parse_decision",
    "project",
    "region_contains",
    "render_action_schema",
    "render_text_table",
    "replay",
    "reverse_geocode",
    "round2",
    "run_benchmark",
    "run_episode",
    "run_synthetic_episode",
    "sample_episode",
    "save_dataset",
    "save_gazetteer",
    "save_tag_table",
    "save_world",
    "scripted_salience_policy",
    "sha256_hex",
    "stratify",
    "synthetic_adapters",
    "threshold_accuracy",
    "validate_action",
    "validate_files",
    "__version__",
]
