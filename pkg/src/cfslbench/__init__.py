"""Continual few-shot learning benchmark toolkit.

Episodes are sequences of small labeled support sets followed by one target
set; this package samples them deterministically from packed image
datasets, enforces the one-support-set-at-a-time access rule, accounts for
learner memory and compute, runs benchmark grids over baseline learners,
and streams episodes to remote consumers over TCP.
"""

from .bench import (
    BenchPlan,
    BenchReport,
    BenchRow,
    EmptyReport,
    LearnerSpec,
    PlanError,
    default_grid_cells,
    load_plan,
    plan_from_dict,
    render_report,
    report_from_csv,
    report_to_csv,
    run_benchmark,
    save_plan,
)
from .learners import (
    LearnerKind,
    LearnerParams,
    LinearFineTuneModel,
    ModelNotFitted,
    PrototypeModel,
    RandomModel,
    extract_features,
    fit_stream,
    learner_spec_from_dict,
    predict,
)
from .metrics import (
    AtmReport,
    AtmUndefined,
    EmptySuite,
    MacCounter,
    SuiteSummary,
    UnknownOpError,
    aggregate,
    atm,
    count_macs,
    episode_input_bytes,
    summaries_to_csv,
    summarize,
)
from .pack import (
    ClassRecord,
    DatasetPack,
    EmptySource,
    IngestError,
    PackManifest,
    SplitError,
    SplitSpec,
    SuitabilityReport,
    UpsampleUnsupported,
    box_downsample,
    build_pack,
    ingest,
    read_pack,
    slim,
    split_by_class,
    stats,
    stats_from_manifest,
    write_pack,
)
from .sampler import (
    BlockIndexError,
    Episode,
    NotEnoughClasses,
    NotEnoughSamples,
    SupportSetRef,
    TargetSetRef,
    episode_manifest_bytes,
    label_assignment,
    read_episode,
    sample_episode,
    sample_eval_suite,
    write_episode,
)
from .server import EpisodeServer, ProtocolError
from .session import (
    EpisodeScore,
    EpisodeSession,
    MemoryBank,
    MemoryEntry,
    PastSetInaccessible,
    PredictionShapeError,
    SessionClosed,
    SessionError,
    SessionState,
    SetNotYetAvailable,
    StreamExhausted,
    SupportSet,
    TargetNotYetAvailable,
    TargetSet,
)
from .tasks import (
    ConfigError,
    LabelSpace,
    TaskConfig,
    TaskKind,
    derive_task_kind,
    expected_distinct_classes,
    label_space,
    load_task_config,
    output_label_count,
    save_task_config,
    validate_config,
)

__version__ = "0.1.0"
