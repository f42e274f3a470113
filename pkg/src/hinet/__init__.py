"""Hierarchical classification with a masked neural cascade and exact
MAP trace decoding."""

from .baseline import FlatParams, flat_forward, flat_train, flatten_param_count, init_flat_params
from .checkpoint import CheckpointError, load_model, save_model
from .data import (
    Dataset,
    DatasetError,
    EvalReport,
    SyntheticConfig,
    evaluate,
    generate_synthetic,
    load_dataset,
    save_dataset,
    split,
)
from .hierarchy import (
    CapExceededError,
    HierarchyError,
    HierarchySpec,
    InvalidTraceError,
    Kind,
    LevelMask,
    LevelTargets,
    Trace,
    build_masks,
    canonical_hash,
    complete_tree,
    count_traces,
    dense_spec,
    encode_targets,
    enumerate_traces,
    flat_id_to_trace,
    format_hierarchy,
    format_trace,
    parse_hierarchy,
    parse_trace,
    trace_to_flat_id,
    validate_trace,
)
from .inference import (
    LevelPosteriors,
    MalformedMaskError,
    PosteriorsError,
    ScoredTrace,
    TheoremReport,
    brute_force_map,
    check_theorems,
    downpour,
    random_instance,
    trace_score,
)
from .network import (
    ForwardCache,
    Gradients,
    ModelParams,
    TrainConfig,
    TrainingDivergedError,
    backward,
    combined_cost,
    forward,
    hinet_param_count,
    init_params,
    predict_trace,
    train,
)

__version__ = "0.1.0"
