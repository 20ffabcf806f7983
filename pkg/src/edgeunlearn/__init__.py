"""Exact machine unlearning simulator for memory-constrained devices.

The package simulates sharded incremental training under a stream of user
learning and unlearning requests, with a capacity-bounded checkpoint store,
pluggable replacement policies, a decaying shard-count schedule, pruning-aware
model size accounting, and exact retrained-sample-number (RSN) and energy
bookkeeping.
"""

from .controller import ShardControllerConfig, shard_value, shards_at
from .engine import (
    MetricsRecord,
    ScenarioResult,
    SystemVariant,
    UnlearningSimulation,
    VARIANT_PRESETS,
    metrics_to_csv,
    run_scenario,
    variant_from_tag,
)
from .learner import (
    CentroidState,
    EnergyModel,
    FeatureSpace,
    empty_state,
    energy_of,
    majority_vote,
    prune_iterative,
    prune_oneshot,
    train_incremental,
)
from .memory import (
    ByteMemoryStore,
    MemoryStore,
    ModelCheckpoint,
    ReplacementEvent,
    StaticShardStore,
    fib_distinct,
    lookup_latest_clean,
)
from .partition import ShardAssignment, class_partition, ucdp_partition, uniform_partition
from .profiles import ModelSizeProfile, get_profile, profile_names, pruned_size
from .workload import (
    DataChunk,
    RoundEvents,
    UpdateRequest,
    UserProfile,
    WorkloadConfig,
    dump_jsonl,
    enqueue_fcfs,
    generate_workload,
    load_jsonl,
)

__version__ = "0.1.0"

__all__ = [
    "CentroidState",
    "ByteMemoryStore",
    "DataChunk",
    "EnergyModel",
    "FeatureSpace",
    "MemoryStore",
    "MetricsRecord",
    "ModelCheckpoint",
    "ModelSizeProfile",
    "ReplacementEvent",
    "RoundEvents",
    "ScenarioResult",
    "ShardAssignment",
    "ShardControllerConfig",
    "StaticShardStore",
    "SystemVariant",
    "UnlearningSimulation",
    "UpdateRequest",
    "UserProfile",
    "VARIANT_PRESETS",
    "WorkloadConfig",
    "class_partition",
    "dump_jsonl",
    "empty_state",
    "energy_of",
    "enqueue_fcfs",
    "fib_distinct",
    "generate_workload",
    "get_profile",
    "load_jsonl",
    "lookup_latest_clean",
    "majority_vote",
    "metrics_to_csv",
    "profile_names",
    "prune_iterative",
    "prune_oneshot",
    "pruned_size",
    "run_scenario",
    "shard_value",
    "shards_at",
    "train_incremental",
    "ucdp_partition",
    "uniform_partition",
    "variant_from_tag",
]
