"""crlsim: trace-driven multicore cache-hierarchy simulator with a
coordinated reinforcement-learning prefetcher and per-core baselines."""

__version__ = "0.1.0"

from .coord import CoordConfig, GlobalStateTable, SharedRepository, batch_commit
from .engine import SimConfig, Simulation, make_prefetcher, run
from .evalq import EQEntry, EvaluationQueue, RewardScheme
from .memhier import (
    CacheConfig,
    DramConfig,
    MemHierConfig,
    MemoryHierarchy,
    run_baseline_misses,
)
from .metrics import RunMetrics, compute, emit
from .rl import (
    ActionTable,
    LearnParams,
    PrefetchAction,
    QVStore,
    QVStoreGeometry,
    RlConfig,
    StateVector,
    extract_state,
    plane_index,
    sarsa_update,
    select_action,
    storage_bits,
)
from .trace import SyntheticSpec, TraceRecord, generate, parse_trace, write_trace

__all__ = [
    "ActionTable", "CacheConfig", "CoordConfig", "DramConfig", "EQEntry",
    "EvaluationQueue", "GlobalStateTable", "LearnParams", "MemHierConfig",
    "MemoryHierarchy", "PrefetchAction", "QVStore", "QVStoreGeometry",
    "RewardScheme", "RlConfig", "RunMetrics", "SharedRepository", "SimConfig",
    "Simulation", "StateVector", "SyntheticSpec", "TraceRecord",
    "batch_commit", "compute", "emit", "extract_state", "generate",
    "make_prefetcher", "parse_trace", "plane_index", "run",
    "run_baseline_misses", "sarsa_update", "select_action", "storage_bits",
    "write_trace",
]
