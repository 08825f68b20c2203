from .metrics import (
    InvalidTimestampsError,
    MetricError,
    RunTimestamps,
    UndefinedMetricError,
    compute_overhead,
    compute_theta,
)
from .modes import (
    DEFAULT_COLD_START_S,
    MODES,
    BenchReport,
    FaasHost,
    ModeConfig,
    PlatformTarget,
    RunInvalidError,
    bench_deployment,
    canonical_mode,
    run_mode,
)
from .report import COLUMNS, read_report, write_report
from .workload import GenerationLog, WorkloadSpec, generate_stream

__all__ = [
    "COLUMNS",
    "DEFAULT_COLD_START_S",
    "MODES",
    "BenchReport",
    "FaasHost",
    "GenerationLog",
    "InvalidTimestampsError",
    "MetricError",
    "ModeConfig",
    "PlatformTarget",
    "RunInvalidError",
    "RunTimestamps",
    "UndefinedMetricError",
    "WorkloadSpec",
    "bench_deployment",
    "canonical_mode",
    "compute_overhead",
    "compute_theta",
    "generate_stream",
    "read_report",
    "run_mode",
    "write_report",
]
