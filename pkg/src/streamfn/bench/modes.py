"""The four execution modes compared by the benchmark.

``stream_fn``        one connection to the platform, one instance for the stream
``faas_per_event``   one fresh function per frame, at most one invocation at a time
``batch``            collect the whole stream, then one invocation over all frames
``engine_emulated``  like ``stream_fn`` but the instance sits idle for a fixed
                     cold start while frames pile up in its buffer
"""

from __future__ import annotations

import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Optional

from .._util import latency_summary_ms
from ..client import ProducerConnection, fetch_stats
from ..control import Deployment, Platform, serve
from ..events import Event
from ..runtime import InstanceConfig, OutputSpec
from ..sdk import FunctionRegistry, HandlerResult, builtin_registry, run_handler
from .metrics import RunTimestamps, compute_overhead, compute_theta
from .workload import GenerationLog, WorkloadSpec, generate_stream

log = logging.getLogger(__name__)

MODES = ("stream_fn", "faas_per_event", "batch", "engine_emulated")
ALIASES = {"stream": "stream_fn", "faas": "faas_per_event", "engine": "engine_emulated"}
DEFAULT_COLD_START_S = 118.0

STREAM_FUNCTION = "grayscale"
ENGINE_FUNCTION = "grayscale_engine"


class RunInvalidError(RuntimeError):
    """The run lost frames (or failed), so no metrics are reported."""


def canonical_mode(name: str) -> str:
    mode = ALIASES.get(name, name)
    if mode not in MODES:
        raise ValueError(f"unknown mode {name!r}; choose from {', '.join(MODES + tuple(ALIASES))}")
    return mode


@dataclass(frozen=True)
class ModeConfig:
    mode: str = "stream_fn"
    injected_cold_start_s: float = DEFAULT_COLD_START_S
    per_invocation_overhead_s: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", canonical_mode(self.mode))
        if self.injected_cold_start_s < 0:
            raise ValueError("injected_cold_start_s must be >= 0")
        if self.per_invocation_overhead_s < 0:
            raise ValueError("per_invocation_overhead_s must be >= 0")


@dataclass(frozen=True)
class PlatformTarget:
    address: str
    stats_address: str


@dataclass
class BenchReport:
    mode: str
    workload: WorkloadSpec
    timestamps: RunTimestamps
    theta: float
    overhead_s: float
    frames_sent: int
    frames_processed: int
    latencies_ns: list[int] = field(default_factory=list)
    latency: dict[str, Optional[float]] = field(default_factory=dict)
    max_drift_s: float = 0.0
    late_frames: int = 0

    def row(self) -> dict[str, Any]:
        return {
            "mode": self.mode,
            "duration_s": self.workload.duration_s,
            "t0_ns": self.timestamps.t0,
            "t1_ns": self.timestamps.t1,
            "t2_ns": self.timestamps.t2,
            "theta": self.theta,
            "overhead_s": self.overhead_s,
            "frames": self.frames_processed,
        }


def bench_deployment(
    spec: WorkloadSpec,
    cold_start_s: float = DEFAULT_COLD_START_S,
    isolation: str = "child-process",
    listen: str = "127.0.0.1:0",
    stats_listen: str = "127.0.0.1:0",
) -> Deployment:
    """Grayscale plus its engine-emulating twin with an injected cold start."""
    params = {"width": spec.width, "height": spec.height}
    capacity = max(1024, spec.n_frames)
    return Deployment(
        (
            InstanceConfig(STREAM_FUNCTION, capacity, OutputSpec("discard"), isolation, params=params),
            InstanceConfig(
                ENGINE_FUNCTION,
                capacity,
                OutputSpec("discard"),
                isolation,
                factory="grayscale",
                params=params,
                startup_delay_s=cold_start_s,
            ),
        ),
        listen,
        stats_listen,
    )


def _report(
    mode: str,
    spec: WorkloadSpec,
    gen: GenerationLog,
    t1: Optional[int],
    t2: Optional[int],
    processed: int,
    latencies_ns: list[int],
    latency: Optional[dict] = None,
) -> BenchReport:
    if processed != gen.frames_sent or t1 is None or t2 is None:
        raise RunInvalidError(
            f"{mode}: processed {processed} of {gen.frames_sent} frames; no metrics reported"
        )
    ts = RunTimestamps(gen.t0_ns, t1, t2)
    return BenchReport(
        mode=mode,
        workload=spec,
        timestamps=ts,
        theta=compute_theta(ts),
        overhead_s=compute_overhead(ts, spec.generation_s),
        frames_sent=gen.frames_sent,
        frames_processed=processed,
        latencies_ns=latencies_ns,
        latency=latency if latency is not None else latency_summary_ms(latencies_ns),
        max_drift_s=gen.max_drift_s,
        late_frames=gen.late_frames,
    )


def _run_platform(mode: ModeConfig, spec: WorkloadSpec, target: PlatformTarget) -> BenchReport:
    engine = mode.mode == "engine_emulated"
    function = ENGINE_FUNCTION if engine else STREAM_FUNCTION
    conn = ProducerConnection(target.address, function)
    try:
        gen = generate_stream(spec, conn.send)
    except BaseException:
        conn.abort()
        raise
    # the platform hangs up only after the instance terminated
    conn.close(wait=True, timeout=mode.injected_cold_start_s + spec.duration_s + 120)
    deadline = time.monotonic() + 10
    while True:
        stats = fetch_stats(target.stats_address)
        rec = next((s for s in stats["streams"] if s["stream_id"] == conn.stream_id), None)
        if rec is not None and rec["t_terminated"] is not None:
            break
        if time.monotonic() > deadline:
            raise RunInvalidError(f"stream {conn.stream_id} did not terminate")
        time.sleep(0.01)
    if rec["error"]:
        raise RunInvalidError(f"stream {conn.stream_id} failed: {rec['error']}")
    # the engine only "receives" frames once its cold start is over
    t1 = rec["first_event_time"] if engine else rec["t_first_frame"]
    if rec["events_in"] != gen.frames_sent:
        raise RunInvalidError(f"stream {conn.stream_id}: received {rec['events_in']} of {gen.frames_sent} frames")
    return _report(mode.mode, spec, gen, t1, rec["last_done_time"], rec["events_out"], [], rec["latency"])


class FaasHost:
    """Process-local per-event function host with one-time startup."""

    def __init__(
        self,
        registry: Optional[FunctionRegistry],
        function: str,
        params: dict,
        per_invocation_overhead_s: float = 0.0,
    ) -> None:
        self._registry = registry
        self.function = function
        self.params = params
        self.per_invocation_overhead_s = per_invocation_overhead_s
        self.invocations = 0
        self._lock = threading.Lock()

    def _startup(self) -> FunctionRegistry:
        if self._registry is None:
            self._registry = builtin_registry()
        self._registry.create(self.function, **self.params)
        return self._registry

    def invoke(self, event: Event) -> HandlerResult:
        with self._lock:
            registry = self._registry if self.invocations else self._startup()
            self.invocations += 1
            if self.per_invocation_overhead_s:
                time.sleep(self.per_invocation_overhead_s)
            fn = registry.create(self.function, **self.params)
            return run_handler(fn, [event], lambda e: None)


def _run_faas(mode: ModeConfig, spec: WorkloadSpec, registry: Optional[FunctionRegistry]) -> BenchReport:
    host = FaasHost(
        registry, STREAM_FUNCTION, {"width": spec.width, "height": spec.height},
        mode.per_invocation_overhead_s,
    )
    submitted: list[int] = []
    futures = []
    with ThreadPoolExecutor(max_workers=1, thread_name_prefix="faas") as pool:

        def sink(event: Event) -> None:
            submitted.append(time.time_ns())
            futures.append(pool.submit(host.invoke, event))

        gen = generate_stream(spec, sink)
        results = [f.result() for f in futures]
    processed = sum(r.events_out for r in results)
    latencies = [r.last_done_time - s for r, s in zip(results, submitted)]
    t1 = results[0].first_event_time if results else None
    t2 = max((r.last_done_time for r in results), default=None)
    return _report(mode.mode, spec, gen, t1, t2, processed, latencies)


def _run_batch(spec: WorkloadSpec, registry: Optional[FunctionRegistry]) -> BenchReport:
    registry = registry or builtin_registry()
    frames: list[Event] = []
    gen = generate_stream(spec, frames.append)
    fn = registry.create(STREAM_FUNCTION, width=spec.width, height=spec.height)
    outputs: list[Event] = []
    result = run_handler(fn, frames, outputs.append)
    latencies = [done - result.first_event_time for done in result.done_ns]
    return _report("batch", spec, gen, result.first_event_time, result.last_done_time, len(outputs), latencies)


def run_mode(
    mode: ModeConfig,
    spec: WorkloadSpec,
    platform: Optional[PlatformTarget] = None,
    *,
    registry: Optional[FunctionRegistry] = None,
    isolation: str = "child-process",
) -> BenchReport:
    """Run one benchmark and compute its metrics.

    Platform modes use ``platform`` when given (its deployment must define
    ``grayscale`` and ``grayscale_engine``); otherwise a private platform is
    started for the run with ``bench_deployment``.
    """
    if mode.mode == "faas_per_event":
        return _run_faas(mode, spec, registry)
    if mode.mode == "batch":
        return _run_batch(spec, registry)
    if platform is not None:
        return _run_platform(mode, spec, platform)
    own: Platform = serve(bench_deployment(spec, mode.injected_cold_start_s, isolation), registry)
    try:
        return _run_platform(mode, spec, PlatformTarget(own.address, own.stats_address))
    finally:
        own.close()
