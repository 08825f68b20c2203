"""One function instance per stream.

An instance owns a bounded FIFO, a handler thread that drives the user
function, and an output emitter. Lifecycle::

    CREATED -> INITIALIZING -> RUNNING -> DRAINING -> TERMINATED

The buffer is allocated while initializing and released on termination.
Instances are hosted in-process (a thread) or in a child process that speaks
the frame protocol on a loopback socket.
"""

from __future__ import annotations

import enum
import json
import logging
import os
import queue
import socket
import subprocess
import sys
import threading
import time
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Iterator, Optional

from .._util import latency_summary_ms
from ..client import ProducerConnection, RemoteError, parse_address
from ..events import Data, Eos, Event, FrameError, Frame, Hello, ProtocolError, encode_frame, iter_frames
from ..sdk import (
    Factory,
    FunctionFailure,
    FunctionRegistry,
    HandlerResult,
    OutputClosedError,
    run_handler,
)
from .fifo import BoundedFifo, BufferClosed, EndOfStream

log = logging.getLogger(__name__)

DEFAULT_BUFFER_CAPACITY = 1024
CHILD_CONFIG_ENV = "STREAMFN_INSTANCE"
ISOLATIONS = ("in-process", "child-process")


class SpawnError(RuntimeError):
    pass


class DownstreamUnreachableError(SpawnError):
    pass


class InstanceFailedError(RuntimeError):
    """The instance's function failed; it no longer accepts input."""


class InstanceTimeoutError(TimeoutError):
    def __init__(self, record: "InstanceRecord") -> None:
        super().__init__(f"stream {record.stream_id} not terminated (state {record.state.name})")
        self.record = record
        self.state = record.state


@dataclass(frozen=True)
class OutputSpec:
    """Where an instance's emitted events go: discard, collect, or downstream."""

    kind: str = "discard"
    address: Optional[str] = None
    function: Optional[str] = None

    def __post_init__(self) -> None:
        if self.kind not in ("discard", "collect", "downstream"):
            raise ValueError(f"unknown output kind {self.kind!r}")
        if self.kind == "downstream":
            parse_address(self.address)
            if not self.function:
                raise ValueError("downstream output needs a target function name")

    @classmethod
    def downstream(cls, address: str, function: str) -> "OutputSpec":
        return cls("downstream", address, function)

    @classmethod
    def from_json(cls, obj: Any) -> "OutputSpec":
        if obj is None:
            return cls()
        if isinstance(obj, str):
            return cls(obj)
        if isinstance(obj, dict) and "downstream" in obj:
            return cls("downstream", obj["downstream"], obj.get("function"))
        raise ValueError(f"bad output spec {obj!r}")

    def to_json(self) -> Any:
        if self.kind == "downstream":
            return {"downstream": self.address, "function": self.function}
        return self.kind


@dataclass(frozen=True)
class InstanceConfig:
    function: str
    buffer_capacity: int = DEFAULT_BUFFER_CAPACITY
    output: OutputSpec = OutputSpec()
    isolation: str = "in-process"
    # registry key when it differs from the deployed name
    factory: Optional[str] = None
    params: dict = field(default_factory=dict)
    # emulation knob: sleep before handing the first event to the function
    startup_delay_s: float = 0.0

    def __post_init__(self) -> None:
        if self.buffer_capacity < 1:
            raise ValueError(f"buffer_capacity must be >= 1, got {self.buffer_capacity}")
        if self.isolation not in ISOLATIONS:
            raise ValueError(f"isolation must be one of {ISOLATIONS}, got {self.isolation!r}")
        if self.startup_delay_s < 0:
            raise ValueError("startup_delay_s must be >= 0")

    @property
    def factory_name(self) -> str:
        return self.factory or self.function

    def to_json(self) -> dict[str, Any]:
        return {
            "name": self.function,
            "function": self.factory_name,
            "params": self.params,
            "buffer_capacity": self.buffer_capacity,
            "output": self.output.to_json(),
            "isolation": self.isolation,
            "startup_delay_s": self.startup_delay_s,
        }

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "InstanceConfig":
        name = obj["name"]
        factory = obj.get("function")
        return cls(
            function=name,
            buffer_capacity=int(obj.get("buffer_capacity", DEFAULT_BUFFER_CAPACITY)),
            output=OutputSpec.from_json(obj.get("output")),
            isolation=obj.get("isolation", "in-process"),
            factory=None if factory in (None, name) else factory,
            params=dict(obj.get("params") or {}),
            startup_delay_s=float(obj.get("startup_delay_s", 0.0)),
        )


class InstanceState(enum.IntEnum):
    CREATED = 0
    INITIALIZING = 1
    RUNNING = 2
    DRAINING = 3
    TERMINATED = 4


@dataclass
class InstanceRecord:
    stream_id: int
    function: str
    state: InstanceState = InstanceState.CREATED
    transitions: dict[str, int] = field(default_factory=dict)
    result: Optional[HandlerResult] = None
    error: Optional[str] = None
    latencies_ns: list[int] = field(default_factory=list)
    latency: dict[str, Optional[float]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self._lock = threading.Lock()
        self.transitions.setdefault(self.state.name, time.time_ns())

    def advance(self, state: InstanceState) -> bool:
        """Move forward to ``state``; backwards or repeated moves are ignored."""
        with self._lock:
            if state <= self.state:
                return False
            self.state = state
            self.transitions[state.name] = time.time_ns()
            return True

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_json(self) -> dict[str, Any]:
        return {
            "stream_id": self.stream_id,
            "function": self.function,
            "state": self.state.name,
            "transitions": dict(self.transitions),
            "result": self.result.summary() if self.result else None,
            "error": self.error,
            "latency": self.latency,
        }


class Collector:
    """Thread-safe sink for ``collect`` outputs."""

    def __init__(self) -> None:
        self._events: list[Event] = []
        self._lock = threading.Lock()

    def append(self, event: Event) -> None:
        with self._lock:
            self._events.append(event)

    def events(self) -> list[Event]:
        with self._lock:
            return list(self._events)

    def __len__(self) -> int:
        return len(self._events)


class _Emitter:
    def __init__(self, spec: OutputSpec, collector: Optional[Collector]) -> None:
        self.spec = spec
        self.collector = collector
        self.conn: Optional[ProducerConnection] = None
        if spec.kind == "downstream":
            conn = ProducerConnection(spec.address, spec.function, wait_ack=True)
            try:
                conn.open()
            except (OSError, RemoteError, ProtocolError) as exc:
                raise DownstreamUnreachableError(
                    f"downstream {spec.function}@{spec.address} unreachable: {exc}"
                ) from exc
            self.conn = conn

    def send(self, event: Event) -> None:
        if self.conn is not None:
            try:
                self.conn.send(event)
            except OSError as exc:
                raise OutputClosedError(f"downstream {self.spec.address}: {exc}") from exc
        elif self.collector is not None:
            self.collector.append(event)

    def close(self, ok: bool) -> None:
        if self.conn is not None:
            if ok:
                self.conn.close(eos=True)
            else:
                self.conn.abort()
            self.conn = None


class InstanceHandle:
    """Common surface of in-process and child-process instances."""

    record: InstanceRecord
    collector: Optional[Collector]
    config: InstanceConfig

    @property
    def stream_id(self) -> int:
        return self.record.stream_id

    @property
    def state(self) -> InstanceState:
        return self.record.state

    def deliver(self, frame: Frame) -> None:
        raise NotImplementedError

    def await_terminated(self, timeout: Optional[float] = None) -> InstanceRecord:
        raise NotImplementedError

    def abort(self) -> None:
        raise NotImplementedError


OnTerminated = Callable[[InstanceRecord], None]


class InProcessInstance(InstanceHandle):
    def __init__(
        self,
        config: InstanceConfig,
        factory: Factory,
        stream_id: int,
        collector: Optional[Collector] = None,
        on_terminated: Optional[OnTerminated] = None,
        clock: Callable[[], int] = time.time_ns,
    ) -> None:
        self.config = config
        self.record = InstanceRecord(stream_id, config.function)
        self.collector = collector
        if collector is None and config.output.kind == "collect":
            self.collector = Collector()
        self._factory = factory
        self._on_terminated = on_terminated
        self._clock = clock
        self._buffer: Optional[BoundedFifo] = None
        self._emitter: Optional[_Emitter] = None
        self._eos = False
        self._done = threading.Event()
        self._cancel = threading.Event()
        self._recv_ns: list[int] = []
        self._thread: Optional[threading.Thread] = None

    def start(self) -> "InProcessInstance":
        self.record.advance(InstanceState.INITIALIZING)
        try:
            fn = self._factory(**self.config.params)
            self._buffer = BoundedFifo(self.config.buffer_capacity)
            self._emitter = _Emitter(self.config.output, self.collector)
        except Exception as exc:
            if self._buffer is not None:
                self._buffer.release()
                self._buffer = None
            self.record.error = f"spawn failed: {exc}"
            self.record.advance(InstanceState.TERMINATED)
            self._done.set()
            if isinstance(exc, SpawnError):
                raise
            raise SpawnError(self.record.error) from exc
        self._thread = threading.Thread(
            target=self._run, args=(fn,), name=f"instance-{self.stream_id}", daemon=True
        )
        self.record.advance(InstanceState.RUNNING)
        self._thread.start()
        return self

    def _events(self, buffer: BoundedFifo) -> Iterator[Event]:
        while True:
            try:
                recv_ns, event = buffer.pop()
            except EndOfStream:
                return
            self._recv_ns.append(recv_ns)
            yield event

    def _run(self, fn) -> None:
        buffer = self._buffer
        emitter = self._emitter
        if self.config.startup_delay_s > 0:
            self._cancel.wait(self.config.startup_delay_s)
        ok = True
        try:
            result = run_handler(fn, self._events(buffer), emitter.send, self._clock)
        except FunctionFailure as failure:
            result, ok = failure.result, False
            buffer.abort()
            log.warning("stream %d: function failed: %s", self.stream_id, result.error)
        try:
            emitter.close(ok)
        except Exception as exc:  # downstream hang-up while finishing
            log.warning("stream %d: closing output failed: %s", self.stream_id, exc)
        if ok:
            # the function may return before its input ends; consume the rest
            for _ in buffer:
                pass
        self._finish(result)

    def _finish(self, result: HandlerResult) -> None:
        record = self.record
        record.result = result
        record.error = result.error
        n = min(len(result.done_ns), len(self._recv_ns))
        record.latencies_ns = [result.done_ns[i] - self._recv_ns[i] for i in range(n)]
        record.latency = latency_summary_ms(record.latencies_ns)
        self._buffer.release()
        self._buffer = None
        self._emitter = None
        record.advance(InstanceState.TERMINATED)
        if self._on_terminated is not None:
            try:
                self._on_terminated(record)
            except Exception:
                log.exception("on_terminated hook failed for stream %d", self.stream_id)
        self._done.set()

    def deliver(self, frame: Frame) -> None:
        if isinstance(frame, Data):
            if self._eos:
                raise ProtocolError("DATA after end of stream")
            buffer = self._buffer
            if buffer is None:
                raise InstanceFailedError(self.record.error or "instance terminated")
            try:
                buffer.push((self._clock(), frame.event))
            except BufferClosed:
                raise InstanceFailedError(self.record.error or "instance terminated") from None
        elif isinstance(frame, Eos):
            if self._eos:
                raise ProtocolError("duplicate EOS")
            self._eos = True
            buffer = self._buffer
            if buffer is not None:
                buffer.close()
            self.record.advance(InstanceState.DRAINING)
        elif isinstance(frame, Hello):
            raise ProtocolError("HELLO after stream start")
        else:
            raise TypeError(f"not a frame: {frame!r}")

    def await_terminated(self, timeout: Optional[float] = None) -> InstanceRecord:
        if not self._done.wait(timeout):
            raise InstanceTimeoutError(self.record)
        if self._thread is not None:
            self._thread.join()
        return self.record

    def abort(self) -> None:
        self._cancel.set()
        self._eos = True
        buffer = self._buffer
        if buffer is not None:
            buffer.abort()


def _sys_path_env() -> str:
    return os.pathsep.join(p for p in sys.path if p)


class ChildProcessInstance(InstanceHandle):
    """Instance hosted in a child Python process.

    The child prints ``LISTEN <port>`` once its instance is running, accepts a
    single loopback connection carrying DATA/EOS frames, writes collected
    outputs back as DATA frames on the same connection, and finally prints
    ``RESULT <json>``. Exit code 0 means a clean termination.
    """

    spawn_timeout = 30.0

    def __init__(
        self,
        config: InstanceConfig,
        factory_path: str,
        stream_id: int,
        collector: Optional[Collector] = None,
        on_terminated: Optional[OnTerminated] = None,
    ) -> None:
        self.config = config
        self.record = InstanceRecord(stream_id, config.function)
        self.collector = collector
        if collector is None and config.output.kind == "collect":
            self.collector = Collector()
        self.factory_path = factory_path
        self.returncode: Optional[int] = None
        self._on_terminated = on_terminated
        self._lines: "queue.Queue[Optional[str]]" = queue.Queue()
        self._stderr: list[bytes] = []
        self._proc: Optional[subprocess.Popen] = None
        self._sock: Optional[socket.socket] = None
        self._eos = False
        self._done = threading.Event()
        self._threads: list[threading.Thread] = []

    @property
    def pid(self) -> Optional[int]:
        return self._proc.pid if self._proc else None

    def _spawn_thread(self, target, name: str) -> threading.Thread:
        t = threading.Thread(target=target, name=f"{name}-{self.stream_id}", daemon=True)
        t.start()
        self._threads.append(t)
        return t

    def _read_stdout(self) -> None:
        for raw in self._proc.stdout:
            self._lines.put(raw.decode("utf-8", "replace").rstrip("\n"))
        self._lines.put(None)

    def _read_stderr(self) -> None:
        for raw in self._proc.stderr:
            self._stderr.append(raw)

    def diagnostics(self) -> str:
        return b"".join(self._stderr).decode("utf-8", "replace").strip()

    def _fail_spawn(self, message: str) -> SpawnError:
        if self._proc is not None:
            if self._proc.poll() is None:
                self._proc.kill()
            self.returncode = self._proc.wait()
            for t in self._threads:
                t.join(timeout=5)
        diag = self.diagnostics()
        self.record.error = message + (f"\n{diag}" if diag else "")
        self.record.advance(InstanceState.TERMINATED)
        self._done.set()
        return SpawnError(self.record.error)

    def start(self) -> "ChildProcessInstance":
        self.record.advance(InstanceState.INITIALIZING)
        env = dict(os.environ)
        env[CHILD_CONFIG_ENV] = json.dumps(
            {
                "stream_id": self.stream_id,
                "factory_path": self.factory_path,
                "config": self.config.to_json(),
            }
        )
        env["PYTHONPATH"] = _sys_path_env()
        try:
            self._proc = subprocess.Popen(
                [sys.executable, "-m", "streamfn.runtime.child"],
                stdin=subprocess.DEVNULL,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                env=env,
            )
        except OSError as exc:
            raise self._fail_spawn(f"cannot launch child process: {exc}") from exc
        self._spawn_thread(self._read_stdout, "child-stdout")
        self._spawn_thread(self._read_stderr, "child-stderr")
        try:
            line = self._lines.get(timeout=self.spawn_timeout)
        except queue.Empty:
            raise self._fail_spawn("child process did not start in time") from None
        if not line or not line.startswith("LISTEN "):
            raise self._fail_spawn(f"child process failed to start: {line or 'no output'}")
        try:
            port = int(line.split()[1])
            self._sock = socket.create_connection(("127.0.0.1", port), timeout=self.spawn_timeout)
            self._sock.settimeout(None)
            self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        except (ValueError, OSError) as exc:
            raise self._fail_spawn(f"cannot connect to child process: {exc}") from exc
        self.record.advance(InstanceState.RUNNING)
        self._spawn_thread(self._read_outputs, "child-outputs")
        self._waiter = threading.Thread(target=self._wait, name=f"child-wait-{self.stream_id}", daemon=True)
        self._waiter.start()
        return self

    def _read_outputs(self) -> None:
        reader = self._sock.makefile("rb")
        try:
            for frame in iter_frames(reader):
                if isinstance(frame, Data) and self.collector is not None:
                    self.collector.append(frame.event)
        except (FrameError, OSError):
            pass
        finally:
            reader.close()

    def _wait(self) -> None:
        self.returncode = self._proc.wait()
        for t in self._threads:
            t.join()
        summary = None
        while True:
            try:
                line = self._lines.get_nowait()
            except queue.Empty:
                break
            if line and line.startswith("RESULT "):
                summary = json.loads(line[len("RESULT "):])
        self._sock.close()
        self._apply_summary(summary)
        self.record.advance(InstanceState.TERMINATED)
        if self._on_terminated is not None:
            try:
                self._on_terminated(self.record)
            except Exception:
                log.exception("on_terminated hook failed for stream %d", self.stream_id)
        self._done.set()

    def _apply_summary(self, summary: Optional[dict]) -> None:
        record = self.record
        if summary is None:
            diag = self.diagnostics()
            record.error = f"child process exited with code {self.returncode} without a result"
            if diag:
                record.error += f"\n{diag}"
            record.result = HandlerResult(error=record.error)
            return
        res = summary.get("result") or {}
        record.result = HandlerResult(
            events_in=res.get("events_in", 0),
            events_out=res.get("events_out", 0),
            first_event_time=res.get("first_event_time"),
            last_done_time=res.get("last_done_time"),
            error=res.get("error"),
        )
        record.latency = summary.get("latency") or {}
        record.error = summary.get("error")
        if self.returncode != 0 and record.error is None:
            record.error = f"child process exited with code {self.returncode}"

    def deliver(self, frame: Frame) -> None:
        if isinstance(frame, Hello):
            raise ProtocolError("HELLO after stream start")
        if self._eos:
            raise ProtocolError("frame after end of stream")
        if isinstance(frame, Eos):
            self._eos = True
            self.record.advance(InstanceState.DRAINING)
        try:
            self._sock.sendall(encode_frame(frame))
            if self._eos:
                self._sock.shutdown(socket.SHUT_WR)
        except OSError as exc:
            if isinstance(frame, Eos):
                return
            raise InstanceFailedError(self.record.error or f"child process gone: {exc}") from exc

    def await_terminated(self, timeout: Optional[float] = None) -> InstanceRecord:
        if not self._done.wait(timeout):
            raise InstanceTimeoutError(self.record)
        return self.record

    def abort(self) -> None:
        self._eos = True
        if self._proc is not None and self._proc.poll() is None:
            self._proc.kill()


def spawn_instance(
    config: InstanceConfig,
    registry: FunctionRegistry,
    stream_id: int,
    *,
    collector: Optional[Collector] = None,
    on_terminated: Optional[OnTerminated] = None,
) -> InstanceHandle:
    """Create and start an instance for one stream.

    Unknown functions raise UnknownFunctionError before anything is allocated.
    """
    factory = registry.factory(config.factory_name)
    if config.isolation == "in-process":
        return InProcessInstance(
            config, factory, stream_id, collector=collector, on_terminated=on_terminated
        ).start()
    path = registry.import_path(config.factory_name)
    if path is None:
        raise SpawnError(
            f"function {config.factory_name!r} has no importable factory; "
            "child-process isolation needs a module-level factory"
        )
    return ChildProcessInstance(
        config, path, stream_id, collector=collector, on_terminated=on_terminated
    ).start()


def in_child_config(config: InstanceConfig) -> InstanceConfig:
    return replace(config, isolation="in-process")
