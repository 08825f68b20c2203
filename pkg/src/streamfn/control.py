"""Control plane: accepts producer connections and runs one instance per stream.

Per connection: read HELLO, resolve the deployed function, assign a stream
id, spawn an instance, acknowledge with ``HELLO(fn, stream_id)``, pump every
following frame into the instance, and on EOS or hang-up wait for the
instance to terminate before closing the connection. Errors towards the
producer travel in-band as a DATA frame carrying an ``error`` header.
"""

from __future__ import annotations

import itertools
import json
import logging
import socket
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional

from .client import AddressError, format_address, parse_address
from .events import (
    Data,
    Eos,
    FrameError,
    Hello,
    encode_frame,
    error_frame,
    read_frame,
)
from .runtime import (
    Collector,
    InstanceConfig,
    InstanceFailedError,
    InstanceHandle,
    InstanceRecord,
    SpawnError,
    spawn_instance,
)
from .sdk import FunctionRegistry, UnknownFunctionError, builtin_registry, resolve_import_path

log = logging.getLogger(__name__)

DEFAULT_LISTEN = "127.0.0.1:7070"
DEFAULT_STATS_LISTEN = "127.0.0.1:7071"
HELLO_TIMEOUT = 30.0


class DeploymentError(ValueError):
    pass


@dataclass(frozen=True)
class Deployment:
    functions: tuple[InstanceConfig, ...]
    listen: str = DEFAULT_LISTEN
    stats_listen: str = DEFAULT_STATS_LISTEN

    def __post_init__(self) -> None:
        object.__setattr__(self, "functions", tuple(self.functions))
        seen = set()
        for entry in self.functions:
            if entry.function in seen:
                raise DeploymentError(f"duplicate function name {entry.function!r}")
            seen.add(entry.function)
        for label, addr in (("listen", self.listen), ("stats_listen", self.stats_listen)):
            try:
                parse_address(addr, allow_any_port=True)
            except AddressError as exc:
                raise DeploymentError(f"{label}: {exc}") from None

    def entry(self, name: str) -> Optional[InstanceConfig]:
        for cfg in self.functions:
            if cfg.function == name:
                return cfg
        return None

    def to_json(self) -> dict[str, Any]:
        return {
            "functions": [cfg.to_json() for cfg in self.functions],
            "listen": self.listen,
            "stats_listen": self.stats_listen,
        }


def _line_of(text: str, value: Any, occurrence: int = 1) -> Optional[int]:
    needle = json.dumps(value)
    pos = -1
    for _ in range(occurrence):
        pos = text.find(needle, pos + 1)
        if pos < 0:
            return None
    return text.count("\n", 0, pos) + 1


def parse_deployment(text: str, source: str = "<config>") -> Deployment:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DeploymentError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None

    def fail(message: str, value: Any = None, occurrence: int = 1) -> DeploymentError:
        line = _line_of(text, value, occurrence) if value is not None else None
        where = f"{source}:{line}" if line else source
        return DeploymentError(f"{where}: {message}")

    if not isinstance(obj, dict):
        raise fail("top level must be an object")
    raw_functions = obj.get("functions")
    if not isinstance(raw_functions, list) or not raw_functions:
        raise fail("'functions' must be a non-empty list")
    entries = []
    seen: dict[str, int] = {}
    for i, raw in enumerate(raw_functions):
        if not isinstance(raw, dict) or not isinstance(raw.get("name"), str) or not raw["name"]:
            raise fail(f"functions[{i}]: each entry needs a string 'name'")
        name = raw["name"]
        seen[name] = seen.get(name, 0) + 1
        if seen[name] > 1:
            raise fail(f"functions[{i}]: duplicate function name {name!r}", name, seen[name])
        try:
            entries.append(InstanceConfig.from_json(raw))
        except (AddressError, ValueError, TypeError) as exc:
            output = raw.get("output")
            anchor = output.get("downstream") if isinstance(output, dict) else name
            raise fail(f"functions[{i}] ({name}): {exc}", anchor) from None
    listen = obj.get("listen", DEFAULT_LISTEN)
    stats_listen = obj.get("stats_listen", DEFAULT_STATS_LISTEN)
    for label, addr in (("listen", listen), ("stats_listen", stats_listen)):
        try:
            parse_address(addr, allow_any_port=True)
        except AddressError as exc:
            raise fail(f"{label}: {exc}", addr) from None
    return Deployment(tuple(entries), listen, stats_listen)


def load_deployment(path: str | Path) -> Deployment:
    """Read and validate a JSON deployment file."""
    path = Path(path)
    return parse_deployment(path.read_text(encoding="utf-8"), str(path))


@dataclass
class StreamStats:
    stream_id: int
    fn: str
    t_accept: int
    t_first_frame: Optional[int] = None
    t_terminated: Optional[int] = None
    events_in: int = 0
    events_out: int = 0
    first_event_time: Optional[int] = None
    last_done_time: Optional[int] = None
    state: str = "RUNNING"
    error: Optional[str] = None
    latency: dict[str, Optional[float]] = field(default_factory=dict)


@dataclass
class PlatformStats:
    live_instance_count: int = 0
    total_streams_started: int = 0
    total_streams_completed: int = 0
    streams: list[StreamStats] = field(default_factory=list)

    def summary(self) -> dict[str, int]:
        return {
            "live_instance_count": self.live_instance_count,
            "total_streams_started": self.total_streams_started,
            "total_streams_completed": self.total_streams_completed,
        }

    def stream(self, stream_id: int) -> Optional[StreamStats]:
        for s in self.streams:
            if s.stream_id == stream_id:
                return s
        return None

    def to_json_lines(self) -> str:
        lines = [json.dumps(self.summary())]
        lines += [json.dumps(asdict(s)) for s in self.streams]
        return "\n".join(lines) + "\n"


class _StatsBook:
    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._started = 0
        self._completed = 0
        self._streams: dict[int, StreamStats] = {}

    def started(self, stream_id: int, fn: str, t_accept: int) -> None:
        with self._lock:
            self._started += 1
            self._streams[stream_id] = StreamStats(stream_id, fn, t_accept)

    def first_frame(self, stream_id: int, t: int) -> None:
        with self._lock:
            self._streams[stream_id].t_first_frame = t

    def completed(self, record: InstanceRecord) -> None:
        with self._lock:
            s = self._streams[record.stream_id]
            s.t_terminated = record.transitions.get("TERMINATED", time.time_ns())
            s.state = record.state.name
            s.error = record.error
            s.latency = dict(record.latency)
            if record.result is not None:
                s.events_in = record.result.events_in
                s.events_out = record.result.events_out
                s.first_event_time = record.result.first_event_time
                s.last_done_time = record.result.last_done_time
            self._completed += 1

    def snapshot(self) -> PlatformStats:
        with self._lock:
            return PlatformStats(
                live_instance_count=self._started - self._completed,
                total_streams_started=self._started,
                total_streams_completed=self._completed,
                streams=[StreamStats(**asdict(s)) for s in self._streams.values()],
            )


def _listen(address: str) -> socket.socket:
    host, port = parse_address(address, allow_any_port=True)
    family = socket.AF_INET6 if ":" in host else socket.AF_INET
    return socket.create_server((host, port), family=family, backlog=128)


def _send_quietly(conn: socket.socket, frame) -> None:
    try:
        conn.sendall(encode_frame(frame))
    except OSError:
        pass


class Platform:
    """A running control plane. Use :func:`serve` to create one."""

    def __init__(self, deployment: Deployment, registry: Optional[FunctionRegistry] = None) -> None:
        self.deployment = deployment
        self.registry = registry if registry is not None else builtin_registry()
        for cfg in deployment.functions:
            name = cfg.factory_name
            if name not in self.registry and ":" in name:
                self.registry.register(name, resolve_import_path(name))
        self._stats = _StatsBook()
        self._ids = itertools.count(1)
        self._lock = threading.Lock()
        self._conns: dict[int, socket.socket] = {}
        self._handles: dict[int, InstanceHandle] = {}
        self._collectors: dict[int, Collector] = {}
        self._threads: set[threading.Thread] = set()
        self._closed = threading.Event()
        self._listener: Optional[socket.socket] = None
        self._stats_listener: Optional[socket.socket] = None
        self.spawned = 0

    # lifecycle ---------------------------------------------------------

    def start(self) -> "Platform":
        self._listener = _listen(self.deployment.listen)
        self._stats_listener = _listen(self.deployment.stats_listen)
        for target, name in ((self._accept_loop, "accept"), (self._stats_loop, "stats")):
            threading.Thread(target=target, name=f"platform-{name}", daemon=True).start()
        log.info("listening on %s, stats on %s", self.address, self.stats_address)
        return self

    @property
    def address(self) -> str:
        host, port = self._listener.getsockname()[:2]
        return format_address(host, port)

    @property
    def stats_address(self) -> str:
        host, port = self._stats_listener.getsockname()[:2]
        return format_address(host, port)

    def close(self, timeout: float = 10.0) -> None:
        """Stop accepting, end all open streams, and wait for their instances."""
        if self._closed.is_set():
            return
        self._closed.set()
        for lst in (self._listener, self._stats_listener):
            if lst is not None:
                _shutdown(lst)
                lst.close()
        with self._lock:
            conns = list(self._conns.values())
            handles = list(self._handles.values())
            threads = list(self._threads)
        for conn in conns:
            _shutdown(conn, socket.SHUT_RD)
        for handle in handles:
            handle.abort()
        deadline = time.monotonic() + timeout
        for t in threads:
            t.join(max(0.0, deadline - time.monotonic()))

    def __enter__(self) -> "Platform":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # queries -----------------------------------------------------------

    def stats(self) -> PlatformStats:
        return self._stats.snapshot()

    def collector(self, stream_id: int) -> Optional[Collector]:
        with self._lock:
            return self._collectors.get(stream_id)

    def collected(self, function: Optional[str] = None) -> dict[int, list]:
        """Collected outputs per stream id, optionally for one function."""
        names = {s.stream_id: s.fn for s in self.stats().streams}
        with self._lock:
            items = list(self._collectors.items())
        return {
            sid: c.events()
            for sid, c in sorted(items)
            if function is None or names.get(sid) == function
        }

    def wait_quiescent(self, timeout: float = 5.0) -> bool:
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            if self.stats().live_instance_count == 0:
                return True
            time.sleep(0.005)
        return self.stats().live_instance_count == 0

    # internals ---------------------------------------------------------

    def _accept_loop(self) -> None:
        while not self._closed.is_set():
            try:
                conn, _ = self._listener.accept()
            except OSError:
                break
            t_accept = time.time_ns()
            stream_id = next(self._ids)
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            t = threading.Thread(
                target=self._serve_connection,
                args=(conn, stream_id, t_accept),
                name=f"pump-{stream_id}",
                daemon=True,
            )
            with self._lock:
                self._conns[stream_id] = conn
                self._threads.add(t)
            t.start()

    def _serve_connection(self, conn: socket.socket, stream_id: int, t_accept: int) -> None:
        reader = conn.makefile("rb")
        try:
            self._pump(conn, reader, stream_id, t_accept)
        except Exception:
            log.exception("stream %d: connection handler crashed", stream_id)
        finally:
            reader.close()
            _shutdown(conn)
            conn.close()
            with self._lock:
                self._conns.pop(stream_id, None)
                self._handles.pop(stream_id, None)
                self._threads.discard(threading.current_thread())

    def _pump(self, conn: socket.socket, reader, stream_id: int, t_accept: int) -> None:
        conn.settimeout(HELLO_TIMEOUT)
        try:
            hello = read_frame(reader)
        except (FrameError, OSError) as exc:
            log.info("stream %d: bad opening frame: %s", stream_id, exc)
            return
        if not isinstance(hello, Hello):
            if hello is not None:
                _send_quietly(conn, error_frame("expected HELLO"))
            return
        conn.settimeout(None)
        cfg = self.deployment.entry(hello.function)
        if cfg is None:
            _send_quietly(conn, error_frame(f"unknown function {hello.function!r}"))
            return
        collector = Collector() if cfg.output.kind == "collect" else None
        try:
            handle = spawn_instance(cfg, self.registry, stream_id, collector=collector)
        except (UnknownFunctionError, SpawnError) as exc:
            log.warning("stream %d: spawn failed: %s", stream_id, exc)
            _send_quietly(conn, error_frame(str(exc)))
            return
        self._stats.started(stream_id, cfg.function, t_accept)
        with self._lock:
            self.spawned += 1
            self._handles[stream_id] = handle
            if handle.collector is not None:
                self._collectors[stream_id] = handle.collector
        _send_quietly(conn, Hello(cfg.function, stream_id))

        first = True
        ended = False
        while True:
            try:
                frame = read_frame(reader)
            except (FrameError, OSError) as exc:
                log.info("stream %d: closing on malformed input: %s", stream_id, exc)
                break
            if frame is None or isinstance(frame, Hello):
                break
            if isinstance(frame, Data) and first:
                self._stats.first_frame(stream_id, time.time_ns())
                first = False
            try:
                handle.deliver(frame)
            except InstanceFailedError:
                ended = True
                break
            if isinstance(frame, Eos):
                ended = True
                break
        if not ended:
            try:
                handle.deliver(Eos())
            except (InstanceFailedError, FrameError):
                pass
        record = handle.await_terminated()
        self._stats.completed(record)
        if record.error:
            _send_quietly(conn, error_frame(record.error))

    def _stats_loop(self) -> None:
        while not self._closed.is_set():
            try:
                conn, _ = self._stats_listener.accept()
            except OSError:
                break
            threading.Thread(target=self._answer_stats, args=(conn,), daemon=True).start()

    def _answer_stats(self, conn: socket.socket) -> None:
        with conn:
            conn.settimeout(2.0)
            try:
                conn.recv(1024)
            except OSError:
                pass
            try:
                conn.sendall(self.stats().to_json_lines().encode("utf-8"))
            except OSError:
                pass


def _shutdown(sock: socket.socket, how: int = socket.SHUT_RDWR) -> None:
    try:
        sock.shutdown(how)
    except OSError:
        pass


def serve(
    deployment: Deployment,
    registry: Optional[FunctionRegistry] = None,
) -> Platform:
    """Start a platform for ``deployment``; returns the running handle."""
    return Platform(deployment, registry).start()


def get_stats(platform: Platform) -> PlatformStats:
    return platform.stats()


def deployment(
    entries: Iterable[InstanceConfig],
    listen: str = "127.0.0.1:0",
    stats_listen: str = "127.0.0.1:0",
) -> Deployment:
    """Convenience constructor defaulting to ephemeral ports."""
    return Deployment(tuple(entries), listen, stats_listen)
