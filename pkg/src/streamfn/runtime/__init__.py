from .fifo import BoundedFifo, BufferClosed, EndOfStream, live_buffers
from .instance import (
    DEFAULT_BUFFER_CAPACITY,
    ChildProcessInstance,
    Collector,
    DownstreamUnreachableError,
    InProcessInstance,
    InstanceConfig,
    InstanceFailedError,
    InstanceHandle,
    InstanceRecord,
    InstanceState,
    InstanceTimeoutError,
    OutputSpec,
    SpawnError,
    spawn_instance,
)

__all__ = [
    "DEFAULT_BUFFER_CAPACITY",
    "BoundedFifo",
    "BufferClosed",
    "ChildProcessInstance",
    "Collector",
    "DownstreamUnreachableError",
    "EndOfStream",
    "InProcessInstance",
    "InstanceConfig",
    "InstanceFailedError",
    "InstanceHandle",
    "InstanceRecord",
    "InstanceState",
    "InstanceTimeoutError",
    "OutputSpec",
    "SpawnError",
    "live_buffers",
    "spawn_instance",
]
