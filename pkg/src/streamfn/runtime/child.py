"""Child-process instance host: ``python -m streamfn.runtime.child``.

Reads its instance config from the ``STREAMFN_INSTANCE`` environment
variable. Exit codes: 0 clean termination, 1 function failure, 2 bad
configuration or spawn failure.
"""

from __future__ import annotations

import json
import logging
import os
import socket
import sys
import threading

from ..events import Data, Eos, Event, FrameError, encode_frame, read_frame
from ..sdk import OutputClosedError, UnknownFunctionError, resolve_import_path
from .instance import (
    CHILD_CONFIG_ENV,
    InProcessInstance,
    InstanceConfig,
    InstanceFailedError,
    SpawnError,
    in_child_config,
)

ACCEPT_TIMEOUT = 30.0


class _BackChannel:
    """Collector that ships outputs back to the parent over the ingest socket."""

    def __init__(self, conn: socket.socket) -> None:
        self.conn = conn
        self.lock = threading.Lock()

    def append(self, event: Event) -> None:
        try:
            with self.lock:
                self.conn.sendall(encode_frame(Data(event)))
        except OSError as exc:
            raise OutputClosedError(str(exc)) from exc


def main() -> int:
    logging.basicConfig(level=logging.WARNING, stream=sys.stderr)
    try:
        spec = json.loads(os.environ[CHILD_CONFIG_ENV])
        config = in_child_config(InstanceConfig.from_json(spec["config"]))
        factory = resolve_import_path(spec["factory_path"])
        stream_id = int(spec["stream_id"])
    except (KeyError, ValueError, UnknownFunctionError) as exc:
        print(f"ERROR bad instance config: {exc}", flush=True)
        return 2

    listener = socket.create_server(("127.0.0.1", 0))
    listener.settimeout(ACCEPT_TIMEOUT)
    # the back channel needs the connection, which only exists after accept;
    # collect outputs are routed through a holder filled in below
    holder: dict[str, _BackChannel] = {}

    class _Deferred:
        def append(self, event: Event) -> None:
            holder["chan"].append(event)

    collector = _Deferred() if config.output.kind == "collect" else None
    try:
        instance = InProcessInstance(config, factory, stream_id, collector=collector).start()
    except SpawnError as exc:
        print(f"ERROR {exc}", flush=True)
        return 2

    print(f"LISTEN {listener.getsockname()[1]}", flush=True)
    try:
        conn, _ = listener.accept()
    except OSError as exc:
        instance.abort()
        print(f"ERROR no connection from parent: {exc}", flush=True)
        return 2
    finally:
        listener.close()
    conn.settimeout(None)
    holder["chan"] = _BackChannel(conn)

    reader = conn.makefile("rb")
    eos = False
    try:
        while (frame := read_frame(reader)) is not None:
            instance.deliver(frame)
            if isinstance(frame, Eos):
                eos = True
                break
    except (FrameError, OSError) as exc:
        logging.warning("stream %d: ingest ended: %s", stream_id, exc)
    except InstanceFailedError:
        pass
    if not eos:
        try:
            instance.deliver(Eos())
        except (InstanceFailedError, FrameError):
            pass

    record = instance.await_terminated()
    print("RESULT " + json.dumps(record.to_json()), flush=True)
    reader.close()
    try:
        conn.shutdown(socket.SHUT_RDWR)
    except OSError:
        pass
    conn.close()
    return 0 if record.ok else 1


if __name__ == "__main__":
    sys.exit(main())
