"""Producer-side connection and stats client."""

from __future__ import annotations

import json
import socket
from typing import Any

from .events import Data, Eos, Event, Hello, ProtocolError, encode_frame, read_frame


class AddressError(ValueError):
    pass


class RemoteError(RuntimeError):
    """The platform answered with an in-band error frame."""


def parse_address(address: str, *, allow_any_port: bool = False) -> tuple[str, int]:
    """Split ``host:port``; IPv6 hosts go in brackets (``[::1]:9000``).

    Port 0 (pick any free port) is only valid for listen addresses.
    """
    if not isinstance(address, str):
        raise AddressError(f"address must be a string, got {address!r}")
    host, sep, port_text = address.rpartition(":")
    if not sep or not host or not port_text.isdigit():
        raise AddressError(f"expected host:port, got {address!r}")
    if host.startswith("[") and host.endswith("]"):
        host = host[1:-1]
    elif ":" in host:
        raise AddressError(f"IPv6 host must be bracketed: {address!r}")
    if not host or any(c.isspace() for c in host):
        raise AddressError(f"bad host in {address!r}")
    port = int(port_text)
    if not (0 if allow_any_port else 1) <= port < 65536:
        raise AddressError(f"port out of range in {address!r}")
    return host, port


def format_address(host: str, port: int) -> str:
    return f"[{host}]:{port}" if ":" in host else f"{host}:{port}"


class ProducerConnection:
    """One stream to a platform: HELLO, DATA..., EOS.

    The connection is opened lazily on the first ``send`` (or explicitly via
    ``open``). With ``wait_ack`` the platform's HELLO reply is awaited so the
    assigned stream id is known and unknown functions fail fast.
    """

    def __init__(
        self,
        address: str,
        function: str,
        *,
        timeout: float | None = 10.0,
        wait_ack: bool = True,
    ) -> None:
        self.address = address
        self.function = function
        self.timeout = timeout
        self.wait_ack = wait_ack
        self.stream_id: int | None = None
        self.sent = 0
        self._sock: socket.socket | None = None
        self._reader = None

    def open(self) -> "ProducerConnection":
        if self._sock is not None:
            return self
        sock = socket.create_connection(parse_address(self.address), timeout=self.timeout)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._sock = sock
        self._reader = sock.makefile("rb")
        sock.sendall(encode_frame(Hello(self.function)))
        if self.wait_ack:
            reply = self._read_reply()
            if not isinstance(reply, Hello):
                self._teardown()
                raise ProtocolError(f"expected HELLO acknowledgement, got {reply!r}")
            self.stream_id = reply.stream_id
        sock.settimeout(None)
        return self

    def _read_reply(self):
        try:
            reply = read_frame(self._reader)
        except OSError as exc:
            raise ConnectionError(f"no reply from {self.address}: {exc}") from exc
        if reply is None:
            self._teardown()
            raise ConnectionError(f"{self.address} closed the connection")
        if isinstance(reply, Data) and "error" in reply.event.headers:
            self._teardown()
            raise RemoteError(reply.event.header("error"))
        return reply

    def send(self, event: Event) -> None:
        if self._sock is None:
            self.open()
        self._sock.sendall(encode_frame(Data(event)))
        self.sent += 1

    def close(self, *, eos: bool = True, wait: bool = False, timeout: float | None = None) -> None:
        """Finish the stream. With ``wait``, block until the platform hangs up,
        which happens once the instance has terminated."""
        if self._sock is None:
            return
        try:
            if eos:
                self._sock.sendall(encode_frame(Eos()))
            self._sock.shutdown(socket.SHUT_WR)
            if wait:
                self._sock.settimeout(timeout)
                while True:
                    frame = read_frame(self._reader)
                    if frame is None:
                        break
                    if isinstance(frame, Data) and "error" in frame.event.headers:
                        raise RemoteError(frame.event.header("error"))
        except OSError:
            pass
        finally:
            self._teardown()

    def abort(self) -> None:
        """Drop the transport without EOS."""
        self._teardown()

    def _teardown(self) -> None:
        if self._reader is not None:
            self._reader.close()
            self._reader = None
        if self._sock is not None:
            self._sock.close()
            self._sock = None

    def __enter__(self) -> "ProducerConnection":
        return self

    def __exit__(self, exc_type, *exc) -> None:
        if exc_type is None:
            self.close()
        else:
            self.abort()


def fetch_stats(address: str, timeout: float = 5.0) -> dict[str, Any]:
    """Query the stats endpoint: returns the summary plus a ``streams`` list."""
    with socket.create_connection(parse_address(address), timeout=timeout) as sock:
        sock.sendall(b"STATS\n")
        chunks = []
        while chunk := sock.recv(65536):
            chunks.append(chunk)
    lines = b"".join(chunks).decode("utf-8").splitlines()
    if not lines:
        raise ConnectionError(f"empty stats response from {address}")
    summary = json.loads(lines[0])
    summary["streams"] = [json.loads(line) for line in lines[1:] if line.strip()]
    return summary
