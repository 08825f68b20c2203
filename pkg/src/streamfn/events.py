"""Events and the length-prefixed binary frame codec.

Wire layout (all integers big-endian)::

    u8  frame_type      HELLO=0x00, DATA=0x01, EOS=0x02
    u32 body_length
    body:
      HELLO  u8 fn_name_len, fn_name, u64 stream_id (0 = "assign me")
      DATA   u16 header_count, {u8 key_len, key, u16 val_len, val}*,
             u32 payload_len, payload
      EOS    (empty)
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, Iterator, Mapping, Union

HELLO = 0x00
DATA = 0x01
EOS = 0x02

MAX_KEY_LEN = 255
MAX_VALUE_LEN = 65535
MAX_HEADERS = 65535
MAX_PAYLOAD_LEN = 2**31 - 1
MAX_BODY_LEN = 2**31 - 1
MAX_FN_NAME_LEN = 255
MAX_STREAM_ID = 2**64 - 1

_PREFIX = struct.Struct(">BI")
_U8 = struct.Struct(">B")
_U16 = struct.Struct(">H")
_U32 = struct.Struct(">I")
_U64 = struct.Struct(">Q")

RESERVED_KEYS = ("ts", "seq", "fn")


class FrameError(Exception):
    """Base class for codec failures."""


class EncodingError(FrameError, ValueError):
    """A value cannot be represented on the wire."""

    def __init__(self, field_name: str, message: str) -> None:
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class ProtocolError(FrameError):
    """The byte stream does not follow the frame layout."""


class IncompleteFrameError(FrameError):
    """The byte source ended in the middle of a frame.

    ``received`` is the number of bytes of the frame read before the end;
    zero means the source ended cleanly on a frame boundary.
    """

    def __init__(self, message: str, received: int = 0) -> None:
        super().__init__(message)
        self.received = received


class EventError(ValueError):
    """Invalid Event construction (duplicate or malformed header keys)."""


def _as_bytes(value: Union[bytes, bytearray, memoryview, str, int]) -> bytes:
    if isinstance(value, bytes):
        return value
    if isinstance(value, (bytearray, memoryview)):
        return bytes(value)
    if isinstance(value, str):
        return value.encode("utf-8")
    if isinstance(value, int) and not isinstance(value, bool):
        return str(value).encode("ascii")
    raise TypeError(f"header value must be bytes, str or int, not {type(value).__name__}")


@dataclass(frozen=True)
class Event:
    """One unit of stream data: ordered headers plus an opaque payload."""

    headers: Mapping[str, bytes] = field(default_factory=dict)
    payload: bytes = b""

    def header(self, key: str) -> str | None:
        value = self.headers.get(key)
        return None if value is None else value.decode("utf-8")

    @property
    def seq(self) -> int | None:
        return _parse_u64(self.headers, "seq")

    @property
    def ts(self) -> int | None:
        return _parse_u64(self.headers, "ts")

    @property
    def fn(self) -> str | None:
        return self.header("fn")

    def with_payload(self, payload: bytes) -> "Event":
        return Event(dict(self.headers), payload)


def _parse_u64(headers: Mapping[str, bytes], key: str) -> int | None:
    raw = headers.get(key)
    if raw is None:
        return None
    if not raw.isdigit():
        raise EventError(f"reserved header {key!r} is not a decimal integer: {raw!r}")
    value = int(raw)
    if value > MAX_STREAM_ID:
        raise EventError(f"reserved header {key!r} exceeds 64 bits")
    return value


def make_event(
    headers: Iterable[tuple[str, Union[bytes, str, int]]] = (),
    payload: Union[bytes, bytearray, memoryview, str] = b"",
) -> Event:
    """Build an Event from ``(key, value)`` pairs, rejecting duplicate keys.

    String and integer values are stored as their UTF-8 / decimal bytes.
    """
    out: dict[str, bytes] = {}
    for key, value in headers:
        if not isinstance(key, str) or not key:
            raise EventError(f"header key must be a non-empty string, got {key!r}")
        if key in out:
            raise EventError(f"duplicate header key {key!r}")
        out[key] = _as_bytes(value)
    return Event(out, _as_bytes(payload))


@dataclass(frozen=True)
class Hello:
    function: str
    stream_id: int = 0
    frame_type = HELLO


@dataclass(frozen=True)
class Data:
    event: Event
    frame_type = DATA


@dataclass(frozen=True)
class Eos:
    frame_type = EOS


Frame = Union[Hello, Data, Eos]


def _check_key(key: str) -> bytes:
    if not isinstance(key, str) or not key or not key.isprintable():
        raise EncodingError("header key", f"must be a non-empty printable string, got {key!r}")
    raw = key.encode("utf-8")
    if len(raw) > MAX_KEY_LEN:
        raise EncodingError(f"header key {key[:32]!r}", f"{len(raw)} bytes exceeds {MAX_KEY_LEN}")
    return raw


def _encode_event(event: Event) -> bytes:
    headers = event.headers
    if len(headers) > MAX_HEADERS:
        raise EncodingError("headers", f"{len(headers)} entries exceeds {MAX_HEADERS}")
    parts = [_U16.pack(len(headers))]
    for key, value in headers.items():
        raw_key = _check_key(key)
        if not isinstance(value, (bytes, bytearray, memoryview)):
            raise EncodingError(f"header value {key!r}", f"must be bytes, got {type(value).__name__}")
        if len(value) > MAX_VALUE_LEN:
            raise EncodingError(f"header value {key!r}", f"{len(value)} bytes exceeds {MAX_VALUE_LEN}")
        parts += (_U8.pack(len(raw_key)), raw_key, _U16.pack(len(value)), bytes(value))
    payload = event.payload
    if len(payload) > MAX_PAYLOAD_LEN:
        raise EncodingError("payload", f"{len(payload)} bytes exceeds {MAX_PAYLOAD_LEN}")
    parts += (_U32.pack(len(payload)), bytes(payload))
    return b"".join(parts)


def encode_frame(frame: Frame) -> bytes:
    """Serialize one frame, headers in insertion order."""
    if isinstance(frame, Data):
        body = _encode_event(frame.event)
    elif isinstance(frame, Eos):
        body = b""
    elif isinstance(frame, Hello):
        name = frame.function.encode("utf-8")
        if not name or len(name) > MAX_FN_NAME_LEN:
            raise EncodingError("function name", f"length {len(name)} outside 1..{MAX_FN_NAME_LEN}")
        if not 0 <= frame.stream_id <= MAX_STREAM_ID:
            raise EncodingError("stream id", f"{frame.stream_id} is not an unsigned 64-bit value")
        body = _U8.pack(len(name)) + name + _U64.pack(frame.stream_id)
    else:
        raise TypeError(f"not a frame: {frame!r}")
    if len(body) > MAX_BODY_LEN:
        raise EncodingError("body", f"{len(body)} bytes exceeds {MAX_BODY_LEN}")
    return _PREFIX.pack(frame.frame_type, len(body)) + body


def _read_exact(src: BinaryIO, n: int, already: int) -> bytes:
    chunks = []
    remaining = n
    while remaining:
        chunk = src.read(remaining)
        if not chunk:
            got = n - remaining
            raise IncompleteFrameError(
                f"stream ended after {already + got} bytes of a frame", already + got
            )
        chunks.append(chunk)
        remaining -= len(chunk)
    return chunks[0] if len(chunks) == 1 else b"".join(chunks)


class _Body:
    """Bounds-checked cursor over a frame body."""

    def __init__(self, buf: bytes) -> None:
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        end = self.pos + n
        if end > len(self.buf):
            raise ProtocolError(f"{what} overruns the declared body length")
        out = self.buf[self.pos:end]
        self.pos = end
        return out

    def unpack(self, st: struct.Struct, what: str) -> int:
        return st.unpack(self.take(st.size, what))[0]

    def finish(self) -> None:
        if self.pos != len(self.buf):
            raise ProtocolError(f"{len(self.buf) - self.pos} trailing bytes in frame body")


def _decode_data(body: _Body) -> Data:
    count = body.unpack(_U16, "header count")
    headers: dict[str, bytes] = {}
    for _ in range(count):
        key_len = body.unpack(_U8, "header key length")
        raw_key = body.take(key_len, "header key")
        try:
            key = raw_key.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ProtocolError(f"header key is not UTF-8: {raw_key!r}") from exc
        if not key or not key.isprintable():
            raise ProtocolError(f"invalid header key {raw_key!r}")
        if key in headers:
            raise ProtocolError(f"duplicate header key {key!r}")
        val_len = body.unpack(_U16, "header value length")
        headers[key] = body.take(val_len, "header value")
    payload_len = body.unpack(_U32, "payload length")
    payload = body.take(payload_len, "payload")
    body.finish()
    return Data(Event(headers, payload))


def decode_frame(src: Union[BinaryIO, bytes, bytearray, memoryview]) -> Frame:
    """Read exactly one frame from a binary stream (or a bytes object)."""
    if isinstance(src, (bytes, bytearray, memoryview)):
        src = io.BytesIO(bytes(src))
    prefix = _read_exact(src, _PREFIX.size, 0)
    frame_type, length = _PREFIX.unpack(prefix)
    if frame_type not in (HELLO, DATA, EOS):
        raise ProtocolError(f"unknown frame type 0x{frame_type:02x}")
    if length > MAX_BODY_LEN:
        raise ProtocolError(f"declared body length {length} exceeds {MAX_BODY_LEN}")
    body = _Body(_read_exact(src, length, _PREFIX.size))
    if frame_type == DATA:
        return _decode_data(body)
    if frame_type == EOS:
        body.finish()
        return Eos()
    name_len = body.unpack(_U8, "function name length")
    raw_name = body.take(name_len, "function name")
    stream_id = body.unpack(_U64, "stream id")
    body.finish()
    try:
        name = raw_name.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ProtocolError(f"function name is not UTF-8: {raw_name!r}") from exc
    return Hello(name, stream_id)


def read_frame(src: BinaryIO) -> Frame | None:
    """Like :func:`decode_frame`, but returns None on a clean end of stream."""
    try:
        return decode_frame(src)
    except IncompleteFrameError as exc:
        if exc.received == 0:
            return None
        raise


def iter_frames(src: BinaryIO) -> Iterator[Frame]:
    while (frame := read_frame(src)) is not None:
        yield frame


def error_frame(message: str) -> Data:
    """In-band error reply sent to producers."""
    return Data(make_event([("error", message)]))
