import io

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import build_data_frame, build_hello_frame
from streamfn.events import (
    MAX_KEY_LEN,
    MAX_VALUE_LEN,
    Data,
    EncodingError,
    Eos,
    Event,
    EventError,
    Hello,
    IncompleteFrameError,
    ProtocolError,
    decode_frame,
    encode_frame,
    iter_frames,
    make_event,
    read_frame,
)

keys = st.text(
    alphabet=st.characters(min_codepoint=33, max_codepoint=126), min_size=1, max_size=12
)
header_lists = st.lists(st.tuples(keys, st.binary(max_size=40)), max_size=6, unique_by=lambda kv: kv[0])
events = st.builds(lambda h, p: Event(dict(h), p), header_lists, st.binary(max_size=300))
frames = st.one_of(
    st.builds(Data, events),
    st.just(Eos()),
    st.builds(
        Hello,
        st.text(alphabet="abcdefghijklmnopqrstuvwxyz_", min_size=1, max_size=20),
        st.integers(0, 2**64 - 1),
    ),
)


def test_eos_bytes():
    assert encode_frame(Eos()) == bytes.fromhex("0200000000")


def test_data_frame_bytes_match_independent_builder():
    expected = bytes.fromhex("01" "00000008" "0000" "00000002" "6162")
    assert build_data_frame([], b"ab") == expected
    assert encode_frame(Data(make_event([], b"ab"))) == expected


def test_headers_serialized_in_insertion_order():
    hdrs = [("zeta", b"1"), ("alpha", b"22"), ("seq", b"7")]
    assert encode_frame(Data(make_event(hdrs, b"p"))) == build_data_frame(hdrs, b"p")
    reordered = [hdrs[1], hdrs[0], hdrs[2]]
    assert encode_frame(Data(make_event(reordered, b"p"))) != build_data_frame(hdrs, b"p")


def test_hello_bytes():
    assert encode_frame(Hello("grayscale", 42)) == build_hello_frame("grayscale", 42)


def test_decode_eos():
    assert decode_frame(bytes.fromhex("0200000000")) == Eos()


def test_unknown_type_is_protocol_error():
    with pytest.raises(ProtocolError):
        decode_frame(bytes.fromhex("7f00000000"))


def test_truncated_is_incomplete_not_protocol():
    raw = encode_frame(Data(make_event([("a", "b")], b"hello")))
    for cut in (1, 4, 5, len(raw) - 1):
        with pytest.raises(IncompleteFrameError) as info:
            decode_frame(raw[:cut])
        assert not isinstance(info.value, ProtocolError)
        assert info.value.received == cut


def test_clean_end_of_stream():
    assert read_frame(io.BytesIO(b"")) is None
    with pytest.raises(IncompleteFrameError):
        read_frame(io.BytesIO(b"\x01\x00"))


def test_oversized_declared_length():
    with pytest.raises(ProtocolError):
        decode_frame(b"\x01\x80\x00\x00\x00")


@pytest.mark.parametrize(
    "raw",
    [
        bytes.fromhex("0200000001") + b"x",  # EOS with a body
        bytes.fromhex("01" "00000008" "0000" "00000003" "6162"),  # payload overruns body
        bytes.fromhex("01" "00000009" "0000" "00000002" "616263"),  # trailing byte
        bytes.fromhex("00" "00000003" "05" "6162"),  # hello name overruns
    ],
)
def test_malformed_bodies(raw):
    with pytest.raises(ProtocolError):
        decode_frame(raw)


def test_duplicate_key_on_wire_rejected():
    raw = build_data_frame([("a", b"1"), ("a", b"2")], b"")
    with pytest.raises(ProtocolError):
        decode_frame(raw)


def test_oversize_fields_name_the_field():
    with pytest.raises(EncodingError) as info:
        encode_frame(Data(Event({"k" * (MAX_KEY_LEN + 1): b""}, b"")))
    assert "header key" in str(info.value)
    with pytest.raises(EncodingError) as info:
        encode_frame(Data(Event({"big": b"v" * (MAX_VALUE_LEN + 1)}, b"")))
    assert "big" in info.value.field


def test_max_size_header_round_trips():
    ev = Event({"k" * MAX_KEY_LEN: b"v" * MAX_VALUE_LEN}, b"")
    assert decode_frame(encode_frame(Data(ev))) == Data(ev)


def test_prefix_safety_two_concatenated_frames():
    a = Data(make_event([("seq", 0)], b"first"))
    b = Data(make_event([("seq", 1)], b"second"))
    stream = io.BytesIO(encode_frame(a) + encode_frame(b) + encode_frame(Eos()))
    assert list(iter_frames(stream)) == [a, b, Eos()]


def test_make_event_examples():
    empty = make_event([], b"")
    assert empty.headers == {} and empty.payload == b""
    ev = make_event([("seq", "7")], "x")
    assert ev.seq == 7 and ev.payload == b"x"
    with pytest.raises(EventError):
        make_event([("a", "1"), ("a", "2")], "")


def test_reserved_keys_parse():
    ev = make_event([("ts", 1700000000000000000), ("seq", 3), ("fn", "grayscale")])
    assert ev.ts == 1700000000000000000
    assert ev.seq == 3
    assert ev.fn == "grayscale"
    with pytest.raises(EventError):
        make_event([("seq", "-1")]).seq


@settings(max_examples=500, deadline=None)
@given(frames)
def test_round_trip(frame):
    decoded = decode_frame(encode_frame(frame))
    assert decoded == frame
    if isinstance(frame, Data):
        assert list(decoded.event.headers.items()) == list(frame.event.headers.items())


@given(frames)
def test_encode_is_deterministic(frame):
    assert encode_frame(frame) == encode_frame(frame)
