import random

import pytest

from biokm.protocol import (
    ARITY,
    ArityViolation,
    ChunkLengthError,
    Command,
    Decoded,
    Frame,
    FrameBuffer,
    MalformedFrame,
    NEED_MORE,
    PayloadLengthError,
    TokenError,
    decode_chunk,
    decode_frame,
    encode_chunk,
    encode_frame,
)


def test_encode_login():
    wire = encode_frame(Frame(Command.LOGIN, ("lady_engineer",)))
    assert wire == b"LOGIN lady_engineer\r\n"


def test_encode_msg_with_payload():
    wire = encode_frame(Frame(Command.MSG, ("bob", "5")), b"hello")
    assert wire == b"MSG bob 5\r\nhello"


def test_encode_rejects_bad_arity():
    with pytest.raises(ArityViolation):
        encode_frame(Frame(Command.LIST, ("x",)))


def test_encode_rejects_bad_tokens():
    for bad in ("two words", "has\rcr", "has\nlf", ""):
        with pytest.raises(TokenError):
            encode_frame(Frame(Command.PING, (bad,)))


def test_encode_rejects_payload_mismatch():
    with pytest.raises(PayloadLengthError):
        encode_frame(Frame(Command.MSG, ("bob", "5")), b"hi")


def test_decode_login():
    result = decode_frame(b"LOGIN alice\r\n")
    assert result == Decoded(Frame(Command.LOGIN, ("alice",)), b"", 13)


def test_decode_incomplete_payload_needs_more():
    assert decode_frame(b"MSG bob 5\r\nhel") is NEED_MORE


def test_decode_incomplete_line_needs_more():
    assert decode_frame(b"LOGIN ali") is NEED_MORE
    assert decode_frame(b"") is NEED_MORE


def test_decode_unknown_command():
    with pytest.raises(MalformedFrame):
        decode_frame(b"BOGUS x\r\n")


def test_decode_bad_arity():
    with pytest.raises(MalformedFrame):
        decode_frame(b"LIST extra\r\n")


def test_decode_bad_payload_length():
    with pytest.raises(PayloadLengthError):
        decode_frame(b"MSG bob nope\r\n")
    with pytest.raises(PayloadLengthError):
        decode_frame(b"MSG bob 65537\r\n")


def test_decode_double_space_is_malformed():
    with pytest.raises(MalformedFrame):
        decode_frame(b"LOGIN  alice\r\n")


TOKEN_CHARS = "abcdefghijklmnopqrstuvwxyz0123456789_.-"


def random_frame(rng: random.Random) -> tuple[Frame, bytes]:
    command = rng.choice(list(Command))
    lo, hi = ARITY[command]
    n_args = rng.randint(lo, hi)
    args = [
        "".join(rng.choice(TOKEN_CHARS) for _ in range(rng.randint(1, 12)))
        for _ in range(n_args)
    ]
    payload = b""
    if command is Command.MSG:
        payload = rng.randbytes(rng.randint(0, 200))
        args[1] = str(len(payload))
    return Frame(command, tuple(args)), payload


def test_round_trip_identity_1000_frames():
    rng = random.Random(20260810)
    for _ in range(1000):
        frame, payload = random_frame(rng)
        wire = encode_frame(frame, payload)
        decoded = decode_frame(wire)
        assert decoded is not NEED_MORE
        assert decoded.frame == frame
        assert decoded.payload == payload
        assert decoded.consumed == len(wire)


def test_byte_by_byte_split_yields_same_sequence():
    rng = random.Random(7)
    frames = [random_frame(rng) for _ in range(50)]
    stream = b"".join(encode_frame(f, p) for f, p in frames)

    whole = FrameBuffer().feed(stream)
    dribble = FrameBuffer()
    split = []
    for i in range(len(stream)):
        split.extend(dribble.feed(stream[i : i + 1]))
    assert [(d.frame, d.payload) for d in whole] == [(f, p) for f, p in frames]
    assert whole == split
    assert dribble.pending() == 0


def test_decode_first_frame_unaffected_by_suffix():
    # a complete frame decodes identically no matter what follows it
    rng = random.Random(99)
    for _ in range(200):
        frame, payload = random_frame(rng)
        wire = encode_frame(frame, payload)
        suffix = rng.randbytes(rng.randint(0, 30))
        decoded = decode_frame(wire + suffix)
        assert decoded.frame == frame
        assert decoded.payload == payload
        assert decoded.consumed == len(wire)


def test_decode_stops_at_frame_boundary():
    one = encode_frame(Frame(Command.PING, ("n1",)))
    two = encode_frame(Frame(Command.QUIT))
    decoded = decode_frame(one + two)
    assert decoded.consumed == len(one)
    rest = decode_frame((one + two)[decoded.consumed :])
    assert rest.frame.command is Command.QUIT


def test_chunk_round_trip():
    rng = random.Random(3)
    for size in (0, 1, 100, 65536):
        data = rng.randbytes(size)
        wire = encode_chunk(data)
        assert wire[:4] == size.to_bytes(4, "big")
        chunk, consumed = decode_chunk(wire + b"extra")
        assert chunk == data
        assert consumed == len(wire)


def test_chunk_needs_more():
    wire = encode_chunk(b"hello")
    assert decode_chunk(wire[:3]) is NEED_MORE
    assert decode_chunk(wire[:8]) is NEED_MORE


def test_chunk_too_large():
    with pytest.raises(ChunkLengthError):
        encode_chunk(b"x" * 65537)
    with pytest.raises(ChunkLengthError):
        decode_chunk((65537).to_bytes(4, "big") + b"x" * 65537)
