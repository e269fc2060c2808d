"""Wire protocol shared by the messenger server and its clients.

Two channels ride on TCP:

* a text control channel: one CRLF-terminated line per frame,
  ``COMMAND arg1 ... argN\\r\\n``, UTF-8, single-space separators; a MSG
  frame is followed by exactly ``payload_len`` raw bytes, and its second
  argument is that byte count in decimal;
* a binary data channel for file transfers: chunks of a 4-byte unsigned
  big-endian length prefix plus that many opaque bytes, where a
  zero-length chunk terminates the transfer.

Codecs here are pure functions over byte buffers and are safe to call
from any number of connection handlers.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

MAX_PAYLOAD = 65536
MAX_CHUNK = 65536

_CHUNK_PREFIX = struct.Struct("!I")


class ProtocolError(ValueError):
    """Base class for wire-format violations."""


class ArityViolation(ProtocolError):
    """Argument count does not match the command's arity."""


class TokenError(ProtocolError):
    """An argument contains a space, CR, LF, or is empty."""


class MalformedFrame(ProtocolError):
    """Unknown command, bad arity, or an unparseable control line."""


class PayloadLengthError(ProtocolError):
    """MSG payload length token is not a decimal count <= MAX_PAYLOAD."""


class ChunkLengthError(ProtocolError):
    """Data chunk longer than MAX_CHUNK."""


class Command(str, Enum):
    LOGIN = "LOGIN"
    MSG = "MSG"
    INVITE = "INVITE"
    LIST = "LIST"
    PING = "PING"
    PONG = "PONG"
    FILE_OFFER = "FILE_OFFER"
    FILE_ACCEPT = "FILE_ACCEPT"
    QUIT = "QUIT"
    OK = "OK"
    ERR = "ERR"


# command -> (min args, max args)
ARITY: dict[Command, tuple[int, int]] = {
    Command.LOGIN: (1, 1),
    Command.MSG: (2, 2),
    Command.INVITE: (1, 1),
    Command.LIST: (0, 0),
    Command.PING: (1, 1),
    Command.PONG: (1, 1),
    Command.FILE_OFFER: (3, 3),
    Command.FILE_ACCEPT: (2, 2),
    Command.QUIT: (0, 0),
    Command.OK: (0, 1),
    Command.ERR: (1, 1),
}


@dataclass(frozen=True)
class Frame:
    """One control-channel message: a command plus its argument tokens."""

    command: Command
    args: tuple[str, ...] = ()

    @property
    def payload_len(self) -> int:
        """Byte count of the trailing payload; nonzero only for MSG."""
        if self.command is Command.MSG and len(self.args) == 2:
            try:
                return int(self.args[1])
            except ValueError:
                return 0
        return 0


class Decoded(NamedTuple):
    frame: Frame
    payload: bytes
    consumed: int


class NeedMore:
    """Sentinel: the buffer does not yet hold one complete frame."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "NeedMore"


NEED_MORE = NeedMore()


def _check_token(token: str) -> None:
    if not token or " " in token or "\r" in token or "\n" in token:
        raise TokenError(f"bad token: {token!r}")


def validate_frame(frame: Frame) -> None:
    """Raise unless the frame satisfies the arity and token rules."""
    lo, hi = ARITY[frame.command]
    if not lo <= len(frame.args) <= hi:
        raise ArityViolation(
            f"{frame.command.value} takes {lo}..{hi} args, got {len(frame.args)}"
        )
    for token in frame.args:
        _check_token(token)
    if frame.command is Command.MSG:
        _parse_payload_len(frame.args[1])


def _parse_payload_len(token: str) -> int:
    if not token.isdigit():
        raise PayloadLengthError(f"payload length not decimal: {token!r}")
    n = int(token)
    if n > MAX_PAYLOAD:
        raise PayloadLengthError(f"payload length {n} exceeds {MAX_PAYLOAD}")
    return n


def encode_frame(frame: Frame, payload: bytes = b"") -> bytes:
    """Serialize a frame (and its MSG payload) to wire bytes."""
    validate_frame(frame)
    if len(payload) != frame.payload_len:
        raise PayloadLengthError(
            f"payload is {len(payload)} bytes, frame declares {frame.payload_len}"
        )
    parts = [frame.command.value, *frame.args]
    line = " ".join(parts).encode("utf-8") + b"\r\n"
    return line + payload if payload else line


def decode_frame(buffer: bytes) -> Decoded | NeedMore:
    """Parse the longest complete frame at the start of ``buffer``.

    Returns NEED_MORE while the control line or the MSG payload is still
    incomplete; ``consumed`` counts every byte of line plus payload.
    """
    end = buffer.find(b"\r\n")
    if end < 0:
        return NEED_MORE
    line = buffer[:end]
    try:
        text = line.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedFrame(f"control line is not UTF-8: {exc}") from None
    tokens = text.split(" ")
    if "" in tokens:
        raise MalformedFrame(f"empty token in line: {text!r}")
    name, args = tokens[0], tuple(tokens[1:])
    try:
        command = Command(name)
    except ValueError:
        raise MalformedFrame(f"unknown command: {name!r}") from None
    lo, hi = ARITY[command]
    if not lo <= len(args) <= hi:
        raise MalformedFrame(
            f"{name} takes {lo}..{hi} args, got {len(args)}"
        )
    consumed = end + 2
    payload = b""
    if command is Command.MSG:
        n = _parse_payload_len(args[1])
        if len(buffer) - consumed < n:
            return NEED_MORE
        payload = buffer[consumed : consumed + n]
        consumed += n
    return Decoded(Frame(command, args), payload, consumed)


class FrameBuffer:
    """Incremental decoder: feed raw socket bytes, iterate complete frames."""

    def __init__(self) -> None:
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[Decoded]:
        self._buf.extend(data)
        out = []
        while True:
            result = decode_frame(bytes(self._buf))
            if result is NEED_MORE:
                return out
            del self._buf[: result.consumed]
            out.append(result)

    def pending(self) -> int:
        return len(self._buf)


def encode_chunk(data: bytes) -> bytes:
    """Length-prefix one data-channel chunk; empty data is the terminator."""
    if len(data) > MAX_CHUNK:
        raise ChunkLengthError(f"chunk of {len(data)} bytes exceeds {MAX_CHUNK}")
    return _CHUNK_PREFIX.pack(len(data)) + data


def decode_chunk(buffer: bytes) -> tuple[bytes, int] | NeedMore:
    """Parse one chunk from the buffer start: (data, consumed) or NEED_MORE."""
    if len(buffer) < _CHUNK_PREFIX.size:
        return NEED_MORE
    (length,) = _CHUNK_PREFIX.unpack_from(buffer)
    if length > MAX_CHUNK:
        raise ChunkLengthError(f"chunk of {length} bytes exceeds {MAX_CHUNK}")
    total = _CHUNK_PREFIX.size + length
    if len(buffer) < total:
        return NEED_MORE
    return bytes(buffer[_CHUNK_PREFIX.size : total]), total
