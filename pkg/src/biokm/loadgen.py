"""Deterministic scripted clients driving a relay server.

A scenario compiles to a schedule: per client, a login, its chat
messages and/or file offers, and a quit, each at a seeded offset.  Gaps
between events are a fixed base plus exponential jitter from one seeded
generator, so a seed fully determines the schedule (and with it every
non-timing field of the resulting capture).

Clients run pairwise phases: both ends of a pair are online together
and exchange traffic, phases follow one another, and the run window is
padded so that the summed session time stays below the window length
(the analysis requires a stable, under-unity utilization).  An odd
trailing client talks to itself, which the protocol permits.

Transfer roles need care: FILE_ACCEPT frames carry only a peer and a
port, so a client avoids holding an unanswered outgoing offer and an
unanswered incoming accept toward the same peer at once.  When both
sides have offers up for the same pair, the lexicographically smaller
nick's transfer goes first; the server announces each data port to the
recipient before the sender, which also resolves self-transfers.
"""

from __future__ import annotations

import random
import socket
import statistics
import threading
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .protocol import (
    Command,
    Frame,
    FrameBuffer,
    NEED_MORE,
    decode_chunk,
    encode_chunk,
    encode_frame,
)
from .server import now_epoch_ms, now_mono_ms, RECV_SIZE
from .telemetry import SessionMetrics, run_record, session_record, write_capture

CHUNK_SIZE = 65536
RTT_PROBES = 5
CLIENT_TIMEOUT_S = 30.0


class InvalidSpec(ValueError):
    pass


class ScenarioFailed(RuntimeError):
    """A client hit a protocol error; the first one is the message."""


class Mode(str, Enum):
    IRCD = "ircd"
    FTP = "ftp"
    MIXED = "mixed"


@dataclass(frozen=True)
class ScenarioSpec:
    mode: Mode
    clients: int = 2
    messages_per_client: int = 0
    message_size: int = 100
    files_per_client: int = 0
    file_size: int = 4096
    inter_event_gap_ms: float = 5.0
    seed: int = 1

    def __post_init__(self):
        if self.clients < 1:
            raise InvalidSpec("need at least one client")
        if min(self.messages_per_client, self.files_per_client) < 0:
            raise InvalidSpec("event counts must be >= 0")
        if min(self.message_size, self.file_size) < 0:
            raise InvalidSpec("sizes must be >= 0")
        if self.inter_event_gap_ms < 0:
            raise InvalidSpec("gap must be >= 0")
        if self.mode is Mode.IRCD and self.files_per_client != 0:
            raise InvalidSpec("ircd scenarios transfer no files")
        if self.mode is Mode.FTP and self.messages_per_client != 0:
            raise InvalidSpec("ftp scenarios send no messages")
        if self.mode is Mode.MIXED and (
            self.messages_per_client < 1 or self.files_per_client < 1
        ):
            raise InvalidSpec("mixed scenarios need messages and files")

    @classmethod
    def from_config(cls, path) -> "ScenarioSpec":
        """Read ``key=value`` lines; '#' starts a comment."""
        fields = {}
        for raw in Path(path).read_text(encoding="utf-8").splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidSpec(f"bad config line: {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            fields[key] = value
        try:
            kwargs = {
                "mode": Mode(fields.pop("mode")),
            }
            for key, value in fields.items():
                if key == "inter_event_gap_ms":
                    kwargs[key] = float(value)
                else:
                    kwargs[key] = int(value)
            return cls(**kwargs)
        except (KeyError, ValueError, TypeError) as exc:
            raise InvalidSpec(f"bad scenario config: {exc}") from None


@dataclass(frozen=True)
class ScheduleEvent:
    at_ms: float
    client: str
    action: str  # login | message | transfer | quit
    peer: str = ""
    size: int = 0
    index: int = 0


@dataclass(frozen=True)
class Schedule:
    events: tuple[ScheduleEvent, ...]
    end_ms: float
    nicks: tuple[str, ...]

    def for_client(self, nick: str) -> list[ScheduleEvent]:
        return [e for e in self.events if e.client == nick]


def _nicks(count: int) -> list[str]:
    width = len(str(count))
    return [f"c{i + 1:0{width}d}" for i in range(count)]


def generate_schedule(spec: ScenarioSpec) -> Schedule:
    """Compile a scenario into seeded, reproducible event offsets."""
    rng = random.Random(spec.seed)
    gap = spec.inter_event_gap_ms

    def step() -> float:
        return gap + (rng.expovariate(1.0 / gap) if gap > 0 else 0.0)

    nicks = _nicks(spec.clients)
    pairs = [
        (nicks[i], nicks[i + 1]) if i + 1 < len(nicks) else (nicks[i], nicks[i])
        for i in range(0, len(nicks), 2)
    ]
    events: list[ScheduleEvent] = []
    spans: list[float] = []
    t = gap
    for a, b in pairs:
        members = (a,) if a == b else (a, b)
        directions = ((a, b),) if a == b else ((a, b), (b, a))
        started = {}
        for nick in members:
            t += step()
            events.append(ScheduleEvent(t, nick, "login"))
            started[nick] = t
        for k in range(spec.messages_per_client):
            for nick, peer in directions:
                t += step()
                events.append(
                    ScheduleEvent(t, nick, "message", peer, spec.message_size, k)
                )
        for k in range(spec.files_per_client):
            for nick, peer in directions:
                t += step()
                events.append(
                    ScheduleEvent(t, nick, "transfer", peer, spec.file_size, k)
                )
        for nick in members:
            t += step()
            events.append(ScheduleEvent(t, nick, "quit"))
            spans.append(t - started[nick])
        t += 2 * gap
    # pad the tail so summed session time stays well under the window
    active = sum(spans)
    end = max(t + 2 * gap, active / 0.7)
    return Schedule(events=tuple(events), end_ms=end, nicks=tuple(nicks))


def _body(seed: int, nick: str, kind: str, index: int, size: int) -> bytes:
    return random.Random(f"{seed}:{nick}:{kind}:{index}").randbytes(size)


class _ScriptedClient:
    """One scripted connection: a schedule executor plus a reactive reader."""

    def __init__(self, nick: str, address: tuple[str, int], spec: ScenarioSpec):
        self.nick = nick
        self.address = address
        self.spec = spec
        self.metrics = SessionMetrics()
        self.rtt_ms: float | None = None
        self.departure_epoch_ms: float | None = None
        self.error: Exception | None = None

        self._sock: socket.socket | None = None
        self._send_lock = threading.Lock()
        self._state = threading.Condition()
        self._ok_seen = 0
        self._msgs_received = 0
        self._files_received = 0
        self._offer_queue: list[tuple[str, str, int]] = []
        self._incoming_peer: str | None = None  # accepted, awaiting port or data
        self._incoming_bound = False
        self._outgoing_peer: str | None = None  # offered, awaiting port
        self._outgoing_bound = False
        self._outgoing_done = threading.Event()
        self._reader: threading.Thread | None = None
        self._data_threads: list[threading.Thread] = []

    # -- connection setup ----------------------------------------------------

    def connect_and_probe(self):
        self._sock = socket.create_connection(self.address, timeout=CLIENT_TIMEOUT_S)
        buffer = FrameBuffer()
        samples = []
        for i in range(RTT_PROBES):
            nonce = f"p{i}"
            t0 = now_mono_ms()
            self._sock.sendall(encode_frame(Frame(Command.PING, (nonce,))))
            got = None
            while got is None:
                for frame, _, _ in buffer.feed(self._sock.recv(RECV_SIZE)):
                    if frame.command is Command.PONG and frame.args[0] == nonce:
                        got = now_mono_ms() - t0
            samples.append(got)
        self.rtt_ms = statistics.median(samples)
        self._leftover = buffer

    # -- schedule execution ----------------------------------------------------

    def run(self, t0_ms: float, events: list[ScheduleEvent]):
        try:
            self._reader = threading.Thread(
                target=self._read_loop, daemon=True, name=f"client-{self.nick}-reader"
            )
            self._reader.start()
            for event in events:
                self._sleep_until(t0_ms + event.at_ms)
                if event.action == "login":
                    self._do_login()
                elif event.action == "message":
                    self._do_message(event)
                elif event.action == "transfer":
                    self._do_transfer(event)
                elif event.action == "quit":
                    self._do_quit()
        except Exception as exc:  # noqa: BLE001 - recorded, surfaced by the runner
            self.error = exc
            try:
                self._sock.close()
            except OSError:
                pass

    @staticmethod
    def _sleep_until(deadline_ms: float):
        delta = (deadline_ms - now_mono_ms()) / 1000.0
        if delta > 0:
            time.sleep(delta)

    def _do_login(self):
        self.metrics.start_mono_ms = now_mono_ms()
        self._send(Frame(Command.LOGIN, (self.nick,)))
        with self._state:
            if not self._state.wait_for(lambda: self._ok_seen > 0, CLIENT_TIMEOUT_S):
                raise ScenarioFailed(f"{self.nick}: no OK after LOGIN")

    def _do_message(self, event: ScheduleEvent):
        body = _body(self.spec.seed, self.nick, "msg", event.index, event.size)
        self._send(Frame(Command.MSG, (event.peer, str(len(body)))), body)

    def _do_transfer(self, event: ScheduleEvent):
        with self._state:
            self._state.wait_for(lambda: self._outgoing_peer is None, CLIENT_TIMEOUT_S)
            self._outgoing_peer = event.peer
            self._outgoing_bound = False
            self._outgoing_done.clear()
            self._outgoing_body = _body(
                self.spec.seed, self.nick, "file", event.index, event.size
            )
        self._send(
            Frame(
                Command.FILE_OFFER,
                (event.peer, f"f{event.index}.bin", str(event.size)),
            )
        )
        if not self._outgoing_done.wait(CLIENT_TIMEOUT_S):
            raise ScenarioFailed(f"{self.nick}: transfer to {event.peer} stalled")
        with self._state:
            self._outgoing_peer = None
            self._state.notify_all()
        self._pump_accepts()

    def _do_quit(self):
        # the schedule fixes how much traffic arrives before departure, so
        # wait for all of it: quitting early would strand the peer's sends
        with self._state:
            drained = self._state.wait_for(
                lambda: (
                    self._msgs_received >= self.spec.messages_per_client
                    and self._files_received >= self.spec.files_per_client
                    and self._incoming_peer is None
                    and not self._offer_queue
                ),
                CLIENT_TIMEOUT_S,
            )
        if not drained:
            raise ScenarioFailed(f"{self.nick}: incoming traffic never drained")
        self._send(Frame(Command.QUIT))
        self.metrics.departure_mono_ms = now_mono_ms()
        self.departure_epoch_ms = now_epoch_ms()
        try:
            self._sock.shutdown(socket.SHUT_WR)
        except OSError:
            pass

    def _send(self, frame: Frame, payload: bytes = b""):
        wire = encode_frame(frame, payload)
        with self._send_lock:
            self._sock.sendall(wire)
        self.metrics.count_sent(len(wire))

    # -- reactive side ---------------------------------------------------------

    def _read_loop(self):
        buffer = getattr(self, "_leftover", FrameBuffer())
        sock = self._sock
        sock.settimeout(0.2)
        while True:
            try:
                data = sock.recv(RECV_SIZE)
            except socket.timeout:
                continue
            except OSError:
                return
            if not data:
                return
            try:
                frames = buffer.feed(data)
            except Exception as exc:  # noqa: BLE001
                self.error = self.error or exc
                return
            for frame, payload, consumed in frames:
                self.metrics.count_received(consumed)
                self._react(frame, payload)

    def _react(self, frame: Frame, payload: bytes):
        command = frame.command
        if command is Command.OK:
            with self._state:
                self._ok_seen += 1
                self._state.notify_all()
        elif command is Command.MSG:
            with self._state:
                self._msgs_received += 1
                self._state.notify_all()
        elif command is Command.INVITE:
            pass  # notification only
        elif command is Command.FILE_OFFER:
            sender, filename, size = frame.args
            with self._state:
                self._offer_queue.append((sender, filename, int(size)))
            self._pump_accepts()
        elif command is Command.FILE_ACCEPT:
            self._bind_transfer(frame.args[0], int(frame.args[1]))
        elif command is Command.ERR:
            self.error = self.error or ScenarioFailed(
                f"{self.nick}: server error {frame.args[0]}"
            )

    def _pump_accepts(self):
        with self._state:
            if self._incoming_peer is not None or not self._offer_queue:
                return
            sender = self._offer_queue[0][0]
            # same-peer collision: the smaller nick's transfer goes first
            if (
                self._outgoing_peer == sender
                and not self._outgoing_bound
                and self.nick < sender
            ):
                return
            self._offer_queue.pop(0)
            self._incoming_peer = sender
            self._incoming_bound = False
        self._send(Frame(Command.FILE_ACCEPT, (sender, "00000")))

    def _bind_transfer(self, peer: str, port: int):
        with self._state:
            if self._incoming_peer == peer and not self._incoming_bound:
                self._incoming_bound = True
                role = "recipient"
            elif self._outgoing_peer == peer and not self._outgoing_bound:
                self._outgoing_bound = True
                role = "sender"
            else:
                self.error = self.error or ScenarioFailed(
                    f"{self.nick}: unexpected FILE_ACCEPT from {peer}"
                )
                return
        target = self._receive_file if role == "recipient" else self._send_file
        thread = threading.Thread(
            target=target, args=(port,), daemon=True,
            name=f"client-{self.nick}-{role}",
        )
        thread.start()
        self._data_threads.append(thread)

    def _send_file(self, port: int):
        body = self._outgoing_body
        try:
            with socket.create_connection(
                (self.address[0], port), timeout=CLIENT_TIMEOUT_S
            ) as conn:
                for off in range(0, len(body), CHUNK_SIZE):
                    wire = encode_chunk(body[off : off + CHUNK_SIZE])
                    conn.sendall(wire)
                    self.metrics.count_sent(len(wire))
                terminator = encode_chunk(b"")
                conn.sendall(terminator)
                self.metrics.count_sent(len(terminator))
        except OSError as exc:
            self.error = self.error or exc
        finally:
            self._outgoing_done.set()

    def _receive_file(self, port: int):
        buf = bytearray()
        try:
            with socket.create_connection(
                (self.address[0], port), timeout=CLIENT_TIMEOUT_S
            ) as conn:
                done = False
                while not done:
                    result = decode_chunk(bytes(buf))
                    if result is NEED_MORE:
                        data = conn.recv(RECV_SIZE)
                        if not data:
                            raise OSError("data channel closed early")
                        buf.extend(data)
                        continue
                    chunk, consumed = result
                    del buf[:consumed]
                    self.metrics.count_received(consumed)
                    done = not chunk
        except OSError as exc:
            self.error = self.error or exc
        finally:
            with self._state:
                self._incoming_peer = None
                self._files_received += 1
                self._state.notify_all()
            self._pump_accepts()

    def close(self):
        try:
            self._sock.close()
        except OSError:
            pass
        if self._reader is not None:
            self._reader.join(timeout=2.0)
        for thread in self._data_threads:
            thread.join(timeout=2.0)


def run_scenario(
    spec: ScenarioSpec,
    server_address: tuple[str, int],
    out_path,
    label: str | None = None,
) -> Path:
    """Execute a scenario over real TCP and write the capture log.

    The capture holds one session record per client (that client's own
    socket-boundary counters and timing) plus a run record spanning the
    whole measurement window, with server-perspective aggregate counters
    implied by loss-free conservation (client-sent equals
    server-received).
    """
    schedule = generate_schedule(spec)
    clients = [_ScriptedClient(nick, server_address, spec) for nick in schedule.nicks]
    for client in clients:
        client.connect_and_probe()

    t0 = now_mono_ms()
    threads = [
        threading.Thread(
            target=client.run,
            args=(t0, schedule.for_client(client.nick)),
            name=f"client-{client.nick}",
        )
        for client in clients
    ]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join(timeout=CLIENT_TIMEOUT_S + schedule.end_ms / 1000.0)
    # pad the window against the spans actually measured: under load the
    # sessions stretch past their scheduled offsets, and the analysis
    # needs summed session time to stay below the window
    active_ms = sum(
        (c.metrics.departure_mono_ms or now_mono_ms()) - c.metrics.start_mono_ms
        for c in clients
        if c.metrics.start_mono_ms
    )
    window_ms = max(schedule.end_ms, active_ms / 0.7)
    remaining = (t0 + window_ms - now_mono_ms()) / 1000.0
    if remaining > 0:
        time.sleep(remaining)
    end_ms = max(now_mono_ms(), t0 + window_ms)
    for client in clients:
        client.close()

    failures = [c.error for c in clients if c.error is not None]
    if failures:
        summary = "; ".join(str(f) for f in failures)
        raise ScenarioFailed(summary) from failures[0]

    records = [
        session_record(
            c.nick,
            c.metrics,
            rtt_ms=c.rtt_ms,
            departure_epoch_ms=c.departure_epoch_ms,
        )
        for c in clients
    ]
    records.append(
        run_record(
            label or spec.mode.value,
            server_start_mono_ms=t0,
            end_mono_ms=end_ms,
            packets_received=sum(c.metrics.packets_sent for c in clients),
            bytes_received=sum(c.metrics.bytes_sent for c in clients),
            packets_sent=sum(c.metrics.packets_received for c in clients),
            bytes_sent=sum(c.metrics.bytes_received for c in clients),
        )
    )
    return write_capture(out_path, records)
