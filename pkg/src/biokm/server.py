"""Multi-client relay server.

The server owns a star topology: every chat message and file transfer
passes through it.  One thread accepts control connections, one handler
thread runs per client, and each file transfer gets a dedicated data
channel on its own port.  Every frame crossing a logged-in session's
socket is counted into that session's telemetry, and every event is
appended to a JSON Lines log carrying both wall-clock and monotonic
stamps (durations are always computed on the monotonic clock).

File transfers are brokered in three steps: the sender's offer is
relayed to the recipient; the recipient's accept makes the server open
a data listener and announce the port to the recipient; once the
recipient's data connection is in, the port is announced to the sender,
whose connection is therefore always the second one accepted.  Chunks
then flow sender -> server -> recipient until the zero-length
terminator.
"""

from __future__ import annotations

import json
import socket
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from .protocol import (
    Command,
    Frame,
    FrameBuffer,
    NEED_MORE,
    ProtocolError,
    decode_chunk,
    encode_chunk,
    encode_frame,
)
from .telemetry import SessionMetrics

ACCEPT_POLL_S = 0.2
DATA_ACCEPT_TIMEOUT_S = 30.0
RECV_SIZE = 65536


def now_mono_ms() -> float:
    return time.monotonic() * 1000.0


def now_epoch_ms() -> float:
    return time.time() * 1000.0


@dataclass
class ServerConfig:
    host: str = "127.0.0.1"
    control_port: int = 0
    data_port_range: tuple[int, int] = (0, 0)  # (0, 0): ephemeral ports
    log_path: str | Path | None = None


@dataclass
class SessionRecord:
    nick: str
    connect_mono_ms: float
    connect_epoch_ms: float
    metrics: SessionMetrics
    conn: socket.socket = field(repr=False)
    send_lock: threading.Lock = field(default_factory=threading.Lock, repr=False)
    departure_mono_ms: float | None = None
    departure_epoch_ms: float | None = None


@dataclass(frozen=True)
class ServerSnapshot:
    start_mono_ms: float
    logins: int
    departures: int
    sessions: dict[str, SessionMetrics]

    @property
    def live_count(self) -> int:
        return len(self.sessions)


class _EventLog:
    def __init__(self, path: str | Path | None):
        self._lock = threading.Lock()
        self._fh = open(path, "w", encoding="utf-8") if path else None

    def write(self, kind: str, nick: str = "", peer: str = "", bytes_: int = 0, detail: str = ""):
        if self._fh is None:
            return
        rec = {
            "ts_epoch_ms": now_epoch_ms(),
            "ts_mono_ms": now_mono_ms(),
            "kind": kind,
            "nick": nick,
            "peer": peer,
            "bytes": bytes_,
            "detail": detail,
        }
        with self._lock:
            self._fh.write(json.dumps(rec) + "\n")
            self._fh.flush()

    def close(self):
        if self._fh is not None:
            with self._lock:
                self._fh.close()
                self._fh = None


class _PortAllocator:
    """Hands out bound data-channel listeners, one port per live transfer."""

    def __init__(self, host: str, port_range: tuple[int, int]):
        self._host = host
        self._range = port_range
        self._in_use: set[int] = set()
        self._lock = threading.Lock()

    def acquire(self) -> socket.socket:
        lo, hi = self._range
        if (lo, hi) == (0, 0):
            listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
            listener.bind((self._host, 0))
            listener.listen(2)
            with self._lock:
                self._in_use.add(listener.getsockname()[1])
            return listener
        with self._lock:
            for port in range(lo, hi + 1):
                if port in self._in_use:
                    continue
                listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
                try:
                    listener.bind((self._host, port))
                except OSError:
                    listener.close()
                    continue
                listener.listen(2)
                self._in_use.add(port)
                return listener
        raise OSError(f"no free data port in {lo}-{hi}")

    def release(self, listener: socket.socket):
        try:
            port = listener.getsockname()[1]
        except OSError:
            port = None
        listener.close()
        if port is not None:
            with self._lock:
                self._in_use.discard(port)


@dataclass
class _PendingTransfer:
    sender: str
    recipient: str
    filename: str
    size: int


class MessengerServer:
    """Relay server handle: start, observe via snapshots, stop."""

    def __init__(self, config: ServerConfig):
        self.config = config
        self._listener: socket.socket | None = None
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self._registry: dict[str, SessionRecord] = {}
        self._registry_lock = threading.RLock()
        self._history: list[SessionRecord] = []
        self._logins = 0
        self._departures = 0
        self._pending: list[_PendingTransfer] = []
        self._pending_lock = threading.Lock()
        self._log = _EventLog(config.log_path)
        self._ports = _PortAllocator(config.host, config.data_port_range)
        self.start_mono_ms = 0.0
        self.start_epoch_ms = 0.0

    # --- lifecycle ---------------------------------------------------------

    def start(self) -> "MessengerServer":
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        listener.bind((self.config.host, self.config.control_port))
        listener.listen(64)
        listener.settimeout(ACCEPT_POLL_S)
        self._listener = listener
        self.start_mono_ms = now_mono_ms()
        self.start_epoch_ms = now_epoch_ms()
        self._log.write("server_start", detail=f"port={self.port}")
        thread = threading.Thread(target=self._accept_loop, daemon=True, name="biokm-accept")
        thread.start()
        self._threads.append(thread)
        return self

    def stop(self):
        self._stop.set()
        if self._listener is not None:
            self._listener.close()
        with self._registry_lock:
            records = list(self._registry.values())
        for record in records:
            try:
                record.conn.close()
            except OSError:
                pass
        for thread in self._threads:
            thread.join(timeout=5.0)
        self._log.write("server_stop")
        self._log.close()

    def __enter__(self) -> "MessengerServer":
        return self

    def __exit__(self, *exc):
        self.stop()

    @property
    def port(self) -> int:
        assert self._listener is not None
        return self._listener.getsockname()[1]

    @property
    def address(self) -> tuple[str, int]:
        return (self.config.host, self.port)

    def snapshot(self) -> ServerSnapshot:
        with self._registry_lock:
            return ServerSnapshot(
                start_mono_ms=self.start_mono_ms,
                logins=self._logins,
                departures=self._departures,
                sessions={
                    nick: rec.metrics.snapshot() for nick, rec in self._registry.items()
                },
            )

    def session_history(self) -> list[SessionRecord]:
        """Departed sessions followed by live ones, counters included."""
        with self._registry_lock:
            return [*self._history, *self._registry.values()]

    # --- control channel ---------------------------------------------------

    def _accept_loop(self):
        while not self._stop.is_set():
            try:
                conn, addr = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            thread = threading.Thread(
                target=self._handle_conn, args=(conn, addr), daemon=True,
                name=f"biokm-conn-{addr[1]}",
            )
            thread.start()
            self._threads.append(thread)

    def _handle_conn(self, conn: socket.socket, addr):
        conn.settimeout(ACCEPT_POLL_S)
        buffer = FrameBuffer()
        session: SessionRecord | None = None
        try:
            while not self._stop.is_set():
                try:
                    data = conn.recv(RECV_SIZE)
                except socket.timeout:
                    continue
                except OSError:
                    break
                if not data:
                    break
                try:
                    decoded = buffer.feed(data)
                except ProtocolError as exc:
                    self._log.write(
                        "malformed",
                        nick=session.nick if session else "",
                        detail=str(exc),
                    )
                    self._send_raw(conn, session, Frame(Command.ERR, ("MALFORMED",)))
                    break
                for frame, payload, consumed in decoded:
                    if session is not None:
                        session.metrics.count_received(consumed)
                    session = self._dispatch(conn, session, frame, payload, consumed)
                    if session is _CLOSE:
                        return self._teardown(conn, None)
        finally:
            self._teardown(conn, session)

    def _teardown(self, conn: socket.socket, session: SessionRecord | None):
        if session is not None and session is not _CLOSE:
            self._unregister(session, kind="disconnect")
        try:
            conn.close()
        except OSError:
            pass

    def _dispatch(self, conn, session, frame: Frame, payload: bytes, consumed: int):
        command = frame.command
        if command is Command.PING:
            self._send_raw(conn, session, Frame(Command.PONG, frame.args))
            self._log.write("ping", nick=session.nick if session else "", detail=frame.args[0])
            return session
        if command is Command.LOGIN:
            return self._handle_login(conn, session, frame.args[0], consumed)
        if command is Command.QUIT:
            if session is not None:
                self._unregister(session, kind="quit")
            return _CLOSE
        if session is None:
            self._send_raw(conn, session, Frame(Command.ERR, ("NOT_LOGGED_IN",)))
            return session
        if command is Command.MSG:
            self._route_message(session, frame.args[0], payload)
        elif command is Command.INVITE:
            self._handle_invite(session, frame.args[0])
        elif command is Command.LIST:
            with self._registry_lock:
                nicks = ",".join(sorted(self._registry))
            reply = Frame(Command.OK, (nicks,) if nicks else ())
            self._send_frame(session, reply)
            self._log.write("list", nick=session.nick)
        elif command is Command.FILE_OFFER:
            self._handle_file_offer(session, frame)
        elif command is Command.FILE_ACCEPT:
            self._handle_file_accept(session, frame)
        else:
            # clients have no business sending OK / ERR / PONG
            self._log.write("malformed", nick=session.nick, detail=f"unexpected {command.value}")
            self._send_frame(session, Frame(Command.ERR, ("MALFORMED",)))
            self._unregister(session, kind="disconnect")
            return _CLOSE
        return session

    def _handle_login(self, conn, session, nick: str, consumed: int):
        if session is not None:
            self._send_frame(session, Frame(Command.ERR, ("ALREADY_LOGGED_IN",)))
            return session
        with self._registry_lock:
            if nick in self._registry:
                record = None
            else:
                record = SessionRecord(
                    nick=nick,
                    connect_mono_ms=now_mono_ms(),
                    connect_epoch_ms=now_epoch_ms(),
                    metrics=SessionMetrics(start_mono_ms=now_mono_ms()),
                    conn=conn,
                )
                self._registry[nick] = record
                self._logins += 1
        if record is None:
            self._send_raw(conn, None, Frame(Command.ERR, ("NICK_TAKEN",)))
            self._log.write("login_rejected", nick=nick)
            return None
        record.metrics.count_received(consumed)  # the LOGIN frame itself
        self._send_frame(record, Frame(Command.OK))
        self._log.write("login", nick=nick)
        return record

    def _unregister(self, session: SessionRecord, kind: str):
        with self._registry_lock:
            current = self._registry.get(session.nick)
            if current is not session:
                return
            del self._registry[session.nick]
            self._history.append(session)
            self._departures += 1
        session.departure_mono_ms = now_mono_ms()
        session.departure_epoch_ms = now_epoch_ms()
        session.metrics.departure_mono_ms = session.departure_mono_ms
        self._log.write(kind, nick=session.nick)

    def _route_message(self, sender: SessionRecord, to: str, payload: bytes):
        with self._registry_lock:
            target = self._registry.get(to)
        if target is None:
            self._send_frame(sender, Frame(Command.ERR, ("NO_SUCH_USER",)))
            self._log.write("message_failed", nick=sender.nick, peer=to)
            return
        relayed = Frame(Command.MSG, (sender.nick, str(len(payload))))
        self._send_frame(target, relayed, payload)
        self._log.write("message", nick=sender.nick, peer=to, bytes_=len(payload))

    def _handle_invite(self, sender: SessionRecord, invitee: str):
        with self._registry_lock:
            target = self._registry.get(invitee)
        if target is not None:
            self._send_frame(target, Frame(Command.INVITE, (sender.nick,)))
        self._log.write("invite", nick=sender.nick, peer=invitee)

    # --- data channel ------------------------------------------------------

    def _handle_file_offer(self, sender: SessionRecord, frame: Frame):
        recipient_nick, filename, size_token = frame.args
        with self._registry_lock:
            recipient = self._registry.get(recipient_nick)
        if recipient is None:
            self._send_frame(sender, Frame(Command.ERR, ("NO_SUCH_USER",)))
            self._log.write("message_failed", nick=sender.nick, peer=recipient_nick)
            return
        try:
            size = int(size_token)
        except ValueError:
            size = -1
        if size < 0:
            self._send_frame(sender, Frame(Command.ERR, ("BAD_SIZE",)))
            return
        with self._pending_lock:
            self._pending.append(
                _PendingTransfer(sender.nick, recipient_nick, filename, size)
            )
        self._send_frame(
            recipient, Frame(Command.FILE_OFFER, (sender.nick, filename, size_token))
        )
        self._log.write("file_offer", nick=sender.nick, peer=recipient_nick, bytes_=size, detail=filename)

    def _handle_file_accept(self, recipient: SessionRecord, frame: Frame):
        sender_nick = frame.args[0]
        with self._pending_lock:
            pending = next(
                (
                    p
                    for p in self._pending
                    if p.sender == sender_nick and p.recipient == recipient.nick
                ),
                None,
            )
            if pending is not None:
                self._pending.remove(pending)
        if pending is None:
            self._send_frame(recipient, Frame(Command.ERR, ("NO_SUCH_OFFER",)))
            return
        self._log.write("file_accept", nick=recipient.nick, peer=sender_nick)
        thread = threading.Thread(
            target=self._run_transfer, args=(pending,), daemon=True,
            name=f"biokm-xfer-{pending.sender}-{pending.recipient}",
        )
        thread.start()
        self._threads.append(thread)

    def _run_transfer(self, pending: _PendingTransfer):
        with self._registry_lock:
            sender = self._registry.get(pending.sender)
            recipient = self._registry.get(pending.recipient)
        if sender is None or recipient is None:
            return
        try:
            listener = self._ports.acquire()
        except OSError:
            self._send_frame(sender, Frame(Command.ERR, ("NO_DATA_PORT",)))
            self._send_frame(recipient, Frame(Command.ERR, ("NO_DATA_PORT",)))
            return
        port_token = "%05d" % listener.getsockname()[1]
        listener.settimeout(DATA_ACCEPT_TIMEOUT_S)
        relayed = 0
        try:
            # recipient connects first, sender second: accept order is identity
            self._send_frame(recipient, Frame(Command.FILE_ACCEPT, (pending.sender, port_token)))
            recipient_conn, _ = listener.accept()
            self._send_frame(sender, Frame(Command.FILE_ACCEPT, (pending.recipient, port_token)))
            sender_conn, _ = listener.accept()
        except (OSError, socket.timeout):
            self._log.write(
                "transfer_aborted", nick=pending.sender, peer=pending.recipient,
                detail="data channel never opened",
            )
            self._ports.release(listener)
            return
        try:
            relayed = self._relay_chunks(sender, recipient, sender_conn, recipient_conn)
        except _TransferAborted as exc:
            self._log.write(
                "transfer_aborted", nick=pending.sender, peer=pending.recipient,
                bytes_=exc.partial, detail=str(exc),
            )
        else:
            if relayed == pending.size:
                self._log.write(
                    "transfer_complete", nick=pending.sender, peer=pending.recipient,
                    bytes_=relayed, detail=pending.filename,
                )
            else:
                self._log.write(
                    "transfer_aborted", nick=pending.sender, peer=pending.recipient,
                    bytes_=relayed, detail=f"size mismatch: offered {pending.size}",
                )
        finally:
            for sock in (sender_conn, recipient_conn):
                try:
                    sock.close()
                except OSError:
                    pass
            self._ports.release(listener)

    def _relay_chunks(self, sender, recipient, sender_conn, recipient_conn) -> int:
        buf = bytearray()
        payload_total = 0
        sender_conn.settimeout(DATA_ACCEPT_TIMEOUT_S)
        while True:
            result = decode_chunk(bytes(buf))
            if result is NEED_MORE:
                try:
                    data = sender_conn.recv(RECV_SIZE)
                except (OSError, socket.timeout) as exc:
                    raise _TransferAborted(payload_total, f"sender read failed: {exc}")
                if not data:
                    raise _TransferAborted(payload_total, "sender closed mid-transfer")
                buf.extend(data)
                continue
            chunk, consumed = result
            del buf[:consumed]
            sender.metrics.count_received(consumed)
            wire = encode_chunk(chunk)
            try:
                recipient_conn.sendall(wire)
            except OSError as exc:
                raise _TransferAborted(payload_total, f"recipient write failed: {exc}")
            recipient.metrics.count_sent(len(wire))
            if not chunk:
                return payload_total
            payload_total += len(chunk)

    # --- plumbing ----------------------------------------------------------

    def _send_frame(self, session: SessionRecord, frame: Frame, payload: bytes = b""):
        wire = encode_frame(frame, payload)
        try:
            with session.send_lock:
                session.conn.sendall(wire)
        except OSError:
            return
        session.metrics.count_sent(len(wire))

    def _send_raw(self, conn, session, frame: Frame, payload: bytes = b""):
        if session is not None:
            self._send_frame(session, frame, payload)
            return
        try:
            conn.sendall(encode_frame(frame, payload))
        except OSError:
            pass


class _TransferAborted(Exception):
    def __init__(self, partial: int, reason: str):
        super().__init__(reason)
        self.partial = partial


_CLOSE = object()


def start_server(config: ServerConfig | None = None, **kwargs) -> MessengerServer:
    """Bind and start a relay server; raises OSError if the port is taken."""
    if config is None:
        config = ServerConfig(**kwargs)
    return MessengerServer(config).start()
