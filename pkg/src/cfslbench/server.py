"""Episode streaming over TCP with server-side sequential enforcement.

Wire format
-----------
Every message is one frame::

    +--------------+----------------------+------------------+
    | length (4 B) | header (UTF-8 JSON)  | payload (binary) |
    +--------------+----------------------+------------------+

The length prefix is a big-endian unsigned 32-bit integer counting the
header and payload bytes together. The header is a JSON object terminated
by a single newline byte (the newline belongs to the header); it always
carries ``type``, ``session_id``, and ``seq``, and declares any payload via
``payload_len`` plus the image layout fields ``count``, ``height``,
``width``, ``channels``. Payload pixels are raw pack-layout bytes, so a
served support set is bit-identical to the pack region it came from.

Message types (fixed strings): HELLO, SESSION, NEXT_SUPPORT, SUPPORT,
STORE_BYTES, ACK, GET_TARGET, TARGET, PREDICT, SCORE, ERROR.

A connection is a session: HELLO opens it (optionally pinning an
``episode_index``, otherwise the server assigns the next one), then the
client must walk all support sets in order before the target is released.
Out-of-order requests get an ERROR frame naming the violation and leave the
session usable; malformed frames and non-increasing ``seq`` values close
the connection. Stored bytes are self-reported by the client via
STORE_BYTES and accounted in the session's memory bank, so the SCORE frame
can report the across-task memory ratio alongside accuracy.
"""

from __future__ import annotations

import json
import socket
import socketserver
import struct
import threading
from typing import Any

from .metrics import atm
from .pack import DatasetPack
from .sampler import sample_episode
from .session import (
    EpisodeSession,
    PastSetInaccessible,
    PredictionShapeError,
    SessionClosed,
    SetNotYetAvailable,
    StreamExhausted,
    TargetNotYetAvailable,
)
from .tasks import TaskConfig, require_valid

PROTOCOL_VERSION = 1
MAX_FRAME_BYTES = 256 * 2**20
DEFAULT_IDLE_TIMEOUT = 300.0

MSG_HELLO = "HELLO"
MSG_SESSION = "SESSION"
MSG_NEXT_SUPPORT = "NEXT_SUPPORT"
MSG_SUPPORT = "SUPPORT"
MSG_STORE_BYTES = "STORE_BYTES"
MSG_ACK = "ACK"
MSG_GET_TARGET = "GET_TARGET"
MSG_TARGET = "TARGET"
MSG_PREDICT = "PREDICT"
MSG_SCORE = "SCORE"
MSG_ERROR = "ERROR"

ERR_UNSUPPORTED_VERSION = "unsupported_version"
ERR_UNKNOWN_TYPE = "unknown_type"
ERR_NO_SESSION = "no_session"
ERR_STREAM_EXHAUSTED = "stream_exhausted"
ERR_PAST_SET = "past_set_inaccessible"
ERR_SET_NOT_READY = "set_not_yet_available"
ERR_TARGET_NOT_READY = "target_not_ready"
ERR_SESSION_CLOSED = "session_closed"
ERR_PREDICTION_SHAPE = "prediction_shape_mismatch"
ERR_BAD_REQUEST = "bad_request"

_GUARD_ERRORS = {
    StreamExhausted: ERR_STREAM_EXHAUSTED,
    PastSetInaccessible: ERR_PAST_SET,
    SetNotYetAvailable: ERR_SET_NOT_READY,
    TargetNotYetAvailable: ERR_TARGET_NOT_READY,
    SessionClosed: ERR_SESSION_CLOSED,
    PredictionShapeError: ERR_PREDICTION_SHAPE,
}


class ProtocolError(RuntimeError):
    """The peer sent a frame this side cannot accept."""


def write_frame(sock: socket.socket, header: dict[str, Any], payload: bytes = b"") -> None:
    if payload:
        header = dict(header, payload_len=len(payload))
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8") + b"\n"
    total = len(head) + len(payload)
    if total > MAX_FRAME_BYTES:
        raise ProtocolError(f"frame of {total} bytes exceeds limit")
    sock.sendall(struct.pack(">I", total) + head + payload)


def _recv_exact(sock: socket.socket, n: int) -> bytes | None:
    chunks: list[bytes] = []
    remaining = n
    while remaining:
        chunk = sock.recv(min(remaining, 1 << 20))
        if not chunk:
            return None
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_frame(sock: socket.socket) -> tuple[dict[str, Any], bytes] | None:
    """One frame, or None on clean EOF. Raises ProtocolError when malformed."""
    prefix = _recv_exact(sock, 4)
    if prefix is None:
        return None
    (total,) = struct.unpack(">I", prefix)
    if total == 0 or total > MAX_FRAME_BYTES:
        raise ProtocolError(f"bad frame length {total}")
    body = _recv_exact(sock, total)
    if body is None:
        raise ProtocolError("connection dropped mid-frame")
    newline = body.find(b"\n")
    if newline < 0:
        raise ProtocolError("frame header is not newline-terminated")
    try:
        header = json.loads(body[: newline + 1].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"frame header is not JSON: {exc}") from exc
    if not isinstance(header, dict) or "type" not in header:
        raise ProtocolError("frame header must be an object with a type")
    payload = body[newline + 1 :]
    declared = int(header.get("payload_len", 0))
    if declared != len(payload):
        raise ProtocolError(f"payload is {len(payload)} bytes, header declared {declared}")
    return header, payload


class _ServerCore(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address, handler, pack: DatasetPack, config: TaskConfig,
                 idle_timeout: float) -> None:
        super().__init__(address, handler)
        self.pack = pack
        self.config = config
        self.idle_timeout = idle_timeout
        self.transcripts: dict[str, list[tuple[str, str]]] = {}
        self.bank_totals: dict[str, int] = {}
        self._lock = threading.Lock()
        self._session_counter = 0
        self._episode_counter = 0

    def open_session(self, episode_index: int | None) -> tuple[str, int]:
        with self._lock:
            if episode_index is None:
                episode_index = self._episode_counter
                self._episode_counter += 1
            session_id = f"sess-{self._session_counter}"
            self._session_counter += 1
            self.transcripts[session_id] = []
        return session_id, episode_index


class _Handler(socketserver.BaseRequestHandler):
    server: _ServerCore

    def setup(self) -> None:
        self.request.settimeout(self.server.idle_timeout)
        self.session: EpisodeSession | None = None
        self.session_id: str | None = None
        self.episode_index: int | None = None
        self.last_seq: int | None = None

    def _record(self, msg_type: str, outcome: str) -> None:
        if self.session_id is not None:
            self.server.transcripts[self.session_id].append((msg_type, outcome))

    def _reply(self, seq: Any, header: dict[str, Any], payload: bytes = b"") -> None:
        header = dict(header, session_id=self.session_id, seq=seq)
        write_frame(self.request, header, payload)

    def _error(self, seq: Any, msg_type: str, code: str, detail: str = "") -> None:
        self._record(msg_type, code)
        self._reply(seq, {"type": MSG_ERROR, "error": code, "detail": detail})

    def handle(self) -> None:
        try:
            while True:
                frame = read_frame(self.request)
                if frame is None:
                    return
                header, payload = frame
                seq = header.get("seq")
                if not isinstance(seq, int) or (self.last_seq is not None and seq <= self.last_seq):
                    return  # non-increasing seq: malformed, drop the connection
                self.last_seq = seq
                if not self._dispatch(header, payload, seq):
                    return
        except (ProtocolError, socket.timeout, ConnectionError, OSError):
            return
        finally:
            if self.session_id is not None:
                self.server.bank_totals[self.session_id] = self.session.bank.peak_bytes if self.session else 0

    def _dispatch(self, header: dict[str, Any], payload: bytes, seq: Any) -> bool:
        msg_type = header["type"]
        if msg_type == MSG_HELLO:
            return self._on_hello(header, seq)
        if self.session is None:
            self._error(seq, msg_type, ERR_NO_SESSION, "send HELLO first")
            return True
        if msg_type == MSG_NEXT_SUPPORT:
            return self._on_next_support(header, seq)
        if msg_type == MSG_STORE_BYTES:
            return self._on_store_bytes(header, seq)
        if msg_type == MSG_GET_TARGET:
            return self._on_get_target(seq)
        if msg_type == MSG_PREDICT:
            return self._on_predict(header, seq)
        self._error(seq, msg_type, ERR_UNKNOWN_TYPE, f"unknown message type {msg_type!r}")
        return True

    def _on_hello(self, header: dict[str, Any], seq: Any) -> bool:
        version = header.get("version")
        if version != PROTOCOL_VERSION:
            self._reply(seq, {"type": MSG_ERROR, "error": ERR_UNSUPPORTED_VERSION,
                              "detail": f"server speaks version {PROTOCOL_VERSION}"})
            return True
        requested = header.get("episode_index")
        self.session_id, self.episode_index = self.server.open_session(
            int(requested) if requested is not None else None
        )
        episode = sample_episode(self.server.pack, self.server.config, self.episode_index)
        self.session = EpisodeSession(self.server.pack, episode)
        self._record(MSG_HELLO, "ok")
        h, w, c = self.server.pack.image_shape
        self._reply(seq, {
            "type": MSG_SESSION,
            "config": self.server.config.to_dict(),
            "episode_index": self.episode_index,
            "height": h, "width": w, "channels": c,
            "version": PROTOCOL_VERSION,
        })
        return True

    def _on_next_support(self, header: dict[str, Any], seq: Any) -> bool:
        assert self.session is not None
        try:
            if "position" in header:
                support = self.session.support(int(header["position"]))
            else:
                support = self.session.next_support()
        except tuple(_GUARD_ERRORS) as exc:
            self._error(seq, MSG_NEXT_SUPPORT, _GUARD_ERRORS[type(exc)], str(exc))
            return True
        self._record(MSG_NEXT_SUPPORT, "ok")
        h, w, c = self.server.pack.image_shape
        self._reply(seq, {
            "type": MSG_SUPPORT,
            "position": support.position,
            "block": support.block,
            "count": int(support.images.shape[0]),
            "height": h, "width": w, "channels": c,
            "labels": [int(l) for l in support.labels],
        }, support.images.tobytes())
        return True

    def _on_store_bytes(self, header: dict[str, Any], seq: Any) -> bool:
        assert self.session is not None
        try:
            num = int(header["bytes"])
            width = int(header.get("element_width", 1))
            self.session.store_declared(f"wire/seq{seq}", num, width)
        except SessionClosed as exc:
            self._error(seq, MSG_STORE_BYTES, ERR_SESSION_CLOSED, str(exc))
            return True
        except (KeyError, TypeError, ValueError) as exc:
            self._error(seq, MSG_STORE_BYTES, ERR_BAD_REQUEST, str(exc))
            return True
        self._record(MSG_STORE_BYTES, "ok")
        self._reply(seq, {"type": MSG_ACK, "total_bytes": self.session.bank.total_bytes})
        return True

    def _on_get_target(self, seq: Any) -> bool:
        assert self.session is not None
        try:
            target = self.session.request_target()
        except tuple(_GUARD_ERRORS) as exc:
            self._error(seq, MSG_GET_TARGET, _GUARD_ERRORS[type(exc)], str(exc))
            return True
        self._record(MSG_GET_TARGET, "ok")
        h, w, c = self.server.pack.image_shape
        self._reply(seq, {
            "type": MSG_TARGET,
            "count": int(target.images.shape[0]),
            "height": h, "width": w, "channels": c,
        }, target.images.tobytes())
        return True

    def _on_predict(self, header: dict[str, Any], seq: Any) -> bool:
        assert self.session is not None
        labels = header.get("labels")
        if not isinstance(labels, list):
            self._error(seq, MSG_PREDICT, ERR_BAD_REQUEST, "PREDICT needs a labels list")
            return True
        try:
            score = self.session.submit_predictions([int(l) for l in labels])
        except tuple(_GUARD_ERRORS) as exc:
            self._error(seq, MSG_PREDICT, _GUARD_ERRORS[type(exc)], str(exc))
            return True
        except (TypeError, ValueError) as exc:
            self._error(seq, MSG_PREDICT, ERR_BAD_REQUEST, str(exc))
            return True
        self._record(MSG_PREDICT, "ok")
        report = atm(score.memory_bytes, self.session.episode)
        self._reply(seq, {
            "type": MSG_SCORE,
            "accuracy": score.accuracy,
            "atm": report.atm,
            "memory_bytes": score.memory_bytes,
            "episode_index": self.episode_index,
        })
        return True


class EpisodeServer:
    """Owns the listening socket; one thread per connection, one session each."""

    def __init__(self, pack: DatasetPack, config: TaskConfig, host: str = "127.0.0.1",
                 port: int = 0, idle_timeout: float = DEFAULT_IDLE_TIMEOUT) -> None:
        require_valid(config)
        self._core = _ServerCore((host, port), _Handler, pack, config, idle_timeout)
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self._core.server_address[:2]

    @property
    def transcripts(self) -> dict[str, list[tuple[str, str]]]:
        return self._core.transcripts

    @property
    def bank_totals(self) -> dict[str, int]:
        return self._core.bank_totals

    def serve_forever(self, poll_interval: float = 0.5) -> None:
        self._core.serve_forever(poll_interval=poll_interval)

    def start_background(self) -> None:
        self._thread = threading.Thread(
            target=self._core.serve_forever, kwargs={"poll_interval": 0.05}, daemon=True
        )
        self._thread.start()

    def shutdown(self) -> None:
        self._core.shutdown()
        self._core.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None

    def __enter__(self) -> "EpisodeServer":
        self.start_background()
        return self

    def __exit__(self, *exc_info) -> None:
        self.shutdown()
