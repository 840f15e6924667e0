"""Client for the episode-streaming protocol.

The server hands out one support set at a time and only releases the target
set once the whole stream was consumed; this client mirrors that cursor and
raises :class:`ProtocolError` on any violation instead of retrying. Past
support arrays are never cached here: honoring the one-set-at-a-time
restriction is the default behavior, and any bytes user code decides to
keep should be self-reported through :meth:`ClientSession.store_bytes` so
the server's memory accounting stays honest.

Wire format (mirrored from the server): every frame is a 4-byte big-endian
length prefix counting header plus payload, a newline-terminated UTF-8 JSON
header carrying ``type``, ``session_id``, ``seq`` and payload layout
(``payload_len``, ``count``, ``height``, ``width``, ``channels``), then raw
pixel bytes in pack layout (unsigned 8-bit, row-major, channel-interleaved).
"""

from __future__ import annotations

import json
import socket
import struct
from dataclasses import dataclass
from typing import Any, Iterator

import numpy as np

PROTOCOL_VERSION = 1
MAX_FRAME_BYTES = 256 * 2**20


class ProtocolError(RuntimeError):
    """The server rejected a request or sent a frame we cannot accept."""

    def __init__(self, code: str, detail: str = "") -> None:
        super().__init__(f"{code}: {detail}" if detail else code)
        self.code = code


@dataclass(frozen=True)
class ScoreRecord:
    accuracy: float
    atm: float
    memory_bytes: int
    episode_index: int


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks: list[bytes] = []
    remaining = n
    while remaining:
        chunk = sock.recv(min(remaining, 1 << 20))
        if not chunk:
            raise ConnectionError("server closed the connection")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


class ClientSession:
    """One episode over one connection; use as a context manager."""

    def __init__(self, sock: socket.socket, episode_index: int | None = None) -> None:
        self._sock = sock
        self._seq = 0
        self.session_id: str | None = None
        self.config: dict[str, Any] = {}
        self.image_shape: tuple[int, int, int] = (0, 0, 0)
        self.episode_index: int | None = None
        self.cursor = 0
        self._target_fetched = False
        hello: dict[str, Any] = {"version": PROTOCOL_VERSION}
        if episode_index is not None:
            hello["episode_index"] = int(episode_index)
        reply, _ = self._call("HELLO", hello)
        if reply["type"] != "SESSION":
            raise ProtocolError("unexpected_reply", f"expected SESSION, got {reply['type']}")
        self.session_id = reply["session_id"]
        self.config = dict(reply["config"])
        self.image_shape = (int(reply["height"]), int(reply["width"]), int(reply["channels"]))
        self.episode_index = int(reply["episode_index"])

    # -- framing ---------------------------------------------------------

    def _call(self, msg_type: str, fields: dict[str, Any], payload: bytes = b"") -> tuple[dict[str, Any], bytes]:
        self._seq += 1
        header = {"type": msg_type, "session_id": self.session_id, "seq": self._seq}
        header.update(fields)
        if payload:
            header["payload_len"] = len(payload)
        head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8") + b"\n"
        self._sock.sendall(struct.pack(">I", len(head) + len(payload)) + head + payload)
        return self._read_reply()

    def _read_reply(self) -> tuple[dict[str, Any], bytes]:
        (total,) = struct.unpack(">I", _recv_exact(self._sock, 4))
        if total == 0 or total > MAX_FRAME_BYTES:
            raise ProtocolError("bad_frame", f"frame length {total}")
        body = _recv_exact(self._sock, total)
        newline = body.find(b"\n")
        if newline < 0:
            raise ProtocolError("bad_frame", "header is not newline-terminated")
        try:
            header = json.loads(body[: newline + 1].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ProtocolError("bad_frame", str(exc)) from exc
        payload = body[newline + 1 :]
        if int(header.get("payload_len", 0)) != len(payload):
            raise ProtocolError("bad_frame", "payload length mismatch")
        if header.get("seq") != self._seq:
            raise ProtocolError("bad_frame", f"reply seq {header.get('seq')} != {self._seq}")
        if header["type"] == "ERROR":
            raise ProtocolError(header.get("error", "unknown"), header.get("detail", ""))
        return header, payload

    def _pixels(self, header: dict[str, Any], payload: bytes) -> np.ndarray:
        count = int(header["count"])
        shape = (count, int(header["height"]), int(header["width"]), int(header["channels"]))
        expected = int(np.prod(shape))
        if len(payload) != expected:
            raise ProtocolError("bad_frame", f"payload holds {len(payload)} bytes, expected {expected}")
        return np.frombuffer(payload, dtype=np.uint8).reshape(shape)

    # -- episode protocol --------------------------------------------------

    @property
    def nss(self) -> int:
        return int(self.config["nss"])

    def next_support(self) -> tuple[np.ndarray, np.ndarray]:
        """The next support set as (images, labels) arrays."""
        header, payload = self._call("NEXT_SUPPORT", {})
        if header["type"] != "SUPPORT":
            raise ProtocolError("unexpected_reply", header["type"])
        self.cursor += 1
        images = self._pixels(header, payload)
        labels = np.asarray(header["labels"], dtype=np.int64)
        return images, labels

    def request_support(self, position: int) -> tuple[np.ndarray, np.ndarray]:
        """Request an explicit 1-based position; the server enforces order."""
        header, payload = self._call("NEXT_SUPPORT", {"position": int(position)})
        if header["type"] != "SUPPORT":
            raise ProtocolError("unexpected_reply", header["type"])
        self.cursor += 1
        return self._pixels(header, payload), np.asarray(header["labels"], dtype=np.int64)

    def iter_supports(self) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        """Yield exactly nss support sets, in order, without caching any."""
        while self.cursor < self.nss:
            yield self.next_support()

    def store_bytes(self, num_bytes: int, element_width: int = 1) -> int:
        """Self-report representation bytes kept client-side; returns the
        server's running total."""
        header, _ = self._call(
            "STORE_BYTES", {"bytes": int(num_bytes), "element_width": int(element_width)}
        )
        if header["type"] != "ACK":
            raise ProtocolError("unexpected_reply", header["type"])
        return int(header["total_bytes"])

    def fetch_target(self) -> np.ndarray:
        """Target inputs (labels stay on the server until predictions)."""
        if self.cursor < self.nss:
            raise ProtocolError("target_not_ready",
                                f"{self.nss - self.cursor} support sets unconsumed")
        header, payload = self._call("GET_TARGET", {})
        if header["type"] != "TARGET":
            raise ProtocolError("unexpected_reply", header["type"])
        self._target_fetched = True
        return self._pixels(header, payload)

    def finish(self, predictions) -> ScoreRecord:
        """Submit predictions and collect the server's score record."""
        if not self._target_fetched:
            raise ProtocolError("target_not_ready", "fetch the target before finishing")
        labels = [int(p) for p in np.asarray(predictions).reshape(-1)]
        header, _ = self._call("PREDICT", {"labels": labels})
        if header["type"] != "SCORE":
            raise ProtocolError("unexpected_reply", header["type"])
        return ScoreRecord(
            accuracy=float(header["accuracy"]),
            atm=float(header["atm"]),
            memory_bytes=int(header["memory_bytes"]),
            episode_index=int(header["episode_index"]),
        )

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass

    def __enter__(self) -> "ClientSession":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def connect(address: tuple[str, int] | str, episode_index: int | None = None,
            timeout: float = 30.0) -> ClientSession:
    """Open a session against ``(host, port)`` or ``"host:port"``."""
    if isinstance(address, str):
        host, _, port = address.rpartition(":")
        address = (host or "127.0.0.1", int(port))
    sock = socket.create_connection(address, timeout=timeout)
    try:
        return ClientSession(sock, episode_index=episode_index)
    except BaseException:
        sock.close()
        raise


def iter_supports(session: ClientSession) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    return session.iter_supports()


def finish(session: ClientSession, predictions) -> ScoreRecord:
    return session.finish(predictions)
