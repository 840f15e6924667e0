"""Serving episodes over TCP and consuming them sequentially.

The server enforces the same one-set-at-a-time rule as the in-process
session, so a remote training loop cannot cheat either. This script runs a
server in a background thread and walks one episode over a raw socket with
the frame format spelled out inline; the cfsl-stream-client package (in
client/) wraps exactly this exchange in a numpy-friendly API.
"""

import json
import socket
import struct

import numpy as np

from cfslbench import EpisodeServer, TaskConfig, build_pack

rng = np.random.default_rng(4)
pack = build_pack(
    "served",
    {f"class_{i:02d}": rng.integers(0, 256, (12, 4, 4, 1), dtype=np.uint8) for i in range(30)},
)
config = TaskConfig(nss=3, cci=1, n_way=5, k_shot=1, k_target=5, overwrite=False, seed=0)


def call(sock, seq, msg_type, **fields):
    header = {"type": msg_type, "session_id": fields.pop("session_id", None), "seq": seq}
    header.update(fields)
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode() + b"\n"
    sock.sendall(struct.pack(">I", len(head)) + head)
    (total,) = struct.unpack(">I", sock.recv(4))
    body = b""
    while len(body) < total:
        body += sock.recv(total - len(body))
    cut = body.index(b"\n")
    return json.loads(body[: cut + 1]), body[cut + 1 :]


with EpisodeServer(pack, config, port=0) as server:
    host, port = server.address
    print(f"server listening on {host}:{port}")
    sock = socket.create_connection((host, port))

    reply, _ = call(sock, 1, "HELLO", version=1, episode_index=0)
    print(f"session {reply['session_id']} opened, episode {reply['episode_index']}, "
          f"config nss={reply['config']['nss']}")

    # Asking for the target too early is refused without closing the session.
    reply, _ = call(sock, 2, "GET_TARGET")
    print(f"early GET_TARGET -> {reply['type']}: {reply['error']}")

    seq = 3
    for _ in range(config.nss):
        reply, payload = call(sock, seq, "NEXT_SUPPORT")
        shape = (reply["count"], reply["height"], reply["width"], reply["channels"])
        images = np.frombuffer(payload, dtype=np.uint8).reshape(shape)
        print(f"support {reply['position']}: images {images.shape}, labels {reply['labels']}")
        seq += 1

    reply, payload = call(sock, seq, "GET_TARGET")
    n_targets = reply["count"]
    print(f"target released: {n_targets} inputs, labels withheld")

    reply, _ = call(sock, seq + 1, "PREDICT", labels=[0] * n_targets)
    print(f"scored: accuracy {reply['accuracy']:.3f}, atm {reply['atm']}, "
          f"memory {reply['memory_bytes']} bytes")
    sock.close()
print("server stopped")
