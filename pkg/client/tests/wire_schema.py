"""Pack/config file-schema helpers used by the wire tests.

These talk only to the published on-disk formats, never to the server's
implementation, so the byte-identity checks stay an independent oracle.
"""

import json
from pathlib import Path

import numpy as np

PACK_SHAPE = (4, 4, 1)
NUM_CLASSES = 24
PER_CLASS = 12
TASK = {"nss": 3, "cci": 1, "n_way": 5, "k_shot": 1, "k_target": 5,
        "overwrite": False, "seed": 13}


def write_pack_files(directory: Path, seed: int = 9) -> dict:
    """Emit manifest.json + blob.bin per the documented pack schema."""
    h, w, c = PACK_SHAPE
    nb = h * w * c
    rng = np.random.default_rng(seed)
    classes = []
    blob = bytearray()
    for cid in range(NUM_CLASSES):
        arr = rng.integers(0, 256, size=(PER_CLASS, h, w, c), dtype=np.uint8)
        offsets = [len(blob) + i * nb for i in range(PER_CLASS)]
        blob.extend(arr.tobytes())
        classes.append({"id": cid, "name": f"class_{cid:04d}", "count": PER_CLASS,
                        "offsets": offsets})
    manifest = {"name": "wiretest", "height": h, "width": w, "channels": c,
                "classes": classes}
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, separators=(",", ":")) + "\n", encoding="utf-8"
    )
    (directory / "blob.bin").write_bytes(bytes(blob))
    return manifest


def sample_bytes(manifest: dict, blob: bytes, sample_id: int) -> bytes:
    """Resolve a global sample id through the manifest: ids count samples in
    manifest order, class by class."""
    nb = manifest["height"] * manifest["width"] * manifest["channels"]
    remaining = sample_id
    for rec in manifest["classes"]:
        if remaining < rec["count"]:
            off = rec["offsets"][remaining]
            return blob[off : off + nb]
        remaining -= rec["count"]
    raise IndexError(sample_id)
