"""Packing a directory of labeled images into the compact on-disk format.

A pack is a manifest (JSON) plus one contiguous pixel blob, so a whole
dataset can be memory-mapped and sliced without decoding anything. This
script fabricates a small ILSVRC-style directory tree, ingests it at 16x16
via the exact box filter, slims it to a fixed sample budget per class, and
splits it into class-disjoint train/val/test packs.
"""

import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

from cfslbench import SplitSpec, ingest, read_pack, slim, split_by_class, stats, write_pack

work = Path(tempfile.mkdtemp(prefix="packdemo_"))
source = work / "photos"
rng = np.random.default_rng(0)

# A toy source: 6 classes, 10 images each, 48x48 RGB.
for cname in ["ant", "bee", "crab", "dove", "eel", "fox"]:
    cdir = source / cname
    cdir.mkdir(parents=True)
    base = rng.integers(0, 256, size=(48, 48, 3), dtype=np.int16)
    for i in range(10):
        img = np.clip(base + rng.integers(-20, 21, size=(48, 48, 3)), 0, 255).astype(np.uint8)
        Image.fromarray(img).save(cdir / f"{i:03d}.png")

pack = ingest(source, target_resolution=16)
print(f"ingested: {pack.num_classes} classes, {pack.total_samples} samples, "
      f"resolution {pack.image_shape}")

# Slimming keeps the first N samples per class (manifest order), so it is
# deterministic and idempotent. This is how a 200-per-class compact variant
# of a big corpus is produced.
slimmed = slim(pack, max_per_class=8)
print(f"slimmed:  {slimmed.total_samples} samples ({slimmed.total_samples // 6} per class)")

train, val, test = split_by_class(slimmed, SplitSpec(train=4, val=1, test=1))
print(f"split:    train={train.num_classes} val={val.num_classes} test={test.num_classes} classes")

report = stats(test)
print(f"stats:    {report.total_images} images, ~{report.estimated_in_memory_bytes} bytes, "
      f"fits the 16 GiB criterion: {report.passes_size_criterion}")

write_pack(test, work / "test_pack")
again = read_pack(work / "test_pack")
print(f"round trip bit-identical: {bool(np.array_equal(again.blob, test.blob))}")
print(f"pack files live in {work / 'test_pack'}")
