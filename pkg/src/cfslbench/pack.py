"""Class-indexed image store: packing, slimming, splitting, suitability.

On disk a pack is a directory with two files:

* ``manifest.json`` - UTF-8 JSON with keys ``name``, ``height``, ``width``,
  ``channels``, and ``classes`` (a list of ``{id, name, count, offsets}``
  records, offsets being byte positions into the blob, one per sample).
* ``blob.bin`` - raw unsigned 8-bit pixels, row-major, channel-interleaved;
  every sample occupies exactly ``height * width * channels`` bytes.

The manifest is written in one canonical form (sorted keys, compact
separators, trailing newline) so a write/read round trip is bitwise
identical. Class ids are dense ``0..num_classes-1`` in manifest order, and
the global sample id of sample ``k`` of class ``c`` is the number of
samples in classes before ``c`` plus ``k``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np

SIZE_CRITERION_BYTES = 16 * 2**30


class IngestError(RuntimeError):
    """A source file could not be turned into pack samples."""


class EmptySource(RuntimeError):
    """The ingest source held no class directories."""


class UpsampleUnsupported(ValueError):
    """Box downsampling cannot enlarge an image."""


class SplitError(ValueError):
    """A split spec does not partition the pack's classes."""


@dataclass(frozen=True)
class ClassRecord:
    class_id: int
    name: str
    offsets: tuple[int, ...]

    @property
    def count(self) -> int:
        return len(self.offsets)


@dataclass(frozen=True)
class PackManifest:
    name: str
    height: int
    width: int
    channels: int
    classes: tuple[ClassRecord, ...]

    @property
    def sample_nbytes(self) -> int:
        return self.height * self.width * self.channels

    @property
    def total_samples(self) -> int:
        return sum(rec.count for rec in self.classes)

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "height": self.height,
            "width": self.width,
            "channels": self.channels,
            "classes": [
                {
                    "id": rec.class_id,
                    "name": rec.name,
                    "count": rec.count,
                    "offsets": list(rec.offsets),
                }
                for rec in self.classes
            ],
        }

    def to_json_bytes(self) -> bytes:
        """Canonical serialized form; pinned for bitwise round trips."""
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return (text + "\n").encode("utf-8")

    @staticmethod
    def from_dict(data: Mapping[str, Any]) -> "PackManifest":
        records = []
        for entry in data["classes"]:
            offsets = tuple(int(o) for o in entry["offsets"])
            if int(entry["count"]) != len(offsets):
                raise ValueError(
                    f"class {entry['id']}: count {entry['count']} != {len(offsets)} offsets"
                )
            records.append(
                ClassRecord(class_id=int(entry["id"]), name=str(entry["name"]), offsets=offsets)
            )
        return PackManifest(
            name=str(data["name"]),
            height=int(data["height"]),
            width=int(data["width"]),
            channels=int(data["channels"]),
            classes=tuple(records),
        )


class DatasetPack:
    """Immutable in-memory pack: manifest plus one contiguous pixel blob."""

    def __init__(self, manifest: PackManifest, blob: np.ndarray | bytes) -> None:
        if isinstance(blob, (bytes, bytearray)):
            arr = np.frombuffer(bytes(blob), dtype=np.uint8)
        else:
            arr = np.ascontiguousarray(blob, dtype=np.uint8).reshape(-1)
        nb = manifest.sample_nbytes
        for i, rec in enumerate(manifest.classes):
            if rec.class_id != i:
                raise ValueError(f"class ids must be dense 0..n-1, got {rec.class_id} at {i}")
            if rec.count < 1:
                raise ValueError(f"class {rec.name!r} has no samples")
            for off in rec.offsets:
                if off < 0 or off + nb > arr.size:
                    raise ValueError(f"offset {off} out of blob bounds for class {rec.name!r}")
        if arr.size != manifest.total_samples * nb:
            raise ValueError(
                f"blob holds {arr.size} bytes, expected {manifest.total_samples * nb}"
            )
        # The pack owns its storage: freeze owning arrays, copy borrowed views.
        if arr.flags.writeable:
            if not arr.flags.owndata:
                arr = arr.copy()
            arr.setflags(write=False)
        self._manifest = manifest
        self._blob = arr
        counts = [rec.count for rec in manifest.classes]
        self._starts = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)

    @property
    def manifest(self) -> PackManifest:
        return self._manifest

    @property
    def blob(self) -> np.ndarray:
        return self._blob

    @property
    def name(self) -> str:
        return self._manifest.name

    @property
    def image_shape(self) -> tuple[int, int, int]:
        m = self._manifest
        return (m.height, m.width, m.channels)

    @property
    def num_classes(self) -> int:
        return len(self._manifest.classes)

    @property
    def total_samples(self) -> int:
        return int(self._starts[-1])

    def class_count(self, class_id: int) -> int:
        return self._manifest.classes[class_id].count

    def class_name(self, class_id: int) -> str:
        return self._manifest.classes[class_id].name

    def sample_id(self, class_id: int, index: int) -> int:
        """Global id of the ``index``-th sample of ``class_id`` (manifest order)."""
        if not 0 <= index < self.class_count(class_id):
            raise IndexError(f"class {class_id} has no sample {index}")
        return int(self._starts[class_id]) + index

    def locate(self, sample_id: int) -> tuple[int, int]:
        """Map a global sample id back to (class_id, index within class)."""
        if not 0 <= sample_id < self.total_samples:
            raise IndexError(f"sample id {sample_id} out of range")
        class_id = int(np.searchsorted(self._starts, sample_id, side="right")) - 1
        return class_id, sample_id - int(self._starts[class_id])

    def pixels(self, sample_id: int) -> np.ndarray:
        """Read-only (H, W, C) view of one sample."""
        class_id, index = self.locate(sample_id)
        off = self._manifest.classes[class_id].offsets[index]
        nb = self._manifest.sample_nbytes
        return self._blob[off : off + nb].reshape(self.image_shape)

    def pixels_for(self, sample_ids: Iterable[int]) -> np.ndarray:
        """Stacked copy of pixels for several samples, shape (n, H, W, C)."""
        ids = list(sample_ids)
        out = np.empty((len(ids), *self.image_shape), dtype=np.uint8)
        for row, sid in enumerate(ids):
            out[row] = self.pixels(sid)
        return out


@dataclass(frozen=True)
class SplitSpec:
    """Class counts for a contiguous (train, val, test) split in manifest order."""

    train: int
    val: int
    test: int


@dataclass(frozen=True)
class SuitabilityReport:
    num_classes: int
    samples_per_class_min: int
    samples_per_class_max: int
    total_images: int
    resolution: tuple[int, int, int]
    estimated_in_memory_bytes: int
    passes_size_criterion: bool


def build_pack(name: str, images_by_class: Mapping[str, np.ndarray]) -> DatasetPack:
    """Assemble a pack from per-class image arrays.

    Arrays must share one (h, w, c) shape; (n, h, w) is accepted as one
    channel. Class names are ordered lexicographically, matching ingest.
    """
    if not images_by_class:
        raise EmptySource("no classes provided")
    names = sorted(images_by_class)
    shape: tuple[int, int, int] | None = None
    records: list[ClassRecord] = []
    parts: list[np.ndarray] = []
    offset = 0
    for class_id, cname in enumerate(names):
        arr = np.asarray(images_by_class[cname], dtype=np.uint8)
        if arr.ndim == 3:
            arr = arr[:, :, :, None]
        if arr.ndim != 4 or arr.shape[0] < 1:
            raise ValueError(f"class {cname!r}: expected (n, h, w, c) images")
        if shape is None:
            shape = arr.shape[1:]
        elif arr.shape[1:] != shape:
            raise ValueError(f"class {cname!r}: shape {arr.shape[1:]} != {shape}")
        nb = int(np.prod(shape))
        offsets = tuple(offset + i * nb for i in range(arr.shape[0]))
        offset += arr.shape[0] * nb
        records.append(ClassRecord(class_id, cname, offsets))
        parts.append(arr.reshape(-1))
    assert shape is not None
    manifest = PackManifest(name, shape[0], shape[1], shape[2], tuple(records))
    return DatasetPack(manifest, np.concatenate(parts))


def _box_weights(n: int, target: int) -> np.ndarray:
    """(target, n) matrix of fractional-coverage weights; rows sum to 1."""
    scale = n / target
    weights = np.zeros((target, n), dtype=np.float64)
    for i in range(target):
        start = i * n / target
        end = (i + 1) * n / target
        for r in range(int(math.floor(start)), min(int(math.ceil(end)), n)):
            overlap = min(end, r + 1) - max(start, r)
            if overlap > 0:
                weights[i, r] = overlap / scale
    return weights


def box_downsample(image: np.ndarray, target: int) -> np.ndarray:
    """Exact area-averaging box filter down to ``target`` x ``target``.

    Every output pixel is the area-weighted mean of the source rectangle it
    covers, computed per channel in float64, rounded half-away-from-zero,
    and clamped to [0, 255]. A 2-D input is treated as one channel and
    returned 2-D.
    """
    arr = np.asarray(image, dtype=np.uint8)
    squeeze = arr.ndim == 2
    if squeeze:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ValueError("expected an (H, W, C) or (H, W) image")
    h, w = arr.shape[:2]
    if target < 1:
        raise ValueError("target must be >= 1")
    if target > h or target > w:
        raise UpsampleUnsupported(f"cannot box-downsample {h}x{w} to {target}x{target}")
    wr = _box_weights(h, target)
    wc = _box_weights(w, target)
    mixed = np.tensordot(wr, arr.astype(np.float64), axes=(1, 0))  # (T, W, C)
    mixed = np.tensordot(mixed, wc, axes=(1, 1))  # (T, C, T)
    mixed = np.transpose(mixed, (0, 2, 1))
    # Values are non-negative, so half-away-from-zero is floor(x + 0.5).
    out = np.clip(np.floor(mixed + 0.5), 0, 255).astype(np.uint8)
    return out[:, :, 0] if squeeze else out


_GRAY_MODES = frozenset({"1", "L"})


def ingest(source: str | Path, target_resolution: int, name: str | None = None) -> DatasetPack:
    """Build a pack from a directory of class subdirectories of images.

    Every image is decoded, converted to the pack's channel count (1 if the
    whole source is grayscale, else 3), and box-downsampled to the target
    resolution. Classes are ordered lexicographically by directory name and
    samples lexicographically by file name.
    """
    from PIL import Image

    root = Path(source)
    class_dirs = sorted((p for p in root.iterdir() if p.is_dir()), key=lambda p: p.name)
    if not class_dirs:
        raise EmptySource(f"no class directories under {root}")

    files_by_class: dict[str, list[Path]] = {}
    modes: set[str] = set()
    for cdir in class_dirs:
        files = sorted(
            (p for p in cdir.iterdir() if p.is_file() and not p.name.startswith(".")),
            key=lambda p: p.name,
        )
        if not files:
            raise IngestError(f"class directory {cdir} holds no images")
        files_by_class[cdir.name] = files
        for f in files:
            try:
                with Image.open(f) as im:
                    modes.add(im.mode)
            except Exception as exc:
                raise IngestError(f"cannot read image {f}: {exc}") from exc

    channels = 1 if modes <= _GRAY_MODES else 3
    mode = "L" if channels == 1 else "RGB"

    images_by_class: dict[str, np.ndarray] = {}
    for cname, files in files_by_class.items():
        decoded = []
        for f in files:
            try:
                with Image.open(f) as im:
                    arr = np.asarray(im.convert(mode), dtype=np.uint8)
                if channels == 1:
                    arr = arr[:, :, None]
                decoded.append(box_downsample(arr, target_resolution))
            except IngestError:
                raise
            except Exception as exc:
                raise IngestError(f"cannot ingest image {f}: {exc}") from exc
        images_by_class[cname] = np.stack(decoded)

    return build_pack(name or root.name, images_by_class)


def slim(pack: DatasetPack, max_per_class: int) -> DatasetPack:
    """Keep at most the first ``max_per_class`` samples of every class.

    "First" is manifest order, so slimming is deterministic without a seed
    and idempotent.
    """
    if max_per_class < 1:
        raise ValueError("max_per_class must be >= 1")
    m = pack.manifest
    nb = m.sample_nbytes
    records: list[ClassRecord] = []
    parts: list[np.ndarray] = []
    offset = 0
    for rec in m.classes:
        keep = min(max_per_class, rec.count)
        new_offsets = []
        for i in range(keep):
            old = rec.offsets[i]
            parts.append(pack.blob[old : old + nb])
            new_offsets.append(offset)
            offset += nb
        records.append(ClassRecord(rec.class_id, rec.name, tuple(new_offsets)))
    manifest = PackManifest(m.name, m.height, m.width, m.channels, tuple(records))
    blob = np.concatenate(parts) if parts else np.empty(0, dtype=np.uint8)
    return DatasetPack(manifest, blob)


def _subset_pack(pack: DatasetPack, class_ids: list[int], name: str) -> DatasetPack:
    m = pack.manifest
    nb = m.sample_nbytes
    records: list[ClassRecord] = []
    parts: list[np.ndarray] = []
    offset = 0
    for new_id, old_id in enumerate(class_ids):
        rec = m.classes[old_id]
        new_offsets = []
        for old in rec.offsets:
            parts.append(pack.blob[old : old + nb])
            new_offsets.append(offset)
            offset += nb
        records.append(ClassRecord(new_id, rec.name, tuple(new_offsets)))
    manifest = PackManifest(name, m.height, m.width, m.channels, tuple(records))
    blob = np.concatenate(parts) if parts else np.empty(0, dtype=np.uint8)
    return DatasetPack(manifest, blob)


def split_by_class(pack: DatasetPack, spec: SplitSpec) -> tuple[DatasetPack, DatasetPack, DatasetPack]:
    """Partition classes contiguously in manifest order into three packs.

    Class ids are re-densified per split; names are preserved.
    """
    total = spec.train + spec.val + spec.test
    if min(spec.train, spec.val, spec.test) < 0 or total != pack.num_classes:
        raise SplitError(
            f"split ({spec.train}, {spec.val}, {spec.test}) does not partition "
            f"{pack.num_classes} classes"
        )
    ids = list(range(pack.num_classes))
    train = _subset_pack(pack, ids[: spec.train], f"{pack.name}:train")
    val = _subset_pack(pack, ids[spec.train : spec.train + spec.val], f"{pack.name}:val")
    test = _subset_pack(pack, ids[spec.train + spec.val :], f"{pack.name}:test")
    return train, val, test


def stats_from_manifest(manifest: PackManifest) -> SuitabilityReport:
    counts = [rec.count for rec in manifest.classes]
    blob_bytes = manifest.total_samples * manifest.sample_nbytes
    estimated = blob_bytes + len(manifest.to_json_bytes())
    return SuitabilityReport(
        num_classes=len(manifest.classes),
        samples_per_class_min=min(counts) if counts else 0,
        samples_per_class_max=max(counts) if counts else 0,
        total_images=manifest.total_samples,
        resolution=(manifest.height, manifest.width, manifest.channels),
        estimated_in_memory_bytes=estimated,
        passes_size_criterion=estimated <= SIZE_CRITERION_BYTES,
    )


def stats(pack: DatasetPack) -> SuitabilityReport:
    """Suitability counters: class/sample counts, size, the 16 GiB criterion."""
    return stats_from_manifest(pack.manifest)


MANIFEST_FILE = "manifest.json"
BLOB_FILE = "blob.bin"


def write_pack(pack: DatasetPack, path: str | Path) -> None:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    (out / MANIFEST_FILE).write_bytes(pack.manifest.to_json_bytes())
    (out / BLOB_FILE).write_bytes(pack.blob.tobytes())


def read_pack(path: str | Path, mmap: bool = False) -> DatasetPack:
    src = Path(path)
    manifest = PackManifest.from_dict(
        json.loads((src / MANIFEST_FILE).read_text(encoding="utf-8"))
    )
    if mmap:
        blob: np.ndarray = np.memmap(src / BLOB_FILE, dtype=np.uint8, mode="r")
    else:
        blob = np.fromfile(src / BLOB_FILE, dtype=np.uint8)
    return DatasetPack(manifest, blob)
