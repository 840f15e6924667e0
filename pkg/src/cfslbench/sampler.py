"""Deterministic generation of continual few-shot episodes from a pack.

An episode is built block by block. For block ``a`` (1-based, ``nss/cci``
blocks in total) the sampler draws ``n_way`` classes without replacement
from the classes not yet used in this episode, then for each chosen class
draws ``cci * k_shot + k_target`` distinct sample indices. The first
``cci * k_shot`` of those feed the block's ``cci`` support sets (``k_shot``
fresh samples per set), the rest form the class's target samples, so no
sample ever repeats within an episode and targets are disjoint from every
support set. Labels come from :func:`label_assignment`.

All draws use one SplitMix64 stream seeded from (config.seed,
episode_index) and Fisher-Yates prefix selection over manifest order, so an
episode is a pure function of (pack structure, config, episode index) and
is bit-identical across platforms and processes. Episodes reference samples
by global id only; pixels are never touched here.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .pack import DatasetPack
from .rng import SplitMix64, derive_seed, fisher_yates_prefix
from .tasks import ConfigError, TaskConfig, require_valid

_EPISODE_STREAM = 0x45505349  # namespace word for episode sampling streams


class NotEnoughClasses(RuntimeError):
    """The pack has fewer classes than one episode needs."""


class NotEnoughSamples(RuntimeError):
    """A drawn class holds fewer samples than one episode needs of it."""

    def __init__(self, class_id: int, have: int, need: int) -> None:
        super().__init__(f"class {class_id} has {have} samples, episode needs {need}")
        self.class_id = class_id


class BlockIndexError(IndexError):
    """A class-block index lies outside 1..nss/cci."""


@dataclass(frozen=True)
class SupportSetRef:
    """One support set by reference: (sample id, assigned label) pairs.

    ``position`` is the 1-based index n within the episode; ``block`` the
    1-based class-block index a with block = (n - 1) // cci + 1.
    """

    position: int
    block: int
    pairs: tuple[tuple[int, int], ...]

    @property
    def sample_ids(self) -> tuple[int, ...]:
        return tuple(sid for sid, _ in self.pairs)

    @property
    def labels(self) -> tuple[int, ...]:
        return tuple(lbl for _, lbl in self.pairs)


@dataclass(frozen=True)
class TargetSetRef:
    pairs: tuple[tuple[int, int], ...]

    @property
    def sample_ids(self) -> tuple[int, ...]:
        return tuple(sid for sid, _ in self.pairs)

    @property
    def labels(self) -> tuple[int, ...]:
        return tuple(lbl for _, lbl in self.pairs)


@dataclass(frozen=True)
class Episode:
    config: TaskConfig
    episode_index: int
    image_shape: tuple[int, int, int]
    class_blocks: tuple[tuple[int, ...], ...]
    support_sets: tuple[SupportSetRef, ...]
    target_set: TargetSetRef
    label_map: dict[int, int]
    true_class_map: dict[int, tuple[int, ...]]

    @property
    def distinct_classes(self) -> set[int]:
        return {cid for block in self.class_blocks for cid in block}


def label_assignment(block: int, config: TaskConfig) -> range:
    """Assigned-label range for 1-based class block ``block``.

    Labels are 0-based: with overwrite every block maps onto
    ``0..n_way-1``; otherwise block a owns ``(a-1)*n_way .. a*n_way-1``.
    """
    require_valid(config)
    blocks = config.nss // config.cci
    if not 1 <= block <= blocks:
        raise BlockIndexError(f"block {block} outside 1..{blocks}")
    if config.overwrite:
        return range(0, config.n_way)
    return range((block - 1) * config.n_way, block * config.n_way)


def sample_episode(pack: DatasetPack, config: TaskConfig, episode_index: int) -> Episode:
    """Draw episode ``episode_index`` of the family ``config`` from ``pack``."""
    require_valid(config)
    if episode_index < 0:
        raise ValueError("episode_index must be >= 0")
    blocks = config.nss // config.cci
    needed_classes = config.n_way * blocks
    if pack.num_classes < needed_classes:
        raise NotEnoughClasses(
            f"pack {pack.name!r} has {pack.num_classes} classes, episode needs {needed_classes}"
        )
    per_class_need = config.cci * config.k_shot + config.k_target

    rng = SplitMix64(derive_seed(config.seed, episode_index, _EPISODE_STREAM))
    remaining = list(range(pack.num_classes))

    class_blocks: list[tuple[int, ...]] = []
    support_sets: list[SupportSetRef] = []
    target_pairs: list[tuple[int, int]] = []
    label_map: dict[int, int] = {}
    true_classes: dict[int, set[int]] = {}

    for a in range(1, blocks + 1):
        chosen = fisher_yates_prefix(rng, remaining, config.n_way)
        chosen_set = set(chosen)
        remaining = [c for c in remaining if c not in chosen_set]
        labels = label_assignment(a, config)
        class_blocks.append(tuple(chosen))

        # One draw of cci*k_shot + k_target distinct sample indices per class:
        # slices feed the block's support sets, the tail feeds the target.
        picks_per_class: list[list[int]] = []
        for cid, label in zip(chosen, labels):
            have = pack.class_count(cid)
            if have < per_class_need:
                raise NotEnoughSamples(cid, have, per_class_need)
            picks = fisher_yates_prefix(rng, range(have), per_class_need)
            picks_per_class.append(picks)
            true_classes.setdefault(label, set()).add(cid)

        for b in range(1, config.cci + 1):
            position = (a - 1) * config.cci + b
            pairs: list[tuple[int, int]] = []
            lo = (b - 1) * config.k_shot
            for (cid, label), picks in zip(zip(chosen, labels), picks_per_class):
                for idx in picks[lo : lo + config.k_shot]:
                    sid = pack.sample_id(cid, idx)
                    pairs.append((sid, label))
                    label_map[sid] = label
            support_sets.append(SupportSetRef(position, a, tuple(pairs)))

        support_span = config.cci * config.k_shot
        for (cid, label), picks in zip(zip(chosen, labels), picks_per_class):
            for idx in picks[support_span:]:
                sid = pack.sample_id(cid, idx)
                target_pairs.append((sid, label))
                label_map[sid] = label

    return Episode(
        config=config,
        episode_index=episode_index,
        image_shape=pack.image_shape,
        class_blocks=tuple(class_blocks),
        support_sets=tuple(support_sets),
        target_set=TargetSetRef(tuple(target_pairs)),
        label_map=label_map,
        true_class_map={lbl: tuple(sorted(cids)) for lbl, cids in true_classes.items()},
    )


def sample_eval_suite(pack: DatasetPack, config: TaskConfig, count: int) -> list[Episode]:
    """Episodes 0..count-1 of a family; draws are mutually independent."""
    if count < 1:
        raise ValueError("count must be >= 1")
    return [sample_episode(pack, config, i) for i in range(count)]


def episode_to_dict(episode: Episode) -> dict[str, Any]:
    return {
        "episode_index": episode.episode_index,
        "config": episode.config.to_dict(),
        "image_shape": list(episode.image_shape),
        "class_blocks": [list(block) for block in episode.class_blocks],
        "support_sets": [
            {
                "position": ref.position,
                "block": ref.block,
                "pairs": [[sid, lbl] for sid, lbl in ref.pairs],
            }
            for ref in episode.support_sets
        ],
        "target_set": [[sid, lbl] for sid, lbl in episode.target_set.pairs],
        "true_class_map": {str(lbl): list(cids) for lbl, cids in sorted(episode.true_class_map.items())},
    }


def episode_manifest_bytes(episode: Episode) -> bytes:
    """Canonical episode manifest; the format pinned by the determinism tests."""
    text = json.dumps(episode_to_dict(episode), sort_keys=True, separators=(",", ":"))
    return (text + "\n").encode("utf-8")


def episode_from_dict(data: dict[str, Any]) -> Episode:
    config = TaskConfig.from_dict(data["config"])
    support_sets = tuple(
        SupportSetRef(
            position=int(ref["position"]),
            block=int(ref["block"]),
            pairs=tuple((int(s), int(l)) for s, l in ref["pairs"]),
        )
        for ref in data["support_sets"]
    )
    target = TargetSetRef(tuple((int(s), int(l)) for s, l in data["target_set"]))
    label_map = {sid: lbl for ref in support_sets for sid, lbl in ref.pairs}
    label_map.update({sid: lbl for sid, lbl in target.pairs})
    shape = data["image_shape"]
    return Episode(
        config=config,
        episode_index=int(data["episode_index"]),
        image_shape=(int(shape[0]), int(shape[1]), int(shape[2])),
        class_blocks=tuple(tuple(int(c) for c in block) for block in data["class_blocks"]),
        support_sets=support_sets,
        target_set=target,
        label_map=label_map,
        true_class_map={int(lbl): tuple(int(c) for c in cids) for lbl, cids in data["true_class_map"].items()},
    )


def write_episode(episode: Episode, path: str | Path) -> None:
    Path(path).write_bytes(episode_manifest_bytes(episode))


def read_episode(path: str | Path) -> Episode:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise ConfigError(f"episode manifest {path} must hold a JSON object")
    return episode_from_dict(data)
