"""Task-family configuration and the algebra that classifies it.

A continual few-shot task family is fully described by seven values: the
number of support sets per episode (``nss``), the class-change interval in
support sets (``cci``), classes per support set (``n_way``), samples per
class per support set (``k_shot``), target samples per class (``k_target``),
whether assigned labels are overwritten onto one fixed range
(``overwrite``), and the sampling ``seed``. Task kind and label-space
geometry are pure functions of that tuple.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Mapping


class ConfigError(ValueError):
    """A task configuration violates its invariants."""


CONFIG_KEYS = ("nss", "cci", "n_way", "k_shot", "k_target", "overwrite", "seed")

_MAX_SEED = (1 << 64) - 1


@dataclass(frozen=True)
class TaskConfig:
    """One episode family: counts, overwrite flag, and sampling seed."""

    nss: int
    cci: int
    n_way: int
    k_shot: int
    k_target: int
    overwrite: bool = False
    seed: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "nss": self.nss,
            "cci": self.cci,
            "n_way": self.n_way,
            "k_shot": self.k_shot,
            "k_target": self.k_target,
            "overwrite": self.overwrite,
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(data: Mapping[str, Any]) -> "TaskConfig":
        missing = [k for k in CONFIG_KEYS if k not in data]
        if missing:
            raise ConfigError(f"config missing keys: {', '.join(missing)}")
        unknown = [k for k in data if k not in CONFIG_KEYS]
        if unknown:
            raise ConfigError(f"config has unknown keys: {', '.join(sorted(unknown))}")
        return TaskConfig(
            nss=int(data["nss"]),
            cci=int(data["cci"]),
            n_way=int(data["n_way"]),
            k_shot=int(data["k_shot"]),
            k_target=int(data["k_target"]),
            overwrite=bool(data["overwrite"]),
            seed=int(data["seed"]),
        )


class TaskKind(Enum):
    """The four continual task types plus the single-support-set case.

    Values are the short codes used in benchmark tables and CSV output.
    """

    NEW_SAMPLES = "A"
    NEW_CLASSES = "B"
    NEW_CLASSES_OVERWRITE = "C"
    NEW_CLASSES_NEW_SAMPLES = "D"
    SINGLE_FSL = "FSL"


@dataclass(frozen=True)
class LabelSpace:
    """Output-label geometry for a task family.

    ``block_assignments`` maps the 1-based class-block index ``a`` to the
    label range its classes receive.
    """

    num_output_labels: int
    block_assignments: dict[int, range]


def validate_config(config: TaskConfig) -> list[str]:
    """Return all invariant violations, empty when the config is valid."""
    violations: list[str] = []
    for field in ("nss", "cci", "n_way", "k_shot", "k_target"):
        value = getattr(config, field)
        if not isinstance(value, int) or isinstance(value, bool) or value < 1:
            violations.append(f"{field} >= 1 required")
    if not violations and config.nss % config.cci != 0:
        violations.append("nss not divisible by cci")
    if not isinstance(config.seed, int) or not 0 <= config.seed <= _MAX_SEED:
        violations.append("seed outside unsigned 64-bit range")
    return violations


def require_valid(config: TaskConfig) -> None:
    violations = validate_config(config)
    if violations:
        raise ConfigError("; ".join(violations))


def derive_task_kind(config: TaskConfig) -> TaskKind:
    """Classify a valid config into exactly one task kind.

    With a single class block (cci = nss) overwrite changes nothing
    observable, and with 1 < cci < nss the block partition is what defines
    the kind, so both branches ignore the overwrite flag.
    """
    if config.nss == 1:
        return TaskKind.SINGLE_FSL
    if config.cci == config.nss:
        return TaskKind.NEW_SAMPLES
    if config.cci == 1:
        if config.overwrite:
            return TaskKind.NEW_CLASSES_OVERWRITE
        return TaskKind.NEW_CLASSES
    return TaskKind.NEW_CLASSES_NEW_SAMPLES


def num_class_blocks(config: TaskConfig) -> int:
    require_valid(config)
    return config.nss // config.cci


def expected_distinct_classes(config: TaskConfig) -> int:
    """Total distinct classes an episode of this family contains."""
    return config.n_way * num_class_blocks(config)


def output_label_count(config: TaskConfig) -> int:
    """Size of the assigned-label space a model must output over."""
    require_valid(config)
    if config.overwrite:
        return config.n_way
    return config.n_way * (config.nss // config.cci)


def label_space(config: TaskConfig) -> LabelSpace:
    require_valid(config)
    blocks = config.nss // config.cci
    if config.overwrite:
        assignments = {a: range(0, config.n_way) for a in range(1, blocks + 1)}
    else:
        assignments = {
            a: range((a - 1) * config.n_way, a * config.n_way)
            for a in range(1, blocks + 1)
        }
    return LabelSpace(output_label_count(config), assignments)


def save_task_config(config: TaskConfig, path: str | Path) -> None:
    """Write a config file with exactly the canonical key names."""
    text = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":")) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def load_task_config(path: str | Path) -> TaskConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return TaskConfig.from_dict(data)
