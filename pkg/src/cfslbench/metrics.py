"""Memory and compute accounting, and accuracy aggregation.

The across-task memory ratio (ATM) divides the bytes a learner banked over
an episode by the bytes of all support inputs it was shown, both at their
declared scalar widths, so compressed representations score below 1 and
verbatim copies score exactly 1. Support inputs only: targets are excluded
from the denominator.

Multiply-accumulate (MAC) counts follow a pinned cost model, so figures
are comparable within this toolkit:

==========  =======================  ==========
primitive   dimensions               MACs
==========  =======================  ==========
mac         n                        n
dot         d                        d
sqdist      d                        d
avg         k vectors of dim d       k * d
matmul      (m, n) @ (n, k)          m * n * k
==========  =======================  ==========
"""

from __future__ import annotations

from dataclasses import dataclass
from math import fsum, sqrt
from typing import Iterable, Sequence

from .sampler import Episode

LEARNING = "learning"
INFERENCE = "inference"


class AtmUndefined(ValueError):
    """ATM is undefined when the episode has no support input bytes."""


class UnknownOpError(KeyError):
    """A trace entry names a primitive outside the cost model."""


class EmptySuite(ValueError):
    """Aggregation over zero episodes."""


@dataclass(frozen=True)
class AtmReport:
    memory_bytes: int
    episode_input_bytes: int
    atm: float


@dataclass(frozen=True)
class SuiteSummary:
    n_episodes: int
    accuracy_mean: float
    accuracy_std: float
    atm_mean: float
    mac_mean: float


def episode_input_bytes(episode: Episode, bytes_per_input_scalar: int = 1) -> int:
    """Total bytes of all support inputs: nss * n_way * k_shot * H*W*C * width."""
    cfg = episode.config
    h, w, c = episode.image_shape
    return cfg.nss * cfg.n_way * cfg.k_shot * h * w * c * bytes_per_input_scalar


def atm(memory_bytes: int, episode: Episode, bytes_per_input_scalar: int = 1) -> AtmReport:
    """Across-task memory ratio for one episode."""
    if memory_bytes < 0:
        raise ValueError("memory_bytes must be >= 0")
    denom = episode_input_bytes(episode, bytes_per_input_scalar)
    if denom <= 0:
        raise AtmUndefined("episode has no support inputs")
    return AtmReport(memory_bytes=memory_bytes, episode_input_bytes=denom, atm=memory_bytes / denom)


def _cost(op: str, dims: tuple[int, ...]) -> int:
    if op == "mac" and len(dims) == 1:
        return dims[0]
    if op in ("dot", "sqdist") and len(dims) == 1:
        return dims[0]
    if op == "avg" and len(dims) == 2:
        return dims[0] * dims[1]
    if op == "matmul" and len(dims) == 3:
        return dims[0] * dims[1] * dims[2]
    raise UnknownOpError(f"unknown primitive {op!r} with dims {dims}")


class MacCounter:
    """Accumulates MAC counts per phase under the pinned cost model."""

    def __init__(self) -> None:
        self._phases: dict[str, int] = {}

    def add(self, phase: str, op: str, *dims: int) -> None:
        self._phases[phase] = self._phases.get(phase, 0) + _cost(op, tuple(int(d) for d in dims))

    @property
    def by_phase(self) -> dict[str, int]:
        return dict(self._phases)

    @property
    def total_macs(self) -> int:
        return sum(self._phases.values())

    def merge(self, other: "MacCounter") -> None:
        for phase, macs in other._phases.items():
            self._phases[phase] = self._phases.get(phase, 0) + macs


def count_macs(op_trace: Iterable[tuple]) -> MacCounter:
    """Total a trace of (phase, op, *dims) entries."""
    counter = MacCounter()
    for entry in op_trace:
        phase, op, *dims = entry
        counter.add(phase, op, *dims)
    return counter


def aggregate(accuracies: Sequence[float]) -> tuple[float, float]:
    """Mean and population standard deviation of episode accuracies."""
    if len(accuracies) == 0:
        raise EmptySuite("no episode accuracies to aggregate")
    values = [float(a) for a in accuracies]
    if any(v < 0.0 or v > 1.0 for v in values):
        raise ValueError("accuracies must lie in [0, 1]")
    mean = fsum(values) / len(values)
    var = fsum((v - mean) ** 2 for v in values) / len(values)
    return mean, sqrt(var)


def summarize(
    accuracies: Sequence[float],
    atms: Sequence[float],
    mac_totals: Sequence[int],
) -> SuiteSummary:
    mean, std = aggregate(accuracies)
    n = len(accuracies)
    if len(atms) != n or len(mac_totals) != n:
        raise ValueError("per-episode series must share one length")
    return SuiteSummary(
        n_episodes=n,
        accuracy_mean=mean,
        accuracy_std=std,
        atm_mean=fsum(float(a) for a in atms) / n,
        mac_mean=fsum(float(m) for m in mac_totals) / n,
    )


SUMMARY_CSV_COLUMNS = (
    "task_kind",
    "nss",
    "cci",
    "overwrite",
    "n_episodes",
    "acc_mean",
    "acc_std",
    "atm_mean",
    "mac_mean",
)


def summaries_to_csv(entries: Iterable[tuple]) -> str:
    """Serialize (TaskKind, TaskConfig, SuiteSummary) triples to CSV.

    Floats are written with repr so identical runs serialize identically.
    """
    from .tasks import TaskConfig, TaskKind  # local to avoid cycles at import

    lines = [",".join(SUMMARY_CSV_COLUMNS)]
    for kind, config, summary in entries:
        assert isinstance(kind, TaskKind) and isinstance(config, TaskConfig)
        lines.append(
            ",".join(
                [
                    kind.value,
                    str(config.nss),
                    str(config.cci),
                    str(config.overwrite).lower(),
                    str(summary.n_episodes),
                    repr(summary.accuracy_mean),
                    repr(summary.accuracy_std),
                    repr(summary.atm_mean),
                    repr(summary.mac_mean),
                ]
            )
        )
    return "\n".join(lines) + "\n"
