"""Sequential-access enforcement over one episode, plus the memory bank.

A session hands out support sets strictly in order and exactly once; the
target set becomes available only after every support set has been
consumed, and its labels stay inside the session until predictions are
scored. The memory bank is the one sanctioned place for a learner to keep
information across support sets, and it is byte-accounted so that the
across-task memory ratio can audit what the guard cannot physically
prevent (a learner copying pixels it was shown).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .pack import DatasetPack
from .sampler import Episode


class SessionError(RuntimeError):
    pass


class StreamExhausted(SessionError):
    """All support sets have been consumed."""


class PastSetInaccessible(SessionError):
    """A support set was requested again after being consumed."""


class SetNotYetAvailable(SessionError):
    """A support set beyond the cursor was requested out of order."""


class TargetNotYetAvailable(SessionError):
    """The target was requested before the stream was fully consumed."""


class SessionClosed(SessionError):
    """The session already scored predictions."""


class PredictionShapeError(SessionError):
    """Prediction count does not match the target size."""


class SessionState(Enum):
    STREAMING = "streaming"
    AWAITING_PREDICTIONS = "awaiting_predictions"
    CLOSED = "closed"


@dataclass(frozen=True)
class MemoryEntry:
    tag: str
    payload: bytes | None  # None for size-only entries reported over the wire
    num_bytes: int
    element_width: int


class MemoryBank:
    """Byte-accounted store of learner representations.

    Append-only while the episode is streaming; the peak total is retained
    so later removals cannot hide how much was ever held.
    """

    def __init__(self) -> None:
        self._entries: list[MemoryEntry] = []
        self._total = 0
        self._peak = 0

    @property
    def entries(self) -> tuple[MemoryEntry, ...]:
        return tuple(self._entries)

    @property
    def total_bytes(self) -> int:
        return self._total

    @property
    def peak_bytes(self) -> int:
        return self._peak

    def append(self, entry: MemoryEntry) -> None:
        self._entries.append(entry)
        self._total += entry.num_bytes
        self._peak = max(self._peak, self._total)

    def remove(self, tag: str) -> None:
        kept = [e for e in self._entries if e.tag != tag]
        if len(kept) == len(self._entries):
            raise KeyError(tag)
        self._total = sum(e.num_bytes for e in kept)
        self._entries = kept


@dataclass(frozen=True)
class SupportSet:
    """Materialized support set: pixels plus assigned labels."""

    position: int
    block: int
    images: np.ndarray  # (n_way * k_shot, H, W, C) uint8
    labels: np.ndarray  # (n_way * k_shot,) int64


@dataclass(frozen=True)
class TargetSet:
    """Materialized target inputs; labels are withheld for scoring."""

    images: np.ndarray  # (n_targets, H, W, C) uint8


@dataclass(frozen=True)
class EpisodeScore:
    accuracy: float
    memory_bytes: int  # peak bank bytes over the session
    n_targets: int


class EpisodeSession:
    """Single-owner cursor over one episode's support stream."""

    def __init__(self, pack: DatasetPack, episode: Episode) -> None:
        self._pack = pack
        self._episode = episode
        self._cursor = 0
        self._state = SessionState.STREAMING
        self._bank = MemoryBank()
        self._target_cache: TargetSet | None = None

    @property
    def episode(self) -> Episode:
        return self._episode

    @property
    def cursor(self) -> int:
        return self._cursor

    @property
    def state(self) -> SessionState:
        return self._state

    @property
    def bank(self) -> MemoryBank:
        return self._bank

    @property
    def nss(self) -> int:
        return self._episode.config.nss

    def _materialize(self, ref) -> SupportSet:
        return SupportSet(
            position=ref.position,
            block=ref.block,
            images=self._pack.pixels_for(ref.sample_ids),
            labels=np.asarray(ref.labels, dtype=np.int64),
        )

    def next_support(self) -> SupportSet:
        """Consume and return the next support set."""
        if self._state is SessionState.CLOSED:
            raise SessionClosed("session is closed")
        if self._cursor >= self.nss:
            raise StreamExhausted(f"all {self.nss} support sets consumed")
        ref = self._episode.support_sets[self._cursor]
        self._cursor += 1
        return self._materialize(ref)

    def support(self, position: int) -> SupportSet:
        """Request the support set at 1-based ``position``.

        Only the set at the cursor can be obtained; earlier positions were
        deleted on use and later ones are not yet released.
        """
        if self._state is SessionState.CLOSED:
            raise SessionClosed("session is closed")
        if position < 1 or position > self.nss:
            raise StreamExhausted(f"position {position} outside 1..{self.nss}")
        if position <= self._cursor:
            raise PastSetInaccessible(f"support set {position} was already consumed")
        if position > self._cursor + 1:
            raise SetNotYetAvailable(f"support set {position} is not released yet")
        return self.next_support()

    def store(self, tag: str, payload: bytes, element_width: int = 1) -> None:
        """Append a representation to the memory bank."""
        if self._state is SessionState.CLOSED:
            raise SessionClosed("cannot store in a closed session")
        payload = bytes(payload)
        self._bank.append(MemoryEntry(tag, payload, len(payload), element_width))

    def store_declared(self, tag: str, num_bytes: int, element_width: int = 1) -> None:
        """Account for bytes held elsewhere (remote learners self-report)."""
        if self._state is SessionState.CLOSED:
            raise SessionClosed("cannot store in a closed session")
        if num_bytes < 0:
            raise ValueError("num_bytes must be >= 0")
        self._bank.append(MemoryEntry(tag, None, int(num_bytes), element_width))

    def discard(self, tag: str) -> None:
        """Remove a bank entry; only allowed once streaming has finished.

        The peak total is unaffected, so discarding cannot shrink the
        memory figure an episode is scored with.
        """
        if self._state is not SessionState.AWAITING_PREDICTIONS:
            raise SessionError("bank entries can be discarded only while awaiting predictions")
        self._bank.remove(tag)

    def request_target(self) -> TargetSet:
        """Release target inputs once the whole stream was consumed."""
        if self._state is SessionState.CLOSED:
            raise SessionClosed("session is closed")
        if self._cursor < self.nss:
            raise TargetNotYetAvailable(
                f"{self.nss - self._cursor} support sets still unconsumed"
            )
        if self._target_cache is None:
            self._target_cache = TargetSet(
                images=self._pack.pixels_for(self._episode.target_set.sample_ids)
            )
        self._state = SessionState.AWAITING_PREDICTIONS
        return self._target_cache

    def submit_predictions(self, predicted_labels: Sequence[int] | np.ndarray) -> EpisodeScore:
        """Score predictions against the assigned target labels and close."""
        if self._state is SessionState.CLOSED:
            raise SessionClosed("predictions were already scored")
        if self._state is not SessionState.AWAITING_PREDICTIONS:
            raise TargetNotYetAvailable("request the target before predicting")
        truth = np.asarray(self._episode.target_set.labels, dtype=np.int64)
        preds = np.asarray(predicted_labels, dtype=np.int64).reshape(-1)
        if preds.shape[0] != truth.shape[0]:
            raise PredictionShapeError(
                f"got {preds.shape[0]} predictions for {truth.shape[0]} targets"
            )
        correct = int(np.count_nonzero(preds == truth))
        self._state = SessionState.CLOSED
        return EpisodeScore(
            accuracy=correct / truth.shape[0],
            memory_bytes=self._bank.peak_bytes,
            n_targets=int(truth.shape[0]),
        )
