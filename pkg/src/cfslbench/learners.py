"""Desk-scale learners that drive the session protocol end to end.

Three learners, chosen to make the metrics meaningful rather than to win
the benchmark: a chance-level random guesser (no memory, no compute), a
nearest-centroid prototype learner (its banked centroids exercise the
memory accounting), and a streaming softmax-regression fine-tuner (compute
without banked memory). Features are flattened pixels in [0, 1], optionally
standardized per image and optionally compressed to ``embed_dim`` values by
block-average pooling; there is no learned embedding.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Any, Mapping

import numpy as np

from .metrics import INFERENCE, LEARNING, MacCounter
from .rng import SplitMix64, derive_seed
from .session import EpisodeSession
from .tasks import output_label_count

_RANDOM_STREAM = 0x52414E44  # namespace word for random-learner draws


class ModelNotFitted(RuntimeError):
    """predict was called on a model that never saw an episode."""


class LearnerKind(Enum):
    RANDOM = "random"
    PROTOTYPE = "prototype"
    LINEAR_FINETUNE = "linear_finetune"


@dataclass(frozen=True)
class LearnerParams:
    """Hyperparameters shared by all learner kinds; unused ones are ignored."""

    steps: int = 5
    lr: float = 0.01
    standardize: bool = False
    embed_dim: int | None = None
    seed: int = 0


def learner_spec_from_dict(data: Mapping[str, Any]) -> tuple[LearnerKind, LearnerParams]:
    """Parse the harness config keys: learner, steps, lr, standardize, embed_dim."""
    kind = LearnerKind(str(data["learner"]))
    params = LearnerParams(
        steps=int(data.get("steps", 5)),
        lr=float(data.get("lr", 0.01)),
        standardize=bool(data.get("standardize", False)),
        embed_dim=None if data.get("embed_dim") is None else int(data["embed_dim"]),
        seed=int(data.get("seed", 0)),
    )
    return kind, params


def extract_features(
    images: np.ndarray,
    standardize: bool = False,
    embed_dim: int | None = None,
    macs: MacCounter | None = None,
    phase: str = LEARNING,
) -> np.ndarray:
    """(n, d) float64 features from (n, H, W, C) uint8 images."""
    arr = np.asarray(images, dtype=np.float64)
    flat = arr.reshape(arr.shape[0], -1) / 255.0
    n, d_raw = flat.shape
    if standardize:
        mean = flat.mean(axis=1, keepdims=True)
        std = flat.std(axis=1, keepdims=True)
        std[std == 0.0] = 1.0
        flat = (flat - mean) / std
        if macs is not None:
            macs.add(phase, "mac", 2 * n * d_raw)
    if embed_dim is not None:
        if embed_dim < 1 or d_raw % embed_dim != 0:
            raise ValueError(f"embed_dim {embed_dim} must divide feature length {d_raw}")
        group = d_raw // embed_dim
        flat = flat.reshape(n, embed_dim, group).mean(axis=2)
        if macs is not None:
            macs.add(phase, "avg", n * group, embed_dim)
    return flat


@dataclass
class RandomModel:
    num_labels: int
    draw_seed: int
    fitted: bool = True


@dataclass
class PrototypeModel:
    """Per-label running-mean centroids, kept as (sum, count) for exactness."""

    sums: dict[int, np.ndarray]
    counts: dict[int, int]
    standardize: bool
    embed_dim: int | None

    def centroid(self, label: int) -> np.ndarray:
        return self.sums[label] / self.counts[label]

    def centroid_table(self) -> tuple[np.ndarray, np.ndarray]:
        """Labels (ascending) and the matching centroid matrix."""
        labels = np.asarray(sorted(self.sums), dtype=np.int64)
        matrix = np.stack([self.centroid(int(lbl)) for lbl in labels])
        return labels, matrix


@dataclass
class LinearFineTuneModel:
    weights: np.ndarray  # (num_labels, d)
    bias: np.ndarray  # (num_labels,)
    standardize: bool
    embed_dim: int | None
    fitted: bool = False


Model = RandomModel | PrototypeModel | LinearFineTuneModel


def _fit_random(session: EpisodeSession, params: LearnerParams) -> RandomModel:
    cfg = session.episode.config
    for _ in range(cfg.nss):
        session.next_support()  # consume without looking; stores nothing
    return RandomModel(
        num_labels=output_label_count(cfg),
        draw_seed=derive_seed(params.seed, session.episode.episode_index, _RANDOM_STREAM),
    )


def _fit_prototype(
    session: EpisodeSession, params: LearnerParams, macs: MacCounter | None
) -> PrototypeModel:
    model = PrototypeModel(sums={}, counts={}, standardize=params.standardize, embed_dim=params.embed_dim)
    cfg = session.episode.config
    for _ in range(cfg.nss):
        support = session.next_support()
        feats = extract_features(
            support.images, params.standardize, params.embed_dim, macs, LEARNING
        )
        touched: set[int] = set()
        for vec, label in zip(feats, support.labels):
            label = int(label)
            if label in model.sums:
                model.sums[label] = model.sums[label] + vec
                model.counts[label] += 1
            else:
                model.sums[label] = vec.copy()
                model.counts[label] = 1
            touched.add(label)
        if macs is not None:
            macs.add(LEARNING, "avg", feats.shape[0], feats.shape[1])
        # Bank the centroids this set created or updated, at 4 bytes/scalar.
        # The running-mean count rides in the tag; payload bytes are the
        # centroid alone so memory figures count representation bytes only.
        for label in sorted(touched):
            payload = model.centroid(label).astype(np.float32).tobytes()
            session.store(
                f"prototype/set{support.position:03d}/label{label}/n{model.counts[label]}",
                payload,
                element_width=4,
            )
    return model


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _fit_linear(
    session: EpisodeSession, params: LearnerParams, macs: MacCounter | None
) -> LinearFineTuneModel:
    cfg = session.episode.config
    num_labels = output_label_count(cfg)
    model: LinearFineTuneModel | None = None
    for _ in range(cfg.nss):
        support = session.next_support()
        feats = extract_features(
            support.images, params.standardize, params.embed_dim, macs, LEARNING
        )
        m, d = feats.shape
        if model is None:
            model = LinearFineTuneModel(
                weights=np.zeros((num_labels, d), dtype=np.float64),
                bias=np.zeros(num_labels, dtype=np.float64),
                standardize=params.standardize,
                embed_dim=params.embed_dim,
            )
        onehot = np.zeros((m, num_labels), dtype=np.float64)
        onehot[np.arange(m), np.asarray(support.labels, dtype=np.int64)] = 1.0
        for _ in range(params.steps):
            logits = feats @ model.weights.T + model.bias
            delta = (_softmax(logits) - onehot) / m
            model.weights -= params.lr * (delta.T @ feats)
            model.bias -= params.lr * delta.sum(axis=0)
            if macs is not None:
                macs.add(LEARNING, "matmul", m, d, num_labels)
                macs.add(LEARNING, "matmul", num_labels, m, d)
                macs.add(LEARNING, "mac", num_labels * d + num_labels)
    assert model is not None
    model.fitted = True
    return model


def fit_stream(
    kind: LearnerKind | str,
    session: EpisodeSession,
    params: LearnerParams = LearnerParams(),
    macs: MacCounter | None = None,
) -> Model:
    """Consume every support set of a fresh session, in order, and fit."""
    kind = LearnerKind(kind)
    if kind is LearnerKind.RANDOM:
        return _fit_random(session, params)
    if kind is LearnerKind.PROTOTYPE:
        return _fit_prototype(session, params, macs)
    return _fit_linear(session, params, macs)


def predict(model: Model | None, images: np.ndarray, macs: MacCounter | None = None) -> np.ndarray:
    """Labels for a batch of raw images; ties resolve to the lowest label."""
    if model is None:
        raise ModelNotFitted("no model")
    if isinstance(model, RandomModel):
        if not model.fitted:
            raise ModelNotFitted("random model has no label space")
        rng = SplitMix64(model.draw_seed)
        n = np.asarray(images).shape[0]
        return np.asarray([rng.below(model.num_labels) for _ in range(n)], dtype=np.int64)
    if isinstance(model, PrototypeModel):
        if not model.sums:
            raise ModelNotFitted("prototype model holds no centroids")
        feats = extract_features(images, model.standardize, model.embed_dim, macs, INFERENCE)
        labels, centroids = model.centroid_table()
        # Squared Euclidean distance to every centroid; argmin picks the
        # first (lowest) label on exact ties.
        diff = feats[:, None, :] - centroids[None, :, :]
        dist = np.einsum("qld,qld->ql", diff, diff)
        if macs is not None:
            macs.add(INFERENCE, "mac", feats.shape[0] * centroids.shape[0] * feats.shape[1])
        return labels[np.argmin(dist, axis=1)]
    if isinstance(model, LinearFineTuneModel):
        if not model.fitted:
            raise ModelNotFitted("linear model was never fitted")
        feats = extract_features(images, model.standardize, model.embed_dim, macs, INFERENCE)
        logits = feats @ model.weights.T + model.bias
        if macs is not None:
            macs.add(INFERENCE, "matmul", feats.shape[0], feats.shape[1], model.weights.shape[0])
        return np.argmax(logits, axis=1).astype(np.int64)
    raise ModelNotFitted(f"unsupported model {type(model)!r}")
