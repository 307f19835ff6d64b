"""Prototype memory filtering.

Per class, instance embeddings are clustered with seeded spherical K-means
(features L2-normalized, Lloyd iterations, centroids re-normalized after
every update). A labeled detection survives the filter iff its cosine
similarity to the closest prototype of its own class reaches the threshold.

Spherical K-means is used, rather than plain Euclidean, because the filter
metric is cosine similarity; clustering in a different geometry would
mismatch the test applied afterwards.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Iterator

import numpy as np

from .types import DetectionRecord

MAX_ITERATIONS = 100
SHIFT_TOLERANCE = 1e-4

DEFAULT_CLUSTER_DIVISOR = 64
DEFAULT_MAX_K = 32


def default_k_rule(cluster_divisor: int = DEFAULT_CLUSTER_DIVISOR, max_k: int = DEFAULT_MAX_K) -> Callable[[int], int]:
    """k = clamp(ceil(n / divisor), 1, max_k).

    The proportionality constant is a configurable choice of this artifact,
    not an inherited value.
    """
    if cluster_divisor < 1 or max_k < 1:
        raise ValueError("cluster divisor and max k must be >= 1")

    def rule(n: int) -> int:
        return min(max(math.ceil(n / cluster_divisor), 1), max_k)

    return rule


@dataclass(frozen=True)
class ClassPrototypes:
    centroids: np.ndarray  # (k, d) unit rows, float64
    member_count: int
    kmeans_iterations_used: int


@dataclass(frozen=True)
class PrototypeBank:
    """Per-class prototype centroids. Classes with zero members are absent."""

    classes: dict[int, ClassPrototypes]

    def labels(self) -> list[int]:
        return sorted(self.classes)

    def to_json(self) -> dict:
        return {
            "classes": [
                {
                    "label": label,
                    "member_count": protos.member_count,
                    "kmeans_iterations_used": protos.kmeans_iterations_used,
                    "centroids": [[float(x) for x in row] for row in protos.centroids],
                }
                for label, protos in sorted(self.classes.items())
            ]
        }

    @staticmethod
    def from_json(obj: dict) -> "PrototypeBank":
        classes = {}
        for entry in obj["classes"]:
            centroids = np.asarray(entry["centroids"], dtype=np.float64)
            classes[int(entry["label"])] = ClassPrototypes(
                centroids=centroids,
                member_count=int(entry["member_count"]),
                kmeans_iterations_used=int(entry["kmeans_iterations_used"]),
            )
        return PrototypeBank(classes)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n", encoding="utf-8")

    @staticmethod
    def load(path) -> "PrototypeBank":
        return PrototypeBank.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def build_bank(
    dets: Iterable[DetectionRecord],
    k_rule: Callable[[int], int] | None = None,
    seed: int = 0,
) -> PrototypeBank:
    """Cluster per-class embeddings into prototype centroids.

    Deterministic under ``seed``; each class gets an independent generator
    so results do not depend on class iteration order.
    """
    if k_rule is None:
        k_rule = default_k_rule()
    by_class: dict[int, list[np.ndarray]] = {}
    for rec in dets:
        if rec.label is None:
            raise ValueError("build_bank requires labeled records")
        by_class.setdefault(rec.label, []).append(np.asarray(rec.embedding, dtype=np.float64))

    classes = {}
    for label in sorted(by_class):
        feats = _normalize_rows(np.stack(by_class[label]))
        n = feats.shape[0]
        k = min(max(int(k_rule(n)), 1), n)
        rng = np.random.default_rng([seed, label])
        centroids, iterations = _spherical_kmeans(feats, k, rng)
        classes[label] = ClassPrototypes(
            centroids=centroids, member_count=n, kmeans_iterations_used=iterations
        )
    return PrototypeBank(classes)


def pmf_filter(
    dets: Iterable[DetectionRecord],
    bank: PrototypeBank,
    tau: float = 0.7,
) -> Iterator[DetectionRecord]:
    """Keep records whose best same-class prototype similarity is >= tau.

    Records labeled with a class absent from the bank are dropped; retained
    records pass through unmodified and in order.
    """
    if not -1.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [-1, 1], got {tau}")
    for rec in dets:
        if rec.label is None:
            raise ValueError("pmf_filter requires labeled records")
        protos = bank.classes.get(rec.label)
        if protos is None:
            continue
        if prototype_similarity(rec.embedding, protos) >= tau:
            yield rec


def prototype_similarity(embedding, protos: ClassPrototypes) -> float:
    """Maximum cosine similarity between an embedding and a class's centroids."""
    e = np.asarray(embedding, dtype=np.float64)
    norm = np.linalg.norm(e)
    if norm == 0.0:
        return -1.0
    sims = protos.centroids @ (e / norm)
    return float(np.clip(sims, -1.0, 1.0).max())


def _normalize_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return x / norms


def _spherical_kmeans(feats: np.ndarray, k: int, rng: np.random.Generator) -> tuple[np.ndarray, int]:
    """Lloyd iterations on unit vectors with k-means++ style seeding.

    Runs until the mean centroid shift drops below SHIFT_TOLERANCE or
    MAX_ITERATIONS is reached. Empty clusters are re-seeded to the point
    farthest from its assigned centroid.
    """
    n = feats.shape[0]
    centroids = feats[_kmeans_pp_indices(feats, k, rng)].copy()
    iterations = 0
    for iterations in range(1, MAX_ITERATIONS + 1):
        assign = np.argmax(feats @ centroids.T, axis=1)
        new_centroids = centroids.copy()
        for c in range(k):
            members = feats[assign == c]
            if len(members) == 0:
                continue
            mean = members.mean(axis=0)
            norm = np.linalg.norm(mean)
            if norm > 0.0:
                new_centroids[c] = mean / norm
        # re-seed empty clusters deterministically
        empty = [c for c in range(k) if not np.any(assign == c)]
        if empty:
            own_sim = np.einsum("ij,ij->i", feats, new_centroids[assign])
            order = np.argsort(own_sim, kind="stable")  # farthest first, ties by index
            for c, idx in zip(empty, order):
                new_centroids[c] = feats[idx]
        shift = float(np.linalg.norm(new_centroids - centroids, axis=1).mean())
        centroids = new_centroids
        if shift < SHIFT_TOLERANCE:
            break
    return centroids, iterations


def _kmeans_pp_indices(feats: np.ndarray, k: int, rng: np.random.Generator) -> list[int]:
    n = feats.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = 2.0 - 2.0 * (feats @ feats[chosen[0]])
    d2 = np.maximum(d2, 0.0)
    while len(chosen) < k:
        total = float(d2.sum())
        if total <= 0.0:
            # all remaining mass sits on already-chosen points: take the
            # lowest unchosen index
            remaining = sorted(set(range(n)) - set(chosen))
            nxt = remaining[0]
        else:
            nxt = int(rng.choice(n, p=d2 / total))
        chosen.append(nxt)
        d2 = np.minimum(d2, np.maximum(2.0 - 2.0 * (feats @ feats[nxt]), 0.0))
    return chosen
