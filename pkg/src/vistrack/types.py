"""Domain types shared by every pipeline stage.

All types are plain immutable containers. Invariants are *not* enforced at
construction time: the validator reports them (see :mod:`vistrack.validate`)
so that malformed datasets produce violation reports instead of crashes.

Conventions pinned here and relied on everywhere else:

* embeddings are float32 vectors; a "unit" embedding has L2 norm within
  1e-4 of 1.0, a "null" embedding is exactly all-zeros;
* masks are run-length encoded in column-major pixel order (down columns,
  left to right), runs alternate background/foreground starting with
  background, the first count may be 0;
* argmax ties are broken by the lowest category index.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

Box = tuple[float, float, float, float]  # (x1, y1, x2, y2), pixel units

UNIT_NORM_TOL = 1e-4


def as_embedding(values) -> np.ndarray:
    """Coerce to a read-only float32 vector."""
    arr = np.asarray(values, dtype=np.float32).reshape(-1)
    arr.setflags(write=False)
    return arr


def as_scores(values) -> np.ndarray:
    """Coerce class scores to a read-only float64 vector.

    Scores stay double precision so inclusive threshold comparisons (e.g. a
    score of exactly 0.7 against a 0.7 cut) behave as written.
    """
    arr = np.asarray(values, dtype=np.float64).reshape(-1)
    arr.setflags(write=False)
    return arr


def is_null_embedding(e: np.ndarray) -> bool:
    return not np.any(e)


def is_unit_embedding(e: np.ndarray) -> bool:
    return bool(abs(float(np.linalg.norm(np.asarray(e, dtype=np.float64))) - 1.0) <= UNIT_NORM_TOL)


def argmax_lowest(scores) -> int:
    """Index of the maximum score; ties resolve to the lowest index."""
    arr = np.asarray(scores)
    return int(np.argmax(arr))  # np.argmax already returns the first maximum


@dataclass(frozen=True)
class RleMask:
    """Column-major run-length encoded binary mask."""

    height: int
    width: int
    counts: tuple[int, ...]

    @property
    def area(self) -> int:
        """Number of foreground pixels."""
        return sum(self.counts[1::2])

    def is_empty(self) -> bool:
        return self.area == 0


def empty_mask(height: int, width: int) -> RleMask:
    return RleMask(height, width, (height * width,) if height * width else ())


@dataclass(frozen=True, eq=False)
class DetectionRecord:
    """One class-agnostic instance detection in one frame.

    ``label`` and ``class_scores`` are absent until the labeling stage has
    run; afterwards ``class_scores[label]`` is the detection's class score.
    """

    video_id: str
    frame_idx: int
    box: Box
    mask: RleMask
    objectness: float
    embedding: np.ndarray
    label: Optional[int] = None
    class_scores: Optional[np.ndarray] = None

    def with_labels(self, label: int, class_scores: np.ndarray) -> "DetectionRecord":
        return DetectionRecord(
            video_id=self.video_id,
            frame_idx=self.frame_idx,
            box=self.box,
            mask=self.mask,
            objectness=self.objectness,
            embedding=self.embedding,
            label=label,
            class_scores=class_scores,
        )


@dataclass(frozen=True, eq=False)
class ClassEmbeddingTable:
    """Ordered category names with one unit embedding each.

    The list order defines the category index used by every other type.
    """

    names: tuple[str, ...]
    embeddings: np.ndarray  # shape (C, d), float32

    def __len__(self) -> int:
        return len(self.names)

    @property
    def dim(self) -> int:
        return int(self.embeddings.shape[1]) if self.embeddings.size else 0


@dataclass(frozen=True)
class GroundTruthRecord:
    video_id: str
    frame_idx: int
    track_id: int
    category: int
    mask: RleMask


@dataclass(frozen=True, eq=False)
class TrackletEntry:
    frame_idx: int
    mask: RleMask
    class_scores: np.ndarray


@dataclass(frozen=True, eq=False)
class Tracklet:
    """One spatio-temporal instance: per-frame masks sharing a slot identity.

    ``final_label`` is the argmax of the per-entry mean of ``class_scores``
    (lowest index on ties) and ``confidence`` is that mean's maximum value.
    """

    video_id: str
    slot: int
    entries: tuple[TrackletEntry, ...]
    final_label: int
    confidence: float


def tracklet_from_entries(video_id: str, slot: int, entries) -> Tracklet:
    """Build a tracklet, deriving final_label/confidence from averaged scores."""
    entries = tuple(entries)
    if not entries:
        raise ValueError("tracklet needs at least one entry")
    mean_scores = mean_class_scores(entries)
    label = argmax_lowest(mean_scores)
    return Tracklet(
        video_id=video_id,
        slot=slot,
        entries=entries,
        final_label=label,
        confidence=float(mean_scores[label]),
    )


def mean_class_scores(entries) -> np.ndarray:
    """Time-averaged class scores of a tracklet's entries (float64)."""
    stacked = np.stack([np.asarray(e.class_scores, dtype=np.float64) for e in entries])
    return stacked.mean(axis=0)


@dataclass(frozen=True)
class VideoInfo:
    video_id: str
    width: int
    height: int
    num_frames: int


@dataclass(frozen=True)
class Manifest:
    """Dataset descriptor: declares video geometry, embedding dimension and
    the category list once for the whole dataset."""

    videos: tuple[VideoInfo, ...]
    embedding_dim: int
    class_names: tuple[str, ...]

    def video(self, video_id: str) -> VideoInfo:
        for v in self.videos:
            if v.video_id == video_id:
                return v
        raise KeyError(f"unknown video_id: {video_id!r}")

    @property
    def video_ids(self) -> tuple[str, ...]:
        return tuple(v.video_id for v in self.videos)


@dataclass(frozen=True)
class Violation:
    """One invariant violation with a locator for the offending record."""

    locator: str
    message: str


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, locator: str, message: str) -> None:
        self.violations.append(Violation(locator, message))

    def __len__(self) -> int:
        return len(self.violations)
