"""Linking per-frame instances into tracklets.

The tracker keeps a fixed array of slots. Frame t+1 detections are matched
against per-slot reference embeddings by maximizing cosine similarity with
the assignment solver; matched detections adopt their slot, unmatched ones
take free (null) slots in order.

The reference embedding of a slot blends the slot's latest aligned embedding
with the running mean of all previously aligned frames::

    reference = blend * current + (1 - blend) * memory_sum / (frames_seen - 1)

with the convention that the mean equals ``current`` while only one frame
has been seen. References are *not* re-normalized before matching; cosine
similarity normalizes internally. ``blend = 1.0`` degenerates to matching
against the previous frame only.

Slot placement semantics: "aligned" embeddings of frame t are the frame's
detection embeddings re-indexed into first-frame slot order, which makes the
memory a literal per-slot sum over fixed slot indices. Slots with no
detection in a frame keep their previous embedding by default
(``hold_last``), so re-appearing objects can re-match; with ``hold_last``
off they decay to null and become free again.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .assignment import cosine_matrix, solve_assignment
from .maskops import box_iou, mask_bbox
from .types import (
    DetectionRecord,
    RleMask,
    Tracklet,
    TrackletEntry,
    VideoInfo,
    tracklet_from_entries,
)

_REAL_SIM_MIN = -1.0  # entries below this are the forbidden sentinel


@dataclass(frozen=True, eq=False)
class FrameItem:
    embedding: np.ndarray
    mask: RleMask
    class_scores: Optional[np.ndarray] = None


@dataclass(frozen=True, eq=False)
class FrameInstances:
    frame_idx: int
    items: tuple[FrameItem, ...]


def frames_from_detections(
    dets: Iterable[DetectionRecord],
    video: VideoInfo,
) -> list[FrameInstances]:
    """Group one video's detections into per-frame instance lists, covering
    every frame 0..num_frames-1 (empty frames included)."""
    per_frame: dict[int, list[FrameItem]] = {t: [] for t in range(video.num_frames)}
    for rec in dets:
        if rec.video_id != video.video_id:
            raise ValueError(f"detection for video {rec.video_id!r} passed to {video.video_id!r}")
        if rec.frame_idx not in per_frame:
            raise ValueError(f"frame_idx {rec.frame_idx} outside video {video.video_id!r}")
        per_frame[rec.frame_idx].append(
            FrameItem(embedding=rec.embedding, mask=rec.mask, class_scores=rec.class_scores)
        )
    return [FrameInstances(t, tuple(per_frame[t])) for t in range(video.num_frames)]


@dataclass
class TrackState:
    """Single-owner mutable tracker state for one video."""

    num_slots: int
    blend: float  # the current-vs-memory mixing weight, in [0, 1]
    hold_last: bool
    current: np.ndarray      # (num_slots, d) aligned embeddings of the latest frame
    memory_sum: np.ndarray   # (num_slots, d) sum of aligned embeddings of all earlier frames
    frames_seen: int
    last_frame_idx: int


def init_track(
    first: FrameInstances,
    num_slots: int,
    blend: float,
    *,
    dim: Optional[int] = None,
    hold_last: bool = True,
) -> TrackState:
    """Seed the tracker from the first frame: slot j holds detection j."""
    if not 0.0 <= blend <= 1.0:
        raise ValueError(f"blend weight must lie in [0, 1], got {blend}")
    k = len(first.items)
    if k > num_slots:
        raise ValueError(f"{k} detections exceed {num_slots} slots")
    if dim is None:
        if k == 0:
            raise ValueError("embedding dimension required when the first frame is empty")
        dim = int(np.asarray(first.items[0].embedding).shape[0])
    current = np.zeros((num_slots, dim), dtype=np.float64)
    for j, item in enumerate(first.items):
        current[j] = np.asarray(item.embedding, dtype=np.float64)
    return TrackState(
        num_slots=num_slots,
        blend=blend,
        hold_last=hold_last,
        current=current,
        memory_sum=np.zeros((num_slots, dim), dtype=np.float64),
        frames_seen=1,
        last_frame_idx=first.frame_idx,
    )


def reference_embeddings(state: TrackState) -> np.ndarray:
    """Per-slot matching references: blend of current and the running mean.

    While only one frame has been seen the mean is defined as ``current``
    itself, so the first reference equals the first frame exactly.
    Never-used slots stay null.
    """
    if state.frames_seen <= 1:
        return state.current
    mu = state.memory_sum / (state.frames_seen - 1)
    return state.blend * state.current + (1.0 - state.blend) * mu


def step(state: TrackState, nxt: FrameInstances) -> tuple[TrackState, list[int]]:
    """Advance the tracker by one frame (mutates ``state``).

    Returns the state and the slot index chosen for each detection of the
    new frame, in detection order.
    """
    if nxt.frame_idx != state.last_frame_idx + 1:
        raise ValueError(
            f"frames must be consecutive: got {nxt.frame_idx} after {state.last_frame_idx}"
        )
    k = len(nxt.items)
    det_embs = np.zeros((k, state.current.shape[1]), dtype=np.float64)
    for j, item in enumerate(nxt.items):
        det_embs[j] = np.asarray(item.embedding, dtype=np.float64)

    refs = reference_embeddings(state)
    slot_of_det: list[Optional[int]] = [None] * k
    matched_slots: set[int] = set()
    if k:
        sim = cosine_matrix(refs, det_embs)
        for s, j in solve_assignment(sim, maximize=True):
            if sim[s, j] >= _REAL_SIM_MIN:
                slot_of_det[j] = s
                matched_slots.add(s)

    # a slot is free iff the matcher saw it as null (sentinel row)
    null_slot = ~np.any(refs, axis=1)
    free = [s for s in range(state.num_slots) if null_slot[s] and s not in matched_slots]
    leftover = [j for j in range(k) if slot_of_det[j] is None]
    if len(leftover) > len(free):
        raise ValueError(
            f"frame {nxt.frame_idx}: {len(leftover)} unmatched detections exceed "
            f"{len(free)} free slots"
        )
    for j, s in zip(leftover, free):
        slot_of_det[j] = s

    # memory update: the outgoing aligned frame joins the sum, then the new
    # frame's detections are placed into their slots
    state.memory_sum += state.current
    state.frames_seen += 1
    new_current = state.current.copy() if state.hold_last else np.zeros_like(state.current)
    for j, s in enumerate(slot_of_det):
        new_current[s] = det_embs[j]
    state.current = new_current
    state.last_frame_idx = nxt.frame_idx
    assignment = [int(s) for s in slot_of_det]  # type: ignore[arg-type]
    return state, assignment


def run_video(
    frames: Sequence[FrameInstances],
    num_slots: int = 100,
    blend: float = 0.5,
    top_k: int = 10,
    *,
    video_id: str = "",
    dim: Optional[int] = None,
    hold_last: bool = True,
) -> list[Tracklet]:
    """Fold the tracker over a video and emit per-slot tracklets.

    One tracklet per slot that ever held a detection; final label and
    confidence come from the time-averaged class scores. Returns the top_k
    tracklets by confidence (ties to the lower slot), sorted by slot.
    """
    if not frames:
        return []
    entries: dict[int, list[TrackletEntry]] = {}

    def record(slot: int, frame_idx: int, item: FrameItem) -> None:
        if item.class_scores is None:
            raise ValueError("tracking requires labeled detections (class_scores missing)")
        entries.setdefault(slot, []).append(
            TrackletEntry(frame_idx=frame_idx, mask=item.mask, class_scores=item.class_scores)
        )

    state = init_track(frames[0], num_slots, blend, dim=dim, hold_last=hold_last)
    for j, item in enumerate(frames[0].items):
        record(j, frames[0].frame_idx, item)
    for frame in frames[1:]:
        _, assignment = step(state, frame)
        for j, slot in enumerate(assignment):
            record(slot, frame.frame_idx, frame.items[j])

    tracklets = [
        tracklet_from_entries(video_id, slot, entries[slot]) for slot in sorted(entries)
    ]
    tracklets.sort(key=lambda t: (-t.confidence, t.slot))
    kept = tracklets[:top_k]
    kept.sort(key=lambda t: t.slot)
    return kept


# ---------------------------------------------------------------------------
# memoryless baseline


@dataclass
class _BaselineTrack:
    track_id: int
    embedding: np.ndarray
    box: Optional[tuple[float, float, float, float]]
    age: int
    entries: list[TrackletEntry]


def track_baseline(
    frames: Sequence[FrameInstances],
    appearance_weight: float = 1.0,
    iou_weight: float = 1.0,
    max_age: int = 5,
    *,
    video_id: str = "",
) -> list[Tracklet]:
    """Frame-by-frame matching on appearance + box IoU cost, no memory.

    Cost per (track, detection) pair is
    ``appearance_weight*(1-cos) + iou_weight*(1-box_iou)`` using each
    track's last embedding and last non-empty box. Unmatched tracks age and
    die once they have been unmatched for more than max_age frames;
    unmatched detections start new tracks.
    """
    if appearance_weight < 0 or iou_weight < 0:
        raise ValueError("weights must be >= 0")
    if appearance_weight + iou_weight <= 0:
        raise ValueError("at least one weight must be positive")

    tracks: list[_BaselineTrack] = []
    next_id = 0
    for frame in frames:
        dets = frame.items
        alive = [t for t in tracks if t.age <= max_age]
        matched_tracks: set[int] = set()
        matched_dets: set[int] = set()
        if alive and dets:
            det_embs = [np.asarray(it.embedding, dtype=np.float64) for it in dets]
            det_boxes = [mask_bbox(it.mask) for it in dets]
            cos = cosine_matrix([t.embedding for t in alive], det_embs)
            cos = np.where(cos < _REAL_SIM_MIN, -1.0, cos)  # null embeddings: worst appearance
            cost = appearance_weight * (1.0 - cos)
            for ti, t in enumerate(alive):
                for dj in range(len(dets)):
                    iou = box_iou(t.box, det_boxes[dj]) if (t.box and det_boxes[dj]) else 0.0
                    cost[ti, dj] += iou_weight * (1.0 - iou)
            for ti, dj in solve_assignment(cost, maximize=False):
                t = alive[ti]
                item = dets[dj]
                t.embedding = np.asarray(item.embedding, dtype=np.float64)
                if det_boxes[dj] is not None:
                    t.box = det_boxes[dj]
                t.age = 0
                _record_baseline(t, frame.frame_idx, item)
                matched_tracks.add(t.track_id)
                matched_dets.add(dj)
        for t in alive:
            if t.track_id not in matched_tracks:
                t.age += 1
        for dj, item in enumerate(dets):
            if dj in matched_dets:
                continue
            t = _BaselineTrack(
                track_id=next_id,
                embedding=np.asarray(item.embedding, dtype=np.float64),
                box=mask_bbox(item.mask),
                age=0,
                entries=[],
            )
            next_id += 1
            _record_baseline(t, frame.frame_idx, item)
            tracks.append(t)

    return [
        tracklet_from_entries(video_id, t.track_id, t.entries)
        for t in sorted(tracks, key=lambda t: t.track_id)
        if t.entries
    ]


def _record_baseline(track: _BaselineTrack, frame_idx: int, item: FrameItem) -> None:
    if item.class_scores is None:
        raise ValueError("tracking requires labeled detections (class_scores missing)")
    track.entries.append(
        TrackletEntry(frame_idx=frame_idx, mask=item.mask, class_scores=item.class_scores)
    )
