"""Metrics: video-level AP/AR over spatio-temporal mask IoU, and the
per-frame pseudo-label F1 protocol.

AP protocol (standard VIS conventions, every choice pinned by tests):

* IoU thresholds 0.50:0.05:0.95; matching per class and threshold;
* predictions sorted by confidence (ties: video id, then slot), each greedily
  matched to the still-unmatched ground-truth track of its video with the
  highest spatio-temporal IoU >= threshold (inclusive);
* AP is the all-point interpolated area under the precision-recall curve;
* AR@k restricts predictions to the top k per video and class and averages
  recall over classes and thresholds;
* classes without ground truth are skipped by the means.

F1 protocol: per frame and class, predictions are matched greedily by
descending mask IoU to unmatched same-class ground truth; only pairs with
IoU strictly above the threshold count, unmatched predictions are false
positives and unmatched ground truth false negatives. F1 aggregates per
class over the whole dataset; the mean runs over classes with ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .maskops import mask_iou, st_iou
from .types import (
    DetectionRecord,
    GroundTruthRecord,
    Manifest,
    RleMask,
    Tracklet,
)

IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))


@dataclass(frozen=True)
class EvalReport:
    ap: float
    ap50: float
    ap75: float
    ar_at_1: float
    ar_at_10: float
    per_class_ap: dict[int, float]
    num_gt_tracks: int
    num_predictions: int

    def to_json(self, class_names: Sequence[str] = ()) -> dict:
        return {
            "ap": self.ap,
            "ap50": self.ap50,
            "ap75": self.ap75,
            "ar_at_1": self.ar_at_1,
            "ar_at_10": self.ar_at_10,
            "per_class_ap": {
                (class_names[c] if c < len(class_names) else str(c)): v
                for c, v in sorted(self.per_class_ap.items())
            },
            "num_gt_tracks": self.num_gt_tracks,
            "num_predictions": self.num_predictions,
        }

    def text_table(self, class_names: Sequence[str] = ()) -> str:
        rows = [
            ("AP", self.ap),
            ("AP50", self.ap50),
            ("AP75", self.ap75),
            ("AR@1", self.ar_at_1),
            ("AR@10", self.ar_at_10),
        ]
        for c, v in sorted(self.per_class_ap.items()):
            name = class_names[c] if c < len(class_names) else str(c)
            rows.append((f"AP[{name}]", v))
        width = max(len(name) for name, _ in rows)
        lines = [f"{name:<{width}}  {value:8.4f}" for name, value in rows]
        lines.append(f"{'#gt-tracks':<{width}}  {self.num_gt_tracks:8d}")
        lines.append(f"{'#predictions':<{width}}  {self.num_predictions:8d}")
        return "\n".join(lines)


@dataclass(frozen=True)
class ClassF1:
    tp: int
    fp: int
    fn: int

    @property
    def f1(self) -> float:
        denom = 2 * self.tp + self.fp + self.fn
        return 2 * self.tp / denom if denom else 0.0


@dataclass(frozen=True)
class F1Report:
    per_class: dict[int, ClassF1]
    classes_with_gt: tuple[int, ...]

    @property
    def mf1(self) -> float:
        if not self.classes_with_gt:
            return 0.0
        return float(np.mean([self.per_class[c].f1 for c in self.classes_with_gt]))

    def to_json(self, class_names: Sequence[str] = ()) -> dict:
        return {
            "mf1": self.mf1,
            "per_class": {
                (class_names[c] if c < len(class_names) else str(c)): {
                    "f1": v.f1,
                    "tp": v.tp,
                    "fp": v.fp,
                    "fn": v.fn,
                }
                for c, v in sorted(self.per_class.items())
            },
        }


@dataclass
class _GtTrack:
    video_id: str
    track_id: int
    category: int
    masks: dict[int, RleMask] = field(default_factory=dict)


def _group_gt_tracks(gt: Iterable[GroundTruthRecord]) -> list[_GtTrack]:
    tracks: dict[tuple[str, int], _GtTrack] = {}
    for rec in gt:
        key = (rec.video_id, rec.track_id)
        track = tracks.get(key)
        if track is None:
            track = _GtTrack(rec.video_id, rec.track_id, rec.category)
            tracks[key] = track
        track.masks[rec.frame_idx] = rec.mask
    return [tracks[k] for k in sorted(tracks)]


def _track_sequence(masks: dict[int, RleMask], num_frames: int) -> list[Optional[RleMask]]:
    return [masks.get(t) for t in range(num_frames)]


def eval_vis(
    preds: Sequence[Tracklet],
    gt: Iterable[GroundTruthRecord],
    manifest: Manifest,
    *,
    ignore_class: bool = False,
) -> EvalReport:
    """Video-level AP/AR of predicted tracklets against ground-truth tracks."""
    for t in preds:
        manifest.video(t.video_id)  # raises KeyError on unknown video
    gt_tracks = _group_gt_tracks(gt)

    def cat(x: int) -> int:
        return 0 if ignore_class else x

    classes = sorted({cat(t.category) for t in gt_tracks})
    num_frames = {v.video_id: v.num_frames for v in manifest.videos}

    per_class_ap: dict[int, float] = {}
    ap_at: dict[float, list[float]] = {t: [] for t in IOU_THRESHOLDS}
    recalls_at = {1: [], 10: []}

    for c in classes:
        gts_c = [g for g in gt_tracks if cat(g.category) == c]
        gt_by_video: dict[str, list[_GtTrack]] = {}
        for g in gts_c:
            gt_by_video.setdefault(g.video_id, []).append(g)
        preds_c = sorted(
            (t for t in preds if cat(t.final_label) == c),
            key=lambda t: (-t.confidence, t.video_id, t.slot),
        )
        # spatio-temporal IoU of each prediction against its video's GT tracks
        ious: list[list[float]] = []
        for p in preds_c:
            nf = num_frames[p.video_id]
            p_seq: list[Optional[RleMask]] = [None] * nf
            for e in p.entries:
                p_seq[e.frame_idx] = e.mask
            row = [
                st_iou(p_seq, _track_sequence(g.masks, nf))
                for g in gt_by_video.get(p.video_id, [])
            ]
            ious.append(row)

        class_aps = []
        for thr in IOU_THRESHOLDS:
            tp_flags = _greedy_match(preds_c, gt_by_video, ious, thr)
            ap = _average_precision(tp_flags, len(gts_c))
            ap_at[thr].append(ap)
            class_aps.append(ap)
            for k in recalls_at:
                kept = _top_k_per_video(preds_c, k)
                flags = _greedy_match(
                    [preds_c[i] for i in kept],
                    gt_by_video,
                    [ious[i] for i in kept],
                    thr,
                )
                recalls_at[k].append(sum(flags) / len(gts_c) if gts_c else 0.0)
        per_class_ap[c] = float(np.mean(class_aps)) if class_aps else 0.0

    def mean_over(values: list[float]) -> float:
        return float(np.mean(values)) if values else 0.0

    all_aps = [v for thr in IOU_THRESHOLDS for v in ap_at[thr]]
    return EvalReport(
        ap=mean_over(all_aps),
        ap50=mean_over(ap_at[0.5]),
        ap75=mean_over(ap_at[0.75]),
        ar_at_1=mean_over(recalls_at[1]),
        ar_at_10=mean_over(recalls_at[10]),
        per_class_ap=per_class_ap,
        num_gt_tracks=len(gt_tracks),
        num_predictions=len(preds),
    )


def _greedy_match(
    preds_c: Sequence[Tracklet],
    gt_by_video: dict[str, list[_GtTrack]],
    ious: Sequence[Sequence[float]],
    thr: float,
) -> list[bool]:
    """Confidence-ordered greedy matching at one IoU threshold."""
    matched: set[tuple[str, int]] = set()
    flags = []
    for p, row in zip(preds_c, ious):
        gts = gt_by_video.get(p.video_id, [])
        best_j = -1
        best_iou = -1.0
        for j, g in enumerate(gts):
            if (g.video_id, g.track_id) in matched:
                continue
            if row[j] >= thr and row[j] > best_iou:  # ties keep the first track
                best_j = j
                best_iou = row[j]
        if best_j >= 0:
            matched.add((gts[best_j].video_id, gts[best_j].track_id))
            flags.append(True)
        else:
            flags.append(False)
    return flags


def _top_k_per_video(preds_c: Sequence[Tracklet], k: int) -> list[int]:
    """Indices of the k highest-confidence predictions per video, keeping the
    global confidence order (preds_c is already sorted)."""
    taken: dict[str, int] = {}
    kept = []
    for i, p in enumerate(preds_c):
        if taken.get(p.video_id, 0) < k:
            taken[p.video_id] = taken.get(p.video_id, 0) + 1
            kept.append(i)
    return kept


def _average_precision(tp_flags: Sequence[bool], num_gt: int) -> float:
    """All-point interpolated area under the precision-recall curve."""
    if num_gt == 0 or not tp_flags:
        return 0.0
    tp = np.cumsum(np.asarray(tp_flags, dtype=np.float64))
    fp = np.cumsum(~np.asarray(tp_flags, dtype=bool))
    recall = tp / num_gt
    precision = tp / (tp + fp)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    ap = 0.0
    prev_r = 0.0
    for i in range(len(tp_flags)):
        if recall[i] > prev_r:
            ap += (recall[i] - prev_r) * envelope[i]
            prev_r = recall[i]
    return float(ap)


def eval_f1(
    dets: Iterable[DetectionRecord],
    gt: Iterable[GroundTruthRecord],
    iou_min: float = 0.5,
    *,
    ignore_class: bool = False,
) -> F1Report:
    """Per-frame pseudo-label quality: greedy IoU matching, strict threshold."""
    def cat(x: int) -> int:
        return 0 if ignore_class else x

    preds_by_frame: dict[tuple[str, int], list[DetectionRecord]] = {}
    for rec in dets:
        if rec.label is None:
            raise ValueError("eval_f1 requires labeled detections")
        preds_by_frame.setdefault((rec.video_id, rec.frame_idx), []).append(rec)
    gts_by_frame: dict[tuple[str, int], list[GroundTruthRecord]] = {}
    for rec in gt:
        gts_by_frame.setdefault((rec.video_id, rec.frame_idx), []).append(rec)

    tp: dict[int, int] = {}
    fp: dict[int, int] = {}
    fn: dict[int, int] = {}
    classes_with_gt: set[int] = set()

    for key in sorted(set(preds_by_frame) | set(gts_by_frame)):
        preds = preds_by_frame.get(key, [])
        gts = gts_by_frame.get(key, [])
        for g in gts:
            classes_with_gt.add(cat(g.category))
        for c in sorted({cat(p.label) for p in preds} | {cat(g.category) for g in gts}):
            p_idx = [i for i, p in enumerate(preds) if cat(p.label) == c]
            g_idx = [j for j, g in enumerate(gts) if cat(g.category) == c]
            pairs = []
            for pi, i in enumerate(p_idx):
                for gj, j in enumerate(g_idx):
                    iou = mask_iou(preds[i].mask, gts[j].mask)
                    if iou > iou_min:  # strict: "above" the threshold
                        pairs.append((-iou, pi, gj))
            pairs.sort()
            used_p: set[int] = set()
            used_g: set[int] = set()
            matches = 0
            for _, pi, gj in pairs:
                if pi in used_p or gj in used_g:
                    continue
                used_p.add(pi)
                used_g.add(gj)
                matches += 1
            tp[c] = tp.get(c, 0) + matches
            fp[c] = fp.get(c, 0) + len(p_idx) - matches
            fn[c] = fn.get(c, 0) + len(g_idx) - matches

    per_class = {
        c: ClassF1(tp=tp.get(c, 0), fp=fp.get(c, 0), fn=fn.get(c, 0))
        for c in sorted(set(tp) | set(fp) | set(fn))
    }
    return F1Report(per_class=per_class, classes_with_gt=tuple(sorted(classes_with_gt)))
