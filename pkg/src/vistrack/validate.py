"""Dataset validation: every semantic invariant becomes a report entry.

Structural problems (unreadable files, schema versions, a class table whose
dimension contradicts the manifest) raise; per-record invariant violations
are collected into a :class:`ValidationReport` so one pass lists everything
that is wrong with a dataset.
"""

from __future__ import annotations

import math
from typing import Iterable, Optional

import numpy as np

from .types import (
    ClassEmbeddingTable,
    DetectionRecord,
    GroundTruthRecord,
    Manifest,
    RleMask,
    UNIT_NORM_TOL,
    ValidationReport,
    argmax_lowest,
)


def validate_dataset(
    manifest: Manifest,
    detections: Iterable[DetectionRecord],
    gt: Optional[Iterable[GroundTruthRecord]] = None,
    table: Optional[ClassEmbeddingTable] = None,
) -> ValidationReport:
    """Check every invariant of every record; empty report iff the dataset is valid."""
    report = ValidationReport()
    num_classes = len(manifest.class_names)

    if table is not None:
        if table.dim != manifest.embedding_dim:
            raise ValueError(
                f"dimension mismatch between class table embeddings ({table.dim}) "
                f"and manifest ({manifest.embedding_dim})"
            )
        _check_table(table, manifest, report)

    for i, rec in enumerate(detections):
        loc = f"detection[{i}] (video={rec.video_id}, frame={rec.frame_idx})"
        _check_detection(rec, manifest, num_classes, report, loc)

    if gt is not None:
        seen: set[tuple[str, int, int]] = set()
        for i, rec in enumerate(gt):
            loc = f"ground_truth[{i}] (video={rec.video_id}, frame={rec.frame_idx}, track={rec.track_id})"
            key = (rec.video_id, rec.frame_idx, rec.track_id)
            if key in seen:
                report.add(loc, "duplicate ground-truth record for (video_id, frame_idx, track_id)")
            seen.add(key)
            _check_ground_truth(rec, manifest, num_classes, report, loc)

    return report


def _check_table(table: ClassEmbeddingTable, manifest: Manifest, report: ValidationReport) -> None:
    loc = "class_table"
    if len(set(table.names)) != len(table.names):
        report.add(loc, "class table names are not unique")
    if any(not n for n in table.names):
        report.add(loc, "class table contains an empty name")
    if manifest.class_names and tuple(table.names) != tuple(manifest.class_names):
        report.add(loc, "class table names do not match manifest class_names")
    for c, row in enumerate(np.asarray(table.embeddings, dtype=np.float64)):
        if not np.all(np.isfinite(row)):
            report.add(f"{loc}[{c}]", "non-finite embedding in class table")
        elif abs(float(np.linalg.norm(row)) - 1.0) > UNIT_NORM_TOL:
            report.add(f"{loc}[{c}]", "class table embedding is not unit-norm")


def _check_mask(mask: RleMask, width: int, height: int, report: ValidationReport, loc: str) -> bool:
    """Returns True when the mask is usable for further checks."""
    if (mask.height, mask.width) != (height, width):
        report.add(loc, f"mask dimensions {mask.height}x{mask.width} do not equal the video's frame dimensions {height}x{width}")
        return False
    if any(c < 0 for c in mask.counts):
        report.add(loc, "negative mask run length")
        return False
    if sum(mask.counts) != height * width:
        report.add(loc, "mask run-length total does not equal height*width")
        return False
    return True


def _check_detection(
    rec: DetectionRecord,
    manifest: Manifest,
    num_classes: int,
    report: ValidationReport,
    loc: str,
) -> None:
    try:
        video = manifest.video(rec.video_id)
    except KeyError:
        report.add(loc, "unknown video_id")
        return
    if not 0 <= rec.frame_idx < video.num_frames:
        report.add(loc, f"frame_idx {rec.frame_idx} outside [0, {video.num_frames})")

    x1, y1, x2, y2 = rec.box
    if not all(math.isfinite(v) for v in rec.box):
        report.add(loc, "non-finite box coordinate")
    elif not (x1 < x2 and y1 < y2):
        report.add(loc, "degenerate box (requires x1 < x2 and y1 < y2)")
    elif not (0 <= x1 and 0 <= y1 and x2 <= video.width and y2 <= video.height):
        report.add(loc, "box outside image bounds")

    _check_mask(rec.mask, video.width, video.height, report, loc)

    if not (math.isfinite(rec.objectness) and 0.0 <= rec.objectness <= 1.0):
        report.add(loc, "objectness outside [0, 1]")

    emb = np.asarray(rec.embedding, dtype=np.float64)
    if emb.shape != (manifest.embedding_dim,):
        report.add(loc, f"embedding dimension {emb.shape[0] if emb.ndim == 1 else emb.shape} does not match manifest embedding_dim {manifest.embedding_dim}")
    elif not np.all(np.isfinite(emb)):
        report.add(loc, "non-finite embedding entry")
    elif abs(float(np.linalg.norm(emb)) - 1.0) > UNIT_NORM_TOL:
        report.add(loc, "embedding is not unit-norm")

    if rec.label is not None:
        if rec.class_scores is None:
            report.add(loc, "label present without class_scores")
        else:
            scores = np.asarray(rec.class_scores, dtype=np.float64)
            if num_classes and scores.shape != (num_classes,):
                report.add(loc, f"class_scores length {scores.shape[0]} does not match {num_classes} classes")
            elif not np.all(np.isfinite(scores)):
                report.add(loc, "non-finite class score")
            elif np.any(scores < -1.0) or np.any(scores > 1.0):
                report.add(loc, "class score outside [-1, 1]")
            elif not 0 <= rec.label < len(scores):
                report.add(loc, f"label {rec.label} outside the category range")
            elif rec.label != argmax_lowest(scores):
                report.add(loc, "label does not equal argmax of class_scores")


def _check_ground_truth(
    rec: GroundTruthRecord,
    manifest: Manifest,
    num_classes: int,
    report: ValidationReport,
    loc: str,
) -> None:
    try:
        video = manifest.video(rec.video_id)
    except KeyError:
        report.add(loc, "unknown video_id")
        return
    if not 0 <= rec.frame_idx < video.num_frames:
        report.add(loc, f"frame_idx {rec.frame_idx} outside [0, {video.num_frames})")
    if not 0 <= rec.category < max(num_classes, 1):
        report.add(loc, f"category {rec.category} outside the {num_classes}-class range")
    _check_mask(rec.mask, video.width, video.height, report, loc)
