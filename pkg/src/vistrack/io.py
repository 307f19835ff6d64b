"""Interchange formats: dataset manifest, JSONL detection/ground-truth/tracklet
streams and the class table.

Parsing raises :class:`SchemaError` on anything structurally malformed
(missing fields, wrong types, unsupported schema version). Semantic
invariants (norms, bounds, argmax consistency) are the validator's job.

Serialization is deterministic: fixed field order, plain ``repr``-based JSON
floats, one record per line. ``parse(serialize(x))`` is the identity for
every type.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Iterable, Iterator, Optional

import numpy as np

from .types import (
    ClassEmbeddingTable,
    DetectionRecord,
    GroundTruthRecord,
    Manifest,
    RleMask,
    Tracklet,
    TrackletEntry,
    VideoInfo,
    as_embedding,
    as_scores,
)

SCHEMA_VERSION = "1"


class SchemaError(Exception):
    """Input file is structurally malformed or has the wrong schema version."""


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise SchemaError(f"{where}: missing field {key!r}")
    return obj[key]


def _float_list(values, where: str) -> list[float]:
    if not isinstance(values, list):
        raise SchemaError(f"{where}: expected a list of numbers")
    out = []
    for v in values:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise SchemaError(f"{where}: expected a list of numbers")
        out.append(float(v))
    return out


# ---------------------------------------------------------------------------
# masks


def mask_to_json(mask: RleMask) -> dict:
    return {"size": [mask.height, mask.width], "counts": list(mask.counts)}


def mask_from_json(obj, where: str) -> RleMask:
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: mask must be an object")
    size = _require(obj, "size", where)
    counts = _require(obj, "counts", where)
    if not (isinstance(size, list) and len(size) == 2 and all(isinstance(s, int) for s in size)):
        raise SchemaError(f"{where}: mask size must be [H, W] integers")
    if not isinstance(counts, list) or any(isinstance(c, bool) or not isinstance(c, int) for c in counts):
        raise SchemaError(f"{where}: mask counts must be integers")
    return RleMask(height=size[0], width=size[1], counts=tuple(counts))


# ---------------------------------------------------------------------------
# manifest


def manifest_to_json(manifest: Manifest) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "videos": [
            {
                "video_id": v.video_id,
                "width": v.width,
                "height": v.height,
                "num_frames": v.num_frames,
            }
            for v in manifest.videos
        ],
        "embedding_dim": manifest.embedding_dim,
        "class_names": list(manifest.class_names),
    }


def manifest_from_json(obj) -> Manifest:
    where = "manifest"
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: expected a JSON object")
    version = _require(obj, "schema_version", where)
    if version != SCHEMA_VERSION:
        raise SchemaError(f"{where}: schema version {version!r} unsupported (expected {SCHEMA_VERSION!r})")
    videos = []
    for i, v in enumerate(_require(obj, "videos", where)):
        vw = f"{where}.videos[{i}]"
        videos.append(
            VideoInfo(
                video_id=str(_require(v, "video_id", vw)),
                width=int(_require(v, "width", vw)),
                height=int(_require(v, "height", vw)),
                num_frames=int(_require(v, "num_frames", vw)),
            )
        )
    dim = _require(obj, "embedding_dim", where)
    if not isinstance(dim, int) or dim <= 0:
        raise SchemaError(f"{where}: embedding_dim must be a positive integer")
    names = _require(obj, "class_names", where)
    if not isinstance(names, list) or any(not isinstance(n, str) for n in names):
        raise SchemaError(f"{where}: class_names must be a list of strings")
    return Manifest(videos=tuple(videos), embedding_dim=dim, class_names=tuple(names))


def load_manifest(path) -> Manifest:
    return manifest_from_json(_load_json(path, "manifest"))


def save_manifest(manifest: Manifest, path) -> None:
    _dump_json(manifest_to_json(manifest), path)


# ---------------------------------------------------------------------------
# class table


def class_table_to_json(table: ClassEmbeddingTable) -> dict:
    return {
        "names": list(table.names),
        "embeddings": [[float(x) for x in row] for row in np.asarray(table.embeddings)],
    }


def class_table_from_json(obj) -> ClassEmbeddingTable:
    where = "class table"
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: expected a JSON object")
    names = _require(obj, "names", where)
    rows = _require(obj, "embeddings", where)
    if not isinstance(names, list) or any(not isinstance(n, str) for n in names):
        raise SchemaError(f"{where}: names must be a list of strings")
    if not isinstance(rows, list) or len(rows) != len(names):
        raise SchemaError(f"{where}: embeddings must match names ({len(names)} entries)")
    vectors = [_float_list(row, f"{where}.embeddings[{i}]") for i, row in enumerate(rows)]
    dims = {len(v) for v in vectors}
    if len(dims) > 1:
        raise SchemaError(f"{where}: mixed embedding dimensions {sorted(dims)}")
    emb = np.asarray(vectors, dtype=np.float32).reshape(len(names), -1)
    emb.setflags(write=False)
    return ClassEmbeddingTable(names=tuple(names), embeddings=emb)


def load_class_table(path) -> ClassEmbeddingTable:
    return class_table_from_json(_load_json(path, "class table"))


def save_class_table(table: ClassEmbeddingTable, path) -> None:
    _dump_json(class_table_to_json(table), path)


# ---------------------------------------------------------------------------
# detections


def detection_to_json(rec: DetectionRecord) -> dict:
    out = {
        "video_id": rec.video_id,
        "frame_idx": rec.frame_idx,
        "box": [float(x) for x in rec.box],
        "objectness": float(rec.objectness),
        "mask": mask_to_json(rec.mask),
        "embedding": [float(x) for x in rec.embedding],
    }
    if rec.label is not None:
        out["label"] = int(rec.label)
    if rec.class_scores is not None:
        out["class_scores"] = [float(x) for x in rec.class_scores]
    return out


def detection_from_json(obj, where: str = "detection") -> DetectionRecord:
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: expected a JSON object")
    box = _float_list(_require(obj, "box", where), f"{where}.box")
    if len(box) != 4:
        raise SchemaError(f"{where}: box must have 4 coordinates")
    label = obj.get("label")
    if label is not None and (isinstance(label, bool) or not isinstance(label, int)):
        raise SchemaError(f"{where}: label must be an integer category index")
    scores = obj.get("class_scores")
    scores_arr: Optional[np.ndarray] = None
    if scores is not None:
        scores_arr = as_scores(_float_list(scores, f"{where}.class_scores"))
    objectness = _require(obj, "objectness", where)
    if isinstance(objectness, bool) or not isinstance(objectness, (int, float)):
        raise SchemaError(f"{where}: objectness must be a number")
    return DetectionRecord(
        video_id=str(_require(obj, "video_id", where)),
        frame_idx=int(_require(obj, "frame_idx", where)),
        box=tuple(box),  # type: ignore[arg-type]
        mask=mask_from_json(_require(obj, "mask", where), f"{where}.mask"),
        objectness=float(objectness),
        embedding=as_embedding(_float_list(_require(obj, "embedding", where), f"{where}.embedding")),
        label=label,
        class_scores=scores_arr,
    )


# ---------------------------------------------------------------------------
# ground truth


def ground_truth_to_json(rec: GroundTruthRecord) -> dict:
    return {
        "video_id": rec.video_id,
        "frame_idx": rec.frame_idx,
        "track_id": rec.track_id,
        "category": rec.category,
        "mask": mask_to_json(rec.mask),
    }


def ground_truth_from_json(obj, where: str = "ground truth") -> GroundTruthRecord:
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: expected a JSON object")
    return GroundTruthRecord(
        video_id=str(_require(obj, "video_id", where)),
        frame_idx=int(_require(obj, "frame_idx", where)),
        track_id=int(_require(obj, "track_id", where)),
        category=int(_require(obj, "category", where)),
        mask=mask_from_json(_require(obj, "mask", where), f"{where}.mask"),
    )


# ---------------------------------------------------------------------------
# tracklets


def tracklet_to_json(t: Tracklet) -> dict:
    return {
        "video_id": t.video_id,
        "slot": t.slot,
        "final_label": t.final_label,
        "confidence": float(t.confidence),
        "entries": [
            {
                "frame_idx": e.frame_idx,
                "mask": mask_to_json(e.mask),
                "class_scores": [float(x) for x in e.class_scores],
            }
            for e in t.entries
        ],
    }


def tracklet_from_json(obj, where: str = "tracklet") -> Tracklet:
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: expected a JSON object")
    entries = []
    for i, e in enumerate(_require(obj, "entries", where)):
        ew = f"{where}.entries[{i}]"
        entries.append(
            TrackletEntry(
                frame_idx=int(_require(e, "frame_idx", ew)),
                mask=mask_from_json(_require(e, "mask", ew), f"{ew}.mask"),
                class_scores=as_scores(_float_list(_require(e, "class_scores", ew), f"{ew}.class_scores")),
            )
        )
    confidence = float(_require(obj, "confidence", where))
    if not math.isfinite(confidence):
        raise SchemaError(f"{where}: confidence must be finite")
    return Tracklet(
        video_id=str(_require(obj, "video_id", where)),
        slot=int(_require(obj, "slot", where)),
        entries=tuple(entries),
        final_label=int(_require(obj, "final_label", where)),
        confidence=confidence,
    )


# ---------------------------------------------------------------------------
# JSONL plumbing


def _load_json(path, what: str):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise SchemaError(f"cannot read {what} file {path}: {err}") from err
    try:
        return json.loads(text)
    except json.JSONDecodeError as err:
        raise SchemaError(f"{what} file {path} is not valid JSON: {err}") from err


def _dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def _iter_jsonl(path, what: str) -> Iterator[tuple[int, dict]]:
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    yield lineno, json.loads(line)
                except json.JSONDecodeError as err:
                    raise SchemaError(f"{what} file {path} line {lineno}: invalid JSON: {err}") from err
    except OSError as err:
        raise SchemaError(f"cannot read {what} file {path}: {err}") from err


def read_detections(path) -> list[DetectionRecord]:
    return [detection_from_json(obj, f"detections line {n}") for n, obj in _iter_jsonl(path, "detections")]


def write_detections(records: Iterable[DetectionRecord], path) -> None:
    _write_jsonl((detection_to_json(r) for r in records), path)


def read_ground_truth(path) -> list[GroundTruthRecord]:
    return [ground_truth_from_json(obj, f"ground truth line {n}") for n, obj in _iter_jsonl(path, "ground truth")]


def write_ground_truth(records: Iterable[GroundTruthRecord], path) -> None:
    _write_jsonl((ground_truth_to_json(r) for r in records), path)


def read_tracklets(path) -> list[Tracklet]:
    return [tracklet_from_json(obj, f"tracklets line {n}") for n, obj in _iter_jsonl(path, "tracklets")]


def write_tracklets(tracklets: Iterable[Tracklet], path) -> None:
    _write_jsonl((tracklet_to_json(t) for t in tracklets), path)


def _write_jsonl(objs: Iterable[dict], path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for obj in objs:
            fh.write(json.dumps(obj) + "\n")
