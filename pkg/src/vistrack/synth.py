"""Seeded synthetic datasets: moving shapes with ground-truth tracks and
embeddings drawn from per-class spherical Gaussian clusters.

Embeddings are synthesized rather than rendered-and-encoded: the pipeline
under test consumes embeddings, so controlling them directly gives exact
oracles. Geometry of the embedding space:

* each class has a *table anchor* (what the class table stores) and an
  *instance cluster center* at cosine ``table_gap`` from it, mimicking the
  gap between a class's semantic anchor and the visual appearance cluster of
  real instances — with ``table_gap = 1.0`` both coincide;
* anchors and cluster centers of different classes are exactly orthogonal;
* every object gets a persistent identity offset (``object_spread``) around
  its class cluster center, and every detection jitters around the object
  identity with per-frame noise (``embedding_noise``).

Planted corruption, recorded in a sidecar for oracle-based tests:

* *mislabeled*: a true detection's embedding is redirected near a wrong
  class's table anchor (cosine in [0.72, 0.80], passing the score filter)
  while staying far from that class's instance cluster (caught by prototype
  filtering);
* *spurious*: extra small detections with uniform-sphere embeddings (caught
  by the score filter).

Occlusion is modeled as mask-empty frames with a normally drawn embedding
(object invisible but present); detection gaps remove the detection and the
ground truth for a window; disappearance ends an object mid-video.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .io import (
    save_class_table,
    save_manifest,
    write_detections,
    write_ground_truth,
)
from .maskops import rle_encode
from .types import (
    ClassEmbeddingTable,
    DetectionRecord,
    GroundTruthRecord,
    Manifest,
    RleMask,
    VideoInfo,
    as_embedding,
    empty_mask,
)


@dataclass(frozen=True)
class SynthConfig:
    frame_width: int = 48
    frame_height: int = 36
    num_videos: int = 4
    frames_per_video: int = 10
    objects_per_video: int = 2
    num_classes: int = 4
    embedding_dim: int = 16
    embedding_noise: float = 0.05
    object_spread: float = 0.0
    label_noise_rate: float = 0.0
    fp_rate: float = 0.0
    occlusion_rate: float = 0.0
    occlusion_len: int = 2
    gap_rate: float = 0.0
    gap_len: int = 4
    disappear_rate: float = 0.0
    crossing: bool = False
    table_gap: float = 0.8
    min_object_size: int = 6
    max_object_size: int = 14

    def validate(self) -> None:
        if self.max_object_size >= min(self.frame_width, self.frame_height):
            raise ValueError("objects larger than the frame are infeasible")
        if not 0 < self.min_object_size <= self.max_object_size:
            raise ValueError("object sizes must satisfy 0 < min <= max")
        if self.embedding_dim < 2 * self.num_classes + 2:
            raise ValueError("embedding_dim must be at least 2 * num_classes + 2")
        if min(self.num_videos, self.frames_per_video, self.num_classes) < 1:
            raise ValueError("num_videos, frames_per_video and num_classes must be >= 1")
        if self.objects_per_video < 0:
            raise ValueError("objects_per_video must be >= 0")
        for name in ("embedding_noise", "object_spread"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("label_noise_rate", "fp_rate", "occlusion_rate", "gap_rate", "disappear_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not 0.0 < self.table_gap <= 1.0:
            raise ValueError("table_gap must lie in (0, 1]")
        if self.occlusion_len < 1 or self.gap_len < 1:
            raise ValueError("occlusion_len and gap_len must be >= 1")

    def to_json(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_json(obj: dict) -> "SynthConfig":
        known = {f for f in SynthConfig.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown synth config keys: {sorted(unknown)}")
        return SynthConfig(**obj)


@dataclass(frozen=True)
class CorruptionRecord:
    """Sidecar bookkeeping: which emitted detections are planted corruption."""

    video_id: str
    frame_idx: int
    ordinal: int  # index among the frame's detections, in file order
    kind: str  # "mislabeled" | "spurious"
    true_category: Optional[int]

    def to_json(self) -> dict:
        return {
            "video_id": self.video_id,
            "frame_idx": self.frame_idx,
            "ordinal": self.ordinal,
            "kind": self.kind,
            "true_category": self.true_category,
        }


@dataclass
class SynthDataset:
    manifest: Manifest
    detections: list[DetectionRecord]
    ground_truth: list[GroundTruthRecord]
    table: ClassEmbeddingTable
    corruption: list[CorruptionRecord]

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_manifest(self.manifest, out / "manifest.json")
        write_detections(self.detections, out / "detections.jsonl")
        write_ground_truth(self.ground_truth, out / "ground_truth.jsonl")
        save_class_table(self.table, out / "class_table.json")
        with (out / "corruption.jsonl").open("w", encoding="utf-8") as fh:
            for rec in self.corruption:
                fh.write(json.dumps(rec.to_json()) + "\n")


@dataclass
class _ObjectPlan:
    category: int
    shape: str
    width: int
    height: int
    x0: float
    y0: float
    vx: float
    vy: float
    mean_embedding: np.ndarray
    death_frame: Optional[int]
    occlusion: Optional[tuple[int, int]]  # [start, end)
    gap: Optional[tuple[int, int]]


def class_geometry(cfg: SynthConfig, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """(table anchors, instance cluster centers), both (C, d) with unit rows.

    Anchors are exactly orthonormal; each cluster center sits at cosine
    ``table_gap`` from its own anchor and exactly orthogonal to every other
    class's anchor and center.
    """
    rng = np.random.default_rng([seed, 0])
    c, d = cfg.num_classes, cfg.embedding_dim
    basis, _ = np.linalg.qr(rng.standard_normal((d, 2 * c)))
    anchors = basis[:, :c].T
    tangents = basis[:, c : 2 * c].T
    g = cfg.table_gap
    centers = g * anchors + math.sqrt(max(0.0, 1.0 - g * g)) * tangents
    return anchors, centers


def generate(cfg: SynthConfig, seed: int, jobs: int = 1) -> SynthDataset:
    """Deterministic dataset for one seed.

    Per-video streams draw from independent generators, so parallel
    generation (``jobs > 1``) is byte-identical to the serial path.
    """
    cfg.validate()
    anchors, centers = class_geometry(cfg, seed)
    # orthonormal basis of span{anchors, centers} for exact projections
    g = cfg.table_gap
    if g < 1.0:
        tangents = (centers - g * anchors) / math.sqrt(1.0 - g * g)
        class_subspace = np.concatenate([anchors, tangents])
    else:
        class_subspace = anchors
    videos = []
    payloads = []
    for vid in range(cfg.num_videos):
        video_id = f"v{vid:03d}"
        videos.append(
            VideoInfo(
                video_id=video_id,
                width=cfg.frame_width,
                height=cfg.frame_height,
                num_frames=cfg.frames_per_video,
            )
        )
        payloads.append((cfg, seed, vid, video_id, anchors, centers, class_subspace))
    if jobs > 1 and len(payloads) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_generate_video_payload, payloads))
    else:
        results = [_generate_video_payload(p) for p in payloads]
    detections: list[DetectionRecord] = []
    ground_truth: list[GroundTruthRecord] = []
    corruption: list[CorruptionRecord] = []
    for dets, gts, corr in results:
        detections.extend(dets)
        ground_truth.extend(gts)
        corruption.extend(corr)

    table_emb = anchors.astype(np.float32)
    table_emb.setflags(write=False)
    table = ClassEmbeddingTable(
        names=tuple(f"class{i:02d}" for i in range(cfg.num_classes)),
        embeddings=table_emb,
    )
    manifest = Manifest(
        videos=tuple(videos),
        embedding_dim=cfg.embedding_dim,
        class_names=table.names,
    )
    return SynthDataset(manifest, detections, ground_truth, table, corruption)


def _generate_video_payload(payload):
    return _generate_video(*payload)


def _generate_video(cfg, seed, vid, video_id, anchors, centers, class_subspace):
    rng = np.random.default_rng([seed, 1, vid])
    plans = [_plan_object(cfg, rng, i, anchors, centers) for i in range(cfg.objects_per_video)]
    dets: list[DetectionRecord] = []
    gts: list[GroundTruthRecord] = []
    corr: list[CorruptionRecord] = []
    h, w = cfg.frame_height, cfg.frame_width
    for t in range(cfg.frames_per_video):
        ordinal = 0
        for obj_idx, plan in enumerate(plans):
            if plan.death_frame is not None and t >= plan.death_frame:
                continue
            if plan.gap is not None and plan.gap[0] <= t < plan.gap[1]:
                continue
            occluded = plan.occlusion is not None and plan.occlusion[0] <= t < plan.occlusion[1]
            mask, box = _object_mask(cfg, plan, t)
            if occluded:
                mask = empty_mask(h, w)
            embedding = _unit(plan.mean_embedding + cfg.embedding_noise * rng.standard_normal(cfg.embedding_dim))
            true_category = plan.category
            kind = None
            if cfg.num_classes > 1 and rng.random() < cfg.label_noise_rate:
                embedding = _mislabel_embedding(cfg, rng, plan.category, anchors, class_subspace)
                kind = "mislabeled"
            dets.append(
                DetectionRecord(
                    video_id=video_id,
                    frame_idx=t,
                    box=box,
                    mask=mask,
                    objectness=float(rng.uniform(0.8, 1.0)),
                    embedding=as_embedding(embedding),
                )
            )
            if kind:
                corr.append(CorruptionRecord(video_id, t, ordinal, kind, true_category))
            ordinal += 1
            if not occluded:
                gts.append(
                    GroundTruthRecord(
                        video_id=video_id,
                        frame_idx=t,
                        track_id=obj_idx,
                        category=plan.category,
                        mask=mask,
                    )
                )
            if rng.random() < cfg.fp_rate:
                sp_mask, sp_box = _spurious_mask(cfg, rng)
                dets.append(
                    DetectionRecord(
                        video_id=video_id,
                        frame_idx=t,
                        box=sp_box,
                        mask=sp_mask,
                        objectness=float(rng.uniform(0.3, 1.0)),
                        embedding=as_embedding(_unit(rng.standard_normal(cfg.embedding_dim))),
                    )
                )
                corr.append(CorruptionRecord(video_id, t, ordinal, "spurious", None))
                ordinal += 1
    return dets, gts, corr


def _plan_object(cfg, rng, obj_idx, anchors, centers) -> _ObjectPlan:
    category = int(rng.integers(cfg.num_classes))
    shape = "rect" if rng.random() < 0.5 else "ellipse"
    width = int(rng.integers(cfg.min_object_size, cfg.max_object_size + 1))
    height = int(rng.integers(cfg.min_object_size, cfg.max_object_size + 1))
    horizon = max(cfg.frames_per_video - 1, 1)
    span_x = cfg.frame_width - width
    span_y = cfg.frame_height - height
    if cfg.crossing:
        # objects start on alternating sides and move toward each other
        vy = float(rng.uniform(-0.3, 0.3))
        y0 = float(rng.uniform(max(0.0, -vy * horizon), span_y - max(0.0, vy * horizon)))
        if obj_idx % 2 == 0:
            x0 = float(rng.uniform(0, max(span_x * 0.1, 1e-9)))
            vx = (span_x - x0) / horizon
        else:
            x0 = float(rng.uniform(span_x * 0.9, span_x))
            vx = -x0 / horizon
    else:
        vmax_x = min(2.0, span_x / horizon)
        vmax_y = min(2.0, span_y / horizon)
        vx = float(rng.uniform(-vmax_x, vmax_x))
        vy = float(rng.uniform(-vmax_y, vmax_y))
        x0 = float(rng.uniform(max(0.0, -vx * horizon), span_x - max(0.0, vx * horizon)))
        y0 = float(rng.uniform(max(0.0, -vy * horizon), span_y - max(0.0, vy * horizon)))

    offset = cfg.object_spread * rng.standard_normal(cfg.embedding_dim)
    offset -= anchors.T @ (anchors @ offset)  # identity varies appearance, not class alignment
    mean_embedding = _unit(centers[category] + offset)

    frames = cfg.frames_per_video
    death = None
    if frames >= 3 and rng.random() < cfg.disappear_rate:
        death = int(rng.integers(frames // 3, 2 * frames // 3 + 1))
    occlusion = _window(rng, frames, cfg.occlusion_len) if rng.random() < cfg.occlusion_rate else None
    gap = _window(rng, frames, cfg.gap_len) if rng.random() < cfg.gap_rate else None
    return _ObjectPlan(
        category=category,
        shape=shape,
        width=width,
        height=height,
        x0=x0,
        y0=y0,
        vx=vx,
        vy=vy,
        mean_embedding=mean_embedding,
        death_frame=death,
        occlusion=occlusion,
        gap=gap,
    )


def _window(rng, frames: int, length: int) -> Optional[tuple[int, int]]:
    """A window of `length` frames that keeps the first and last frame clear."""
    if frames < length + 2:
        return None
    start = int(rng.integers(1, frames - length))
    return (start, start + length)


def _object_mask(cfg, plan: _ObjectPlan, t: int) -> tuple[RleMask, tuple[float, float, float, float]]:
    x0 = int(round(plan.x0 + plan.vx * t))
    y0 = int(round(plan.y0 + plan.vy * t))
    x0 = min(max(x0, 0), cfg.frame_width - plan.width)
    y0 = min(max(y0, 0), cfg.frame_height - plan.height)
    grid = np.zeros((cfg.frame_height, cfg.frame_width), dtype=bool)
    if plan.shape == "rect":
        grid[y0 : y0 + plan.height, x0 : x0 + plan.width] = True
    else:
        yy, xx = np.ogrid[: cfg.frame_height, : cfg.frame_width]
        cx = x0 + (plan.width - 1) / 2.0
        cy = y0 + (plan.height - 1) / 2.0
        rx = plan.width / 2.0
        ry = plan.height / 2.0
        grid[((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0] = True
    box = (float(x0), float(y0), float(x0 + plan.width), float(y0 + plan.height))
    return rle_encode(grid), box


def _spurious_mask(cfg, rng) -> tuple[RleMask, tuple[float, float, float, float]]:
    size = 3
    x0 = int(rng.integers(0, cfg.frame_width - size))
    y0 = int(rng.integers(0, cfg.frame_height - size))
    grid = np.zeros((cfg.frame_height, cfg.frame_width), dtype=bool)
    grid[y0 : y0 + size, x0 : x0 + size] = True
    return rle_encode(grid), (float(x0), float(y0), float(x0 + size), float(y0 + size))


def _mislabel_embedding(cfg, rng, true_category: int, anchors, class_subspace) -> np.ndarray:
    """An embedding that argmaxes to a wrong class with a score in
    [0.72, 0.80] but stays off every class's instance cluster."""
    wrong = int(rng.integers(cfg.num_classes - 1))
    if wrong >= true_category:
        wrong += 1
    r = float(rng.uniform(0.72, 0.80))
    xi = rng.standard_normal(cfg.embedding_dim)
    # orthogonal to every anchor and cluster center: the similarity to the
    # wrong class's cluster is exactly r * table_gap
    xi -= class_subspace.T @ (class_subspace @ xi)
    xi = _unit(xi)
    return r * anchors[wrong] + math.sqrt(1.0 - r * r) * xi


def _unit(v: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return v / norm
