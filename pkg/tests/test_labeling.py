from __future__ import annotations

import dataclasses

import numpy as np
import pytest

from vistrack import io
from vistrack.labeling import assign_labels, score_filter
from vistrack.maskops import rle_encode
from vistrack.types import ClassEmbeddingTable, DetectionRecord, as_embedding

from conftest import random_mask


def make_table(rng, num_classes=4, dim=8) -> ClassEmbeddingTable:
    vecs = rng.standard_normal((num_classes, dim))
    vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
    return ClassEmbeddingTable(
        names=tuple(f"c{i}" for i in range(num_classes)),
        embeddings=vecs.astype(np.float32),
    )


def make_det(rng, embedding, objectness=0.9) -> DetectionRecord:
    return DetectionRecord(
        video_id="v000",
        frame_idx=0,
        box=(0.0, 0.0, 4.0, 4.0),
        mask=rle_encode(random_mask(rng, 6, 6)),
        objectness=objectness,
        embedding=as_embedding(embedding),
    )


def test_label_matches_own_class_embedding(rng):
    table = make_table(rng)
    rec = make_det(rng, np.asarray(table.embeddings[3]))
    out = next(assign_labels([rec], table))
    assert out.label == 3
    assert float(out.class_scores[3]) == pytest.approx(1.0, abs=1e-6)


def test_orthogonal_embedding_breaks_tie_to_zero():
    table = ClassEmbeddingTable(
        names=("a", "b"),
        embeddings=np.eye(4, dtype=np.float32)[:2],
    )
    rng = np.random.default_rng(0)
    rec = make_det(rng, np.array([0, 0, 0, 1.0], np.float32))
    out = next(assign_labels([rec], table))
    assert out.label == 0
    assert float(out.class_scores[out.label]) == pytest.approx(0.0, abs=1e-7)


def test_labels_match_exhaustive_argmax_oracle(rng):
    table = make_table(rng, num_classes=6, dim=10)
    table_f64 = np.asarray(table.embeddings, np.float64)
    for _ in range(500):
        v = rng.standard_normal(10)
        v /= np.linalg.norm(v)
        rec = make_det(rng, v.astype(np.float32))
        out = next(assign_labels([rec], table))
        sims = [float(table_f64[c] @ np.asarray(rec.embedding, np.float64)) for c in range(6)]
        best = max(range(6), key=lambda c: (sims[c], -c))
        assert out.label == best


def test_assign_labels_passes_geometry_through(rng):
    table = make_table(rng)
    rec = make_det(rng, np.asarray(table.embeddings[1]))
    out = next(assign_labels([rec], table))
    before = io.detection_to_json(rec)
    after = io.detection_to_json(out)
    for key in ("video_id", "frame_idx", "box", "objectness", "mask", "embedding"):
        assert after[key] == before[key]


def test_assign_labels_dimension_mismatch(rng):
    table = make_table(rng, dim=8)
    rec = make_det(rng, np.ones(9, np.float32) / 3.0)
    with pytest.raises(ValueError, match="dimension"):
        list(assign_labels([rec], table))


def _labeled(rng, objectness, class_score):
    scores = np.array([class_score, class_score - 0.2], np.float64)
    return dataclasses.replace(
        make_det(rng, np.eye(8, dtype=np.float32)[0], objectness=objectness),
        label=0,
        class_scores=scores,
    )


def test_score_filter_boundary_is_inclusive(rng):
    kept = list(score_filter([_labeled(rng, 0.71, 0.71)], 0.7, 0.7))
    assert len(kept) == 1
    kept = list(score_filter([_labeled(rng, 0.7, 0.7)], 0.7, 0.7))
    assert len(kept) == 1


def test_score_filter_drops_low_objectness(rng):
    assert list(score_filter([_labeled(rng, 0.69, 0.99)], 0.7, 0.7)) == []


def test_score_filter_drops_low_class_score(rng):
    assert list(score_filter([_labeled(rng, 0.99, 0.69)], 0.7, 0.7)) == []


def test_score_filter_requires_labels(rng):
    with pytest.raises(ValueError, match="labeled"):
        list(score_filter([make_det(rng, np.eye(8, dtype=np.float32)[0])]))


def test_score_filter_count_matches_scan_oracle(rng):
    records = [
        _labeled(rng, float(rng.uniform(0, 1)), float(rng.uniform(0, 1))) for _ in range(400)
    ]
    kept = list(score_filter(records, 0.7, 0.7))
    want = [
        r for r in records if r.objectness >= 0.7 and float(r.class_scores[r.label]) >= 0.7
    ]
    assert [io.detection_to_json(r) for r in kept] == [io.detection_to_json(r) for r in want]


def test_score_filter_idempotent(rng):
    records = [
        _labeled(rng, float(rng.uniform(0, 1)), float(rng.uniform(0, 1))) for _ in range(200)
    ]
    once = list(score_filter(records, 0.7, 0.7))
    twice = list(score_filter(once, 0.7, 0.7))
    assert [io.detection_to_json(r) for r in twice] == [io.detection_to_json(r) for r in once]


def test_rescaled_embedding_keeps_label_after_renormalization(rng):
    table = make_table(rng)
    v = rng.standard_normal(8)
    v /= np.linalg.norm(v)
    base = next(assign_labels([make_det(rng, v.astype(np.float32))], table))
    scaled = 3.0 * v
    scaled /= np.linalg.norm(scaled)
    again = next(assign_labels([make_det(rng, scaled.astype(np.float32))], table))
    assert again.label == base.label
