"""Text-instance matching: initial class labels from embedding similarity.

Each detection's class scores are its dot products against the class table
(both sides are unit vectors upstream, so the dot product is the cosine);
the label is the argmax with ties resolved to the lowest category index.
Scores are clipped into [-1, 1] to absorb the 1e-4 unit-norm slack.
"""

from __future__ import annotations

from typing import Iterable, Iterator

import numpy as np

from .types import ClassEmbeddingTable, DetectionRecord, argmax_lowest, as_scores


def assign_labels(
    dets: Iterable[DetectionRecord],
    table: ClassEmbeddingTable,
) -> Iterator[DetectionRecord]:
    """Populate label and class_scores on every record; geometry fields pass
    through untouched."""
    if len(table) == 0:
        raise ValueError("class table is empty")
    table_mat = np.asarray(table.embeddings, dtype=np.float64)
    dim = table_mat.shape[1]
    for rec in dets:
        emb = np.asarray(rec.embedding, dtype=np.float64)
        if emb.shape[0] != dim:
            raise ValueError(
                f"embedding dimension {emb.shape[0]} does not match class table dimension {dim}"
            )
        scores = np.clip(table_mat @ emb, -1.0, 1.0)
        label = argmax_lowest(scores)
        yield rec.with_labels(label, as_scores(scores))


def score_filter(
    dets: Iterable[DetectionRecord],
    objectness_min: float = 0.7,
    class_score_min: float = 0.7,
) -> Iterator[DetectionRecord]:
    """Keep records with objectness >= objectness_min and class score >=
    class_score_min (both thresholds inclusive); order preserved."""
    for rec in dets:
        if rec.label is None or rec.class_scores is None:
            raise ValueError("score_filter requires labeled records (run assign_labels first)")
        class_score = float(rec.class_scores[rec.label])
        if rec.objectness >= objectness_min and class_score >= class_score_min:
            yield rec
