"""Mask algebra on run-length encoded masks.

Pixel order is column-major (down columns, left to right); the first run
counts background pixels and may be 0. Intersections are computed directly
on the run lists — dense arrays only appear at the encode/decode boundary
(and as the independent oracle in the test suite).

The IoU of two empty masks is defined as 0.0, not 1.0, so that empty
tracklets can never match empty ground truth. This deliberately diverges
from some mask toolkits.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .types import Box, RleMask


def rle_encode(mask: np.ndarray) -> RleMask:
    """Encode a 2-D boolean array into canonical column-major RLE.

    The result has no zero-length interior runs; only the leading background
    count may be 0 (mask starts with a foreground pixel).
    """
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ValueError(f"dense mask must be 2-D, got shape {arr.shape}")
    h, w = arr.shape
    flat = arr.astype(bool).ravel(order="F")
    if flat.size == 0:
        return RleMask(h, w, ())
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    counts = tuple(int(c) for c in np.diff(bounds))
    if flat[0]:
        counts = (0,) + counts
    return RleMask(h, w, counts)


def rle_decode(mask: RleMask) -> np.ndarray:
    """Decode to a 2-D boolean array. Raises on malformed counts."""
    _check_counts(mask)
    total = mask.height * mask.width
    counts = np.asarray(mask.counts, dtype=np.int64)
    values = np.arange(len(counts)) % 2 == 1  # odd runs are foreground
    flat = np.repeat(values, counts)
    return flat.reshape((mask.height, mask.width), order="F")


def _check_counts(mask: RleMask) -> None:
    if any(c < 0 for c in mask.counts):
        raise ValueError("mask run lengths must be non-negative")
    total = sum(mask.counts)
    if total != mask.height * mask.width:
        raise ValueError(
            f"mask run-length total {total} does not equal height*width "
            f"{mask.height}*{mask.width}={mask.height * mask.width}"
        )


def _run_bounds(mask: RleMask) -> np.ndarray:
    """Cumulative run end positions; run i covers [bounds[i-1], bounds[i])."""
    return np.cumsum(np.asarray(mask.counts, dtype=np.int64))


def rle_intersection_area(a: RleMask, b: RleMask) -> int:
    """|a ∩ b| computed on the run lists without densifying.

    Merges both run boundary sets; between consecutive boundaries each mask
    is constant, and a segment is in the intersection iff it falls inside a
    foreground run (odd run index) of both masks.
    """
    if a.area == 0 or b.area == 0:
        return 0
    ba, bb = _run_bounds(a), _run_bounds(b)
    pos = np.union1d(ba, bb)
    starts = np.concatenate(([0], pos[:-1]))
    seg_len = pos - starts
    a_fg = np.searchsorted(ba, starts, side="right") % 2 == 1
    b_fg = np.searchsorted(bb, starts, side="right") % 2 == 1
    return int(seg_len[a_fg & b_fg].sum())


def _check_same_shape(a: RleMask, b: RleMask) -> None:
    if (a.height, a.width) != (b.height, b.width):
        raise ValueError(
            f"mask dimension mismatch: {a.height}x{a.width} vs {b.height}x{b.width}"
        )


def mask_iou(a: RleMask, b: RleMask) -> float:
    """Intersection over union; 0.0 when both masks are empty."""
    _check_same_shape(a, b)
    inter = rle_intersection_area(a, b)
    union = a.area + b.area - inter
    return inter / union if union else 0.0


def st_iou(
    pred: Sequence[Optional[RleMask]],
    gt: Sequence[Optional[RleMask]],
) -> float:
    """Spatio-temporal IoU: summed per-frame intersections over summed unions.

    ``None`` entries stand for empty masks. 0.0 when the union is empty over
    the whole sequence.
    """
    if len(pred) != len(gt):
        raise ValueError(f"sequence length mismatch: {len(pred)} vs {len(gt)}")
    inter = 0
    union = 0
    for p, g in zip(pred, gt):
        if p is not None and g is not None:
            _check_same_shape(p, g)
            i = rle_intersection_area(p, g)
            inter += i
            union += p.area + g.area - i
        elif p is not None:
            union += p.area
        elif g is not None:
            union += g.area
    return inter / union if union else 0.0


def box_iou(a: Box, b: Box) -> float:
    """Axis-aligned box IoU; 0.0 when the overlap or union is degenerate."""
    ix = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    area_a = max(0.0, a[2] - a[0]) * max(0.0, a[3] - a[1])
    area_b = max(0.0, b[2] - b[0]) * max(0.0, b[3] - b[1])
    union = area_a + area_b - inter
    return inter / union if union > 0.0 else 0.0


def mask_bbox(mask: RleMask) -> Optional[Box]:
    """Tight bounding box of the foreground, or None for an empty mask.

    Exploits column-major order: pixel p sits at column p // height,
    row p % height.
    """
    if mask.area == 0:
        return None
    bounds = _run_bounds(mask)
    h = mask.height
    x_min, x_max = mask.width, -1
    y_min, y_max = mask.height, -1
    for i in range(1, len(bounds), 2):
        start, end = int(bounds[i - 1]), int(bounds[i])  # fg pixels [start, end)
        if start == end:
            continue
        c0, c1 = start // h, (end - 1) // h
        x_min, x_max = min(x_min, c0), max(x_max, c1)
        if c0 == c1:
            y_min = min(y_min, start % h)
            y_max = max(y_max, (end - 1) % h)
        else:
            # run spans a column boundary, so it touches row 0 and row h-1
            y_min, y_max = 0, h - 1
    return (float(x_min), float(y_min), float(x_max + 1), float(y_max + 1))
