from __future__ import annotations

import numpy as np
import pytest

from vistrack.maskops import rle_decode
from vistrack.types import RleMask


def random_mask(rng: np.random.Generator, h: int, w: int, p: float = 0.5) -> np.ndarray:
    return rng.random((h, w)) < p


def dense_mask_iou(a: RleMask, b: RleMask) -> float:
    """Independent dense-array IoU oracle."""
    da, db = rle_decode(a), rle_decode(b)
    inter = int(np.logical_and(da, db).sum())
    union = int(np.logical_or(da, db).sum())
    return inter / union if union else 0.0


def dense_st_iou(pred, gt, h, w) -> float:
    """Independent dense spatio-temporal IoU oracle."""
    inter = union = 0
    for p, g in zip(pred, gt):
        dp = rle_decode(p) if p is not None else np.zeros((h, w), bool)
        dg = rle_decode(g) if g is not None else np.zeros((h, w), bool)
        inter += int(np.logical_and(dp, dg).sum())
        union += int(np.logical_or(dp, dg).sum())
    return inter / union if union else 0.0


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
