"""Unsupervised video-instance pipeline: label class-agnostic detections by
embedding similarity, denoise with prototype memory filtering, link frames
into tracklets with a memory-blended Hungarian tracker, and evaluate with
VIS AP/AR and pseudo-label F1."""

from .assignment import FORBIDDEN, cosine_matrix, solve_assignment
from .evaluate import EvalReport, F1Report, eval_f1, eval_vis
from .labeling import assign_labels, score_filter
from .maskops import box_iou, mask_iou, rle_decode, rle_encode, st_iou
from .pmf import PrototypeBank, build_bank, default_k_rule, pmf_filter
from .synth import SynthConfig, generate
from .tracking import (
    FrameInstances,
    FrameItem,
    TrackState,
    frames_from_detections,
    init_track,
    reference_embeddings,
    run_video,
    step,
    track_baseline,
)
from .types import (
    ClassEmbeddingTable,
    DetectionRecord,
    GroundTruthRecord,
    Manifest,
    RleMask,
    Tracklet,
    ValidationReport,
    VideoInfo,
)
from .validate import validate_dataset

__version__ = "0.1.0"
