from __future__ import annotations

import json

import numpy as np
import pytest

from vistrack import io
from vistrack.assignment import cosine_matrix, solve_assignment
from vistrack.maskops import rle_encode
from vistrack.tracking import (
    FrameInstances,
    FrameItem,
    frames_from_detections,
    init_track,
    reference_embeddings,
    run_video,
    step,
    track_baseline,
)
from vistrack.types import VideoInfo

from conftest import random_mask


def unit(v):
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v)


def item(embedding, rng=None, scores=None, mask=None):
    if mask is None:
        mask = rle_encode(random_mask(rng or np.random.default_rng(0), 4, 4))
    if scores is None:
        scores = np.array([0.9, 0.1])
    return FrameItem(
        embedding=np.asarray(embedding, dtype=np.float64),
        mask=mask,
        class_scores=np.asarray(scores, dtype=np.float64),
    )


def random_frames(rng, num_frames, max_dets, dim, start=0):
    frames = []
    for t in range(num_frames):
        k = int(rng.integers(0, max_dets + 1))
        items = tuple(item(unit(rng.standard_normal(dim)), rng) for _ in range(k))
        frames.append(FrameInstances(start + t, items))
    return frames


# ---------------------------------------------------------------------------
# init_track


def test_init_places_detections_in_order(rng):
    embs = [unit(rng.standard_normal(6)) for _ in range(3)]
    first = FrameInstances(0, tuple(item(e, rng) for e in embs))
    state = init_track(first, num_slots=5, blend=0.5)
    for j, e in enumerate(embs):
        assert np.array_equal(state.current[j], e)
    assert not state.current[3:].any()
    assert state.frames_seen == 1
    assert not state.memory_sum.any()


def test_init_empty_frame(rng):
    state = init_track(FrameInstances(0, ()), num_slots=4, blend=0.5, dim=6)
    assert not state.current.any()
    assert state.frames_seen == 1


def test_init_too_many_detections(rng):
    first = FrameInstances(0, tuple(item(unit(rng.standard_normal(4)), rng) for _ in range(3)))
    with pytest.raises(ValueError, match="exceed"):
        init_track(first, num_slots=2, blend=0.5)


def test_init_rejects_bad_blend(rng):
    with pytest.raises(ValueError, match="blend"):
        init_track(FrameInstances(0, ()), num_slots=2, blend=1.5, dim=4)


# ---------------------------------------------------------------------------
# reference_embeddings


def test_reference_equals_current_on_first_frame(rng):
    first = FrameInstances(0, tuple(item(unit(rng.standard_normal(5)), rng) for _ in range(2)))
    for blend in (0.0, 0.3, 1.0):
        state = init_track(first, 4, blend)
        assert np.array_equal(reference_embeddings(state), state.current)


def test_reference_equals_current_when_blend_is_one(rng):
    frames = random_frames(rng, 5, 3, 5)
    state = init_track(frames[0], 8, 1.0)
    for f in frames[1:]:
        step(state, f)
    assert np.array_equal(reference_embeddings(state), state.current)


def test_reference_matches_hand_computed_blend(rng):
    # three frames with known vectors that never swap slots, so the aligned
    # history is exactly q1, q2 and the frame-3 reference must equal
    # 0.5*q3 + 0.5*mean(q1, q2), evaluated directly
    q1 = np.stack([unit([1, 0, 0, 0]), unit([0, 1, 0, 0])])
    q2 = np.stack([unit([1, 1, 0, 0]), unit([0, 1, 1, 0])])
    q3 = np.stack([unit([1, 0, 1, 0]), unit([0, 0, 1, 1])])
    state = init_track(FrameInstances(0, tuple(item(e, rng) for e in q1)), 2, 0.5)
    _, a2 = step(state, FrameInstances(1, tuple(item(e, rng) for e in q2)))
    _, a3 = step(state, FrameInstances(2, tuple(item(e, rng) for e in q3)))
    assert a2 == [0, 1] and a3 == [0, 1]
    direct = 0.5 * q3 + 0.5 * (q1 + q2) / 2
    assert np.allclose(reference_embeddings(state), direct, atol=1e-6)


# ---------------------------------------------------------------------------
# step


def test_step_identity_assignment_for_stable_embeddings(rng):
    embs = [unit(rng.standard_normal(6)) for _ in range(3)]
    state = init_track(FrameInstances(0, tuple(item(e, rng) for e in embs)), 5, 0.5)
    _, assignment = step(state, FrameInstances(1, tuple(item(e, rng) for e in embs)))
    assert assignment == [0, 1, 2]


def test_step_empty_frame_grows_memory_keeps_current(rng):
    embs = [unit(rng.standard_normal(6)) for _ in range(2)]
    state = init_track(FrameInstances(0, tuple(item(e, rng) for e in embs)), 4, 0.5)
    before = state.current.copy()
    _, assignment = step(state, FrameInstances(1, ()))
    assert assignment == []
    assert np.array_equal(state.current, before)
    assert np.array_equal(state.memory_sum, before)
    assert state.frames_seen == 2


def test_step_requires_consecutive_frames(rng):
    state = init_track(FrameInstances(0, ()), 4, 0.5, dim=6)
    with pytest.raises(ValueError, match="consecutive"):
        step(state, FrameInstances(2, ()))


def test_step_unmatched_detections_take_free_slots_in_order(rng):
    e0 = unit(rng.standard_normal(6))
    state = init_track(FrameInstances(0, (item(e0, rng),)), 4, 0.5)
    new1, new2 = unit(rng.standard_normal(6)), unit(rng.standard_normal(6))
    _, assignment = step(state, FrameInstances(1, (item(e0, rng), item(new1, rng), item(new2, rng))))
    assert assignment[0] == 0
    assert sorted(assignment[1:]) == [1, 2]


def test_step_capacity_error(rng):
    embs = [unit(rng.standard_normal(6)) for _ in range(2)]
    state = init_track(FrameInstances(0, tuple(item(e, rng) for e in embs)), 2, 0.5)
    crowd = tuple(item(unit(rng.standard_normal(6)), rng) for _ in range(3))
    with pytest.raises(ValueError, match="exceed"):
        step(state, FrameInstances(1, crowd))


def crossing_fixture():
    """Two objects whose appearances drift so that frame-3 matching against
    frame 2 alone swaps identities while the memory blend does not.

    Object A picks up a strong transient appearance component at frame 2 and
    returns to its original appearance at frame 3, exactly when object B
    passes through that same transient appearance.
    """
    e1 = unit([1.0, 0.0, 0.0])
    e2 = unit([0.0, 1.0, 0.0])
    a2 = unit([0.30, 0.00, 0.954])
    b2 = unit([0.35, 0.85, 0.394])
    a3 = unit([0.995, 0.00, 0.0998])
    b3 = unit([0.00, 0.438, 0.899])
    return (e1, e2), (a2, b2), (a3, b3)


def test_crossing_fixture_is_discriminative():
    # direct evaluation of both matchings, independent of the tracker
    (e1, e2), (a2, b2), (a3, b3) = crossing_fixture()
    frame1 = np.stack([e1, e2])
    frame2 = np.stack([a2, b2])
    frame3 = np.stack([a3, b3])
    sim12 = cosine_matrix(frame1, frame2)
    assert sim12[0, 0] + sim12[1, 1] > sim12[0, 1] + sim12[1, 0]  # frame 2 matches correctly
    sim23 = cosine_matrix(frame2, frame3)
    assert sim23[0, 1] + sim23[1, 0] > sim23[0, 0] + sim23[1, 1]  # pairwise frame 3 swaps
    blended = 0.5 * frame2 + 0.5 * frame1
    sim_blend = cosine_matrix(blended, frame3)
    assert sim_blend[0, 0] + sim_blend[1, 1] > sim_blend[0, 1] + sim_blend[1, 0]
    # and solve_assignment agrees with the hand ranking
    assert solve_assignment(sim23) == [(0, 1), (1, 0)]
    assert solve_assignment(sim_blend) == [(0, 0), (1, 1)]


def test_memory_corrects_crossing_misassignment(rng):
    (e1, e2), (a2, b2), (a3, b3) = crossing_fixture()

    def run(blend):
        state = init_track(FrameInstances(0, (item(e1, rng), item(e2, rng))), 2, blend)
        _, assign2 = step(state, FrameInstances(1, (item(a2, rng), item(b2, rng))))
        _, assign3 = step(state, FrameInstances(2, (item(a3, rng), item(b3, rng))))
        return assign2, assign3

    assert run(0.5) == ([0, 1], [0, 1])  # memory blend keeps identities
    assert run(1.0) == ([0, 1], [1, 0])  # consecutive-frame matching swaps at frame 3


# ---------------------------------------------------------------------------
# run_video


def test_run_video_single_object_masks_pass_through(rng):
    e = unit(rng.standard_normal(6))
    masks = [rle_encode(random_mask(rng, 5, 5)) for _ in range(4)]
    frames = [FrameInstances(t, (item(e, rng, mask=masks[t]),)) for t in range(4)]
    tracklets = run_video(frames, num_slots=3, blend=0.5, top_k=10, video_id="v")
    assert len(tracklets) == 1
    assert [en.frame_idx for en in tracklets[0].entries] == [0, 1, 2, 3]
    assert [en.mask for en in tracklets[0].entries] == masks


def test_run_video_empty_video(rng):
    frames = [FrameInstances(t, ()) for t in range(5)]
    assert run_video(frames, 4, 0.5, 10, video_id="v", dim=6) == []


def test_run_video_top_k(rng):
    embs = [unit(rng.standard_normal(8)) for _ in range(5)]
    items = tuple(
        item(e, rng, scores=np.array([0.1 * i, 1.0 - 0.1 * i])) for i, e in enumerate(embs)
    )
    frames = [FrameInstances(0, items)]
    tracklets = run_video(frames, 8, 0.5, top_k=2, video_id="v")
    assert len(tracklets) == 2
    all_t = run_video(frames, 8, 0.5, top_k=10, video_id="v")
    best_conf = sorted((t.confidence for t in all_t), reverse=True)[:2]
    assert sorted((t.confidence for t in tracklets), reverse=True) == best_conf


def test_run_video_slot_assignment_injective_each_step(rng):
    frames = random_frames(rng, 8, 4, 6)
    state = init_track(frames[0], 12, 0.5, dim=6)
    for f in frames[1:]:
        _, assignment = step(state, f)
        assert len(set(assignment)) == len(assignment)


def test_memory_recurrence_against_direct_sum(rng):
    # the running sum must reproduce the direct mean of all previously
    # aligned frames
    for trial in range(100):
        frames = random_frames(rng, int(rng.integers(2, 7)), 4, 5)
        state = init_track(frames[0], 8, 0.5, dim=5)
        history = [state.current.copy()]
        for f in frames[1:]:
            step(state, f)
            history.append(state.current.copy())
            direct_sum = np.sum(history[:-1], axis=0)
            assert np.allclose(state.memory_sum, direct_sum, atol=1e-6)
            mu = state.memory_sum / (state.frames_seen - 1)
            assert np.allclose(mu, np.mean(history[:-1], axis=0), atol=1e-6)


def consecutive_reference_tracker(frames, num_slots, dim):
    """Independent re-implementation: match each frame against the previous
    frame's slot embeddings only (no memory), same null-slot protocol."""
    slots = np.zeros((num_slots, dim))
    entries = {}
    for j, it in enumerate(frames[0].items):
        slots[j] = it.embedding
        entries.setdefault(j, []).append((frames[0].frame_idx, it))
    for f in frames[1:]:
        k = len(f.items)
        assign = [None] * k
        taken = set()
        if k:
            sim = cosine_matrix(slots, np.stack([it.embedding for it in f.items]))
            for s, j in solve_assignment(sim):
                if sim[s, j] >= -1.0:
                    assign[j] = s
                    taken.add(s)
        free = [s for s in range(num_slots) if not slots[s].any() and s not in taken]
        rest = [j for j in range(k) if assign[j] is None]
        for j, s in zip(rest, free):
            assign[j] = s
        for j, s in enumerate(assign):
            slots[s] = f.items[j].embedding
            entries.setdefault(s, []).append((f.frame_idx, f.items[j]))
    return {
        s: [(t, it.mask, tuple(np.asarray(it.class_scores))) for t, it in v]
        for s, v in entries.items()
    }


def test_blend_one_equals_consecutive_frame_reference(rng):
    for trial in range(30):
        frames = random_frames(rng, 6, 3, 5)
        want = consecutive_reference_tracker(frames, 8, 5)
        tracklets = run_video(frames, 8, 1.0, top_k=100, video_id="v", dim=5)
        got = {
            t.slot: [(e.frame_idx, e.mask, tuple(np.asarray(e.class_scores))) for e in t.entries]
            for t in tracklets
        }
        assert got == want


def test_permutation_equivariance(rng):
    frames = random_frames(rng, 6, 4, 6)
    perm_frames = []
    for f in frames:
        order = rng.permutation(len(f.items))
        perm_frames.append(FrameInstances(f.frame_idx, tuple(f.items[i] for i in order)))

    def canonical(tracklets):
        docs = []
        for t in tracklets:
            doc = io.tracklet_to_json(t)
            doc.pop("slot")
            docs.append(json.dumps(doc, sort_keys=True))
        return sorted(docs)

    a = run_video(frames, 10, 0.5, top_k=100, video_id="v", dim=6)
    b = run_video(perm_frames, 10, 0.5, top_k=100, video_id="v", dim=6)
    assert canonical(a) == canonical(b)


def test_run_video_deterministic(rng):
    frames = random_frames(rng, 7, 4, 6)
    a = run_video(frames, 10, 0.5, 10, video_id="v", dim=6)
    b = run_video(frames, 10, 0.5, 10, video_id="v", dim=6)
    assert [io.tracklet_to_json(t) for t in a] == [io.tracklet_to_json(t) for t in b]


def test_hold_last_semantics_after_empty_frame(rng):
    e = unit(rng.standard_normal(6))
    first = FrameInstances(0, (item(e, rng),))
    held = init_track(first, 4, 0.5)
    step(held, FrameInstances(1, ()))
    assert np.array_equal(held.current[0], e)
    decayed = init_track(first, 4, 0.5, hold_last=False)
    step(decayed, FrameInstances(1, ()))
    assert not decayed.current.any()


def test_hold_last_rematches_contested_slot_by_similarity(rng):
    # object A gaps for one frame; on return a stranger C is listed first.
    # With held embeddings A wins its slot back by similarity; with decay the
    # slot is free again and goes to C purely by detection order.
    a = unit(rng.standard_normal(6))
    c = unit(rng.standard_normal(6))
    mask_a0 = rle_encode(random_mask(rng, 4, 4))
    mask_c = rle_encode(random_mask(rng, 4, 4))
    mask_a2 = rle_encode(random_mask(rng, 4, 4))
    frames = [
        FrameInstances(0, (item(a, rng, mask=mask_a0),)),
        FrameInstances(1, ()),
        FrameInstances(2, (item(c, rng, mask=mask_c), item(a, rng, mask=mask_a2))),
    ]
    # blend 1.0 isolates the flag: references are the held (or decayed)
    # current embeddings alone
    held = {t.slot: [e.mask for e in t.entries] for t in run_video(frames, 4, 1.0, 10, video_id="v", dim=6)}
    assert held[0] == [mask_a0, mask_a2]
    assert held[1] == [mask_c]
    decayed = {
        t.slot: [e.mask for e in t.entries]
        for t in run_video(frames, 4, 1.0, 10, video_id="v", dim=6, hold_last=False)
    }
    assert decayed[0] == [mask_a0, mask_c]
    assert decayed[1] == [mask_a2]


# ---------------------------------------------------------------------------
# baseline


def test_memory_recovers_identity_in_at_least_as_many_seeds(rng):
    # two noisy objects per video; the blended tracker must recover a perfect
    # tracklet-to-ground-truth identity mapping in at least as many seeds as
    # consecutive-frame-only matching
    from vistrack.evaluate import _group_gt_tracks
    from vistrack.labeling import assign_labels
    from vistrack.synth import SynthConfig, generate
    from vistrack.tracking import frames_from_detections

    cfg = SynthConfig(
        num_videos=3,
        frames_per_video=16,
        objects_per_video=2,
        num_classes=1,
        embedding_dim=16,
        embedding_noise=0.1,
        object_spread=0.1,
        crossing=True,
    )

    def identity_mapping(tracklets, gt_tracks):
        gt_dicts = {}
        for g in gt_tracks:
            gt_dicts.setdefault(g.video_id, []).append(dict(g.masks))
        by_video = {}
        for t in tracklets:
            by_video.setdefault(t.video_id, []).append({e.frame_idx: e.mask for e in t.entries})
        for vid, want in gt_dicts.items():
            got = by_video.get(vid, [])
            if len(got) != len(want):
                return False
            unmatched = list(want)
            for d in got:
                if d in unmatched:
                    unmatched.remove(d)
                else:
                    return False
        return True

    wins = {0.5: 0, 1.0: 0}
    for seed in range(10):
        ds = generate(cfg, seed)
        labeled = list(assign_labels(ds.detections, ds.table))
        gt_tracks = _group_gt_tracks(ds.ground_truth)
        for blend in wins:
            tracklets = []
            for v in ds.manifest.videos:
                frames = frames_from_detections(
                    [r for r in labeled if r.video_id == v.video_id], v
                )
                tracklets += run_video(frames, 8, blend, 10, video_id=v.video_id, dim=16)
            wins[blend] += identity_mapping(tracklets, gt_tracks)
    assert wins[0.5] >= wins[1.0]


def test_baseline_single_persistent_object(rng):
    e = unit(rng.standard_normal(6))
    mask = rle_encode(random_mask(rng, 6, 6, p=0.4))
    frames = [FrameInstances(t, (item(e, rng, mask=mask),)) for t in range(5)]
    tracklets = track_baseline(frames, 1.0, 1.0, 3, video_id="v")
    assert len(tracklets) == 1
    assert len(tracklets[0].entries) == 5


def test_baseline_death_after_max_age(rng):
    e = unit(rng.standard_normal(6))
    mask = rle_encode(random_mask(rng, 6, 6, p=0.4))
    max_age = 2

    def frames_with_gap(gap):
        frames = [FrameInstances(0, (item(e, rng, mask=mask),))]
        t = 1
        for _ in range(gap):
            frames.append(FrameInstances(t, ()))
            t += 1
        frames.append(FrameInstances(t, (item(e, rng, mask=mask),)))
        return frames

    # absent for max_age frames: still alive, one tracklet
    assert len(track_baseline(frames_with_gap(max_age), 1.0, 1.0, max_age, video_id="v")) == 1
    # absent for max_age+1 frames: dead, two tracklets
    assert len(track_baseline(frames_with_gap(max_age + 1), 1.0, 1.0, max_age, video_id="v")) == 2


def test_baseline_weight_validation(rng):
    frames = [FrameInstances(0, ())]
    with pytest.raises(ValueError):
        track_baseline(frames, -1.0, 1.0, 3)
    with pytest.raises(ValueError):
        track_baseline(frames, 0.0, 0.0, 3)


def test_frames_from_detections_groups_and_validates(rng):
    video = VideoInfo("v", 8, 8, 3)
    from vistrack.types import DetectionRecord, as_embedding, as_scores

    def det(frame):
        return DetectionRecord(
            video_id="v",
            frame_idx=frame,
            box=(0.0, 0.0, 2.0, 2.0),
            mask=rle_encode(random_mask(rng, 8, 8)),
            objectness=0.9,
            embedding=as_embedding(unit(rng.standard_normal(4))),
            label=0,
            class_scores=as_scores([0.9, 0.1]),
        )

    frames = frames_from_detections([det(0), det(2), det(0)], video)
    assert [f.frame_idx for f in frames] == [0, 1, 2]
    assert [len(f.items) for f in frames] == [2, 0, 1]
    bad = det(0)
    object.__setattr__(bad, "frame_idx", 7)
    with pytest.raises(ValueError, match="outside"):
        frames_from_detections([bad], video)
