import itertools
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tapkit.core import ValidationError
from tapkit.oracles import oracle_frame_map, oracle_link
from tapkit.tubelet import (
    Box,
    FrameBox,
    FrameDetection,
    FrameGroundTruth,
    LinkConfig,
    Tubelet,
    box_iou,
    evaluate_frame_map,
    frame_detections_from,
    frame_ground_truth_from,
    link_tubelets,
    moving_average,
    read_per_frame,
    temporal_trim,
)


def random_box(rng, near=None, jitter=0.1):
    if near is None:
        x1, y1 = rng.uniform(0, 0.6, size=2)
        w, h = rng.uniform(0.1, 0.4, size=2)
    else:
        x1, y1 = np.clip([near.x1, near.y1] + rng.normal(0, jitter, size=2), 0, 0.6)
        w, h = np.clip([near.x2 - near.x1, near.y2 - near.y1] + rng.normal(0, jitter, size=2), 0.1, 0.4)
    return Box(float(x1), float(y1), float(x1 + w), float(y1 + h))


def random_frames(rng, sizes):
    frames, prev = [], []
    for n in sizes:
        f = []
        for k in range(n):
            near = prev[k % len(prev)] if prev and rng.random() < 0.7 else None
            f.append(FrameBox(random_box(rng, near), float(rng.random())))
        frames.append(f)
        prev = [fb.box for fb in f] or prev
    return frames


def test_box_iou_cases():
    a = Box(0, 0, 0.5, 0.5)
    assert box_iou(a, a) == 1.0
    assert box_iou(a, Box(0.5, 0.5, 1, 1)) == 0.0
    assert box_iou(Box(0, 0, 0.6, 0.5), Box(0.2, 0, 0.6, 0.5)) == pytest.approx(2 / 3)
    # half the width shared out of 1.5 widths of union
    assert box_iou(Box(0, 0, 0.4, 1), Box(0.2, 0, 0.6, 1)) == pytest.approx(1 / 3)
    assert box_iou(Box(0, 0, 0.5, 1), Box(0, 0, 1, 1)) == pytest.approx(0.5)


def test_box_validation():
    with pytest.raises(ValidationError):
        Box(0.5, 0, 0.2, 1)
    with pytest.raises(ValidationError):
        Box(0, 0, 1.2, 1)
    with pytest.raises(ValidationError):
        FrameBox(Box(0, 0, 1, 1), 1.5)


def test_two_frame_link():
    b = Box(0.1, 0.1, 0.5, 0.5)
    (t,) = link_tubelets([[(b, 0.9)], [(Box(0.12, 0.1, 0.52, 0.5), 0.8)]])
    assert t.length == 2 and t.start_frame == 0
    assert t.score == pytest.approx(0.85)


def test_disjoint_boxes_stay_single():
    frames = [[(Box(0, 0, 0.2, 0.2), 0.9)], [(Box(0.5, 0.5, 0.9, 0.9), 0.9)], [(Box(0, 0.6, 0.3, 0.9), 0.9)]]
    out = link_tubelets(frames)
    assert len(out) == 3 and all(t.length == 1 for t in out)
    assert [t.start_frame for t in out] == [0, 1, 2]


def test_min_link_iou_gate():
    frames = [[(Box(0, 0, 0.4, 1), 0.9)], [(Box(0.2, 0, 0.6, 1), 0.9)]]  # iou 1/3
    assert len(link_tubelets(frames, LinkConfig(min_link_iou=0.3))) == 1
    assert len(link_tubelets(frames, LinkConfig(min_link_iou=0.4))) == 2


def test_overlap_weight_changes_choice():
    a = Box(0.1, 0.1, 0.5, 0.5)
    close, far = Box(0.1, 0.1, 0.5, 0.5), Box(0.3, 0.3, 0.7, 0.7)
    frames = [[(a, 0.5)], [(close, 0.5), (far, 0.6)]]
    assert link_tubelets(frames, LinkConfig(overlap_weight=0.0))[0].members == ((0, 0), (1, 1))
    assert link_tubelets(frames, LinkConfig(overlap_weight=1.0))[0].members == ((0, 0), (1, 0))


def test_no_frames_errors():
    with pytest.raises(ValidationError):
        link_tubelets([])


def _members(tubelets):
    return [t.members for t in tubelets]


def test_exhaustive_small_instances_match_oracle():
    cfg = LinkConfig(min_link_iou=0.1)
    checked = 0
    for n_frames in (1, 2, 3):
        for sizes in itertools.product(range(3), repeat=n_frames):
            for seed in range(6):
                rng = np.random.default_rng([n_frames, *sizes, seed])
                frames = random_frames(rng, sizes)
                assert _members(link_tubelets(frames, cfg)) == oracle_link(frames, cfg)
                checked += 1
    assert checked > 200


def test_random_four_frame_instances_match_oracle():
    for seed in range(100):
        rng = np.random.default_rng(seed)
        sizes = rng.integers(0, 4, size=4)
        frames = random_frames(rng, sizes)
        cfg = LinkConfig(overlap_weight=float(rng.choice([0.0, 0.5, 1.0, 2.0])), min_link_iou=float(rng.choice([0.0, 0.1, 0.3])))
        assert _members(link_tubelets(frames, cfg)) == oracle_link(frames, cfg)


@given(st.integers(0, 10**6), st.integers(1, 12))
def test_tubelets_partition_boxes_and_are_contiguous(seed, T):
    rng = np.random.default_rng(seed)
    frames = random_frames(rng, rng.integers(0, 4, size=T))
    out = link_tubelets(frames)
    used = [m for t in out for m in t.members]
    assert len(used) == len(set(used)) == sum(len(f) for f in frames)
    for t in out:
        assert [f for f, _ in t.members] == list(range(t.start_frame, t.end_frame))
        for (f, i), (box, act) in zip(t.members, t.boxes):
            assert frames[f][i].box == box and frames[f][i].actionness == act
        for (f, i), (_, j) in zip(t.members, t.members[1:]):
            assert box_iou(frames[f][i].box, frames[f + 1][j].box) >= 0.1


def _tube(acts):
    return Tubelet("v", 0, tuple((Box(0, 0, 1, 1), a) for a in acts), float(np.mean(acts)), tuple((i, 0) for i in range(len(acts))))


def test_trim_hand_case():
    t = temporal_trim(_tube([0.1, 0.1, 0.9, 0.9, 0.9, 0.1]), LinkConfig(trim_window=1, trim_threshold=0.3))
    assert (t.start_frame, t.end_frame) == (2, 5)
    assert t.score == pytest.approx(0.9)
    assert t.members == ((2, 0), (3, 0), (4, 0))


def test_trim_keeps_uniform_and_drops_idle():
    full = _tube([0.9] * 6)
    assert temporal_trim(full, LinkConfig(trim_window=3)) == full
    assert temporal_trim(_tube([0.0] * 6)) is None


def test_trim_picks_longest_run():
    t = temporal_trim(_tube([0.9, 0.0, 0.9, 0.9, 0.0]), LinkConfig(trim_window=1))
    assert (t.start_frame, t.end_frame) == (2, 4)


@given(st.lists(st.floats(0, 1), min_size=1, max_size=30), st.integers(1, 10))
def test_trimmed_is_sub_interval(acts, w):
    t = temporal_trim(_tube(acts), LinkConfig(trim_window=w))
    if t is not None:
        assert 0 <= t.start_frame < t.end_frame <= len(acts)
        np.testing.assert_array_equal([a for _, a in t.boxes], acts[t.start_frame:t.end_frame])


def test_moving_average():
    np.testing.assert_allclose(moving_average(np.array([0.0, 3.0, 0.0, 3.0]), 3), [1.5, 1.0, 2.0, 1.5])
    x = np.random.default_rng(0).random(9)
    np.testing.assert_allclose(moving_average(x, 1), x, atol=1e-15)


def _frame_instance(seed):
    rng = np.random.default_rng(seed)
    gt, dets = [], []
    for v in ("a", "b"):
        for f in range(int(rng.integers(1, 5))):
            for _ in range(int(rng.integers(0, 3))):
                box, lab = random_box(rng), str(rng.choice(["x", "y"]))
                gt.append(FrameGroundTruth(v, f, box, lab))
                if rng.random() < 0.7:
                    dets.append(FrameDetection(v, f, random_box(rng, box, 0.05), lab, float(rng.random())))
            for _ in range(int(rng.integers(0, 2))):
                dets.append(FrameDetection(v, f, random_box(rng), str(rng.choice(["x", "y"])), float(rng.random())))
    return gt, dets


def test_frame_map_identity_and_empty():
    gt, _ = _frame_instance(0)
    perfect = [FrameDetection(g.video_id, g.frame, g.box, g.label, 1.0) for g in gt]
    assert evaluate_frame_map(perfect, gt) == 1.0
    assert evaluate_frame_map([], gt) == 0.0
    with pytest.raises(ValidationError):
        evaluate_frame_map(perfect, [])


@given(st.integers(0, 10**6), st.sampled_from([0.3, 0.5, 0.7]))
def test_frame_map_matches_oracle(seed, iou):
    gt, dets = _frame_instance(seed)
    if not gt:
        return
    assert evaluate_frame_map(dets, gt, iou) == pytest.approx(oracle_frame_map(dets, gt, iou), abs=1e-12)


def test_per_frame_json_roundtrip(tmp_path):
    rec = {"video_id": "v", "frames": [[{"box": [0, 0, 0.5, 0.5], "actionness": 0.7, "label": "x", "score": 0.4}], []]}
    path = tmp_path / "pf.json"
    path.write_text(json.dumps([rec]))
    ((vid, frames),) = read_per_frame(path)
    assert vid == "v" and len(frames) == 2 and frames[0][0].actionness == 0.7
    (d,) = frame_detections_from([(vid, frames)])
    assert d.score == 0.4 and d.label == "x"
    (g,) = frame_ground_truth_from([(vid, frames)])
    assert g.box == Box(0, 0, 0.5, 0.5)


def test_per_frame_json_rejects_bad_records(tmp_path):
    path = tmp_path / "pf.json"
    path.write_text(json.dumps({"frames": []}))
    with pytest.raises(ValidationError):
        read_per_frame(path)
    path.write_text(json.dumps({"video_id": "v", "frames": [[{"actionness": 0.5}]]}))
    with pytest.raises(ValidationError):
        read_per_frame(path)
