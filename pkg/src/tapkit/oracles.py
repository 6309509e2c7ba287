"""Naive reference implementations used to cross-check the production code.

Nothing here imports from ``evaluation``, ``nms``, ``tubelet`` or ``pipeline``;
only the core types are shared. Everything is plain loops and exhaustive
enumeration, so keep instances small.
"""

from __future__ import annotations

import itertools
from typing import Sequence

from .core import Detection, GroundTruthSet, Proposal, ValidationError

THRESHOLDS = [0.5 + 0.05 * i for i in range(10)]
EPS = 1e-12


def _overlap(a, b) -> float:
    lo = a.start if a.start > b.start else b.start
    hi = a.end if a.end < b.end else b.end
    if hi <= lo:
        return 0.0
    return (hi - lo) / ((a.end - a.start) + (b.end - b.start) - (hi - lo))


def _rank_key(p):
    return (-p.score, p.segment.start, p.segment.end - p.segment.start)


def oracle_evaluate_proposals(proposals: Sequence[Proposal], gt: GroundTruthSet, max_an: int = 100):
    """Returns ``(ar_values, auc)`` over AN = 1..max_an."""
    total = sum(len(gt[v].annotations) for v in gt)
    if total == 0:
        raise ValidationError("empty ground truth")
    per_video = {v: sorted([p for p in proposals if p.video_id == v], key=_rank_key) for v in gt}
    ar = []
    for an in range(1, max_an + 1):
        recalls = []
        for tau in THRESHOLDS:
            hit = 0
            for v in gt:
                top = per_video[v][:an]
                for ann in gt[v].annotations:
                    if any(_overlap(p.segment, ann.segment) >= tau - EPS for p in top):
                        hit += 1
            recalls.append(hit / total)
        ar.append(sum(recalls) / len(recalls))
    return ar, sum(ar) / len(ar)


def _envelope_ap(tp_flags: list[bool], n_pos: int) -> float:
    """Area under the monotone precision envelope, summed over recall increments."""
    precisions, recalls = [], []
    hits = 0
    for i, flag in enumerate(tp_flags):
        hits += flag
        precisions.append(hits / (i + 1))
        recalls.append(hits / n_pos)
    ap, prev_recall = 0.0, 0.0
    for i, flag in enumerate(tp_flags):
        if flag:
            best = max(precisions[i:])  # max precision at any recall >= this one
            ap += (recalls[i] - prev_recall) * best
            prev_recall = recalls[i]
    return ap


def oracle_class_ap(detections: Sequence[Detection], gt: GroundTruthSet, label: str, tau: float) -> float:
    gts = [(v, k, a.segment) for v in gt for k, a in enumerate(gt[v].annotations) if a.label == label]
    dets = sorted(
        [d for d in detections if d.label == label and d.video_id in gt],
        key=lambda d: (-d.score, d.video_id, d.segment.start, d.segment.end),
    )
    taken = set()
    flags = []
    for d in dets:
        candidates = [(_overlap(d.segment, seg), k) for v, k, seg in gts if v == d.video_id]
        # highest overlap first; equal overlaps in annotation order
        candidates.sort(key=lambda c: (-c[0], c[1]))
        matched = False
        for o, k in candidates:
            if o < tau - EPS:
                break
            if (d.video_id, k) not in taken:
                taken.add((d.video_id, k))
                matched = True
                break
        flags.append(matched)
    return _envelope_ap(flags, len(gts))


def oracle_ap(detections: Sequence[Detection], gt: GroundTruthSet, tau: float) -> float:
    """mAP at one threshold, averaged over the classes that have ground truth."""
    labels = sorted({a.label for v in gt for a in gt[v].annotations})
    if not labels:
        raise ValidationError("empty ground truth")
    return sum(oracle_class_ap(detections, gt, lab, tau) for lab in labels) / len(labels)


def oracle_nms(proposals: Sequence[Proposal], threshold: float) -> list[Proposal]:
    remaining = sorted(proposals, key=_rank_key)
    kept = []
    while remaining:
        head = remaining.pop(0)
        kept.append(head)
        remaining = [p for p in remaining if _overlap(head.segment, p.segment) < threshold]
    return kept


def oracle_fuse(per_stream: dict, weights: dict, merge_tiou: float, nms_tiou: float, k: int) -> list[Proposal]:
    """Cross-stream fusion by explicit pairing of each proposal against every existing group."""
    streams = sorted([s for s in per_stream if weights[s] > 0], key=lambda s: (-weights[s], s))
    out = []
    for vid in sorted({p.video_id for s in per_stream for p in per_stream[s]}):
        groups = []  # [segment, {stream: score}]
        for s in streams:
            for p in sorted([q for q in per_stream[s] if q.video_id == vid], key=_rank_key):
                scored = [(_overlap(p.segment, g[0]), gi) for gi, g in enumerate(groups) if s not in g[1]]
                scored = [c for c in scored if c[0] >= merge_tiou]
                if scored:
                    _, gi = max(scored, key=lambda c: (c[0], -c[1]))
                    groups[gi][1][s] = p.score
                else:
                    groups.append([p.segment, {s: p.score}])
        props = [
            Proposal(vid, seg, min(1.0, max(0.0, sum(weights[s] * v for s, v in m.items()))), "FUSED")
            for seg, m in groups
        ]
        out.extend(oracle_nms(props, nms_tiou)[:k])
    return out


# ---------------------------------------------------------------------------
# tubelets


def _box_overlap(a, b) -> float:
    w = min(a.x2, b.x2) - max(a.x1, b.x1)
    h = min(a.y2, b.y2) - max(a.y1, b.y1)
    if w <= 0 or h <= 0:
        return 0.0
    inter = w * h
    return inter / ((a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter)


def _all_paths(frames, alive, cfg):
    """Every path of >= 2 consecutive-frame boxes with allowed links, with its score."""
    paths = []

    def extend(path, score):
        t, i = path[-1]
        if len(path) >= 2:
            paths.append((score, list(path)))
        if t + 1 >= len(frames):
            return
        for j, bj in enumerate(frames[t + 1]):
            if (t + 1, j) not in alive:
                continue
            bi = frames[t][i]
            o = _box_overlap(bi.box, bj.box)
            if o <= 0 or o < cfg.min_link_iou:
                continue
            extend(path + [(t + 1, j)], score + bi.actionness + bj.actionness + cfg.overlap_weight * o)

    for t, f in enumerate(frames):
        for i in range(len(f)):
            if (t, i) in alive:
                extend([(t, i)], 0.0)
    return paths


def oracle_link(per_frame, cfg, video_id: str = "") -> list[tuple[tuple[int, int], ...]]:
    """Tubelets as tuples of (frame, index) members, in extraction order."""
    from .tubelet import FrameBox  # type only; no linking logic is shared

    frames = [[x if isinstance(x, FrameBox) else FrameBox(x[0], float(x[1])) for x in f] for f in per_frame]
    if len(frames) > 4 or any(len(f) > 3 for f in frames):
        raise ValidationError("oracle_link handles at most 4 frames with 3 boxes each")
    alive = {(t, i) for t, f in enumerate(frames) for i in range(len(f))}
    out = []
    while True:
        paths = _all_paths(frames, alive, cfg)
        if not paths:
            break
        score, path = max(paths, key=lambda sp: sp[0])
        ties = [p for s, p in paths if s == score]
        if len(ties) > 1:
            raise ValidationError("oracle_link: tied best paths, instance is ambiguous")
        out.append(tuple(path))
        alive -= set(path)
    out.extend(((t, i),) for t, i in sorted(alive))
    return out


def oracle_frame_map(detections, gt, iou: float = 0.5) -> float:
    labels = sorted({g.label for g in gt})
    if not labels:
        raise ValidationError("empty ground truth")
    aps = []
    for lab in labels:
        gts = [(k, g) for k, g in enumerate(gt) if g.label == lab]
        dets = sorted(
            [d for d in detections if d.label == lab],
            key=lambda d: (-d.score, d.video_id, d.frame, d.box.as_list()),
        )
        taken, flags = set(), []
        for d in dets:
            cands = sorted(
                ((_box_overlap(d.box, g.box), k) for k, g in gts if g.video_id == d.video_id and g.frame == d.frame),
                key=lambda c: (-c[0], c[1]),
            )
            hit = False
            for o, k in cands:
                if o < iou:
                    break
                if k not in taken:
                    taken.add(k)
                    hit = True
                    break
            flags.append(hit)
        aps.append(_envelope_ap(flags, len(gts)))
    return sum(aps) / len(aps)


def oracle_consensus(candidates) -> tuple[int, float]:
    """Index and score of the consensus caption, by the explicit pairwise mean."""
    from collections import Counter

    def sim(a, b):
        def f1(n):
            ca = Counter(tuple(a[i:i + n]) for i in range(len(a) - n + 1))
            cb = Counter(tuple(b[i:i + n]) for i in range(len(b) - n + 1))
            tot = sum(ca.values()) + sum(cb.values())
            return 2 * sum(min(ca[g], cb[g]) for g in ca) / tot if tot else 0.0

        if len(a) < 2 and len(b) < 2:
            return f1(1)
        return (f1(1) + (f1(2) if len(a) > 1 and len(b) > 1 else 0.0)) / 2

    if len(candidates) == 1:
        return 0, 1.0
    scores = [
        sum(sim(c, o) for j, o in enumerate(candidates) if j != i) / (len(candidates) - 1)
        for i, c in enumerate(candidates)
    ]
    best = max(range(len(scores)), key=lambda i: (scores[i], -i))
    return best, scores[best]


def brute_force_kernel(x, y) -> float:
    """Exact second-order polynomial kernel <x, y>^2."""
    return float(sum(a * b for a, b in zip(x, y))) ** 2


def all_simplex_points(n: int, m: int):
    return [c for c in itertools.product(range(m + 1), repeat=n) if sum(c) == m]
