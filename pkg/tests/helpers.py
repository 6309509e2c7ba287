"""Random instance builders shared by the test modules."""

import numpy as np

from tapkit.core import Annotation, Detection, GroundTruthSet, Proposal, TemporalSegment, VideoAnnotations


def make_gt(layout):
    """``layout``: {vid: (duration, [(start, end, label), ...])}."""
    return GroundTruthSet(
        {
            vid: VideoAnnotations(dur, tuple(Annotation(TemporalSegment(s, e), lab) for s, e, lab in anns))
            for vid, (dur, anns) in layout.items()
        }
    )


def random_segment(rng, duration, grid=None):
    if grid:
        a, b = sorted(rng.choice(int(duration / grid) + 1, size=2, replace=False))
        return TemporalSegment(a * grid, b * grid)
    a, b = sorted(rng.uniform(0, duration, size=2))
    if b - a < 1e-3:
        b = min(duration, a + 1.0)
    return TemporalSegment(a, b)


def random_instance(seed, max_videos=10, max_props=30, labels=("a", "b", "c"), grid=None):
    """Ground truth plus proposals and detections drawn near it.

    ``grid`` puts endpoints on a lattice, which forces exact tIoU ties.
    """
    rng = np.random.default_rng(seed)
    layout, props, dets = {}, [], []
    for v in range(int(rng.integers(1, max_videos + 1))):
        vid = f"vid{v}"
        dur = float(rng.integers(20, 100))
        anns = [(*random_segment(rng, dur, grid).as_list(), str(rng.choice(labels))) for _ in range(int(rng.integers(1, 4)))]
        layout[vid] = (dur, anns)
        for _ in range(int(rng.integers(0, max_props + 1))):
            if anns and rng.random() < 0.5:
                s, e, lab = anns[int(rng.integers(len(anns)))]
                j = rng.normal(0, 0.1 * (e - s), size=2)
                s2, e2 = max(0.0, s + j[0]), min(dur, e + j[1])
                seg = TemporalSegment(s2, e2) if e2 > s2 else TemporalSegment(s, e)
            else:
                seg = random_segment(rng, dur, grid)
                lab = str(rng.choice(labels))
            score = float(rng.choice([0.25, 0.5, 0.75])) if grid else float(rng.random())
            props.append(Proposal(vid, seg, score))
            dets.append(Detection(vid, seg, lab if rng.random() < 0.7 else str(rng.choice(labels)), score))
    return make_gt(layout), props, dets


def planted_sequences(n, T, D, seed, signal=2.0, noise=0.3, fps=1.0):
    """Sequences with one high-signal gt interval each; returns TrainSamples."""
    from tapkit.can import TrainSample

    rng = np.random.default_rng(seed)
    direction = rng.standard_normal(D)
    direction /= np.linalg.norm(direction)
    out = []
    for _ in range(n):
        length = int(rng.integers(T // 8, T // 3))
        a = int(rng.integers(0, T - length))
        x = noise * rng.standard_normal((T, D))
        x[a:a + length] += signal * direction
        out.append(TrainSample(x, (TemporalSegment(a / fps, (a + length) / fps),), fps))
    return out


def gradient_check(net, batch, seed=0, eps=1e-5):
    """Max relative error between analytic and central-difference gradients over every parameter."""
    from tapkit.can import loss_and_grads, prepare_targets, sample_anchors

    rng = np.random.default_rng(seed)
    targets = prepare_targets(batch, net.cfg)
    masks = [sample_anchors(lab, net.cfg.sample_ratio, rng) for lab, _ in targets]
    _, grads = loss_and_grads(net, batch, targets, masks)
    worst = 0.0
    for name, p in net.params.items():
        flat = p.reshape(-1)
        num = np.zeros_like(flat)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + eps
            up = loss_and_grads(net, batch, targets, masks)[0].total
            flat[i] = old - eps
            down = loss_and_grads(net, batch, targets, masks)[0].total
            flat[i] = old
            num[i] = (up - down) / (2 * eps)
        ana = grads[name].reshape(-1)
        rel = np.abs(ana - num) / np.maximum(np.maximum(np.abs(ana), np.abs(num)), 1e-8)
        worst = max(worst, float(rel.max()))
    return worst
