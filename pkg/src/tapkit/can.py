"""Temporal convolutional anchor network.

A small 1D convnet in numpy (float64) with hand-written backpropagation:

    base:   conv k3 s1 (D -> C) + ReLU                      stride 1
    down_i: conv k3 s2 (C -> C) + ReLU, i = 1..log2(max)   stride 2**i
    heads:  at each configured stride s, a k3 s1 classification conv
            (C -> A) and a k3 s1 regression conv (C -> 2A)

Every convolution zero-pads one step on each side. A stride-2 layer emits
``floor(L / 2)`` outputs so that the cells at stride ``s`` tile the input as
``[i*s, (i+1)*s)``; the cell count at stride ``s`` is ``floor(T / s)``.
Anchors are enumerated level by level, then cell by cell, then scale by scale,
which is also the order of the network outputs.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .core import FeatureSequence, FormatError, Proposal, Stage, TemporalSegment, ValidationError
from .evaluation import tiou_matrix
from .nms import nms

POS, NEG, IGNORE = 1, 0, -1


@dataclass(frozen=True)
class CanConfig:
    input_dim: int
    base_channels: int = 64
    level_strides: tuple[int, ...] = (2, 4, 8, 16)
    # anchor lengths in time steps, one tuple per level; default stride * (4, 6, 8)
    anchor_scales: tuple[tuple[float, ...], ...] | None = None
    pos_tiou: float = 0.6
    neg_tiou: float = 0.3
    sample_ratio: tuple[int, int] = (1, 3)
    reg_weight: float = 1.0
    lr: float = 0.01
    momentum: float = 0.9
    grad_clip: float = 5.0
    cascade_rounds: int = 1
    refine_nms_tiou: float = 0.8
    refine_topk: int = 10

    def __post_init__(self):
        strides = tuple(int(s) for s in self.level_strides)
        object.__setattr__(self, "level_strides", strides)
        if self.anchor_scales is None:
            scales = tuple(tuple(float(s * m) for m in (4, 6, 8)) for s in strides)
        else:
            scales = tuple(tuple(float(x) for x in lvl) for lvl in self.anchor_scales)
        object.__setattr__(self, "anchor_scales", scales)
        object.__setattr__(self, "sample_ratio", tuple(int(x) for x in self.sample_ratio))
        if self.input_dim < 1 or self.base_channels < 1:
            raise ValidationError("input_dim and base_channels must be positive")
        if not strides or any(b <= a for a, b in zip(strides, strides[1:])):
            raise ValidationError("level_strides must be non-empty and strictly increasing")
        if any(s < 1 or s & (s - 1) for s in strides):
            raise ValidationError("level_strides must be powers of two")
        if len(scales) != len(strides) or any(not lvl or min(lvl) <= 0 for lvl in scales):
            raise ValidationError("need one non-empty tuple of positive anchor scales per level")
        if not 0 < self.neg_tiou < self.pos_tiou <= 1:
            raise ValidationError("need 0 < neg_tiou < pos_tiou <= 1")
        if self.cascade_rounds < 1:
            raise ValidationError("cascade_rounds must be >= 1")

    @property
    def n_down(self) -> int:
        return int(math.log2(max(self.level_strides)))

    def to_json(self) -> dict:
        d = asdict(self)
        d["level_strides"] = list(self.level_strides)
        d["anchor_scales"] = [list(s) for s in self.anchor_scales]
        d["sample_ratio"] = list(self.sample_ratio)
        return d


# ---------------------------------------------------------------------------
# anchors and target coding


@dataclass(frozen=True)
class Anchor:
    center: float
    length: float
    level: int
    cell: int


@dataclass(frozen=True, eq=False)
class AnchorSet:
    centers: np.ndarray
    lengths: np.ndarray
    levels: np.ndarray
    cells: np.ndarray

    def __len__(self) -> int:
        return int(self.centers.shape[0])

    def __iter__(self) -> Iterator[Anchor]:
        for c, l, lv, ce in zip(self.centers, self.lengths, self.levels, self.cells):
            yield Anchor(float(c), float(l), int(lv), int(ce))

    def __getitem__(self, i) -> Anchor:
        return Anchor(float(self.centers[i]), float(self.lengths[i]), int(self.levels[i]), int(self.cells[i]))

    @property
    def starts(self) -> np.ndarray:
        return self.centers - self.lengths / 2

    @property
    def ends(self) -> np.ndarray:
        return self.centers + self.lengths / 2


def cells_at(T: int, stride: int) -> int:
    L = T
    for _ in range(int(math.log2(stride))):
        L //= 2
    return L


def generate_anchors(T: int, fps: float, cfg: CanConfig) -> AnchorSet:
    centers, lengths, levels, cells = [], [], [], []
    for lvl, (stride, scales) in enumerate(zip(cfg.level_strides, cfg.anchor_scales)):
        n = cells_at(T, stride)
        if n == 0:
            continue
        idx = np.repeat(np.arange(n), len(scales))
        centers.append((idx + 0.5) * stride / fps)
        lengths.append(np.tile(np.asarray(scales) / fps, n))
        levels.append(np.full(idx.shape, lvl))
        cells.append(idx)
    if not centers:
        empty = np.zeros(0)
        return AnchorSet(empty, empty, empty.astype(int), empty.astype(int))
    return AnchorSet(*(np.concatenate(x) for x in (centers, lengths, levels, cells)))


def _interval_tiou(starts, ends, g_starts, g_ends) -> np.ndarray:
    inter = np.clip(np.minimum(ends[:, None], g_ends[None]) - np.maximum(starts[:, None], g_starts[None]), 0, None)
    union = np.maximum(ends[:, None], g_ends[None]) - np.minimum(starts[:, None], g_starts[None])
    return np.where(inter > 0, inter / union, 0.0)


def encode_targets(anchors: AnchorSet, gt_segments: Sequence[TemporalSegment], cfg: CanConfig):
    """Label anchors pos/neg/ignore and compute regression targets for positives.

    Returns ``(labels, deltas, matched)``; ``matched`` is the gt index per
    anchor (-1 where none). An anchor that is the best match of some gt is
    positive even below ``pos_tiou``, provided its tIoU reaches ``neg_tiou``.
    """
    n = len(anchors)
    labels = np.full(n, NEG, dtype=int)
    deltas = np.zeros((n, 2))
    matched = np.full(n, -1, dtype=int)
    if n == 0 or not gt_segments:
        return labels, deltas, matched
    gs = np.array([g.start for g in gt_segments])
    ge = np.array([g.end for g in gt_segments])
    ious = _interval_tiou(anchors.starts, anchors.ends, gs, ge)
    best_gt = ious.argmax(axis=1)
    best_iou = ious[np.arange(n), best_gt]
    labels[best_iou >= cfg.neg_tiou] = IGNORE
    pos = best_iou >= cfg.pos_tiou
    labels[pos] = POS
    matched[pos] = best_gt[pos]
    for g in range(len(gt_segments)):
        a = int(ious[:, g].argmax())
        if labels[a] != POS and ious[a, g] >= cfg.neg_tiou:
            labels[a] = POS
            matched[a] = g
    sel = labels == POS
    gc = 0.5 * (gs + ge)
    gl = ge - gs
    m = matched[sel]
    deltas[sel, 0] = (gc[m] - anchors.centers[sel]) / anchors.lengths[sel]
    deltas[sel, 1] = np.log(gl[m] / anchors.lengths[sel])
    return labels, deltas, matched


def decode_arrays(centers, lengths, deltas, duration: float, min_length: float = 1e-6):
    deltas = np.asarray(deltas, dtype=np.float64).reshape(-1, 2)
    c = centers + deltas[:, 0] * lengths
    l = lengths * np.exp(np.clip(deltas[:, 1], -20.0, 20.0))
    starts = np.clip(c - l / 2, 0.0, duration)
    ends = np.clip(c + l / 2, 0.0, duration)
    return starts, ends, (ends - starts) >= min_length


def decode_predictions(anchors: AnchorSet, deltas, video_duration: float) -> list[TemporalSegment]:
    starts, ends, keep = decode_arrays(anchors.centers, anchors.lengths, deltas, video_duration)
    return [TemporalSegment(float(s), float(e)) for s, e, k in zip(starts, ends, keep) if k]


# ---------------------------------------------------------------------------
# network


def _param_specs(cfg: CanConfig) -> list[tuple[str, tuple[int, ...]]]:
    C, D = cfg.base_channels, cfg.input_dim
    specs = [("base.W", (3, D, C)), ("base.b", (C,))]
    for i in range(cfg.n_down):
        specs += [(f"down{i + 1}.W", (3, C, C)), (f"down{i + 1}.b", (C,))]
    for lvl, scales in enumerate(cfg.anchor_scales):
        A = len(scales)
        specs += [
            (f"head{lvl}.cls.W", (3, C, A)),
            (f"head{lvl}.cls.b", (A,)),
            (f"head{lvl}.reg.W", (3, C, 2 * A)),
            (f"head{lvl}.reg.b", (2 * A,)),
        ]
    return specs


class CanNetwork:
    """Parameters (in serialization order) plus SGD momentum buffers."""

    def __init__(self, cfg: CanConfig, params: dict[str, np.ndarray]):
        specs = _param_specs(cfg)
        if [k for k, _ in specs] != list(params):
            raise ValidationError("parameter names do not match the configuration")
        for name, shape in specs:
            if params[name].shape != shape:
                raise ValidationError(f"{name} has shape {params[name].shape}, expected {shape}")
            if not np.all(np.isfinite(params[name])):
                raise ValidationError(f"{name} contains non-finite values")
        self.cfg = cfg
        self.params = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}
        self.velocity = {k: np.zeros_like(v) for k, v in self.params.items()}

    @classmethod
    def init(cls, cfg: CanConfig, seed: int = 0) -> "CanNetwork":
        rng = np.random.default_rng(seed)
        params = {}
        for name, shape in _param_specs(cfg):
            if name.endswith(".W"):
                fan_in = shape[0] * shape[1]
                gain = 0.1 if ".reg." in name or ".cls." in name else 1.0
                params[name] = rng.standard_normal(shape) * gain * math.sqrt(2.0 / fan_in)
            else:
                params[name] = np.zeros(shape)
        return cls(cfg, params)

    @classmethod
    def zeros(cls, cfg: CanConfig) -> "CanNetwork":
        return cls(cfg, {name: np.zeros(shape) for name, shape in _param_specs(cfg)})

    def copy(self) -> "CanNetwork":
        net = CanNetwork(self.cfg, {k: v.copy() for k, v in self.params.items()})
        net.velocity = {k: v.copy() for k, v in self.velocity.items()}
        return net


def _conv(x: np.ndarray, W: np.ndarray, b: np.ndarray, stride: int):
    """x: (B, L, Cin) -> (B, L_out, Cout); returns output and im2col cache."""
    B, L, Cin = x.shape
    L_out = L if stride == 1 else L // 2
    xpad = np.zeros((B, L + 2, Cin))
    xpad[:, 1:L + 1] = x
    cols = np.stack([xpad[:, k:k + stride * L_out:stride] for k in range(3)], axis=2)
    out = cols.reshape(B, L_out, 3 * Cin) @ W.reshape(3 * Cin, -1) + b
    return out, (cols, L, stride)


def _conv_backward(dout: np.ndarray, W: np.ndarray, cache):
    cols, L, stride = cache
    B, L_out, _, Cin = cols.shape
    flat = cols.reshape(B * L_out, 3 * Cin)
    g = dout.reshape(B * L_out, -1)
    dW = (flat.T @ g).reshape(W.shape)
    db = g.sum(axis=0)
    dcols = (g @ W.reshape(3 * Cin, -1).T).reshape(B, L_out, 3, Cin)
    dxpad = np.zeros((B, L + 2, Cin))
    for k in range(3):
        dxpad[:, k:k + stride * L_out:stride] += dcols[:, :, k]
    return dxpad[:, 1:L + 1], dW, db


def _forward_batch(net: CanNetwork, x: np.ndarray, keep_cache: bool = False):
    """x: (B, T, D). Returns logits (B, N), deltas (B, N, 2) and the backprop cache."""
    cfg, P = net.cfg, net.params
    caches = {}
    feats = []
    h, c = _conv(x, P["base.W"], P["base.b"], 1)
    caches["base"] = (c, h > 0)
    h = np.maximum(h, 0)
    feats.append(h)
    for i in range(cfg.n_down):
        h, c = _conv(h, P[f"down{i + 1}.W"], P[f"down{i + 1}.b"], 2)
        caches[f"down{i + 1}"] = (c, h > 0)
        h = np.maximum(h, 0)
        feats.append(h)
    logits, deltas = [], []
    B = x.shape[0]
    for lvl, (stride, scales) in enumerate(zip(cfg.level_strides, cfg.anchor_scales)):
        hl = feats[int(math.log2(stride))]
        if hl.shape[1] == 0:
            continue
        z, cz = _conv(hl, P[f"head{lvl}.cls.W"], P[f"head{lvl}.cls.b"], 1)
        r, cr = _conv(hl, P[f"head{lvl}.reg.W"], P[f"head{lvl}.reg.b"], 1)
        caches[f"head{lvl}"] = (cz, cr, hl.shape[1], len(scales))
        logits.append(z.reshape(B, -1))
        deltas.append(r.reshape(B, -1, 2))
    if logits:
        out = np.concatenate(logits, axis=1), np.concatenate(deltas, axis=1)
    else:
        out = np.zeros((B, 0)), np.zeros((B, 0, 2))
    return out + (((caches, [f.shape[1] for f in feats]),) if keep_cache else (None,))


def _backward_batch(net: CanNetwork, dlogits: np.ndarray, ddeltas: np.ndarray, cache) -> dict[str, np.ndarray]:
    cfg, P = net.cfg, net.params
    caches, lengths = cache
    grads = {k: np.zeros_like(v) for k, v in P.items()}
    B = dlogits.shape[0]
    dfeats = [np.zeros((B, L, cfg.base_channels)) for L in lengths]
    offset = 0
    for lvl, stride in enumerate(cfg.level_strides):
        key = f"head{lvl}"
        if key not in caches:
            continue
        cz, cr, L, A = caches[key]
        n = L * A
        dz = dlogits[:, offset:offset + n].reshape(B, L, A)
        dr = ddeltas[:, offset:offset + n].reshape(B, L, 2 * A)
        offset += n
        dh1, grads[f"{key}.cls.W"], grads[f"{key}.cls.b"] = _conv_backward(dz, P[f"{key}.cls.W"], cz)
        dh2, grads[f"{key}.reg.W"], grads[f"{key}.reg.b"] = _conv_backward(dr, P[f"{key}.reg.W"], cr)
        dfeats[int(math.log2(stride))] += dh1 + dh2
    for i in range(cfg.n_down, 0, -1):
        c, mask = caches[f"down{i}"]
        dpre = dfeats[i] * mask
        dx, grads[f"down{i}.W"], grads[f"down{i}.b"] = _conv_backward(dpre, P[f"down{i}.W"], c)
        dfeats[i - 1] += dx
    c, mask = caches["base"]
    _, grads["base.W"], grads["base.b"] = _conv_backward(dfeats[0] * mask, P["base.W"], c)
    return grads


def _as_matrix(features, D: int) -> np.ndarray:
    x = features.values if isinstance(features, FeatureSequence) else np.asarray(features)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != D:
        raise ValidationError(f"features have shape {x.shape}, network expects D={D}")
    if not np.all(np.isfinite(x)):
        raise ValidationError("features contain non-finite values")
    return x


def forward(net: CanNetwork, features) -> tuple[np.ndarray, np.ndarray]:
    """Per-anchor classification logits (N,) and regression deltas (N, 2)."""
    x = _as_matrix(features, net.cfg.input_dim)
    logits, deltas, _ = _forward_batch(net, x[None])
    return logits[0], deltas[0]


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True, eq=False)
class TrainSample:
    features: np.ndarray  # (T, D)
    gt: tuple[TemporalSegment, ...]
    fps: float


@dataclass(frozen=True)
class LossBreakdown:
    cls: float
    reg: float
    total: float
    n_pos: int
    n_neg: int


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z)))


def _bce_with_logits(z, y):
    return np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))


def sample_anchors(labels: np.ndarray, ratio: tuple[int, int], rng: np.random.Generator) -> np.ndarray:
    """Boolean mask: every positive plus a random subset of negatives at ``pos:neg = ratio``."""
    pos = np.flatnonzero(labels == POS)
    neg = np.flatnonzero(labels == NEG)
    n_neg = min(len(neg), int(math.ceil(max(len(pos), 1) * ratio[1] / ratio[0])))
    mask = np.zeros(labels.shape, dtype=bool)
    mask[pos] = True
    if n_neg:
        mask[rng.choice(neg, size=n_neg, replace=False)] = True
    return mask


def prepare_targets(batch: Sequence[TrainSample], cfg: CanConfig):
    out = []
    for s in batch:
        anchors = generate_anchors(s.features.shape[0], s.fps, cfg)
        labels, deltas, _ = encode_targets(anchors, s.gt, cfg)
        out.append((labels, deltas))
    return out


def loss_and_grads(net: CanNetwork, batch: Sequence[TrainSample], targets, masks):
    """Loss and analytic gradients for fixed anchor samples ``masks``."""
    cfg = net.cfg
    n_sampled = sum(int(m.sum()) for m in masks)
    n_pos = sum(int(((lab == POS) & m).sum()) for (lab, _), m in zip(targets, masks))
    if n_sampled == 0:
        raise ValidationError("no labelled anchors in batch")
    grads = {k: np.zeros_like(v) for k, v in net.params.items()}
    cls_sum = reg_sum = 0.0
    # group equal-length sequences into one batched pass
    groups: dict[int, list[int]] = {}
    for i, s in enumerate(batch):
        groups.setdefault(s.features.shape[0], []).append(i)
    for _, idx in sorted(groups.items()):
        x = np.stack([_as_matrix(batch[i].features, cfg.input_dim) for i in idx])
        logits, deltas, cache = _forward_batch(net, x, keep_cache=True)
        dlogits = np.zeros_like(logits)
        ddeltas = np.zeros_like(deltas)
        for row, i in enumerate(idx):
            labels, target = targets[i]
            m = masks[i]
            z = logits[row, m]
            y = (labels[m] == POS).astype(float)
            cls_sum += float(_bce_with_logits(z, y).sum())
            dlogits[row, m] = (sigmoid(z) - y) / n_sampled
            p = (labels == POS) & m
            if n_pos and p.any():
                diff = deltas[row, p] - target[p]
                ad = np.abs(diff)
                reg_sum += float(np.where(ad < 1, 0.5 * diff ** 2, ad - 0.5).sum())
                ddeltas[row, p] = cfg.reg_weight * np.where(ad < 1, diff, np.sign(diff)) / n_pos
        g = _backward_batch(net, dlogits, ddeltas, cache)
        for k in grads:
            grads[k] += g[k]
    cls = cls_sum / n_sampled
    reg = reg_sum / n_pos if n_pos else 0.0
    loss = LossBreakdown(cls, reg, cls + cfg.reg_weight * reg, n_pos, n_sampled - n_pos)
    return loss, grads


def train_step(net: CanNetwork, batch: Sequence[TrainSample], cfg: CanConfig | None, rng: np.random.Generator, targets=None):
    """One SGD-with-momentum step; updates ``net`` in place and returns it with the loss."""
    cfg = net.cfg if cfg is None else cfg
    if not batch:
        raise ValidationError("empty training batch")
    if targets is None:
        targets = prepare_targets(batch, cfg)
    masks = [sample_anchors(lab, cfg.sample_ratio, rng) for lab, _ in targets]
    loss, grads = loss_and_grads(net, batch, targets, masks)
    for k, p in net.params.items():
        g = np.clip(grads[k], -cfg.grad_clip, cfg.grad_clip)
        v = net.velocity[k]
        v *= cfg.momentum
        v += g
        p -= cfg.lr * v
    return net, loss


def fit(net: CanNetwork, samples: Sequence[TrainSample], steps: int, batch_size: int, seed: int = 0, log_every: int = 0):
    """Minibatch training loop; returns the per-step loss history."""
    rng = np.random.default_rng(seed)
    targets = prepare_targets(samples, net.cfg)
    usable = [i for i, (lab, _) in enumerate(targets) if np.any(lab != IGNORE)]
    if not usable:
        raise ValidationError("no training sample has labelled anchors")
    history = []
    for step in range(steps):
        idx = sorted(rng.choice(usable, size=min(batch_size, len(usable)), replace=False))
        net, loss = train_step(net, [samples[i] for i in idx], None, rng, [targets[i] for i in idx])
        history.append(loss)
        if log_every and (step + 1) % log_every == 0:
            print(f"step {step + 1} cls {loss.cls:.6f} reg {loss.reg:.6f}")
    return history


# ---------------------------------------------------------------------------
# inference


def crop_frames(segment: TemporalSegment, fps: float, T: int) -> tuple[int, int]:
    a = max(0, int(math.floor(segment.start * fps + 1e-9)))
    b = min(T, int(math.ceil(segment.end * fps - 1e-9)))
    return a, max(a, b)


def refine(net: CanNetwork, proposal: Proposal, features, fps: float, cfg: CanConfig | None = None) -> list[Proposal]:
    """Re-localize one long proposal with the anchor network.

    Returns the input (restaged as CAN) when the crop is too short to hold
    a single anchor cell.
    """
    cfg = net.cfg if cfg is None else cfg
    x = _as_matrix(features, cfg.input_dim)
    a, b = crop_frames(proposal.segment, fps, x.shape[0])
    crop = x[a:b]
    anchors = generate_anchors(crop.shape[0], fps, cfg)
    if len(anchors) == 0:
        return [proposal.with_score(proposal.score, Stage.CAN)]
    logits, deltas = forward(net, crop)
    scores = sigmoid(logits)
    duration = crop.shape[0] / fps
    starts, ends, keep = decode_arrays(anchors.centers, anchors.lengths, deltas, duration)
    for _ in range(cfg.cascade_rounds - 1):
        top = np.argsort(-np.where(keep, scores, -np.inf), kind="stable")[: cfg.refine_topk]
        top = top[keep[top]]
        c = 0.5 * (starts[top] + ends[top])
        l = ends[top] - starts[top]
        s2, e2, k2 = decode_arrays(c, l, deltas[top], duration)
        starts[top], ends[top] = s2, e2
        keep[top] = k2
    offset = a / fps
    out = []
    for i in np.flatnonzero(keep):
        seg = TemporalSegment(float(starts[i] + offset), float(ends[i] + offset))
        out.append(Proposal(proposal.video_id, seg, float(scores[i]), Stage.CAN))
    if not out:
        return [proposal.with_score(proposal.score, Stage.CAN)]
    return nms(out, cfg.refine_nms_tiou)[: cfg.refine_topk]


# ---------------------------------------------------------------------------
# serialization: b"CAN1", u32 LE config length, config JSON, float64 LE params

CAN_MAGIC = b"CAN1"


def save_network(net: CanNetwork, path) -> None:
    cfg_bytes = json.dumps(net.cfg.to_json(), sort_keys=True).encode("utf-8")
    parts = [CAN_MAGIC, struct.pack("<I", len(cfg_bytes)), cfg_bytes]
    for name, _ in _param_specs(net.cfg):
        parts.append(np.ascontiguousarray(net.params[name], dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def config_from_json(obj: dict) -> CanConfig:
    obj = dict(obj)
    for key in ("level_strides", "sample_ratio"):
        if key in obj:
            obj[key] = tuple(obj[key])
    if obj.get("anchor_scales") is not None:
        obj["anchor_scales"] = tuple(tuple(s) for s in obj["anchor_scales"])
    return CanConfig(**obj)


def load_network(path) -> CanNetwork:
    data = Path(path).read_bytes()
    if data[:4] != CAN_MAGIC:
        raise FormatError(f"bad CAN model magic {data[:4]!r}")
    (n,) = struct.unpack_from("<I", data, 4)
    cfg = config_from_json(json.loads(data[8:8 + n].decode("utf-8")))
    offset = 8 + n
    params = {}
    for name, shape in _param_specs(cfg):
        count = int(np.prod(shape))
        chunk = data[offset:offset + 8 * count]
        if len(chunk) < 8 * count:
            raise FormatError("CAN model file truncated")
        params[name] = np.frombuffer(chunk, dtype="<f8").reshape(shape).astype(np.float64)
        offset += 8 * count
    return CanNetwork(cfg, params)
