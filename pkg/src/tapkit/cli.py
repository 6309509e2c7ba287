"""``tapkit`` command line: every stage, evaluation and the synthetic generator.

Exit status is 0 on success, 1 on validation or data errors, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import can as can_mod
from . import prn as prn_mod
from .core import (
    TapError,
    ValidationError,
    class_predictions_from_json,
    dump_json,
    ensure_dir,
    load_json,
    parse_ground_truth,
    read_curves,
    read_detections,
    read_feature_matrix,
    read_proposals,
    write_detections,
    write_feature_matrix,
    write_proposals,
)
from .cpn import TagConfig, coarse_proposals
from .evaluation import evaluate_detections, evaluate_proposals
from .experiment import CanTrainConfig, ExperimentConfig, PrnTrainConfig, run_experiment, train_can
from .nms import nms
from .pipeline import PipelineConfig, detect_by_classification, fuse_streams, refine_union, tune_fusion_weights
from .quantize import SketchParams, compact_bilinear_pool
from .retrieval import corpus_from_json, retrieve_caption
from .synth import config_from_json as synth_config_from_json
from .synth import generate_corpus, load_corpus, write_corpus
from .tubelet import (
    LinkConfig,
    evaluate_frame_map,
    frame_detections_from,
    frame_ground_truth_from,
    link_tubelets,
    read_per_frame,
    temporal_trim,
)

# ---------------------------------------------------------------------------
# shared config file


def _fields(cls, exclude=()) -> set[str]:
    return {f.name for f in dataclasses.fields(cls)} - set(exclude)


EXPERIMENT_KEYS = {"train_fraction", "fusion_objective", "fusion_step", "fusion_split", "seed"}
CBP_KEYS = {"d", "seed", "normalize"}
SECTIONS = {
    "synth": None,  # validated by the synth module itself
    "tag": _fields(TagConfig),
    "can": _fields(can_mod.CanConfig, exclude=("input_dim",)),
    "can_train": _fields(CanTrainConfig),
    "prn_train": _fields(PrnTrainConfig),
    "pipeline": _fields(PipelineConfig),
    "experiment": EXPERIMENT_KEYS,
    "link": _fields(LinkConfig),
    "cbp": CBP_KEYS,
}


def load_config(path) -> dict:
    """Read the sectioned JSON config; unknown sections or keys are rejected."""
    if path is None:
        return {}
    obj = load_json(path)
    if not isinstance(obj, dict):
        raise ValidationError(f"{path}: config must be a JSON object")
    for name, section in obj.items():
        if name not in SECTIONS:
            raise ValidationError(f"{path}: unknown config section {name!r}")
        if not isinstance(section, dict):
            raise ValidationError(f"{path}: section {name!r} must be an object")
        allowed = SECTIONS[name]
        extra = set(section) - allowed if allowed is not None else set()
        if extra:
            raise ValidationError(f"{path}: unknown key {sorted(extra)[0]!r} in section {name!r}")
    if "synth" in obj:
        synth_config_from_json(obj["synth"])
    return obj


def _tuples(d: dict) -> dict:
    return {k: tuple(tuple(x) if isinstance(x, list) else x for x in v) if isinstance(v, list) else v for k, v in d.items()}


def tag_config(cfg: dict) -> TagConfig:
    return TagConfig(**_tuples(cfg.get("tag", {})))


def link_config(cfg: dict) -> LinkConfig:
    return LinkConfig(**cfg.get("link", {}))


def pipeline_config(cfg: dict, **overrides) -> PipelineConfig:
    sec = {**cfg.get("pipeline", {}), **{k: v for k, v in overrides.items() if v is not None}}
    return PipelineConfig(**sec)


def experiment_config(cfg: dict) -> ExperimentConfig:
    base = ExperimentConfig()
    return ExperimentConfig(
        tag=tag_config(cfg),
        can={**base.can, **cfg.get("can", {})},
        can_train=CanTrainConfig(**cfg.get("can_train", {})),
        prn_train=PrnTrainConfig(**cfg.get("prn_train", {})),
        pipeline=pipeline_config(cfg),
        **cfg.get("experiment", {}),
    )


# ---------------------------------------------------------------------------
# helpers


def _pmap(fn, items, threads: int):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _json_files(path) -> list[Path]:
    p = Path(path)
    if p.is_dir():
        return sorted(p.glob("*.json"))
    if not p.exists():
        raise ValidationError(f"{p}: no such file or directory")
    return [p]


def _feature_for(directory, vid: str):
    path = Path(directory) / f"{vid}.fseq"
    if not path.exists():
        raise ValidationError(f"missing feature file for video {vid}: {path}")
    return read_feature_matrix(path)


def _by_video(proposals) -> dict[str, list]:
    out: dict[str, list] = {}
    for p in proposals:
        out.setdefault(p.video_id, []).append(p)
    return dict(sorted(out.items()))


def _parse_weights(text: str) -> dict[str, float]:
    out = {}
    for part in text.split(","):
        if "=" not in part:
            raise ValidationError(f"weights must look like 'rgb=0.5,flow=0.5', got {text!r}")
        k, v = part.split("=", 1)
        out[k.strip()] = float(v)
    return out


def _parse_named_paths(items) -> dict[str, str]:
    out = {}
    for item in items:
        if "=" not in item:
            raise ValidationError(f"expected STREAM=PATH, got {item!r}")
        k, v = item.split("=", 1)
        out[k] = v
    return out


def _write_csv(rows, header, path) -> None:
    lines = [",".join(header)] + [",".join(r) for r in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args, cfg):
    sec = dict(cfg.get("synth", {}))
    if args.seed is not None:
        sec["seed"] = args.seed
    if args.n_videos is not None:
        sec["n_videos"] = args.n_videos
    corpus = generate_corpus(synth_config_from_json(sec))
    write_corpus(corpus, args.out_dir)
    print(f"videos {len(corpus.gt)}")


def cmd_tag(args, cfg):
    tcfg = tag_config(cfg)
    files = _json_files(args.curves)
    per_file = _pmap(lambda f: coarse_proposals(read_curves(f), tcfg), files, args.threads)
    props = [p for ps in per_file for p in ps]
    write_proposals(props, args.out)
    print(f"proposals {len(props)}")


def cmd_can_train(args, cfg):
    ecfg = experiment_config(cfg)
    if args.steps is not None or args.seed is not None:
        ct = ecfg.can_train
        ecfg = dataclasses.replace(
            ecfg,
            can_train=dataclasses.replace(
                ct,
                steps=ct.steps if args.steps is None else args.steps,
                seed=ct.seed if args.seed is None else args.seed,
            ),
        )
    corpus = load_corpus(args.corpus)
    if args.stream not in corpus.curves:
        raise ValidationError(f"stream {args.stream!r} not in corpus (have {sorted(corpus.curves)})")
    ids = corpus.video_ids
    coarse = {vid: coarse_proposals(corpus.curves[args.stream][vid], ecfg.tag) for vid in ids}
    net = train_can(corpus, args.stream, ids, coarse, ecfg)
    can_mod.save_network(net, args.out)
    print(f"parameters {sum(v.size for v in net.params.values())}")


def cmd_can_infer(args, cfg):
    net = can_mod.load_network(args.model)
    pcfg = pipeline_config(cfg)
    grouped = _by_video(read_proposals(args.proposals))

    def one(item):
        vid, props = item
        feats = _feature_for(args.features, vid)
        duration = feats.T / args.fps
        union = refine_union(props, feats, args.fps, duration, net, pcfg)
        return nms(union, pcfg.nms_tiou)[: pcfg.K_final]

    out = [p for ps in _pmap(one, grouped.items(), args.threads) for p in ps]
    write_proposals(out, args.out)
    print(f"proposals {len(out)}")


def cmd_rerank(args, cfg):
    model = prn_mod.PrnModel.load(args.model)
    grouped = _by_video(read_proposals(args.proposals))

    def one(item):
        vid, props = item
        feats = _feature_for(args.features, vid)
        return prn_mod.rerank(model, props, feats, args.fps, K=args.topk)

    out = [p for ps in _pmap(one, grouped.items(), args.threads) for p in ps]
    write_proposals(out, args.out)
    print(f"proposals {len(out)}")


def cmd_pipeline(args, cfg):
    ecfg = experiment_config(cfg)
    corpus = load_corpus(args.corpus)
    res = run_experiment(corpus, ecfg)
    out = ensure_dir(args.out_dir)
    rows = []
    for stream in sorted(res.stage_proposals):
        sdir = ensure_dir(out / stream)
        for stage, props in res.stage_proposals[stream].items():
            write_proposals(props, sdir / f"{stage.replace('+', '_')}.json")
            rows.append((stream, stage, f"{res.auc[(stream, stage)]:.6f}"))
        can_mod.save_network(res.models[stream].can, sdir / "model.can")
        res.models[stream].prn.save(sdir / "prn.json")
    write_proposals(res.fused, out / "fused.json")
    rows.append(("fused", "CPN+CAN+PRN", f"{res.auc[('fused', 'CPN+CAN+PRN')]:.6f}"))
    dump_json({k: round(v, 12) for k, v in res.fusion_weights.items()}, out / "fusion_weights.json")
    dump_json({"train": res.train_ids, "eval": res.eval_ids}, out / "split.json")
    _write_csv(rows, ("stream", "stage", "AUC"), out / "summary.csv")
    for s, st, v in rows:
        print(f"{s} {st} AUC {v}")


def cmd_fuse(args, cfg):
    paths = _parse_named_paths(args.proposals)
    per_stream = {s: read_proposals(p) for s, p in paths.items()}
    pcfg = pipeline_config(cfg)
    if args.weights:
        weights = _parse_weights(args.weights)
    elif pcfg.stream_weights is not None:
        weights = dict(pcfg.stream_weights)
    elif args.ground_truth:
        gt = parse_ground_truth(args.ground_truth)
        weights, val = tune_fusion_weights(per_stream, gt, args.objective, args.step, pcfg)
        print(f"tuned {args.objective} {val:.6f}")
    else:
        raise ValidationError("fuse needs --weights, pipeline.stream_weights, or --ground-truth to tune")
    fused = fuse_streams(per_stream, weights, pcfg)
    write_proposals(fused, args.out)
    for s in sorted(weights):
        print(f"weight {s} {weights[s]:.6f}")


def cmd_detect(args, cfg):
    props = read_proposals(args.proposals)
    classes, preds = class_predictions_from_json(load_json(args.class_scores))
    k = args.k if args.k is not None else pipeline_config(cfg).classes_per_proposal
    dets = detect_by_classification(props, preds, classes, k)
    write_detections(dets, args.out)
    print(f"detections {len(dets)}")


def cmd_eval_proposals(args, cfg):
    curve = evaluate_proposals(read_proposals(args.proposals), parse_ground_truth(args.ground_truth))
    if args.csv:
        Path(args.csv).write_text(curve.to_csv(), encoding="utf-8", newline="\n")
    print(f"AUC {curve.auc:.6f}")


def cmd_eval_detections(args, cfg):
    res = evaluate_detections(read_detections(args.detections), parse_ground_truth(args.ground_truth))
    for t, m in zip(res.thresholds, res.mAP):
        print(f"mAP@{t:.6f} {m:.6f}")
    print(f"avg_mAP {res.average_mAP:.6f}")


def cmd_cbp(args, cfg):
    sec = cfg.get("cbp", {})
    d = args.d if args.d is not None else sec.get("d", 4096)
    seed = args.seed if args.seed is not None else sec.get("seed", 0)
    normalize = sec.get("normalize", True) and not args.no_normalize
    fmap = read_feature_matrix(args.features)
    params = SketchParams.create(fmap.D, d, seed)
    v = compact_bilinear_pool(fmap.values, params, normalize=normalize)
    write_feature_matrix(v[None, :], args.out)
    print(f"dim {v.shape[0]}")


def cmd_link_tubelets(args, cfg):
    lcfg = link_config(cfg)
    out = {}
    for vid, frames in read_per_frame(args.per_frame):
        tubes = link_tubelets(frames, lcfg, vid)
        if args.trim:
            tubes = [t for t in (temporal_trim(x, lcfg) for x in tubes) if t is not None]
        out[vid] = [t.to_json() for t in tubes]
    dump_json({"tubelets": out}, args.out)
    print(f"tubelets {sum(len(v) for v in out.values())}")


def cmd_eval_frame_map(args, cfg):
    dets = frame_detections_from(read_per_frame(args.detections))
    gt = frame_ground_truth_from(read_per_frame(args.ground_truth))
    print(f"frame_mAP {evaluate_frame_map(dets, gt, args.iou):.6f}")


def cmd_retrieve_captions(args, cfg):
    corpus = corpus_from_json(load_json(args.corpus))
    q = load_json(args.query_embedding)
    queries = q if isinstance(q, dict) else {"query": q}
    results = {}
    for qid in sorted(queries):
        caption, score, neighbours = retrieve_caption(np.asarray(queries[qid], dtype=float), corpus, args.k)
        results[qid] = {
            "caption": " ".join(caption),
            "score": round(score, 12),
            "neighbours": [s.id for s, _ in neighbours],
        }
        print(f"{qid} {score:.6f} {' '.join(caption)}")
    if args.out:
        dump_json(results, args.out)


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tapkit", description="Temporal action proposal toolkit")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for per-video work")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    def add(name, fn, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", help="sectioned JSON config")
        p.set_defaults(fn=fn)
        return p

    p = add("synth", cmd_synth, "generate a synthetic corpus")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--n-videos", type=int)

    p = add("tag", cmd_tag, "coarse proposals from actionness curves")
    p.add_argument("--curves", required=True, help="curve JSON file or directory of them")
    p.add_argument("--out", required=True)

    p = add("can-train", cmd_can_train, "train the anchor refinement network")
    p.add_argument("--corpus", required=True)
    p.add_argument("--stream", default="rgb")
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)

    p = add("can-infer", cmd_can_infer, "refine long proposals with a trained network")
    p.add_argument("--model", required=True)
    p.add_argument("--proposals", required=True)
    p.add_argument("--features", required=True, help="directory of <video>.fseq files")
    p.add_argument("--fps", type=float, default=1.0)
    p.add_argument("--out", required=True)

    p = add("rerank", cmd_rerank, "rescore proposals with a PRN model")
    p.add_argument("--model", required=True)
    p.add_argument("--proposals", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--fps", type=float, default=1.0)
    p.add_argument("--topk", type=int, default=100)
    p.add_argument("--out", required=True)

    p = add("pipeline", cmd_pipeline, "train and evaluate every stage on a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out-dir", required=True)

    p = add("fuse", cmd_fuse, "fuse proposals across streams")
    p.add_argument("--proposals", nargs="+", required=True, metavar="STREAM=PATH")
    p.add_argument("--weights", help="e.g. rgb=0.6,flow=0.4")
    p.add_argument("--ground-truth", help="tune weights against this ground truth")
    p.add_argument("--objective", default="AUC", choices=("AUC", "top1"))
    p.add_argument("--step", type=float, default=0.05)
    p.add_argument("--out", required=True)

    p = add("detect", cmd_detect, "detection by classification")
    p.add_argument("--proposals", required=True)
    p.add_argument("--class-scores", required=True)
    p.add_argument("-k", type=int)
    p.add_argument("--out", required=True)

    p = add("eval-proposals", cmd_eval_proposals, "AR-AN curve and AUC")
    p.add_argument("--proposals", required=True)
    p.add_argument("--ground-truth", required=True)
    p.add_argument("--csv")

    p = add("eval-detections", cmd_eval_detections, "mAP per tIoU threshold")
    p.add_argument("--detections", required=True)
    p.add_argument("--ground-truth", required=True)

    p = add("cbp", cmd_cbp, "compact bilinear pooling of an FSEQ feature map")
    p.add_argument("--features", required=True)
    p.add_argument("-d", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--no-normalize", action="store_true")
    p.add_argument("--out", required=True)

    p = add("link-tubelets", cmd_link_tubelets, "link per-frame boxes into tubelets")
    p.add_argument("--per-frame", required=True)
    p.add_argument("--trim", action="store_true")
    p.add_argument("--out", required=True)

    p = add("eval-frame-map", cmd_eval_frame_map, "frame-mAP of per-frame detections")
    p.add_argument("--detections", required=True)
    p.add_argument("--ground-truth", required=True)
    p.add_argument("--iou", type=float, default=0.5)

    p = add("retrieve-captions", cmd_retrieve_captions, "kNN caption retrieval with consensus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--query-embedding", required=True)
    p.add_argument("-k", type=int, default=300)
    p.add_argument("--out")
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config)
        args.fn(args, cfg)
    except (TapError, OSError, json.JSONDecodeError, TypeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
