"""Stagewise AUC on the reference synthetic corpus.

    python3 scripts/run_reference.py [--config configs/reference.json] [--out results/reference_summary.csv]
"""

import argparse
import csv
import time
from pathlib import Path

from tapkit.cli import experiment_config, load_config
from tapkit.experiment import run_experiment
from tapkit.pipeline import top1_tiou
from tapkit.synth import config_from_json, generate_corpus

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=ROOT / "configs" / "reference.json")
    ap.add_argument("--out", default=ROOT / "results" / "reference_summary.csv")
    args = ap.parse_args()

    cfg = load_config(args.config)
    t0 = time.perf_counter()
    corpus = generate_corpus(config_from_json(cfg["synth"]))
    res = run_experiment(corpus, experiment_config(cfg))
    gt = corpus.gt.subset(res.eval_ids)

    rows = []
    for stream in sorted(res.stage_proposals):
        for stage, props in res.stage_proposals[stream].items():
            rows.append((stream, stage, res.auc[(stream, stage)], top1_tiou(props, gt)))
    rows.append(("fused", "CPN+CAN+PRN", res.auc[("fused", "CPN+CAN+PRN")], top1_tiou(res.fused, gt)))

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["stream", "stage", "AUC", "top1_tIoU"])
        for s, st, auc, t1 in rows:
            w.writerow([s, st, f"{auc:.6f}", f"{t1:.6f}"])
    for s, st, auc, t1 in rows:
        print(f"{s:5s} {st:12s} AUC {auc:.6f} top1 {t1:.6f}")
    weights = ", ".join(f"{k}={v:.2f}" for k, v in sorted(res.fusion_weights.items()))
    print(f"fusion weights {weights}; {time.perf_counter() - t0:.1f} s; wrote {out}")


if __name__ == "__main__":
    main()
