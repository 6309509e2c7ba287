"""Compact bilinear pooling kernel error against the exact <x, y>^2, across sketch sizes.

Reports several error summaries because they behave very differently:
the per-pair relative error is dominated by pairs with <x, y> near zero.

    python3 scripts/cbp_kernel_error.py [--pairs 1000] [--dim 64] [--seeds 3]
"""

import argparse

import numpy as np

from tapkit.quantize import SketchParams, kernel_estimates


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--pairs", type=int, default=1000)
    ap.add_argument("--dim", type=int, default=64)
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--data-seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.data_seed)
    X = rng.standard_normal((args.pairs, args.dim))
    Y = rng.standard_normal((args.pairs, args.dim))
    scale = np.sum(X**2, axis=1) * np.sum(Y**2, axis=1)

    print("d,seed,per_pair_rel,rel_of_mean,mae,mae_over_mean_exact,norm_scaled")
    for d in (1024, 4096, 16384):
        for seed in range(args.seeds):
            est, exact = kernel_estimates(X, Y, SketchParams.create(args.dim, d, seed))
            err = np.abs(est - exact)
            print(
                f"{d},{seed},{np.mean(err / exact):.6f},{abs(est.mean() - exact.mean()) / exact.mean():.6f},"
                f"{err.mean():.6f},{err.mean() / exact.mean():.6f},{np.mean(err / scale):.6f}"
            )


if __name__ == "__main__":
    main()
