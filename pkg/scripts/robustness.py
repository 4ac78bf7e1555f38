"""Fixed players against an evolving one-sided MMCTS opponent.

For each fixed player (Random, Belief Sampler, a frozen MMCTS checkpoint)
and each seat, trains an exploiter from scratch and writes the windowed
win-difference curve.

    python scripts/robustness.py --policy results/table/p0_50000000.mmct --budget 5e7 --out results/robust
"""
import argparse
from pathlib import Path

from phantom_mmcts.harness import policy_paths, robustness_experiment, write_series_csv
from phantom_mmcts.mmcts import EMPIRICAL, WEIGHTS


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--policy", required=True, help="any p0_N.mmct / p1_N.mmct of a checkpoint pair")
    ap.add_argument("--budget", type=float, default=5e7)
    ap.add_argument("--window", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--freeze", choices=(WEIGHTS, EMPIRICAL), default=EMPIRICAL)
    ap.add_argument("--sides", default="0,1")
    ap.add_argument("--out", default="results/robust")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = policy_paths(args.policy)
    for side in (int(s) for s in args.sides.split(",")):
        for name, fixed in (("random", "random"), ("belief", "belief"), ("mmcts", files.get(side))):
            if fixed is None:
                continue
            run = robustness_experiment(str(fixed), side, int(args.budget), args.window, args.seed, mode=args.freeze)
            write_series_csv(run.series, out / f"{name}_as_p{side + 1}.csv")
            lo = min(p.diff for p in run.series) if run.series else float("nan")
            print(f"{name} fixed as P{side + 1}: final diff {run.series[-1].diff:.3f}, minimum {lo:.3f}", flush=True)


if __name__ == "__main__":
    main()
