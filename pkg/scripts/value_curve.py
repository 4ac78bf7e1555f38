"""Self-play training curve: windowed and running win rates of both players.

    python scripts/value_curve.py --budget 5e7 --window 100000 --out results/curve
"""
import argparse
from pathlib import Path

import numpy as np

from phantom_mmcts.harness import TRAIN_STREAM, convergence_curve, cumulative_curve, stream_rng, write_series_csv
from phantom_mmcts.mmcts import COUPLED, ETA_MODES, DepthBoost, PowerSchedule, train
from phantom_mmcts.phantom_ttt import PhantomTicTacToe


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--budget", type=float, default=5e7)
    ap.add_argument("--window", type=int, default=100_000)
    ap.add_argument("--step", type=int, default=0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--gamma-exp", type=float, default=0.3)
    ap.add_argument("--f-base", type=float, default=1.7)
    ap.add_argument("--f-offset", type=float, default=9.0)
    ap.add_argument("--eta", choices=ETA_MODES, default=COUPLED)
    ap.add_argument("--out", default="results/curve")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    res = train(PhantomTicTacToe(), int(args.budget), stream_rng(args.seed, TRAIN_STREAM),
                gamma=PowerSchedule(args.gamma_exp), f=DepthBoost(args.f_base, args.f_offset), eta=args.eta)
    np.save(out / "outcomes.npy", res.outcomes)
    step = args.step or args.window
    win = convergence_curve(res.outcomes, args.window, step)
    cum = cumulative_curve(res.outcomes, step)
    write_series_csv(win, out / "window.csv")
    write_series_csv(cum, out / "cumulative.csv")
    for label, pts in (("window", win), ("running", cum)):
        tail = pts[-1]
        print(f"{label:8s} n={tail.n}  P1 {tail.p1_rate:.3f}  P2 {tail.p2_rate:.3f}  diff {tail.diff:.3f}")


if __name__ == "__main__":
    main()
