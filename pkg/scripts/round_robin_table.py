"""Train MMCTS checkpoints, then play the full round-robin table.

    python scripts/round_robin_table.py --out results/table [--budget 5e7] [--games 100000]

Checkpoints already present in --out are reused instead of retraining.
"""
import argparse
import time
from pathlib import Path

from phantom_mmcts.harness import TRAIN_STREAM, Contestant, round_robin, stream_rng, write_matches_csv
from phantom_mmcts.mmcts import EMPIRICAL, WEIGHTS, load_tree, save_tree, train
from phantom_mmcts.phantom_ttt import PhantomTicTacToe


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results/table")
    ap.add_argument("--budget", type=float, default=5e7)
    ap.add_argument("--checkpoints", default="5e5,5e6,5e7")
    ap.add_argument("--games", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--freeze", choices=(WEIGHTS, EMPIRICAL), default=EMPIRICAL)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    budget = int(args.budget)
    marks = sorted({int(float(c)) for c in args.checkpoints.split(",") if 0 < float(c) <= budget})
    if not all((out / f"p{p}_{n}.mmct").exists() for n in marks for p in (0, 1)):
        t0 = time.time()

        def snap(n, trees):
            for t in trees:
                save_tree(t, out / f"p{t.owner}_{n}.mmct")
            print(f"{n} simulations, {time.time() - t0:.0f}s", flush=True)

        train(PhantomTicTacToe(), budget, stream_rng(args.seed, TRAIN_STREAM), checkpoints=marks, on_checkpoint=snap)

    lineup = [Contestant.random(), Contestant.belief()]
    for n in marks:
        trees = [load_tree(out / f"p{p}_{n}.mmct") for p in (0, 1)]
        lineup.append(Contestant.mmcts(f"mmcts-{n // 1000}K", trees, args.freeze))
    rows = round_robin(lineup, args.games, args.seed, args.workers)
    write_matches_csv(rows, out / f"table_{args.freeze}.csv")

    names = [c.name for c in lineup]
    cells = {(r.p1, r.p2): r.stats for r in rows}
    width = max(len(n) for n in names) + 2
    print("P1 \\ P2".ljust(width) + "".join(n.rjust(14) for n in names))
    for a in names:
        print(a.ljust(width) + "".join(f"{100 * cells[a, b].p1_rate:5.1f} | {100 * cells[a, b].p2_rate:4.1f}".rjust(14)
                                       for b in names))


if __name__ == "__main__":
    main()
