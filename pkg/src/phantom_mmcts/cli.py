"""Command-line entry point: ``phantom-mmcts {train,eval,robustness,play,bandit-demo}``.

Options can also come from a flat ``key = value`` file passed with
``--config``; flags given on the command line win over the file.
"""
from __future__ import annotations

import argparse
import csv
import sys
import time
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import bandit
from .harness import (PLAY_STREAM, TRAIN_STREAM, cumulative_curve, convergence_curve, load_contestant,
                      robustness_experiment, round_robin, stream_rng, write_matches_csv, write_series_csv)
from .mmcts import COUPLED, EMPIRICAL, ETA_MODES, WEIGHTS, DepthBoost, PowerSchedule, save_tree, train
from .phantom_ttt import PhantomTicTacToe
from .players import HumanAgent

DEFAULT_CHECKPOINTS = (500_000, 5_000_000, 50_000_000)


@dataclass
class RunConfig:
    command: str = ""
    seed: int = 0
    out: str = ""
    budget: int = 50_000_000
    checkpoints: str = ""
    games: int = 100_000
    window: int = 100_000
    step: int = 0
    gamma_exp: float = 0.3
    f_base: float = 1.7
    f_offset: float = 9.0
    eta: str = COUPLED
    freeze: str = EMPIRICAL
    agents: str = "random,belief"
    workers: int = 1
    policy: str = ""
    side: int = 0
    seat: int = 0
    matrix: str = "pennies"
    rounds: int = 1_000_000
    snapshots: int = 20

    def validate(self) -> None:
        if self.budget < 0:
            raise ValueError("budget must be non-negative")
        if self.gamma_exp <= 0:
            raise ValueError("gamma exponent must be positive")
        if self.f_base <= 1:
            raise ValueError("f base must exceed 1")
        if self.games < 1 or self.window < 1 or self.step < 0:
            raise ValueError("games and window must be positive, step non-negative")
        if self.freeze not in (WEIGHTS, EMPIRICAL):
            raise ValueError(f"freeze mode must be weights or empirical, got {self.freeze!r}")
        if self.eta not in ETA_MODES:
            raise ValueError(f"eta must be one of {', '.join(ETA_MODES)}")
        if self.side not in (0, 1) or self.seat not in (0, 1):
            raise ValueError("seats are 0 or 1")

    def checkpoint_list(self) -> list[int]:
        if self.checkpoints:
            marks = [int(float(x)) for x in self.checkpoints.split(",") if x.strip()]
        else:
            marks = [c for c in DEFAULT_CHECKPOINTS if c < self.budget]
        return sorted({c for c in marks if 0 < c <= self.budget} | {self.budget})


def read_config_file(path: str) -> dict[str, str]:
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value file; flags override it")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output file or directory")
    common.add_argument("--games", type=int, help="games per pairing")
    common.add_argument("--budget", type=float, help="simulation budget (1e6 style accepted)")
    common.add_argument("--window", type=int, help="sliding window for curves")
    common.add_argument("--step", type=int, help="spacing of curve points (default: window)")
    common.add_argument("--gamma-exp", type=float, help="gamma(n) = n^-x")
    common.add_argument("--f-base", type=float, help="f(d) = base^(d - offset)")
    common.add_argument("--f-offset", type=float)
    common.add_argument("--eta", choices=ETA_MODES, help="update step: f(d)*gamma/k (coupled) or f(d) (unit)")
    common.add_argument("--freeze", choices=(WEIGHTS, EMPIRICAL), help="how trees become policies")
    common.add_argument("--agents", help="comma list: random, belief, mmcts:<path>, human")
    common.add_argument("--workers", type=int)

    p = argparse.ArgumentParser(prog="phantom-mmcts", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    t = sub.add_parser("train", parents=[common], help="self-play MMCTS, write checkpoints and the curve")
    t.add_argument("--checkpoints", help="comma list of simulation counts")
    sub.add_parser("eval", parents=[common], help="round-robin table of the named agents")
    r = sub.add_parser("robustness", parents=[common], help="fixed player vs evolving exploiter")
    r.add_argument("--policy", help="policy file, or random / belief")
    r.add_argument("--side", type=int, help="seat of the fixed player (0 or 1)")
    pl = sub.add_parser("play", parents=[common], help="play in the terminal against --agents")
    pl.add_argument("--seat", type=int, help="your seat (0 moves first)")
    b = sub.add_parser("bandit-demo", parents=[common], help="EXP3 self-play on a matrix game")
    b.add_argument("--matrix", help="pennies, rps, or rows like '2,-1;-1,1'")
    b.add_argument("--rounds", type=float)
    b.add_argument("--snapshots", type=int)
    return p


def make_config(argv=None) -> RunConfig:
    args = build_parser().parse_args(argv)
    values: dict = {}
    if args.config:
        values.update(read_config_file(args.config))
    for k, v in vars(args).items():
        if v is not None and k != "config":
            values[k] = v
    cfg = RunConfig()
    types = {f.name: f.type for f in fields(RunConfig)}
    for k, v in values.items():
        if k not in types:
            raise ValueError(f"unknown option {k!r}")
        kind = types[k]
        if kind == "int":
            v = int(float(v))
        elif kind == "float":
            v = float(v)
        setattr(cfg, k, v)
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_train(cfg: RunConfig) -> int:
    out = Path(cfg.out or "run")
    out.mkdir(parents=True, exist_ok=True)
    game = PhantomTicTacToe()
    gamma, f = PowerSchedule(cfg.gamma_exp), DepthBoost(cfg.f_base, cfg.f_offset)
    marks = cfg.checkpoint_list()

    def snapshot(n, trees):
        for t in trees:
            save_tree(t, out / f"p{t.owner}_{n}.mmct")
        print(f"checkpoint {n}: {trees[0].node_count} / {trees[1].node_count} nodes", flush=True)

    t0 = time.time()
    res = train(game, cfg.budget, stream_rng(cfg.seed, TRAIN_STREAM), gamma=gamma, f=f,
                checkpoints=marks, on_checkpoint=snapshot, eta=cfg.eta)
    if cfg.budget == 0:
        snapshot(0, res.trees)
    np.save(out / "outcomes.npy", res.outcomes)
    write_series_csv(convergence_curve(res.outcomes, cfg.window, cfg.step or None), out / "convergence.csv")
    write_series_csv(cumulative_curve(res.outcomes, cfg.step or cfg.window), out / "cumulative.csv")
    if cfg.budget:
        last = convergence_curve(res.outcomes, cfg.window, cfg.budget)[-1]
        cum = cumulative_curve(res.outcomes, cfg.budget)[-1]
        print(f"windowed P1 {last.p1_rate:.3f}  P2 {last.p2_rate:.3f}  difference {last.diff:.3f}")
        print(f"cumulative P1 {cum.p1_rate:.3f}  P2 {cum.p2_rate:.3f}  difference {cum.diff:.3f}")
    print(f"{cfg.budget} simulations in {time.time() - t0:.0f}s, outputs in {out}")
    return 0


def cmd_eval(cfg: RunConfig) -> int:
    names = [a.strip() for a in cfg.agents.split(",") if a.strip()]
    if "human" in names:
        raise ValueError("human players only take part in 'play'")
    contestants = [load_contestant(n, cfg.freeze) for n in names]
    rows = round_robin(contestants, cfg.games, cfg.seed, cfg.workers)
    if cfg.out:
        write_matches_csv(rows, cfg.out)
    else:
        w = csv.writer(sys.stdout)
        w.writerow(["p1", "p2", "games", "p1_win", "p2_win", "draw", "ci95"])
        for r in rows:
            s = r.stats
            w.writerow([r.p1, r.p2, s.games, f"{s.p1_rate:.4f}", f"{s.p2_rate:.4f}", f"{s.draw_rate:.4f}", f"{s.ci95:.4f}"])
    return 0


def cmd_robustness(cfg: RunConfig) -> int:
    if not cfg.policy:
        raise ValueError("--policy is required (a policy file, random or belief)")
    run = robustness_experiment(cfg.policy, cfg.side, cfg.budget, cfg.window, cfg.seed, cfg.step or None,
                                cfg.freeze, PowerSchedule(cfg.gamma_exp), DepthBoost(cfg.f_base, cfg.f_offset),
                                cfg.eta)
    target = cfg.out or "robustness.csv"
    write_series_csv(run.series, target)
    if run.series:
        lo = min(p.diff for p in run.series)
        print(f"final difference {run.series[-1].diff:.3f}, minimum {lo:.3f}; curve in {target}")
    return 0


def cmd_play(cfg: RunConfig, read=input, write=print) -> int:
    names = [a.strip() for a in cfg.agents.split(",") if a.strip() and a.strip() != "human"]
    opponent = load_contestant(names[0] if names else "random", cfg.freeze)
    human = HumanAgent(read, write)
    agents = [None, None]
    agents[cfg.seat] = human
    agents[1 - cfg.seat] = opponent.agent(1 - cfg.seat)
    game = PhantomTicTacToe()
    rng = stream_rng(cfg.seed, PLAY_STREAM)
    state = game.reset()
    # drive the game by hand so the true board can be shown at the end
    for seat, a in enumerate(agents):
        a.begin_episode(seat)
    while True:
        mover = game.active_player(state)
        move = agents[mover].choose_move(game.move_count(state), rng)
        state, obs, done = game.step(state, move)
        for p in [mover, 1 - mover]:
            for tok in obs[p]:
                agents[p].observe(tok)
        if done:
            break
    rewards = game.rewards(state)
    for seat, a in enumerate(agents):
        a.end_episode(rewards[seat])
    write("true board:")
    write(state.board.render())
    mine = rewards[cfg.seat]
    write("you win" if mine > 0 else "you lose" if mine < 0 else "draw")
    return 0


_MATRICES = {"pennies": bandit.MATCHING_PENNIES, "rps": bandit.ROCK_PAPER_SCISSORS}


def parse_matrix(text: str) -> bandit.MatrixGame:
    if text in _MATRICES:
        return _MATRICES[text]
    rows = [[float(x) for x in row.split(",")] for row in text.split(";")]
    if len({len(r) for r in rows}) != 1:
        raise ValueError("matrix rows must have equal length")
    return bandit.MatrixGame(np.array(rows))


def cmd_bandit_demo(cfg: RunConfig) -> int:
    game = parse_matrix(cfg.matrix)
    res = bandit.self_play_matrix(game, int(cfg.rounds), stream_rng(cfg.seed, TRAIN_STREAM),
                                  snapshots=max(1, cfg.snapshots))
    m, n = game.shape
    fh = open(cfg.out, "w", newline="") if cfg.out else sys.stdout
    try:
        w = csv.writer(fh)
        w.writerow(["round"] + [f"freq_row_{i}" for i in range(m)] + [f"freq_col_{j}" for j in range(n)] + ["avg_payoff"])
        for t, x, y, v in zip(res.rounds, res.row_trace, res.col_trace, res.payoff_trace):
            w.writerow([int(t)] + [f"{a:.6f}" for a in x] + [f"{a:.6f}" for a in y] + [f"{v:.6f}"])
    finally:
        if cfg.out:
            fh.close()
    print(f"exploitability {game.exploitability(res.row_freq, res.col_freq):.4f}", file=sys.stderr)
    return 0


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "robustness": cmd_robustness,
            "play": cmd_play, "bandit-demo": cmd_bandit_demo}


def main(argv=None) -> int:
    try:
        cfg = make_config(argv)
        return COMMANDS[cfg.command](cfg)
    except (ValueError, OSError, RuntimeError, KeyError) as exc:
        print(f"phantom-mmcts: error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        print("phantom-mmcts: interrupted", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
