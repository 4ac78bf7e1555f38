"""Experiment drivers: match tables, training curves and robustness runs.

Randomness: every episode of a match gets its own generator derived from
``(seed, stream, episode index)`` through ``numpy.random.SeedSequence``, so a
match can be split across processes without changing a single game.
"""
from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import engine
from .game import Referee, play_episode
from .mmcts import (COUPLED, EMPIRICAL, DepthBoost, FrozenPolicy, PowerSchedule, _opt_masks, freeze,
                    load_tree, PlayerTree)
from .phantom_ttt import PhantomTicTacToe
from .players import (BeliefSamplerAgent, ExploiterResult, FrozenPolicyAgent, RandomAgent,
                      evolving_exploiter)

TRAIN_STREAM = 0
EVAL_STREAM = 1
EXPLOIT_STREAM = 2
PLAY_STREAM = 3


def stream_rng(seed: int, stream: int, index: int | None = None) -> np.random.Generator:
    """Generator for ``(seed, stream[, index])``; the documented splitting rule."""
    key = (stream,) if index is None else (stream, index)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


# ---------------------------------------------------------------------------
# results
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MatchStats:
    games: int
    p1_wins: int
    p2_wins: int
    draws: int

    def __post_init__(self):
        if min(self.games, self.p1_wins, self.p2_wins, self.draws) < 0:
            raise ValueError("negative counts")
        if self.p1_wins + self.p2_wins + self.draws != self.games:
            raise ValueError("wins and draws must add up to games")

    @property
    def p1_rate(self) -> float:
        return self.p1_wins / self.games if self.games else 0.0

    @property
    def p2_rate(self) -> float:
        return self.p2_wins / self.games if self.games else 0.0

    @property
    def draw_rate(self) -> float:
        return self.draws / self.games if self.games else 0.0

    @staticmethod
    def half_width(rate: float, games: int) -> float:
        """95% normal-approximation half-width of a binomial rate."""
        return 1.96 * math.sqrt(rate * (1 - rate) / games) if games else 0.0

    @property
    def p1_ci95(self) -> float:
        return self.half_width(self.p1_rate, self.games)

    @property
    def p2_ci95(self) -> float:
        return self.half_width(self.p2_rate, self.games)

    @property
    def ci95(self) -> float:
        # the wider of the two win-rate intervals
        return max(self.p1_ci95, self.p2_ci95)

    def __add__(self, other: "MatchStats") -> "MatchStats":
        return MatchStats(self.games + other.games, self.p1_wins + other.p1_wins,
                          self.p2_wins + other.p2_wins, self.draws + other.draws)

    @classmethod
    def from_outcomes(cls, outcomes: np.ndarray) -> "MatchStats":
        o = np.asarray(outcomes)
        return cls(int(o.size), int(np.sum(o == 1)), int(np.sum(o == -1)), int(np.sum(o == 0)))

    def __str__(self) -> str:
        return f"{100 * self.p1_rate:.1f}% / {100 * self.p2_rate:.1f}% (draws {100 * self.draw_rate:.1f}%, n={self.games})"


@dataclass(frozen=True)
class SeriesPoint:
    n: int
    p1_rate: float
    p2_rate: float

    @property
    def diff(self) -> float:
        return self.p1_rate - self.p2_rate


# ---------------------------------------------------------------------------
# contestants
# ---------------------------------------------------------------------------

class Contestant:
    """A named player that can take either seat (one row and one column of a round-robin table)."""

    def __init__(self, name: str, policies: dict[int, FrozenPolicy] | None = None, kind: str | None = None):
        self.name = name
        self.policies = policies or {}
        self.kind = kind or ("mmcts" if policies else name)
        if self.kind not in ("random", "belief", "mmcts"):
            raise ValueError(f"unknown contestant kind {self.kind!r}")

    @classmethod
    def random(cls) -> "Contestant":
        return cls("random")

    @classmethod
    def belief(cls) -> "Contestant":
        return cls("belief")

    @classmethod
    def mmcts(cls, name: str, trees: Iterable[PlayerTree], mode: str = EMPIRICAL) -> "Contestant":
        return cls(name, {t.owner: freeze(t, mode) for t in trees})

    def agent(self, seat: int):
        if self.kind == "random":
            return RandomAgent()
        if self.kind == "belief":
            return BeliefSamplerAgent()
        if seat not in self.policies:
            raise ValueError(f"{self.name} has no policy for seat {seat}")
        return FrozenPolicyAgent(self.policies[seat])


def policy_paths(path: str | os.PathLike) -> dict[int, Path]:
    """Map seats to policy files: ``p0_N.mmct`` implies its ``p1_N.mmct`` sibling."""
    p = Path(path)
    out = {}
    for seat in (0, 1):
        if p.name.startswith(("p0_", "p1_")):
            cand = p.with_name(f"p{seat}_" + p.name[3:])
            if cand.exists():
                out[seat] = cand
    if not out:
        if not p.exists():
            raise FileNotFoundError(f"policy file not found: {p}")
        out[-1] = p  # seat taken from the file header
    return out


def load_contestant(spec: str, mode: str = EMPIRICAL) -> Contestant:
    """Build a contestant from a CLI name: ``random``, ``belief`` or ``mmcts:<path>``."""
    if spec == "random":
        return Contestant.random()
    if spec == "belief":
        return Contestant.belief()
    if spec.startswith("mmcts:"):
        path = spec[len("mmcts:"):]
        trees = [load_tree(p) for p in policy_paths(path).values()]
        return Contestant.mmcts(spec, trees, mode)
    raise ValueError(f"unknown agent {spec!r} (expected random, belief, mmcts:<path> or human)")


def _as_agent(player, seat: int):
    if isinstance(player, Contestant):
        return player.agent(seat)
    if isinstance(player, FrozenPolicy):
        return FrozenPolicyAgent(player)
    return player


def _name(player) -> str:
    return getattr(player, "name", type(player).__name__)


# ---------------------------------------------------------------------------
# matches
# ---------------------------------------------------------------------------

def _compiled_args(agents):
    kinds = np.zeros(2, dtype=np.int64)
    trees = []
    for seat, a in enumerate(agents):
        kind = getattr(a, "kind", None)
        if kind is None:
            return None
        kinds[seat] = kind
        if isinstance(a, FrozenPolicyAgent):
            a.begin_episode(seat)  # seat check
            trees.append(a.policy.tree.copy().arrays)
        else:
            trees.append(PlayerTree(seat, 9, seat, capacity=2).arrays)
    return kinds, trees


def _play_range(agents, seed: int, start: int, stop: int, compiled: bool | None,
                game: Referee | None) -> np.ndarray:
    out = np.zeros(stop - start, dtype=np.int8)
    game = PhantomTicTacToe() if game is None else game
    args = _compiled_args(agents) if isinstance(game, PhantomTicTacToe) and compiled is not False else None
    if compiled and args is None:
        raise ValueError("compiled play needs phantom tic-tac-toe and Random/Belief/frozen agents")
    if args is not None:
        kinds, (t0, t1) = args
        fpow = np.ones(64)
        opt = _opt_masks()
        for i in range(start, stop):
            out[i - start] = engine.play(kinds, t0, t1, 0.0, False, fpow, opt, stream_rng(seed, EVAL_STREAM, i))
        return out
    for i in range(start, stop):
        r = play_episode(game, agents, stream_rng(seed, EVAL_STREAM, i)).rewards
        out[i - start] = 1 if r[0] > r[1] else -1 if r[1] > r[0] else 0
    return out


def _worker(payload):
    agents, seed, start, stop, compiled = payload
    return start, _play_range(agents, seed, start, stop, compiled, None)


def match_outcomes(player1, player2, games: int, seed: int = 0, workers: int = 1,
                   compiled: bool | None = None, game: Referee | None = None) -> np.ndarray:
    """Per-episode outcomes (+1 / -1 / 0) of ``games`` independent episodes."""
    if games < 1:
        raise ValueError("games must be at least 1")
    agents = [_as_agent(player1, 0), _as_agent(player2, 1)]
    if workers <= 1 or game is not None:
        return _play_range(agents, seed, 0, games, compiled, game)
    chunk = -(-games // (4 * workers))
    jobs = [(agents, seed, s, min(s + chunk, games), compiled) for s in range(0, games, chunk)]
    out = np.zeros(games, dtype=np.int8)
    with ProcessPoolExecutor(workers) as ex:
        for start, part in ex.map(_worker, jobs):
            out[start:start + len(part)] = part
    return out


def run_match(player1, player2, games: int, seed: int = 0, workers: int = 1,
              compiled: bool | None = None, game: Referee | None = None) -> MatchStats:
    """Play ``player1`` (first seat) against ``player2`` and tally the results.

    Players are Contestants, frozen policies or agents. Random, Belief and
    frozen-policy players on phantom tic-tac-toe run in the compiled loop,
    which makes the same draws as the Python agents.
    """
    return MatchStats.from_outcomes(match_outcomes(player1, player2, games, seed, workers, compiled, game))


@dataclass(frozen=True)
class MatchRow:
    p1: str
    p2: str
    stats: MatchStats


def round_robin(contestants: Sequence, games: int, seed: int = 0, workers: int = 1) -> list[MatchRow]:
    """Every ordered pairing (self-play included), row player first."""
    if len(contestants) < 1:
        raise ValueError("need at least one contestant")
    return [MatchRow(_name(a), _name(b), run_match(a, b, games, seed, workers))
            for a in contestants for b in contestants]


def write_matches_csv(rows: Sequence[MatchRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["p1", "p2", "games", "p1_win", "p2_win", "draw", "ci95"])
        for r in rows:
            s = r.stats
            w.writerow([r.p1, r.p2, s.games, f"{s.p1_rate:.6f}", f"{s.p2_rate:.6f}", f"{s.draw_rate:.6f}",
                        f"{s.ci95:.6f}"])


# ---------------------------------------------------------------------------
# curves
# ---------------------------------------------------------------------------

def convergence_curve(outcomes: np.ndarray, window: int = 100_000, step: int | None = None) -> list[SeriesPoint]:
    """Sliding-window win rates over a stream of simulation outcomes.

    A point at n covers outcomes n-window+1 .. n (fewer at the very start).
    Points are emitted every ``step`` simulations (default: ``window``) and
    always at the end of the stream.
    """
    if window < 1:
        raise ValueError("window must be at least 1")
    o = np.asarray(outcomes)
    total = o.size
    if total == 0:
        return []
    step = window if step is None else step
    if step < 1:
        raise ValueError("step must be at least 1")
    c1 = np.concatenate([[0], np.cumsum(o == 1, dtype=np.int64)])
    c2 = np.concatenate([[0], np.cumsum(o == -1, dtype=np.int64)])
    ns = list(range(min(step, total), total + 1, step))
    if ns[-1] != total:
        ns.append(total)
    pts = []
    for n in ns:
        lo = max(0, n - window)
        w = n - lo
        pts.append(SeriesPoint(n, float(c1[n] - c1[lo]) / w, float(c2[n] - c2[lo]) / w))
    return pts


def cumulative_curve(outcomes: np.ndarray, step: int = 100_000) -> list[SeriesPoint]:
    """Running averages from the first simulation (a window that never slides)."""
    o = np.asarray(outcomes)
    return convergence_curve(o, window=max(1, o.size), step=step)


def write_series_csv(points: Sequence[SeriesPoint], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "p1_rate", "p2_rate", "diff"])
        for p in points:
            w.writerow([p.n, f"{p.p1_rate:.6f}", f"{p.p2_rate:.6f}", f"{p.diff:.6f}"])


@dataclass
class RobustnessRun:
    series: list[SeriesPoint]
    result: ExploiterResult


def robustness_experiment(fixed, side: int, budget: int, window: int = 100_000, seed: int = 0,
                          step: int | None = None, mode: str = EMPIRICAL, gamma=PowerSchedule(),
                          f=DepthBoost(), eta: str = COUPLED) -> RobustnessRun:
    """A fixed player against an evolving one-sided MMCTS opponent.

    ``fixed`` is a policy path (loaded and frozen in ``mode``), ``"random"``,
    ``"belief"``, a FrozenPolicy or an agent.
    """
    if isinstance(fixed, (str, os.PathLike)):
        text = os.fspath(fixed)
        if text == "random":
            fixed = RandomAgent()
        elif text == "belief":
            fixed = BeliefSamplerAgent()
        else:
            path = text[len("mmcts:"):] if text.startswith("mmcts:") else text
            fixed = freeze(load_tree(path), mode)
    res = evolving_exploiter(fixed, side, budget, stream_rng(seed, EXPLOIT_STREAM), gamma=gamma, f=f, eta=eta)
    return RobustnessRun(convergence_curve(res.outcomes, window, step), res)
