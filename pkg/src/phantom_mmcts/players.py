"""Agents for phantom tic-tac-toe: Random, Belief Sampler, frozen MMCTS, human.

Every automatic agent consumes exactly one ``rng.random()`` per decision and
maps it to a move the same way the compiled episode loop does, so a match
played through :func:`phantom_mmcts.game.play_episode` and the same match
played by :mod:`phantom_mmcts.engine` agree game for game.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Sequence

import numpy as np

from . import engine
from .game import pack_segment
from .mmcts import (COUPLED, ETA_MODES, DepthBoost, FrozenPolicy, PlayerTree, PowerSchedule,
                    _opt_masks, compiled_supported, run_simulation, uniform_index)
from .phantom_ttt import (ACCEPTED, DRAW, FULL, O_WINS, REJECTED, TOKEN_COUNT, TURN_ENDED, X_WINS,
                          Board, PhantomTicTacToe, minimax_table, render_view, squares, to_mask)


# ---------------------------------------------------------------------------
# what a phantom player knows
# ---------------------------------------------------------------------------

@dataclass
class BeliefState:
    """A player's knowledge at one of its decision points.

    ``opponent_moves`` counts the opponent's completed turns, i.e. marks it
    has on the board.
    """

    seat: int
    own: frozenset = frozenset()
    known_opponent: frozenset = frozenset()
    opponent_moves: int = 0

    def __post_init__(self):
        self.own = frozenset(self.own)
        self.known_opponent = frozenset(self.known_opponent)
        if self.seat not in (0, 1):
            raise ValueError("seat must be 0 or 1")
        if self.own & self.known_opponent:
            raise ValueError("a square cannot be both own and opponent-held")

    @property
    def own_mask(self) -> int:
        return to_mask(self.own)

    @property
    def known_mask(self) -> int:
        return to_mask(self.known_opponent)

    @property
    def candidates(self) -> list[int]:
        return squares(FULL & ~(self.own_mask | self.known_mask))

    @property
    def unaccounted(self) -> int:
        return self.opponent_moves - len(self.known_opponent)

    def board_with(self, opponent_mask: int) -> Board:
        return Board(self.own_mask, opponent_mask) if self.seat == 0 else Board(opponent_mask, self.own_mask)


class PhantomTracker:
    """Follows one seat's token stream and maintains its ``BeliefState``."""

    def __init__(self, seat: int = 0):
        self.reset(seat)

    def reset(self, seat: int) -> None:
        self.seat = seat
        self.own: set[int] = set()
        self.known: set[int] = set()
        self.opponent_moves = 0
        self.outcome: int | None = None

    def observe(self, token: int) -> None:
        if ACCEPTED <= token < ACCEPTED + 9:
            self.own.add(token - ACCEPTED)
        elif REJECTED <= token < REJECTED + 9:
            self.known.add(token - REJECTED)
        elif token == TURN_ENDED:
            self.opponent_moves += 1
        elif token in (X_WINS, O_WINS, DRAW):
            self.outcome = token
        else:
            raise ValueError(f"unknown token {token}")

    @property
    def belief(self) -> BeliefState:
        return BeliefState(self.seat, frozenset(self.own), frozenset(self.known), self.opponent_moves)


def enumerate_consistent_boards(belief: BeliefState) -> list[Board]:
    """Every placement of the opponent's unseen marks on the squares still free.

    The result has C(free, unaccounted) boards in a fixed order. Boards on
    which the opponent would already have a line are included; they are
    terminal and so carry no optimal move. A contradictory belief yields [].
    """
    free = squares(FULL & ~(belief.own_mask | belief.known_mask))
    u = belief.unaccounted
    if u < 0 or u > len(free):
        return []
    return [belief.board_with(belief.known_mask | to_mask(extra)) for extra in combinations(free, u)]


def belief_tallies(belief: BeliefState) -> np.ndarray:
    """Per square, the number of consistent boards on which it is an optimal move."""
    table = minimax_table()
    tallies = np.zeros(9, dtype=np.int64)
    for board in enumerate_consistent_boards(belief):
        if board.is_terminal():
            continue
        for s in table.optimal_moves(board, belief.seat):
            tallies[s] += 1
    return tallies


def belief_sampler_choose(belief: BeliefState, rng: np.random.Generator | float) -> int:
    """Pick a square with probability proportional to its optimal-move tally.

    ``rng`` may be a generator or an already drawn uniform in [0, 1).
    """
    u = rng.random() if isinstance(rng, np.random.Generator) else float(rng)
    cands = belief.candidates
    if not cands:
        raise ValueError("no candidate square left")
    tallies = belief_tallies(belief)
    weights = [int(tallies[s]) for s in cands]
    total = sum(weights)
    if total == 0:
        return cands[uniform_index(u, len(cands))]
    x = u * total
    c = 0
    last = cands[0]
    for s, w in zip(cands, weights):
        if w == 0:
            continue
        c += w
        last = s
        if x < c:
            return s
    return last


# ---------------------------------------------------------------------------
# agents
# ---------------------------------------------------------------------------

class RandomAgent:
    """Uniform over the candidate moves."""

    kind = engine.RANDOM
    name = "random"

    def begin_episode(self, seat: int) -> None:
        pass

    def choose_move(self, k: int, rng: np.random.Generator) -> int:
        return uniform_index(rng.random(), k)

    def observe(self, token: int) -> None:
        pass

    def end_episode(self, reward: float) -> None:
        pass


class BeliefSamplerAgent:
    """Plays the classic optimal move of a board drawn from its belief.

    Phantom tic-tac-toe only: move indices are ranks among candidate squares.
    """

    kind = engine.BELIEF
    name = "belief"

    def __init__(self):
        self.tracker = PhantomTracker()

    def begin_episode(self, seat: int) -> None:
        self.tracker.reset(seat)

    def choose_move(self, k: int, rng: np.random.Generator) -> int:
        belief = self.tracker.belief
        cands = belief.candidates
        if len(cands) != k:
            raise RuntimeError(f"belief has {len(cands)} candidates, referee offers {k}")
        return cands.index(belief_sampler_choose(belief, rng))

    def observe(self, token: int) -> None:
        self.tracker.observe(token)

    def end_episode(self, reward: float) -> None:
        pass


class FrozenPolicyAgent:
    """Walks a frozen tree along its own token stream; uniform once off the tree."""

    name = "mmcts"

    def __init__(self, policy: FrozenPolicy, token_count: int = TOKEN_COUNT):
        self.policy = policy
        self.token_count = token_count
        self.node = -1
        self.segment: list[int] = []
        self.off_tree = False

    @property
    def kind(self) -> int:
        return self.policy.kind

    def begin_episode(self, seat: int) -> None:
        if seat != self.policy.owner:
            raise ValueError(f"policy was trained for seat {self.policy.owner}, not {seat}")
        self.node = -1
        self.segment = []
        self.off_tree = False

    def choose_move(self, k: int, rng: np.random.Generator) -> int:
        u = rng.random()
        if not self.off_tree:
            tree = self.policy.tree
            nxt = 0 if self.node == -1 else tree.child(self.node, pack_segment(self.segment, self.token_count))
            if nxt == -1:
                self.off_tree = True
            else:
                if tree.k[nxt] != k:
                    raise RuntimeError(f"node {nxt} has {tree.k[nxt]} moves, referee offers {k}")
                self.node = nxt
        self.segment = []
        if self.off_tree:
            return uniform_index(u, k)
        return self.policy.pick(self.node, k, u)

    def observe(self, token: int) -> None:
        self.segment.append(token)

    def end_episode(self, reward: float) -> None:
        pass


class ScriptedAgent:
    """Plays a fixed sequence of move indices (testing aid); draws no randomness."""

    name = "scripted"

    def __init__(self, moves: Sequence[int]):
        self.moves = list(moves)
        self.i = 0

    def begin_episode(self, seat: int) -> None:
        self.i = 0

    def choose_move(self, k: int, rng: np.random.Generator) -> int:
        m = self.moves[self.i] if self.i < len(self.moves) else 0
        self.i += 1
        return min(m, k - 1)

    def observe(self, token: int) -> None:
        pass

    def end_episode(self, reward: float) -> None:
        pass


_OUTCOME_TEXT = {X_WINS: "X wins", O_WINS: "O wins", DRAW: "draw"}


class HumanAgent:
    """Terminal player. Sees only its own marks and the opponent marks it bumped into."""

    name = "human"

    def __init__(self, read: Callable[[str], str] = input, write: Callable[[str], None] = print):
        self.read = read
        self.write = write
        self.tracker = PhantomTracker()

    def begin_episode(self, seat: int) -> None:
        self.tracker.reset(seat)
        self.write(f"You are {'X (first)' if seat == 0 else 'O (second)'}. Squares are 0..8, row-major.")

    def choose_move(self, k: int, rng: np.random.Generator) -> int:
        b = self.tracker.belief
        cands = b.candidates
        self.write(render_view(b.seat, b.own_mask, b.known_mask))
        while True:
            text = self.read("your square> ").strip()
            try:
                s = int(text)
            except ValueError:
                self.write("enter a square number 0..8")
                continue
            if not 0 <= s <= 8:
                self.write("squares are numbered 0..8")
            elif s in b.own:
                self.write("you already hold that square")
            elif s in b.known_opponent:
                self.write("that square is known to be taken")
            else:
                return cands.index(s)

    def observe(self, token: int) -> None:
        self.tracker.observe(token)
        if REJECTED <= token < REJECTED + 9:
            self.write(f"square {token - REJECTED} is taken: illegal, play again")
        elif token == TURN_ENDED:
            self.write("the opponent has played")
        elif token in _OUTCOME_TEXT:
            self.write(f"game over: {_OUTCOME_TEXT[token]}")

    def end_episode(self, reward: float) -> None:
        pass


# ---------------------------------------------------------------------------
# evolving one-sided exploiter
# ---------------------------------------------------------------------------

@dataclass
class ExploiterResult:
    outcomes: np.ndarray          # int8 per simulation, +1 P1 win, -1 P2 win, 0 draw
    learner: PlayerTree
    side: int                     # seat of the fixed player
    extra: dict = field(default_factory=dict)


def evolving_exploiter(fixed, side: int, budget: int, rng: np.random.Generator,
                       gamma=PowerSchedule(), f=DepthBoost(), eta: str = COUPLED,
                       compiled: bool | None = None, block: int = 1_000_000,
                       game: PhantomTicTacToe | None = None) -> ExploiterResult:
    """MMCTS for the other seat only, against a fixed ``fixed`` player at ``side``.

    ``fixed`` is a FrozenPolicy, FrozenPolicyAgent, RandomAgent or
    BeliefSamplerAgent. The learner starts from a root-only tree (so it plays
    uniformly at first) and the fixed player is never modified.
    """
    if side not in (0, 1):
        raise ValueError("side must be 0 or 1")
    if budget < 0:
        raise ValueError("budget must be non-negative")
    if eta not in ETA_MODES:
        raise ValueError(f"unknown learning-rate mode {eta!r}")
    game = PhantomTicTacToe() if game is None else game
    if isinstance(fixed, FrozenPolicy):
        fixed = FrozenPolicyAgent(fixed)
    if isinstance(fixed, FrozenPolicyAgent) and fixed.policy.owner != side:
        raise ValueError(f"fixed policy belongs to seat {fixed.policy.owner}, asked to sit at {side}")
    learner_seat = 1 - side
    learner = PlayerTree.for_game(game, learner_seat)
    outcomes = np.zeros(budget, dtype=np.int8)
    kind = getattr(fixed, "kind", None)
    use_compiled = compiled_supported(game, gamma, f) and kind is not None if compiled is None else compiled
    if use_compiled:
        kinds = np.zeros(2, dtype=np.int64)
        kinds[side] = kind
        kinds[learner_seat] = engine.LEARNER
        if isinstance(fixed, FrozenPolicyAgent):
            fixed_arrays = fixed.policy.tree.copy().arrays  # writable copy; never written
        else:
            fixed_arrays = PlayerTree.for_game(game, side, capacity=2).arrays
        fpow = f.table()
        opt = _opt_masks()
        done = 0
        while done < budget:
            want = min(budget - done, block)
            room = min(want, 1 << 16) + 1
            learner.reserve(room, 9 * room)
            trees = [None, None]
            trees[side], trees[learner_seat] = fixed_arrays, learner.arrays
            ran = engine.run_block(kinds, trees[0], trees[1], done + 1, want, gamma.exponent,
                                   eta == COUPLED, fpow, opt, rng, outcomes, done)
            done += ran
            learner.simulations += ran
    else:
        seats: list = [None, None]
        seats[side], seats[learner_seat] = fixed, learner
        sign = {(1.0, -1.0): 1, (-1.0, 1.0): -1, (0.0, 0.0): 0}
        for i in range(budget):
            r = run_simulation(game, seats, i + 1, gamma, f, rng, eta)
            outcomes[i] = sign[tuple(float(x) for x in r)]
    return ExploiterResult(outcomes, learner, side)
