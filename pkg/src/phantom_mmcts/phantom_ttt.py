"""Phantom tic-tac-toe referee and the classic tic-tac-toe minimax table.

Squares are numbered 0..8 row-major. Player 0 marks X and moves first.
Each player's candidate squares are the ones it has neither marked nor been
refused on; a refused attempt reveals an opponent mark and the same player
tries again.

Observation tokens (integers, stable across versions):

    0..8    ACCEPTED + square   (to the mover)
    9..17   REJECTED + square   (to the mover)
    18      TURN_ENDED          (to the non-mover, once per completed turn)
    19..21  X_WINS, O_WINS, DRAW (to both, at the end)
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

ACCEPTED = 0
REJECTED = 9
TURN_ENDED = 18
X_WINS = 19
O_WINS = 20
DRAW = 21
TOKEN_COUNT = 22

EMPTY, X, O = 0, 1, 2
FULL = 0x1FF

LINES = (
    (0, 1, 2), (3, 4, 5), (6, 7, 8),
    (0, 3, 6), (1, 4, 7), (2, 5, 8),
    (0, 4, 8), (2, 4, 6),
)
LINE_MASKS = tuple(sum(1 << s for s in line) for line in LINES)
POW3 = tuple(3 ** s for s in range(9))


def has_line(mask: int) -> bool:
    return any(mask & m == m for m in LINE_MASKS)


def squares(mask: int) -> list[int]:
    return [s for s in range(9) if mask >> s & 1]


def to_mask(sqs) -> int:
    m = 0
    for s in sqs:
        m |= 1 << s
    return m


def encode(x_mask: int, o_mask: int) -> int:
    """Base-3 board code: cell value (0 empty, 1 X, 2 O) times 3**square."""
    code = 0
    for s in range(9):
        if x_mask >> s & 1:
            code += POW3[s]
        elif o_mask >> s & 1:
            code += 2 * POW3[s]
    return code


def decode(code: int) -> tuple[int, int]:
    x_mask = o_mask = 0
    for s in range(9):
        c = code % 3
        code //= 3
        if c == X:
            x_mask |= 1 << s
        elif c == O:
            o_mask |= 1 << s
    return x_mask, o_mask


@dataclass(frozen=True)
class Board:
    """A classic board as two occupancy bitmasks."""

    x: int = 0
    o: int = 0

    @classmethod
    def from_cells(cls, cells: Sequence[int]) -> "Board":
        if len(cells) != 9:
            raise ValueError("a board has 9 cells")
        return cls(to_mask(i for i, c in enumerate(cells) if c == X),
                   to_mask(i for i, c in enumerate(cells) if c == O))

    @classmethod
    def from_squares(cls, x_squares=(), o_squares=()) -> "Board":
        return cls(to_mask(x_squares), to_mask(o_squares))

    @property
    def cells(self) -> tuple[int, ...]:
        return tuple(X if self.x >> s & 1 else O if self.o >> s & 1 else EMPTY for s in range(9))

    @property
    def code(self) -> int:
        return encode(self.x, self.o)

    def winner(self) -> int:
        if has_line(self.x):
            return X
        if has_line(self.o):
            return O
        return EMPTY

    def is_terminal(self) -> bool:
        return self.winner() != EMPTY or (self.x | self.o) == FULL

    def render(self) -> str:
        glyph = {EMPTY: ".", X: "X", O: "O"}
        c = self.cells
        return "\n".join("|".join(glyph[c[3 * r + i]] for i in range(3)) for r in range(3))


def render_view(seat: int, own: int, known_opponent: int) -> str:
    """A player's private view: own marks plus the opponent marks it has bumped into."""
    return Board(own, known_opponent).render() if seat == 0 else Board(known_opponent, own).render()


# ---------------------------------------------------------------------------
# classic minimax
# ---------------------------------------------------------------------------

class MinimaxTable:
    """Exact values of every classic position reachable from the empty board.

    Values are from X's point of view. Built once by memoized search over the
    plain base-3 encoding (no symmetry reduction), read-only afterwards.
    """

    def __init__(self):
        self._value: dict[int, int] = {}
        self._solve(0, 0)
        size = 3 ** 9
        self.values = np.full(size, -2, dtype=np.int8)  # -2 marks unreachable codes
        self.optimal_masks = np.zeros(size, dtype=np.int16)  # 0 for terminal/unreachable
        for code, v in self._value.items():
            self.values[code] = v
            x, o = decode(code)
            if not _terminal(x, o):
                self.optimal_masks[code] = to_mask(self._optimal(x, o))
        self.values.flags.writeable = False
        self.optimal_masks.flags.writeable = False

    def __len__(self) -> int:
        return len(self._value)

    def reachable_codes(self) -> list[int]:
        return sorted(self._value)

    def _solve(self, x: int, o: int) -> int:
        code = encode(x, o)
        v = self._value.get(code)
        if v is not None:
            return v
        if has_line(x):
            v = 1
        elif has_line(o):
            v = -1
        elif x | o == FULL:
            v = 0
        else:
            x_to_move = bin(x).count("1") == bin(o).count("1")
            free = FULL & ~(x | o)
            children = [self._solve(x | 1 << s, o) if x_to_move else self._solve(x, o | 1 << s)
                        for s in squares(free)]
            v = max(children) if x_to_move else min(children)
        self._value[code] = v
        return v

    def _optimal(self, x: int, o: int) -> list[int]:
        x_to_move = bin(x).count("1") == bin(o).count("1")
        best = self._value[encode(x, o)]
        out = []
        for s in squares(FULL & ~(x | o)):
            child = encode(x | 1 << s, o) if x_to_move else encode(x, o | 1 << s)
            if self._value[child] == best:
                out.append(s)
        return out

    def _check(self, board: Board, mover: int) -> int:
        code = board.code
        if code not in self._value:
            raise ValueError(f"board is not reachable in classic play:\n{board.render()}")
        nx, no = bin(board.x).count("1"), bin(board.o).count("1")
        expected = 0 if nx == no else 1
        if mover != expected:
            raise ValueError(f"player {mover} cannot be to move with {nx} X and {no} O marks")
        return code

    def value(self, board: Board, mover: int) -> int:
        """Full-information game value (X's perspective) with ``mover`` to play."""
        return self._value[self._check(board, mover)]

    def optimal_moves(self, board: Board, mover: int) -> set[int]:
        self._check(board, mover)
        if board.is_terminal():
            raise ValueError("no moves on a terminal board")
        return set(self._optimal(board.x, board.o))


def _terminal(x: int, o: int) -> bool:
    return has_line(x) or has_line(o) or (x | o) == FULL


@lru_cache(maxsize=1)
def minimax_table() -> MinimaxTable:
    return MinimaxTable()


def minimax_value(board: Board, mover: int) -> int:
    return minimax_table().value(board, mover)


def optimal_moves(board: Board, mover: int) -> set[int]:
    return minimax_table().optimal_moves(board, mover)


# ---------------------------------------------------------------------------
# phantom referee
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PhantomState:
    marks: tuple[int, int] = (0, 0)          # X mask, O mask
    candidates: tuple[int, int] = (FULL, FULL)
    to_move: int = 0
    outcome: int = -1                        # -1 running, else X_WINS / O_WINS / DRAW

    @property
    def board(self) -> Board:
        return Board(self.marks[0], self.marks[1])

    @property
    def terminal(self) -> bool:
        return self.outcome >= 0


def candidate_squares(state: PhantomState, player: int | None = None) -> list[int]:
    p = state.to_move if player is None else player
    return squares(state.candidates[p])


class PhantomTicTacToe:
    """Referee for phantom tic-tac-toe."""

    token_count = TOKEN_COUNT
    # 9 accepted placements plus at most 4 + 4 refusals
    max_steps = 17

    def reset(self) -> PhantomState:
        return PhantomState()

    def active_player(self, state: PhantomState) -> int:
        return state.to_move

    def move_count(self, state: PhantomState) -> int:
        return bin(state.candidates[state.to_move]).count("1")

    def first_move_count(self, player: int) -> int:
        return 9

    def first_depth(self, player: int) -> int:
        # Player 2 has heard Player 1's first turn end
        return player

    def square_of(self, state: PhantomState, move: int) -> int:
        return candidate_squares(state)[move]

    def move_of(self, state: PhantomState, square: int) -> int:
        return candidate_squares(state).index(square)

    def step(self, state: PhantomState, move: int) -> tuple[PhantomState, list[list[int]], bool]:
        if state.terminal:
            raise RuntimeError("step on a finished game")
        p, q = state.to_move, 1 - state.to_move
        cands = candidate_squares(state)
        if not 0 <= move < len(cands):
            raise IndexError(f"move {move} out of range for {len(cands)} candidates")
        s = cands[move]
        bit = 1 << s
        obs: list[list[int]] = [[], []]
        cand = list(state.candidates)
        cand[p] &= ~bit
        if state.marks[q] & bit:
            obs[p].append(REJECTED + s)
            return PhantomState(state.marks, tuple(cand), p, -1), obs, False
        marks = list(state.marks)
        marks[p] |= bit
        obs[p].append(ACCEPTED + s)
        outcome = -1
        if has_line(marks[p]):
            outcome = X_WINS if p == 0 else O_WINS
        elif marks[0] | marks[1] == FULL:
            outcome = DRAW
        if outcome >= 0:
            obs[p].append(outcome)
            obs[q].append(outcome)
        else:
            obs[q].append(TURN_ENDED)
        new = PhantomState(tuple(marks), tuple(cand), q if outcome < 0 else p, outcome)
        return new, obs, outcome >= 0

    def rewards(self, state: PhantomState) -> tuple[float, float]:
        if state.outcome == X_WINS:
            return (1.0, -1.0)
        if state.outcome == O_WINS:
            return (-1.0, 1.0)
        if state.outcome == DRAW:
            return (0.0, 0.0)
        raise RuntimeError("rewards requested before the game ended")
