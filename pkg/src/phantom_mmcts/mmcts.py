"""Multiple Monte-Carlo tree search with exponential-weight selection.

Every player grows its own tree over its private history. A node is a
decision point of that player; the edge into it is the packed sequence of
tokens the player received since its previous decision (for phantom
tic-tac-toe: the result of its own attempt, followed by the opponent's
turn-end signal when the attempt was accepted). Move weights are stored as
log(rew(N, m)) so the multiplicative update is a plain addition.

Two interchangeable drivers exist: ``run_simulation`` works with any referee
and plain Python agents; ``train`` dispatches phantom tic-tac-toe to the
compiled loop in :mod:`phantom_mmcts.engine`, which makes identical draws.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np

from . import engine
from .game import Agent, Referee, pack_segment
from .phantom_ttt import PhantomTicTacToe, minimax_table

NO_PARENT = -1

# learning-rate modes: step f(d) * gamma(n) / k(N) (EXP3's eta) or plain f(d)
COUPLED = "coupled"
UNIT = "unit"
ETA_MODES = (COUPLED, UNIT)


@dataclass(frozen=True)
class PowerSchedule:
    """gamma(n) = n ** -exponent, capped at 1."""

    exponent: float = 0.3

    def __post_init__(self):
        if self.exponent <= 0:
            raise ValueError("gamma exponent must be positive")

    def __call__(self, n: int) -> float:
        return min(1.0, n ** -self.exponent)


@dataclass(frozen=True)
class DepthBoost:
    """f(d) = base ** (d - offset): deep nodes take larger steps."""

    base: float = 1.7
    offset: float = 9.0

    def __post_init__(self):
        if self.base <= 1:
            raise ValueError("f base must exceed 1")

    def __call__(self, d: int) -> float:
        return self.base ** (d - self.offset)

    def table(self, size: int = 64) -> np.ndarray:
        return self.base ** (np.arange(size, dtype=np.float64) - self.offset)


class PlayerTree:
    """Append-only tree of one player's information states.

    Node ids are assigned in creation order, so parents always precede their
    children. Per-move data lives in two flat pools addressed by
    ``offset[node] .. offset[node] + k[node]``.
    """

    def __init__(self, owner: int, root_k: int, root_depth: int = 0, capacity: int = 1024):
        if root_k < 1:
            raise ValueError("the root needs at least one move")
        self.owner = owner
        self.simulations = 0
        cap = max(2, capacity)
        self.first_child = np.full(cap, -1, dtype=np.int32)
        self.next_sibling = np.full(cap, -1, dtype=np.int32)
        self.edge = np.zeros(cap, dtype=np.uint32)
        self.depth = np.zeros(cap, dtype=np.int16)
        self.k = np.zeros(cap, dtype=np.int8)
        self.parent = np.full(cap, NO_PARENT, dtype=np.int32)
        self.offset = np.zeros(cap, dtype=np.int64)
        self.logw = np.zeros(cap * 9, dtype=np.float64)
        self.visits = np.zeros(cap * 9, dtype=np.uint32)
        self.meta = np.array([1, root_k], dtype=np.int64)  # node count, move count
        self.k[0] = root_k
        self.depth[0] = root_depth

    @classmethod
    def for_game(cls, game: Referee, owner: int, capacity: int = 1024) -> "PlayerTree":
        return cls(owner, game.first_move_count(owner), game.first_depth(owner), capacity)

    @property
    def node_count(self) -> int:
        return int(self.meta[0])

    @property
    def move_count(self) -> int:
        return int(self.meta[1])

    @property
    def arrays(self) -> tuple:
        return (self.first_child, self.next_sibling, self.edge, self.depth, self.k,
                self.parent, self.offset, self.logw, self.visits, self.meta)

    def reserve(self, nodes: int, moves: int) -> None:
        """Make room for ``nodes`` more nodes holding ``moves`` more moves."""
        need_n = self.node_count + nodes
        if need_n > self.first_child.shape[0]:
            cap = max(need_n, 2 * self.first_child.shape[0])
            self.first_child = _grow(self.first_child, cap, -1)
            self.next_sibling = _grow(self.next_sibling, cap, -1)
            self.edge = _grow(self.edge, cap, 0)
            self.depth = _grow(self.depth, cap, 0)
            self.k = _grow(self.k, cap, 0)
            self.parent = _grow(self.parent, cap, NO_PARENT)
            self.offset = _grow(self.offset, cap, 0)
        need_m = self.move_count + moves
        if need_m > self.logw.shape[0]:
            cap = max(need_m, 2 * self.logw.shape[0])
            self.logw = _grow(self.logw, cap, 0.0)
            self.visits = _grow(self.visits, cap, 0)

    def child(self, node: int, key: int) -> int:
        c = int(self.first_child[node])
        while c != -1:
            if self.edge[c] == key:
                return c
            c = int(self.next_sibling[c])
        return -1

    def children(self, node: int) -> dict[int, int]:
        out = {}
        c = int(self.first_child[node])
        while c != -1:
            out[int(self.edge[c])] = c
            c = int(self.next_sibling[c])
        return out

    def add_node(self, parent: int, key: int, k: int, depth: int) -> int:
        self.reserve(1, k)
        return engine._add_node(self.arrays, parent, key, k, depth)

    def weights(self, node: int) -> np.ndarray:
        o = self.offset[node]
        return self.logw[o:o + self.k[node]]

    def visit_counts(self, node: int) -> np.ndarray:
        o = self.offset[node]
        return self.visits[o:o + self.k[node]]

    def trimmed_arrays(self) -> tuple:
        n, m = self.node_count, self.move_count
        return (self.first_child[:n], self.next_sibling[:n], self.edge[:n], self.depth[:n],
                self.k[:n], self.parent[:n], self.offset[:n], self.logw[:m], self.visits[:m],
                self.meta)

    def copy(self) -> "PlayerTree":
        t = PlayerTree.__new__(PlayerTree)
        t.owner = self.owner
        t.simulations = self.simulations
        (t.first_child, t.next_sibling, t.edge, t.depth, t.k, t.parent, t.offset,
         t.logw, t.visits, t.meta) = (a.copy() for a in self.trimmed_arrays())
        return t

    def same_as(self, other: "PlayerTree") -> bool:
        return (self.owner == other.owner and self.simulations == other.simulations
                and all(np.array_equal(a, b) for a, b in zip(self.trimmed_arrays(), other.trimmed_arrays())))


def _grow(a: np.ndarray, cap: int, fill) -> np.ndarray:
    out = np.full(cap, fill, dtype=a.dtype)
    out[:a.shape[0]] = a
    return out


# ---------------------------------------------------------------------------
# selection and update
# ---------------------------------------------------------------------------

def move_distribution(logw: np.ndarray, gamma: float) -> np.ndarray:
    """(1 - gamma) * rew / sum(rew) + gamma / k, from log-weights."""
    w = np.exp(logw - logw.max())
    return (1.0 - gamma) * w / w.sum() + gamma / len(logw)


def inverse_cdf(probs: Sequence[float], u: float) -> int:
    c = 0.0
    for i, p in enumerate(probs):
        c += p
        if u < c:
            return i
    return len(probs) - 1


def uniform_index(u: float, k: int) -> int:
    return min(int(u * k), k - 1)


def select_move(logw: np.ndarray, gamma: float, rng: np.random.Generator) -> tuple[int, float]:
    """Sample a move from the exploration mixture; return it with its probability."""
    m, p = engine.select_from_logw(np.asarray(logw, dtype=np.float64), 0, len(logw), gamma, rng.random())
    return int(m), float(p)


class TraceStep(NamedTuple):
    node: int
    move: int
    prob: float
    eta: float = 1.0


def step_size(mode: str, gamma: float, k: int) -> float:
    if mode == COUPLED:
        return gamma / k
    if mode == UNIT:
        return 1.0
    raise ValueError(f"unknown learning-rate mode {mode!r}")


def backpropagate(tree: PlayerTree, trace: Iterable[Sequence], reward: float,
                  f: Callable[[int], float]) -> None:
    """log rew(N, m) += f(depth(N)) * eta * reward / p along the trace, deepest first.

    Trace entries are ``TraceStep``s or plain (node, move, prob) triples,
    the latter meaning eta = 1.
    """
    for step in reversed(list(trace)):
        node, move, prob, eta = TraceStep(*step)
        idx = tree.offset[node] + move
        tree.logw[idx] += f(int(tree.depth[node])) * eta * reward / prob
        tree.visits[idx] += 1


@dataclass
class _Seat:
    """Per-simulation bookkeeping for one learning player."""

    tree: PlayerTree
    node: int = -1
    segment: list = field(default_factory=list)
    seen: int = 0
    out: bool = False
    pending: tuple | None = None     # (parent, key, k, depth, move)
    trace: list = field(default_factory=list)


def run_simulation(game: Referee, seats: Sequence[PlayerTree | Agent], n: int,
                   gamma: Callable[[int], float], f: Callable[[int], float],
                   rng: np.random.Generator, eta: str = COUPLED) -> tuple[float, float]:
    """One MMCTS simulation. PlayerTree seats learn; Agent seats just play.

    Generic reference implementation; ``train`` uses the compiled loop for
    phantom tic-tac-toe.
    """
    g = gamma(n)
    step_size(eta, g, 1)  # validate the mode up front
    learners: dict[int, _Seat] = {}
    for p, s in enumerate(seats):
        if isinstance(s, PlayerTree):
            learners[p] = _Seat(s)
        else:
            s.begin_episode(p)
    state = game.reset()
    while True:
        p = game.active_player(state)
        k = game.move_count(state)
        if p in learners:
            st = learners[p]
            u = rng.random()
            if st.out:
                m = uniform_index(u, k)
            else:
                node = 0 if st.node == -1 else st.tree.child(st.node, pack_segment(st.segment, game.token_count))
                if node == -1:
                    st.out = True
                    m = uniform_index(u, k)
                    st.pending = (st.node, pack_segment(st.segment, game.token_count), k, st.seen, m)
                else:
                    if st.tree.k[node] != k:
                        raise RuntimeError(f"node {node} has {st.tree.k[node]} moves, game offers {k}")
                    st.node = node
                    m, prob = engine.select_from_logw(st.tree.logw, st.tree.offset[node], k, g, u)
                    st.trace.append(TraceStep(node, int(m), float(prob), step_size(eta, g, k)))
            st.segment = []
        else:
            m = seats[p].choose_move(k, rng)
        state, obs, terminal = game.step(state, int(m))
        for j in [p] + [q for q in range(len(seats)) if q != p]:
            for tok in obs[j]:
                if j in learners:
                    learners[j].segment.append(tok)
                    learners[j].seen += 1
                else:
                    seats[j].observe(tok)
        if terminal:
            break
    rewards = game.rewards(state)
    for p, s in enumerate(seats):
        if p in learners:
            st = learners[p]
            if st.pending is not None:
                parent, key, k, depth, move = st.pending
                new = st.tree.add_node(parent, key, k, depth)
                st.trace.append(TraceStep(new, move, 1.0 / k, step_size(eta, g, k)))
            backpropagate(st.tree, st.trace, rewards[p], f)
            st.tree.simulations += 1
        else:
            s.end_episode(rewards[p])
    return rewards


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    trees: list[PlayerTree]
    outcomes: np.ndarray  # int8 per simulation: +1 P1 win, -1 P2 win, 0 draw


def compiled_supported(game: Referee, gamma, f) -> bool:
    return isinstance(game, PhantomTicTacToe) and isinstance(gamma, PowerSchedule) and isinstance(f, DepthBoost)


def train(game: Referee, budget: int, rng: np.random.Generator,
          gamma: Callable[[int], float] = PowerSchedule(), f: Callable[[int], float] = DepthBoost(),
          trees: list[PlayerTree] | None = None, checkpoints: Iterable[int] = (),
          on_checkpoint: Callable[[int, list[PlayerTree]], None] | None = None,
          compiled: bool | None = None, block: int = 1_000_000, eta: str = COUPLED) -> TrainResult:
    """Self-play MMCTS for ``budget`` simulations.

    ``on_checkpoint(n, trees)`` fires after simulation n for each n in
    ``checkpoints``. The simulation counter continues from the trees'
    ``simulations`` when resuming.
    """
    if budget < 0:
        raise ValueError("budget must be non-negative")
    if eta not in ETA_MODES:
        raise ValueError(f"unknown learning-rate mode {eta!r}")
    if trees is None:
        trees = [PlayerTree.for_game(game, p) for p in range(2)]
    use_compiled = compiled_supported(game, gamma, f) if compiled is None else compiled
    if use_compiled and not compiled_supported(game, gamma, f):
        raise ValueError("compiled training needs phantom tic-tac-toe with PowerSchedule and DepthBoost")
    outcomes = np.zeros(budget, dtype=np.int8)
    start = trees[0].simulations
    marks = sorted(c for c in set(checkpoints) if start < c <= start + budget)
    done = 0
    if use_compiled:
        kinds = np.array([engine.LEARNER, engine.LEARNER], dtype=np.int64)
        fpow = f.table()
        opt = _opt_masks()
        while done < budget:
            nxt = next((c - start for c in marks if c - start > done), budget)
            want = min(nxt - done, block)
            room = min(want, 1 << 16) + 1
            for t in trees:
                t.reserve(room, 9 * room)
            ran = engine.run_block(kinds, trees[0].arrays, trees[1].arrays, start + done + 1, want,
                                   gamma.exponent, eta == COUPLED, fpow, opt, rng, outcomes, done)
            done += ran
            for t in trees:
                t.simulations += ran
            if done + start in marks and on_checkpoint is not None and ran > 0:
                on_checkpoint(done + start, trees)
    else:
        reward_sign = {(1.0, -1.0): 1, (-1.0, 1.0): -1, (0.0, 0.0): 0}
        for i in range(budget):
            r = run_simulation(game, trees, start + i + 1, gamma, f, rng, eta)
            outcomes[i] = reward_sign[tuple(float(x) for x in r)]
            if start + i + 1 in marks and on_checkpoint is not None:
                on_checkpoint(start + i + 1, trees)
    return TrainResult(trees, outcomes)


_OPT: list[np.ndarray] = []


def _opt_masks() -> np.ndarray:
    if not _OPT:
        _OPT.append(minimax_table().optimal_masks.astype(np.int64))
    return _OPT[0]


# ---------------------------------------------------------------------------
# frozen policies
# ---------------------------------------------------------------------------

WEIGHTS = "weights"
EMPIRICAL = "empirical"


class FrozenPolicy:
    """Read-only snapshot of a tree plus the rule turning it into move probabilities.

    ``weights``: softmax of the log-weights (no exploration mixture).
    ``empirical``: visit-count frequencies. Unvisited nodes and histories
    outside the tree are played uniformly.
    """

    def __init__(self, tree: PlayerTree, mode: str = WEIGHTS, copy: bool = True):
        if mode not in (WEIGHTS, EMPIRICAL):
            raise ValueError(f"unknown freeze mode {mode!r}")
        self.tree = tree.copy() if copy else tree
        t = self.tree
        for name in ("first_child", "next_sibling", "edge", "depth", "k", "parent", "offset",
                     "logw", "visits", "meta"):
            getattr(t, name).flags.writeable = False
        self.mode = mode
        self.owner = tree.owner

    @property
    def kind(self) -> int:
        return engine.FROZEN_WEIGHTS if self.mode == WEIGHTS else engine.FROZEN_EMPIRICAL

    @property
    def arrays(self) -> tuple:
        return self.tree.trimmed_arrays()

    def distribution(self, node: int) -> np.ndarray:
        k = int(self.tree.k[node])
        if self.mode == WEIGHTS:
            return move_distribution(self.tree.weights(node), 0.0)
        v = self.tree.visit_counts(node).astype(np.float64)
        total = v.sum()
        return np.full(k, 1.0 / k) if total == 0 else v / total

    def pick(self, node: int, k: int, u: float) -> int:
        return int(engine.frozen_pick(self.arrays, node, k, self.mode == EMPIRICAL, u))


def freeze(tree: PlayerTree, mode: str = WEIGHTS, copy: bool = True) -> FrozenPolicy:
    return FrozenPolicy(tree, mode, copy)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

MAGIC = b"MMCT"
FORMAT_VERSION = 1
_ROOT_PARENT = 2 ** 64 - 1
_HEADER = struct.Struct("<4sHBQQ")
_NODE = struct.Struct("<QQIH")


def segment_length(key: int, token_count: int) -> int:
    """Number of tokens packed into an edge key (see ``game.pack_segment``)."""
    n = 0
    while key:
        key //= token_count + 1
        n += 1
    return n


def save_tree(tree: PlayerTree, path) -> None:
    """Write ``tree`` in the little-endian MMCT node-record format."""
    n = tree.node_count
    parts = [_HEADER.pack(MAGIC, FORMAT_VERSION, tree.owner, tree.simulations, n)]
    rec = np.dtype([("w", "<f8"), ("v", "<u8")])
    for node in range(n):
        parent = _ROOT_PARENT if node == 0 else int(tree.parent[node])
        k = int(tree.k[node])
        parts.append(_NODE.pack(node, parent, int(tree.edge[node]), k))
        moves = np.empty(k, dtype=rec)
        moves["w"] = tree.weights(node)
        moves["v"] = tree.visit_counts(node)
        parts.append(moves.tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_tree(path, game: Referee | None = None) -> PlayerTree:
    """Read a tree written by ``save_tree``.

    Depths are not stored: they are rebuilt from the owner's first-decision
    depth in ``game`` (phantom tic-tac-toe by default) plus edge lengths.
    """
    game = PhantomTicTacToe() if game is None else game
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: file too short for an MMCT header")
    magic, version, owner, sims, n = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise ValueError(f"{path}: not an MMCT policy file")
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: format version {version}, this build reads {FORMAT_VERSION}")
    if owner > 1 or n < 1:
        raise ValueError(f"{path}: corrupt header")
    pos = _HEADER.size
    rec = np.dtype([("w", "<f8"), ("v", "<u8")])
    tree: PlayerTree | None = None
    for expect in range(n):
        if pos + _NODE.size > len(data):
            raise ValueError(f"{path}: truncated at node {expect}")
        node, parent, edge, k = _NODE.unpack_from(data, pos)
        pos += _NODE.size
        moves = np.frombuffer(data, dtype=rec, count=k, offset=pos) if pos + k * rec.itemsize <= len(data) else None
        if moves is None or node != expect or k < 1:
            raise ValueError(f"{path}: corrupt record for node {expect}")
        pos += k * rec.itemsize
        if node == 0:
            if parent != _ROOT_PARENT:
                raise ValueError(f"{path}: first record is not a root")
            tree = PlayerTree(owner, k, game.first_depth(owner), capacity=n)
            tree.reserve(0, 9 * n)
        else:
            if not 0 <= parent < node:
                raise ValueError(f"{path}: node {node} lists parent {parent}")
            depth = int(tree.depth[parent]) + segment_length(edge, game.token_count)
            tree.add_node(parent, edge, k, depth)
        o = tree.offset[node]
        tree.logw[o:o + k] = moves["w"]
        tree.visits[o:o + k] = moves["v"]
    if pos != len(data):
        raise ValueError(f"{path}: trailing bytes after {n} nodes")
    tree.simulations = sims
    return tree
