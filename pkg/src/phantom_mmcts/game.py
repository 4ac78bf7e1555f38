"""Referee abstraction for two-player partially observable games.

A referee holds the secret state, validates moves and sends each player the
observation tokens it is entitled to. Agents only ever see their own token
stream, so a player's history (own move indices interleaved with tokens) is a
complete description of what it knows.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Protocol, Sequence

import numpy as np

PLAYER_COUNT = 2


class Referee(Protocol):
    """Capabilities a game must expose to be searched and played.

    ``first_move_count`` and ``first_depth`` describe each player's first
    decision point (number of candidate moves, tokens received before it);
    the tokens preceding a player's first decision must not vary between
    episodes. Move indices are local to the active player's information state:
    ``0 .. move_count(state) - 1`` in an order the game defines. Observation
    tokens are small non-negative integers below ``token_count``.
    """

    token_count: int
    max_steps: int

    def reset(self) -> Any: ...

    def active_player(self, state: Any) -> int: ...

    def move_count(self, state: Any) -> int: ...

    def first_move_count(self, player: int) -> int: ...

    def first_depth(self, player: int) -> int: ...

    def step(self, state: Any, move: int) -> tuple[Any, list[list[int]], bool]: ...

    def rewards(self, state: Any) -> tuple[float, float]: ...


class Agent(Protocol):
    def begin_episode(self, seat: int) -> None: ...

    def choose_move(self, k: int, rng: np.random.Generator) -> int: ...

    def observe(self, token: int) -> None: ...

    def end_episode(self, reward: float) -> None: ...


@dataclass
class Episode:
    rewards: tuple[float, float]
    # per player: ("move", index) / ("obs", token) entries in arrival order
    histories: list[list[tuple[str, int]]] = field(default_factory=lambda: [[], []])
    steps: int = 0


def play_episode(game: Referee, agents: Sequence[Agent], rng: np.random.Generator) -> Episode:
    """Drive one game to the end, routing observations to their addressees.

    Observations produced by a step are delivered active player first, then
    the others by seat index.
    """
    if len(agents) != PLAYER_COUNT:
        raise ValueError(f"expected {PLAYER_COUNT} agents, got {len(agents)}")
    for seat, agent in enumerate(agents):
        agent.begin_episode(seat)
    histories: list[list[tuple[str, int]]] = [[] for _ in range(PLAYER_COUNT)]
    state = game.reset()
    steps = 0
    while True:
        mover = game.active_player(state)
        k = game.move_count(state)
        move = agents[mover].choose_move(k, rng)
        if not 0 <= move < k:
            raise RuntimeError(f"agent for seat {mover} chose move {move} with only {k} candidates")
        histories[mover].append(("move", move))
        state, observations, terminal = game.step(state, move)
        steps += 1
        if steps > game.max_steps:
            raise RuntimeError(f"episode exceeded the declared bound of {game.max_steps} steps")
        order = [mover] + [p for p in range(PLAYER_COUNT) if p != mover]
        for p in order:
            for token in observations[p]:
                histories[p].append(("obs", token))
                agents[p].observe(token)
        if terminal:
            break
    rewards = game.rewards(state)
    for seat, agent in enumerate(agents):
        agent.end_episode(rewards[seat])
    return Episode(rewards=rewards, histories=histories, steps=steps)


def pack_segment(tokens: Sequence[int], token_count: int) -> int:
    """Encode a token sequence as one integer (mixed radix, length-unambiguous).

    Used as the edge label between consecutive decision points of a player.
    """
    key = 0
    for t in tokens:
        key = key * (token_count + 1) + t + 1
    return key
