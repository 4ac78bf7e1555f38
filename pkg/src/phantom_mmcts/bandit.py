"""EXP3 adversarial bandit and matrix-game self-play.

Two EXP3 learners playing a zero-sum matrix game against each other produce
empirical action frequencies that approach a Nash equilibrium; the
``self_play_matrix`` driver measures exactly that.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numba import njit


def _check_rates(k: int, gamma: float, eta: float) -> None:
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"exploration gamma must lie in [0, 1], got {gamma}")
    # small slack so eta = 1/k computed in floating point is accepted
    if not 0.0 < eta <= 1.0 / k * (1 + 1e-12):
        raise ValueError(f"learning rate eta must lie in (0, 1/k] = (0, {1.0 / k}], got {eta}")


@dataclass
class Exp3State:
    """One EXP3 learner: cumulative reward estimates G plus its (gamma, eta)."""

    arm_count: int
    exploration: float = 0.1
    learning_rate: float | None = None  # None means 1/k
    cum_reward: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.arm_count < 1:
            raise ValueError("need at least one arm")
        if self.learning_rate is None:
            self.learning_rate = 1.0 / self.arm_count
        _check_rates(self.arm_count, self.exploration, self.learning_rate)
        if self.cum_reward is None:
            self.cum_reward = np.zeros(self.arm_count)
        else:
            self.cum_reward = np.array(self.cum_reward, dtype=np.float64)
            if self.cum_reward.shape != (self.arm_count,):
                raise ValueError("cum_reward must have one entry per arm")
        if not np.all(np.isfinite(self.cum_reward)):
            raise ValueError("cumulative rewards must be finite")

    def set_rates(self, gamma: float, eta: float) -> None:
        _check_rates(self.arm_count, gamma, eta)
        self.exploration, self.learning_rate = gamma, eta

    def distribution(self) -> np.ndarray:
        return exp3_distribution(self.cum_reward, self.exploration, self.learning_rate)

    def sample(self, rng: np.random.Generator) -> int:
        return _inverse_cdf(self.distribution(), rng.random())

    def update(self, arm: int, reward: float, prob: float) -> None:
        if not prob > 0:
            raise ValueError(f"probability must be positive, got {prob}")
        if not 0 <= arm < self.arm_count:
            raise IndexError(f"arm {arm} out of range")
        g = self.cum_reward[arm] + reward / prob
        if not math.isfinite(g):
            raise OverflowError("cumulative reward left the finite range")
        self.cum_reward[arm] = g


def exp3_distribution(cum_reward: np.ndarray, gamma: float, eta: float) -> np.ndarray:
    """(1 - gamma) * softmax(eta * G) + gamma / k."""
    z = eta * np.asarray(cum_reward, dtype=np.float64)
    w = np.exp(z - z.max())
    return (1.0 - gamma) * w / w.sum() + gamma / len(z)


def _inverse_cdf(p: np.ndarray, u: float) -> int:
    i = int(np.searchsorted(np.cumsum(p), u, side="right"))
    return min(i, len(p) - 1)


# ---------------------------------------------------------------------------
# matrix games
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MatrixGame:
    """Zero-sum game: the row player earns A[i, j], the column player -A[i, j]."""

    payoff: np.ndarray

    def __post_init__(self):
        a = np.array(self.payoff, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError("payoff must be a non-empty matrix")
        if not np.all(np.isfinite(a)):
            raise ValueError("payoff entries must be finite")
        a.flags.writeable = False
        object.__setattr__(self, "payoff", a)

    @property
    def shape(self) -> tuple[int, int]:
        return self.payoff.shape

    def value_of(self, x: np.ndarray, y: np.ndarray) -> float:
        return float(x @ self.payoff @ y)

    def exploitability(self, x: np.ndarray, y: np.ndarray) -> float:
        """Largest gain either side could get by deviating to a best response."""
        v = self.value_of(x, y)
        row_gain = float(np.max(self.payoff @ y)) - v
        col_gain = v - float(np.min(x @ self.payoff))
        return max(row_gain, col_gain)


MATCHING_PENNIES = MatrixGame(np.array([[1.0, -1.0], [-1.0, 1.0]]))
ROCK_PAPER_SCISSORS = MatrixGame(np.array([[0.0, -1.0, 1.0], [1.0, 0.0, -1.0], [-1.0, 1.0, 0.0]]))


def default_gamma(t):
    return np.minimum(1.0, np.asarray(t, dtype=np.float64) ** -0.3)


def default_eta(t, k):
    return np.minimum(1.0 / k, np.asarray(t, dtype=np.float64) ** -0.5)


@dataclass
class SelfPlayResult:
    row_freq: np.ndarray
    col_freq: np.ndarray
    avg_payoff: float
    # optional trace: rounds at which snapshots were taken and the running stats there
    rounds: np.ndarray | None = None
    row_trace: np.ndarray | None = None
    col_trace: np.ndarray | None = None
    payoff_trace: np.ndarray | None = None


def _schedule(fn, t: np.ndarray, *args) -> np.ndarray:
    try:
        out = np.asarray(fn(t, *args), dtype=np.float64)
        if out.shape == t.shape:
            return out
    except Exception:
        pass
    return np.fromiter((fn(int(s), *args) for s in t), dtype=np.float64, count=len(t))


def self_play_matrix(game: MatrixGame, rounds: int, rng: np.random.Generator,
                     gamma: Callable = default_gamma, eta: Callable = default_eta,
                     snapshots: int = 0) -> SelfPlayResult:
    """Both players run EXP3 on their own realized payoff for ``rounds`` rounds.

    ``gamma(t)`` and ``eta(t, k)`` may be vectorized over a numpy array of
    round indices or plain scalar functions. With ``snapshots > 0`` the running
    frequencies are also recorded at that many evenly spaced rounds.
    """
    if rounds <= 0:
        raise ValueError("rounds must be positive")
    m, n = game.shape
    t = np.arange(1, rounds + 1, dtype=np.float64)
    g = _schedule(gamma, t)
    e_row = _schedule(eta, t, m)
    e_col = _schedule(eta, t, n)
    for arr, k in ((e_row, m), (e_col, n)):
        if np.any(g < 0) or np.any(g > 1) or np.any(arr <= 0) or np.any(arr > 1.0 / k * (1 + 1e-12)):
            raise ValueError("schedules must give gamma in [0, 1] and eta in (0, 1/k]")
    marks = np.unique(np.linspace(1, rounds, snapshots).astype(np.int64)) if snapshots > 0 else np.zeros(0, np.int64)
    rc = np.zeros(m, dtype=np.int64)
    cc = np.zeros(n, dtype=np.int64)
    rt = np.zeros((len(marks), m))
    ct = np.zeros((len(marks), n))
    pt = np.zeros(len(marks))
    total = _self_play(game.payoff, g, e_row, e_col, rng, rc, cc, marks, rt, ct, pt)
    res = SelfPlayResult(rc / rounds, cc / rounds, total / rounds)
    if snapshots > 0:
        res.rounds, res.row_trace, res.col_trace, res.payoff_trace = marks, rt, ct, pt
    return res


@njit(cache=True)
def _pick(z, gamma, u):
    k = z.shape[0]
    mx = z.max()
    s = 0.0
    for i in range(k):
        s += math.exp(z[i] - mx)
    c = 0.0
    p = 0.0
    for i in range(k):
        p = (1.0 - gamma) * math.exp(z[i] - mx) / s + gamma / k
        c += p
        if u < c:
            return i, p
    return k - 1, p


@njit(cache=True)
def _self_play(a, g, e_row, e_col, rng, rc, cc, marks, rt, ct, pt):
    m, n = a.shape
    gr = np.zeros(m)
    gc = np.zeros(n)
    total = 0.0
    nxt = 0
    for t in range(g.shape[0]):
        i, pi = _pick(e_row[t] * gr, g[t], rng.random())
        j, pj = _pick(e_col[t] * gc, g[t], rng.random())
        r = a[i, j]
        gr[i] += r / pi
        gc[j] -= r / pj
        rc[i] += 1
        cc[j] += 1
        total += r
        if nxt < marks.shape[0] and marks[nxt] == t + 1:
            rt[nxt] = rc / (t + 1)
            ct[nxt] = cc / (t + 1)
            pt[nxt] = total / (t + 1)
            nxt += 1
    return total


def solve_2x2(game: MatrixGame) -> tuple[np.ndarray, np.ndarray, float]:
    """Fully mixed equilibrium of a 2x2 game from the indifference equations.

    Raises if the game has a pure saddle point (no fully mixed solution).
    """
    if game.shape != (2, 2):
        raise ValueError("need a 2x2 game")
    (a, b), (c, d) = game.payoff
    den = a - b - c + d
    if den == 0:
        raise ValueError("degenerate game")
    p = (d - c) / den   # row plays 0 with prob p
    q = (d - b) / den   # column plays 0 with prob q
    if not (0 < p < 1 and 0 < q < 1):
        raise ValueError("game has a pure saddle point")
    value = (a * d - b * c) / den
    return np.array([p, 1 - p]), np.array([q, 1 - q]), value
