"""Compiled phantom tic-tac-toe episode loop.

This is the hot path for training, the evolving exploiter and evaluation. It
reproduces the generic Python implementation draw for draw: every decision
consumes exactly one ``rng.random()`` and moves are sampled by cumulative
inversion in move-index order. Trees are passed as the tuple returned by
``PlayerTree.arrays``.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

LEARNER = 0
FROZEN_WEIGHTS = 1
FROZEN_EMPIRICAL = 2
RANDOM = 3
BELIEF = 4

FULL = 0x1FF
MAX_DECISIONS = 24
TOKEN_RADIX = 23  # TOKEN_COUNT + 1, see game.pack_segment
TURN_ENDED = 18

_LINES = np.array([0b000000111, 0b000111000, 0b111000000,
                   0b001001001, 0b010010010, 0b100100100,
                   0b100010001, 0b001010100], dtype=np.int64)
_POW3 = np.array([3 ** s for s in range(9)], dtype=np.int64)


@njit(cache=True, inline="always")
def _popcount(x):
    c = 0
    while x:
        x &= x - 1
        c += 1
    return c


@njit(cache=True)
def _has_line(mask):
    for i in range(8):
        if mask & _LINES[i] == _LINES[i]:
            return True
    return False


@njit(cache=True, inline="always")
def _nth_square(mask, m):
    for s in range(9):
        if mask >> s & 1:
            if m == 0:
                return s
            m -= 1
    return -1


@njit(cache=True, inline="always")
def _uniform(u, k):
    m = int(u * k)
    return k - 1 if m >= k else m


@njit(cache=True)
def find_child(tree, node, key):
    first_child, next_sibling, edge = tree[0], tree[1], tree[2]
    c = first_child[node]
    while c != -1:
        if edge[c] == key:
            return c
        c = next_sibling[c]
    return -1


@njit(cache=True)
def select_from_logw(logw, o, k, gamma, u):
    """Sample from (1-gamma)*softmax(logw[o:o+k]) + gamma/k; return (move, prob)."""
    mx = logw[o]
    for i in range(1, k):
        if logw[o + i] > mx:
            mx = logw[o + i]
    total = 0.0
    for i in range(k):
        total += math.exp(logw[o + i] - mx)
    c = 0.0
    p = 0.0
    for i in range(k):
        p = (1.0 - gamma) * math.exp(logw[o + i] - mx) / total + gamma / k
        c += p
        if u < c:
            return i, p
    return k - 1, p


@njit(cache=True)
def frozen_pick(tree, node, k, empirical, u):
    logw, visits, offset = tree[7], tree[8], tree[6]
    o = offset[node]
    if empirical:
        total = 0
        for i in range(k):
            total += visits[o + i]
        if total == 0:
            return _uniform(u, k)
        c = 0.0
        for i in range(k):
            c += visits[o + i] / total
            if u < c:
                return i
        return k - 1
    m, _ = select_from_logw(logw, o, k, 0.0, u)
    return m


@njit(cache=True)
def belief_tallies(seat, own, known, opt_masks, tallies):
    """Count, per square, the consistent boards on which it is an optimal move.

    Returns the number of consistent boards.
    """
    for s in range(9):
        tallies[s] = 0
    opp_moves = _popcount(own) + seat
    unaccounted = opp_moves - _popcount(known)
    free = FULL & ~(own | known)
    if unaccounted < 0:
        return 0
    own_digit = 1 if seat == 0 else 2
    boards = 0
    for msk in range(512):
        if msk & ~free or _popcount(msk) != unaccounted:
            continue
        opp = known | msk
        if _has_line(opp):
            continue
        code = 0
        for s in range(9):
            if own >> s & 1:
                code += own_digit * _POW3[s]
            elif opp >> s & 1:
                code += (3 - own_digit) * _POW3[s]
        om = opt_masks[code]
        for s in range(9):
            if om >> s & 1:
                tallies[s] += 1
        boards += 1
    return boards


@njit(cache=True)
def belief_pick(seat, own, known, cand, opt_masks, u):
    tallies = np.zeros(9, dtype=np.int64)
    belief_tallies(seat, own, known, opt_masks, tallies)
    total = 0
    for s in range(9):
        if cand >> s & 1:
            total += tallies[s]
    if total == 0:
        return _nth_square(cand, _uniform(u, _popcount(cand)))
    x = u * total
    c = 0
    last = -1
    for s in range(9):
        if cand >> s & 1 and tallies[s] > 0:
            c += tallies[s]
            last = s
            if x < c:
                return s
    return last


@njit(cache=True)
def _add_node(tree, parent, key, k, depth):
    first_child, next_sibling, edge, dep, kk, par, offset, logw, visits, meta = tree
    n = meta[0]
    mc = meta[1]
    edge[n] = key
    dep[n] = depth
    kk[n] = k
    par[n] = parent
    offset[n] = mc
    first_child[n] = -1
    next_sibling[n] = first_child[parent]
    first_child[parent] = n
    for i in range(k):
        logw[mc + i] = 0.0
        visits[mc + i] = 0
    meta[0] = n + 1
    meta[1] = mc + k
    return n


@njit(cache=True)
def play(kinds, tree0, tree1, gamma, coupled, fpow, opt_masks, rng):
    """Play one episode. Learner seats grow and update their tree.

    With ``coupled`` the update step at a node is f(d) * gamma / k, the
    classic EXP3 learning rate; otherwise it is f(d) alone.
    Returns +1 if Player 1 wins, -1 if Player 2 wins, 0 on a draw.
    """
    marks = np.zeros(2, dtype=np.int64)
    cand = np.full(2, FULL, dtype=np.int64)
    seg = np.zeros(2, dtype=np.int64)
    seen = np.zeros(2, dtype=np.int64)
    cur = np.full(2, -1, dtype=np.int64)
    out = np.zeros(2, dtype=np.bool_)
    pend_parent = np.full(2, -1, dtype=np.int64)
    pend_key = np.zeros(2, dtype=np.int64)
    pend_k = np.zeros(2, dtype=np.int64)
    pend_depth = np.zeros(2, dtype=np.int64)
    pend_move = np.zeros(2, dtype=np.int64)
    tr_node = np.zeros((2, MAX_DECISIONS), dtype=np.int64)
    tr_move = np.zeros((2, MAX_DECISIONS), dtype=np.int64)
    tr_prob = np.zeros((2, MAX_DECISIONS), dtype=np.float64)
    tr_len = np.zeros(2, dtype=np.int64)

    p = 0
    outcome = 0
    while True:
        q = 1 - p
        tree = tree0 if p == 0 else tree1
        kind = kinds[p]
        k = _popcount(cand[p])
        u = rng.random()
        if kind == RANDOM:
            m = _uniform(u, k)
        elif kind == BELIEF:
            own = marks[p]
            known = FULL & ~cand[p] & ~own
            s = belief_pick(p, own, known, cand[p], opt_masks, u)
            m = _popcount(cand[p] & ((1 << s) - 1))
        elif out[p]:
            m = _uniform(u, k)
        else:
            node = 0 if cur[p] == -1 else find_child(tree, cur[p], seg[p])
            if node == -1:
                # first node out of the tree: remember it, play uniformly from here on
                out[p] = True
                pend_parent[p] = cur[p]
                pend_key[p] = seg[p]
                pend_k[p] = k
                pend_depth[p] = seen[p]
                m = _uniform(u, k)
                pend_move[p] = m
            else:
                cur[p] = node
                if kind == LEARNER:
                    m, prob = select_from_logw(tree[7], tree[6][node], k, gamma, u)
                    i = tr_len[p]
                    tr_node[p, i] = node
                    tr_move[p, i] = m
                    tr_prob[p, i] = prob
                    tr_len[p] = i + 1
                else:
                    m = frozen_pick(tree, node, k, kind == FROZEN_EMPIRICAL, u)
        seg[p] = 0
        s = _nth_square(cand[p], m)
        bit = 1 << s
        cand[p] &= ~bit
        if marks[q] & bit:
            seg[p] = seg[p] * TOKEN_RADIX + 9 + s + 1
            seen[p] += 1
            continue
        marks[p] |= bit
        seg[p] = seg[p] * TOKEN_RADIX + s + 1
        seen[p] += 1
        if _has_line(marks[p]):
            outcome = 1 if p == 0 else -1
            break
        if marks[0] | marks[1] == FULL:
            outcome = 0
            break
        seg[q] = seg[q] * TOKEN_RADIX + TURN_ENDED + 1
        seen[q] += 1
        p = q

    for j in range(2):
        if kinds[j] != LEARNER:
            continue
        tree = tree0 if j == 0 else tree1
        r = outcome if j == 0 else -outcome
        if out[j]:
            n = _add_node(tree, pend_parent[j], pend_key[j], pend_k[j], pend_depth[j])
            i = tr_len[j]
            tr_node[j, i] = n
            tr_move[j, i] = pend_move[j]
            tr_prob[j, i] = 1.0 / pend_k[j]
            tr_len[j] = i + 1
        offset, depth, kk, logw, visits = tree[6], tree[3], tree[4], tree[7], tree[8]
        for i in range(tr_len[j] - 1, -1, -1):
            node = tr_node[j, i]
            idx = offset[node] + tr_move[j, i]
            eta = gamma / kk[node] if coupled else 1.0
            logw[idx] += fpow[depth[node]] * eta * r / tr_prob[j, i]
            visits[idx] += 1
    return outcome


@njit(cache=True)
def _has_room(tree, kind):
    if kind != LEARNER:
        return True
    return tree[9][0] < tree[0].shape[0] and tree[9][1] + 9 <= tree[7].shape[0]


@njit(cache=True)
def run_block(kinds, tree0, tree1, n_start, count, gamma_exp, coupled, fpow, opt_masks, rng, outcomes, out_start):
    """Run up to ``count`` episodes numbered n_start, n_start+1, ...

    gamma(n) = n ** -gamma_exp. Outcomes land in ``outcomes[out_start:]``.
    Stops early when a learner tree is out of capacity; returns episodes run.
    """
    for i in range(count):
        if not (_has_room(tree0, kinds[0]) and _has_room(tree1, kinds[1])):
            return i
        n = n_start + i
        gamma = min(1.0, n ** -gamma_exp)
        outcomes[out_start + i] = play(kinds, tree0, tree1, gamma, coupled, fpow, opt_masks, rng)
    return count
