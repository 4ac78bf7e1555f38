import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phantom_mmcts.mmcts import (COUPLED, EMPIRICAL, UNIT, WEIGHTS, DepthBoost, FrozenPolicy, PlayerTree,
                                 PowerSchedule, TraceStep, backpropagate, freeze, load_tree, move_distribution,
                                 run_simulation, save_tree, segment_length, select_move, train)
from phantom_mmcts.phantom_ttt import PhantomTicTacToe

GAME = PhantomTicTacToe()


def fresh():
    return [PlayerTree.for_game(GAME, p) for p in range(2)]


def test_schedules():
    g = PowerSchedule()
    assert g(1) == 1.0 and math.isclose(g(1000), 1000 ** -0.3)
    f = DepthBoost()
    assert f(9) == 1.0 and math.isclose(f(7), 1.7 ** -2)
    assert np.allclose(f.table(12)[:12], [f(d) for d in range(12)])
    with pytest.raises(ValueError):
        PowerSchedule(0)
    with pytest.raises(ValueError):
        DepthBoost(1.0)


def test_select_move_examples():
    assert np.allclose(move_distribution(np.zeros(3), 0.4), [1 / 3] * 3)
    lw = np.log([1.0, 4.0, 1.0])
    assert np.allclose(move_distribution(lw, 0.0), [1 / 6, 2 / 3, 1 / 6])
    assert np.allclose(move_distribution(lw, 0.3), [0.7 / 6 + 0.1, 2.8 / 6 + 0.1, 0.7 / 6 + 0.1])


@given(st.lists(st.floats(-700, 700), min_size=1, max_size=9), st.floats(0, 1), st.integers(0, 2 ** 32))
def test_select_move_probability_is_exact(lw, gamma, seed):
    lw = np.array(lw)
    p = move_distribution(lw, gamma)
    assert abs(p.sum() - 1) < 1e-12 and np.all(p >= gamma / len(lw) - 1e-15)
    m, prob = select_move(lw, gamma, np.random.default_rng(seed))
    assert 0 <= m < len(lw)
    assert math.isclose(prob, p[m], rel_tol=1e-9, abs_tol=1e-15)
    assert prob >= gamma / len(lw) - 1e-15


@given(st.lists(st.floats(-50, 50), min_size=2, max_size=9), st.floats(-1e3, 1e3))
def test_argmax_shift_invariant(lw, c):
    lw = np.array(lw)
    assert np.argmax(move_distribution(lw, 0.2)) == np.argmax(move_distribution(lw + c, 0.2))


def test_select_move_frequencies():
    lw = np.log([1.0, 3.0])
    rng = np.random.default_rng(0)
    draws = np.array([select_move(lw, 0.0, rng)[0] for _ in range(100_000)])
    assert abs(draws.mean() - 0.75) < 0.01


def one_node_tree(depth=9):
    t = PlayerTree(0, 2, root_depth=depth)
    return t


def test_backpropagate_examples():
    f = DepthBoost()
    t = one_node_tree()
    backpropagate(t, [(0, 1, 0.5)], 1.0, f)
    assert math.isclose(math.exp(t.weights(0)[1]), math.e ** 2)
    assert t.visit_counts(0).tolist() == [0, 1]
    t = one_node_tree()
    backpropagate(t, [(0, 0, 0.3)], 0.0, f)
    assert t.weights(0).tolist() == [0.0, 0.0]
    t = one_node_tree()
    backpropagate(t, [(0, 0, 1.0)], -1.0, f)
    assert math.isclose(math.exp(t.weights(0)[0]), math.exp(-1))
    # with the EXP3 step gamma / k carried in the trace
    t = one_node_tree()
    backpropagate(t, [TraceStep(0, 1, 0.5, 0.1 / 2)], 1.0, f)
    assert math.isclose(t.weights(0)[1], 0.1)


def test_cold_start_adds_one_node_each():
    trees = fresh()
    run_simulation(GAME, trees, 1, PowerSchedule(), DepthBoost(), np.random.default_rng(0))
    assert [t.node_count for t in trees] == [2, 2]
    assert all(t.simulations == 1 for t in trees)


@settings(max_examples=15)
@given(st.integers(1, 300), st.integers(0, 2 ** 32))
def test_growth_bound(n, seed):
    res = train(GAME, n, np.random.default_rng(seed))
    for t in res.trees:
        assert 1 <= t.node_count <= n + 1
        assert t.simulations == n


def test_tree_structure_consistent():
    trees = train(GAME, 5000, np.random.default_rng(1)).trees
    for t in trees:
        assert t.depth[0] == GAME.first_depth(t.owner)
        for node in range(1, t.node_count):
            par = t.parent[node]
            assert 0 <= par < node
            assert t.depth[node] == t.depth[par] + segment_length(int(t.edge[node]), GAME.token_count)
            assert t.child(par, int(t.edge[node])) == node
        assert np.all(np.isfinite(t.logw[:t.move_count]))
        # every node reachable from the root
        seen, stack = set(), [0]
        while stack:
            x = stack.pop()
            seen.add(x)
            stack.extend(t.children(x).values())
        assert len(seen) == t.node_count


@settings(max_examples=20)
@given(st.integers(0, 2 ** 32), st.sampled_from([1.0, -1.0, 0.0]))
def test_backprop_path_locality(seed, reward):
    trees = train(GAME, 400, np.random.default_rng(5)).trees
    t = trees[0]
    rng = np.random.default_rng(seed)
    # walk a random root path
    path, node = [], 0
    for _ in range(4):
        k = int(t.k[node])
        m = int(rng.integers(k))
        path.append((node, m, float(rng.uniform(0.05, 1.0))))
        kids = list(t.children(node).values())
        if not kids:
            break
        node = kids[int(rng.integers(len(kids)))]
    before_w, before_v = t.logw.copy(), t.visits.copy()
    backpropagate(t, path, reward, DepthBoost())
    touched = {int(t.offset[n] + m) for n, m, _ in path}
    mask = np.ones(len(before_w), bool)
    mask[list(touched)] = False
    assert np.array_equal(before_w[mask], t.logw[mask])
    assert np.array_equal(before_v[mask], t.visits[mask])


@pytest.mark.parametrize("eta", [COUPLED, UNIT])
def test_compiled_matches_reference(eta):
    a = train(GAME, 1500, np.random.default_rng(3), compiled=False, eta=eta)
    b = train(GAME, 1500, np.random.default_rng(3), compiled=True, eta=eta)
    assert np.array_equal(a.outcomes, b.outcomes)
    assert all(x.same_as(y) for x, y in zip(a.trees, b.trees))


def test_eta_modes_differ_and_validate():
    a = train(GAME, 500, np.random.default_rng(3), eta=COUPLED)
    b = train(GAME, 500, np.random.default_rng(3), eta=UNIT)
    assert not np.array_equal(a.trees[0].weights(0), b.trees[0].weights(0))
    with pytest.raises(ValueError):
        train(GAME, 10, np.random.default_rng(0), eta="bogus")


def test_determinism_and_resume():
    a = train(GAME, 3000, np.random.default_rng(11))
    b = train(GAME, 3000, np.random.default_rng(11))
    assert all(x.same_as(y) for x, y in zip(a.trees, b.trees))
    rng = np.random.default_rng(11)
    first = train(GAME, 1200, rng, block=500)
    rest = train(GAME, 1800, rng, trees=first.trees, block=700)
    assert np.array_equal(np.concatenate([first.outcomes, rest.outcomes]), a.outcomes)
    assert all(x.same_as(y) for x, y in zip(rest.trees, a.trees))


def test_checkpoint_hook():
    seen = []
    train(GAME, 1000, np.random.default_rng(0), checkpoints=[10, 500, 1000, 5000],
          on_checkpoint=lambda n, trees: seen.append((n, trees[0].simulations)), block=300)
    assert seen == [(10, 10), (500, 500), (1000, 1000)]


def test_growth_beyond_initial_capacity():
    trees = [PlayerTree.for_game(GAME, p, capacity=4) for p in range(2)]
    res = train(GAME, 2000, np.random.default_rng(0), trees=trees, block=100)
    assert res.trees[0].node_count > 4


def test_persistence_round_trip(tmp_path):
    trees = train(GAME, 3000, np.random.default_rng(2)).trees
    for t in trees:
        p = tmp_path / f"p{t.owner}.mmct"
        save_tree(t, p)
        back = load_tree(p)
        assert back.same_as(t)
        save_tree(back, tmp_path / "again.mmct")
        assert p.read_bytes() == (tmp_path / "again.mmct").read_bytes()
    raw = (tmp_path / "p0.mmct").read_bytes()
    assert raw[:4] == b"MMCT"
    assert int.from_bytes(raw[7:15], "little") == 3000


def test_persistence_errors(tmp_path):
    t = train(GAME, 50, np.random.default_rng(2)).trees[0]
    p = tmp_path / "t.mmct"
    save_tree(t, p)
    raw = bytearray(p.read_bytes())
    bad = tmp_path / "bad.mmct"
    bad.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ValueError, match="not an MMCT"):
        load_tree(bad)
    v = raw.copy()
    v[4:6] = (99).to_bytes(2, "little")
    bad.write_bytes(bytes(v))
    with pytest.raises(ValueError, match="version"):
        load_tree(bad)
    bad.write_bytes(bytes(raw[:-5]))
    with pytest.raises(ValueError):
        load_tree(bad)
    bad.write_bytes(bytes(raw) + b"\0")
    with pytest.raises(ValueError, match="trailing"):
        load_tree(bad)


def test_frozen_policy_examples():
    t = PlayerTree(0, 2)
    t.visits[0:2] = [10, 30]
    assert np.allclose(freeze(t, EMPIRICAL).distribution(0), [0.25, 0.75])
    assert np.allclose(freeze(t, WEIGHTS).distribution(0), [0.5, 0.5])
    root_only = PlayerTree(1, 9, 1)
    for mode in (WEIGHTS, EMPIRICAL):
        assert np.allclose(freeze(root_only, mode).distribution(0), np.full(9, 1 / 9))
    with pytest.raises(ValueError):
        FrozenPolicy(t, "bogus")


def test_frozen_policy_sampling_and_immutability():
    t = PlayerTree(0, 2)
    t.visits[0:2] = [10, 30]
    pol = freeze(t, EMPIRICAL)
    rng = np.random.default_rng(0)
    picks = np.array([pol.pick(0, 2, rng.random()) for _ in range(100_000)])
    assert abs(picks.mean() - 0.75) < 0.01
    with pytest.raises(ValueError):
        pol.tree.logw[0] = 1.0
    t.visits[0] = 1000        # the snapshot does not follow the live tree
    assert np.allclose(pol.distribution(0), [0.25, 0.75])
