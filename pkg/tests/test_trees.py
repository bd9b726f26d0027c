import numpy as np
import pytest

from sleepmis.engine import BudgetViolation, Engine
from sleepmis.graph import Graph, GraphError
from sleepmis.trees import (Forest, bfs_depths, check_forest, elect_root_and_build_tree,
                            ldt_broadcast, ldt_convergecast, merge_star)

from conftest import path, star


def _elect(g, members=None, rounds=None, D=16):
    eng = Engine(g, 0)
    ch = eng.channel(g)
    members = np.ones(g.n, dtype=bool) if members is None else members
    labels = np.zeros(g.n, dtype=np.int64)
    f = elect_root_and_build_tree(ch, labels, members, rounds or g.n, D)
    return eng, ch, f


def test_elect_single_node():
    _, _, f = _elect(Graph.from_edges(1, []))
    assert f.root.tolist() == [0] and f.depth.tolist() == [0]


def test_elect_path():
    _, _, f = _elect(path(3))
    assert f.root.tolist() == [0, 0, 0] and f.depth.tolist() == [0, 1, 2]


def test_elect_star_center_nine():
    g = Graph.from_edges(10, [(9, v) for v in range(5)])
    members = np.zeros(10, dtype=bool)
    members[[0, 1, 2, 3, 4, 9]] = True
    _, _, f = _elect(g, members)
    assert set(f.root[members].tolist()) == {0}
    assert f.depth[9] == 1 and f.depth[[1, 2, 3, 4]].tolist() == [2] * 4
    assert not check_forest(f, g)


def test_elect_disconnected_raises():
    with pytest.raises(GraphError):
        _elect(Graph.from_edges(2, []), rounds=2)


def _path_forest(n, D):
    parent = np.arange(-1, n - 1, dtype=np.int64)
    return Forest.from_parents(parent, np.ones(n, dtype=bool), D)


def test_broadcast_singleton():
    g = Graph.from_edges(1, [])
    eng = Engine(g, 0)
    out = ldt_broadcast(eng.channel(g), Forest.singletons(1, None, 0), np.array([7]), 3)
    assert out.tolist() == [7] and eng.rounds == 1 and eng.ledger.awake_count.tolist() == [1]


def test_broadcast_path_depth3():
    g = path(4)
    eng = Engine(g, 0)
    out = ldt_broadcast(eng.channel(g), _path_forest(4, 3), np.array([5, 0, 0, 0]), 3)
    assert out.tolist() == [5] * 4
    assert eng.rounds <= 4 and eng.ledger.awake_count.max() <= 2


def test_broadcast_full_width_payload():
    g = path(4)
    eng = Engine(g, 0)
    v = (1 << eng.B) - 1
    out = ldt_broadcast(eng.channel(g), _path_forest(4, 3), np.array([v, 0, 0, 0]), eng.B)
    assert out.tolist() == [v] * 4


def test_broadcast_over_budget():
    g = path(2)
    eng = Engine(g, 0)
    with pytest.raises(BudgetViolation):
        ldt_broadcast(eng.channel(g), _path_forest(2, 1), np.array([1, 0]), eng.B + 1)


def test_convergecast_and_min_sum():
    g = star(10)
    f = Forest.from_parents(np.array([-1] + [0] * 10), np.ones(11, dtype=bool), 1)
    eng = Engine(g, 0)
    ch = eng.channel(g)
    assert ldt_convergecast(ch, f, np.ones(11, dtype=np.int64), "and", 1)[0] == 1
    assert ldt_convergecast(ch, f, np.arange(11) + 3, "min", 8)[0] == 3
    indeg = np.r_[0, np.ones(10, dtype=np.int64)]
    assert ldt_convergecast(ch, f, indeg, "sum", 8)[0] == 10
    assert eng.ledger.awake_count.max() <= 6


def test_convergecast_over_budget():
    g = path(3)
    eng = Engine(g, 0)
    with pytest.raises(BudgetViolation):
        ldt_convergecast(eng.channel(g), _path_forest(3, 2), np.full(3, 1 << 40), "sum", eng.B)


def test_merge_two_singletons():
    g = path(2)
    eng = Engine(g, 0)
    f = merge_star(eng.channel(g), Forest.singletons(2, None, 4), np.array([0]), np.array([1]))
    assert f.root.tolist() == [0, 0] and f.depth.tolist() == [0, 1]


def test_merge_two_depth1_stars():
    # stars {0,1,2} and {3,4,5} joined by edge 2-3
    g = Graph.from_edges(6, [(0, 1), (0, 2), (3, 4), (3, 5), (2, 3)])
    parent = np.array([-1, 0, 0, -1, 3, 3])
    f = Forest.from_parents(parent, np.ones(6, dtype=bool), 6)
    eng = Engine(g, 0)
    out = merge_star(eng.channel(g), f, np.array([2]), np.array([3]))
    assert set(out.root.tolist()) == {0}
    assert out.depth.max() <= 3
    assert not check_forest(out, g)
    assert np.array_equal(bfs_depths(out), out.depth)


def test_merge_center_with_nine_leaves():
    g = star(9)
    eng = Engine(g, 0)
    f = Forest.singletons(10, None, 4)
    out = merge_star(eng.channel(g), f, np.zeros(9, dtype=np.int64), np.arange(1, 10))
    assert f.cluster_ids().size == 10 and out.cluster_ids().tolist() == [0]


def test_merge_non_star_raises():
    g = path(3)
    eng = Engine(g, 0)
    with pytest.raises(GraphError):
        # node 1 would be both a leaf and a center
        merge_star(eng.channel(g), Forest.singletons(3, None, 4), np.array([0, 1]), np.array([1, 2]))
