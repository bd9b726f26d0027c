import numpy as np
import pytest

from sleepmis.engine import BudgetViolation, Engine
from sleepmis.graph import Graph, generate_graph, is_independent, is_maximal_independent
from sleepmis.mis_core import (desire_level_mis, packed_parallel_mis, run_luby,
                               shatter_and_cluster)


def _ch(g, seed=0):
    eng = Engine(g, seed)
    return eng, eng.channel(g)


def test_luby_single_node():
    _, ch = _ch(Graph.from_edges(1, []))
    m, c = run_luby(ch, np.ones(1, dtype=bool), 1)
    assert m.tolist() == [True]


def test_luby_edgeless():
    _, ch = _ch(Graph.from_edges(10, []))
    m, _ = run_luby(ch, np.ones(10, dtype=bool), 1)
    assert m.all()


def test_luby_k2_seeds():
    g = Graph.from_edges(2, [(0, 1)])
    for s in range(200):
        _, ch = _ch(g, s)
        m, c = run_luby(ch, np.ones(2, dtype=bool), 40)
        assert m.sum() == 1 and is_maximal_independent(g, m)


def test_luby_sleeping_decided_saves_energy():
    g = generate_graph("gnp", {"n": 2000, "avg_degree": 6}, 1)
    e1, ch1 = _ch(g, 3)
    m1, _ = run_luby(ch1, np.ones(g.n, dtype=bool), 30)
    e2, ch2 = _ch(g, 3)
    m2, _ = run_luby(ch2, np.ones(g.n, dtype=bool), 30, sleep_decided=True)
    assert np.array_equal(m1, m2) and is_maximal_independent(g, m1)
    assert e2.ledger.awake_count.mean() < e1.ledger.awake_count.mean()
    assert e1.rounds == e2.rounds


def test_desire_level_edgeless():
    g = Graph.from_edges(8, [])
    for s in range(20):
        _, ch = _ch(g, s)
        m, c, rem = desire_level_mis(ch, np.ones(8, dtype=bool), 12)
        assert m.all() and not rem.any()


def test_desire_level_k2():
    g = Graph.from_edges(2, [(0, 1)])
    done = 0
    for s in range(200):
        _, ch = _ch(g, s)
        m, c, rem = desire_level_mis(ch, np.ones(2, dtype=bool), 30)
        assert is_independent(g, m)
        done += not rem.any()
    assert done >= 198


def test_desire_level_shrinks_delta20():
    g = generate_graph("random_regular", {"n": 4096, "d": 20}, 5)
    good = 0
    for s in range(20):
        _, ch = _ch(g, s)
        m, c, rem = desire_level_mis(ch, np.ones(g.n, dtype=bool), 4 * 5)
        assert is_independent(g, m)
        good += rem.sum() <= g.n / 8
    assert good >= 19


def test_packed_single_node():
    _, ch = _ch(Graph.from_edges(1, []))
    r = packed_parallel_mis(ch, np.ones(1, dtype=bool), 2, 3)
    assert r.success.all() and r.joined.all()


def test_packed_k1_matches_desire_level():
    g = generate_graph("gnp", {"n": 300, "avg_degree": 4}, 2)
    _, ch = _ch(g, 9)
    r = packed_parallel_mis(ch, np.ones(g.n, dtype=bool), 1, 10, tag="same", success_round=False)
    _, ch = _ch(g, 9)
    m, c, rem = desire_level_mis(ch, np.ones(g.n, dtype=bool), 10, tag="same")
    assert np.array_equal(r.joined[0], m) and np.array_equal(r.covered[0], c)


def test_packed_too_many_executions():
    g = Graph.from_edges(2, [(0, 1)])
    eng, ch = _ch(g)
    with pytest.raises(BudgetViolation):
        packed_parallel_mis(ch, np.ones(2, dtype=bool), eng.B // 2 + 1, 1)


def test_packed_component_some_execution_succeeds():
    n = 1 << 16
    k = 16
    comp = generate_graph("gnp", {"n": 200, "avg_degree": 3}, 4)
    ok = 0
    trials = 1000
    for s in range(trials):
        eng = Engine(comp, s)
        eng.B = 4 * 16           # component inside an n = 2^16 network
        r = packed_parallel_mis(eng.channel(comp), np.ones(comp.n, dtype=bool), k, 2 * 8 + 4)
        good = np.flatnonzero(r.success.all(axis=1))
        if good.size:
            ok += 1
            assert is_maximal_independent(comp, r.joined[good[0]])
    assert ok >= 0.999 * trials
    del n


def test_shatter_empty_and_isolated():
    g = Graph.from_edges(3, [(0, 1)])
    eng, ch = _ch(g)
    r = shatter_and_cluster(ch, np.zeros(3, dtype=bool), 5, 2, 2, 10)
    assert not r.remaining.any() and r.max_component == 0
    eng, ch = _ch(Graph.from_edges(1, []))
    r = shatter_and_cluster(ch, np.ones(1, dtype=bool), 0, 2, 2, 10)
    assert r.remaining.tolist() == [True] and r.labels[0] == 0


def test_shatter_components_within_cap():
    g0 = generate_graph("gnp", {"n": 1 << 14, "avg_degree": 32}, 8)
    cap = int(14 ** 2)
    good = 0
    for s in range(100):
        eng, ch = _ch(g0, s)
        r = shatter_and_cluster(ch, np.ones(g0.n, dtype=bool), 4 * 6 + 8, 4, 3, cap)
        assert is_independent(g0, r.in_mis)
        good += not r.failed
    assert good >= 99
