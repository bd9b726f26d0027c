import itertools

import networkx as nx
import numpy as np
import pytest

from sleepmis.graph import Graph, ParameterError, is_maximal_independent
from sleepmis.oracle import enumerate_small_graphs, mis_in_oracle, oracle_all_mis
from sleepmis.verify import small_graph_batch, small_graph_suite


@pytest.mark.parametrize("n,count", [(1, 1), (2, 2), (3, 8), (5, 1024)])
def test_enumeration_counts(n, count):
    gs = list(enumerate_small_graphs(n))
    assert len(gs) == count
    assert len({tuple(map(tuple, g.edges())) for g in gs}) == count


def test_sampled_sizes_distinct():
    gs = list(enumerate_small_graphs(7, 2000, seed=1))
    assert len(gs) == 2000
    assert len({tuple(map(tuple, g.edges())) for g in gs}) == 2000


def test_enumeration_refuses():
    with pytest.raises(ParameterError):
        list(enumerate_small_graphs(9))


def _sets(xs):
    return {frozenset(x) for x in xs}


def test_oracle_examples():
    assert oracle_all_mis(Graph.from_edges(3, [(0, 1), (1, 2), (0, 2)])) == _sets([{0}, {1}, {2}])
    assert oracle_all_mis(Graph.from_edges(3, [(0, 1), (1, 2)])) == _sets([{1}, {0, 2}])
    c4 = Graph.from_edges(4, [(0, 1), (1, 2), (2, 3), (3, 0)])
    assert oracle_all_mis(c4) == _sets([{0, 2}, {1, 3}])


def test_oracle_refuses_large():
    with pytest.raises(ParameterError):
        oracle_all_mis(Graph.from_edges(21, []))


def brute_mis(g):
    out = set()
    for bits in itertools.product([False, True], repeat=g.n):
        m = np.array(bits, dtype=bool)
        if g.n and is_maximal_independent(g, m):
            out.add(frozenset(np.flatnonzero(m).tolist()))
    return out


@pytest.mark.parametrize("seed", range(10))
def test_oracle_matches_brute_force(seed):
    g = Graph.from_edges(9, list(nx.gnp_random_graph(9, 0.35, seed=seed).edges()))
    assert oracle_all_mis(g) == brute_mis(g)


def test_mis_in_oracle():
    g = Graph.from_edges(3, [(0, 1), (1, 2)])
    assert mis_in_oracle(g, np.array([True, False, True]))
    assert not mis_in_oracle(g, np.array([True, False, False]))


def test_batch_verdicts_per_graph():
    batch = small_graph_batch(max_n=3)
    m = np.zeros(batch.union.n, dtype=bool)
    dep, mx = batch.verdicts(m)
    assert dep.all() and not mx.any()
    m[:] = True
    dep, mx = batch.verdicts(m)
    edgeless = np.array([g.m == 0 for g in batch.graphs])
    assert np.array_equal(dep, edgeless) and np.array_equal(mx, edgeless)


def test_suite_small():
    res = small_graph_suite(max_n=4, seeds=2)
    assert res["ok"] and res["graphs"] == 1 + 2 + 8 + 64
    for cell in res["per_alg"].values():
        assert cell["independent"] == 1.0 and cell["oracle_mismatch"] == 0
