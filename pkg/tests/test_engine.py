import numpy as np
import pytest

from sleepmis.engine import (BudgetViolation, Broadcast, Direct, Engine, EngineConfig, EnergyLedger,
                             NodeProtocol, ProtocolError, energy_report, run_simulation)
from sleepmis.graph import Graph


class JoinAlone(NodeProtocol):
    def output(self, v, state):
        return "in"

    def terminated(self, v, state):
        return False


class OneBit(NodeProtocol):
    def __init__(self, wake):
        self.wake = wake

    def init(self, v, neighbors, uniform):
        return {"nb": neighbors, "got": {}}

    def first_wake(self, v, state):
        return self.wake[v]

    def send(self, v, state, rnd):
        return {u: (1, 1) for u in state["nb"]} if v == 0 or self.wake[v] == 1 else {}

    def receive(self, v, state, rnd, inbox):
        state["got"].update(inbox)

    def output(self, v, state):
        return dict(state["got"])


def test_single_node_protocol():
    t = run_simulation(Graph.from_edges(1, []), JoinAlone(), seed=1)
    assert t.ledger.total_rounds == 1
    assert t.ledger.awake_count.tolist() == [1]
    assert t.outputs == ["in"]


def test_edge_both_awake_exchange():
    t = run_simulation(Graph.from_edges(2, [(0, 1)]), OneBit({0: 1, 1: 1}), seed=0)
    assert t.outputs == [{1: 1}, {0: 1}]
    assert t.ledger.awake_count.tolist() == [1, 1]
    assert t.drops == 0


def test_edge_receiver_asleep_drops():
    t = run_simulation(Graph.from_edges(2, [(0, 1)]), OneBit({0: 1, 1: None}), seed=0)
    assert t.drops == 1
    assert t.outputs[1] == {}


class TwoOnOneEdge(NodeProtocol):
    def send(self, v, state, rnd):
        return [(1 - v, 1, 1), (1 - v, 0, 1)]


class TooWide(NodeProtocol):
    def send(self, v, state, rnd):
        return {1 - v: (1, 1000)}


def test_two_messages_one_edge_is_protocol_error():
    with pytest.raises(ProtocolError):
        run_simulation(Graph.from_edges(2, [(0, 1)]), TwoOnOneEdge(), seed=0)


def test_budget_abort_and_record_modes():
    g = Graph.from_edges(2, [(0, 1)])
    with pytest.raises(BudgetViolation):
        run_simulation(g, TooWide(), seed=0)
    t = run_simulation(g, TooWide(), seed=0, config=EngineConfig(on_violation="record"))
    assert t.violations and all(v["kind"] == "budget" for v in t.violations)


@pytest.mark.parametrize("counts,rounds,expected", [
    ([3, 1, 0, 0], 3, (3, 1.0)),
    ([0, 0, 0], 5, (0, 0.0)),
    ([5, 5], 7, (5, 5.0)),
])
def test_energy_report(counts, rounds, expected):
    r = energy_report(EnergyLedger(np.array(counts), rounds))
    assert (r["max_awake"], r["mean_awake"]) == expected
    assert r["total_rounds"] == rounds


def test_channel_round_and_ledger():
    g = Graph.from_edges(3, [(0, 1), (1, 2)])
    eng = Engine(g, 0)
    ch = eng.channel(g)
    awake = np.array([True, True, False])
    res = ch.round(awake, [Broadcast(np.array([1]), np.array([5]), 3, fire_and_forget=True)])[0]
    assert res.count.tolist() == [1, 0, 0] and res.value[0] == 5
    assert eng.drops == 1 and eng.unintended_drops == 0
    ch.round(awake, [Direct(np.array([0]), np.array([1]), np.array([1]), 1)])
    eng.idle(4)
    assert eng.rounds == 6
    assert eng.ledger.awake_count.tolist() == [2, 2, 0]


def test_unintended_drop_counted():
    g = Graph.from_edges(2, [(0, 1)])
    eng = Engine(g, 0)
    eng.channel(g).round(np.array([True, False]), [Broadcast(np.array([0]))])
    assert eng.unintended_drops == 1


def test_sleeping_sender_is_violation():
    g = Graph.from_edges(2, [(0, 1)])
    eng = Engine(g, 0)
    with pytest.raises(ProtocolError):
        eng.channel(g).round(np.array([False, True]), [Broadcast(np.array([0]))])


def test_block_matches_rounds():
    g = Graph.from_edges(3, [(0, 1), (1, 2)])
    eng = Engine(g, 0)
    ch = eng.channel(g)
    ok = ch.block(4, np.array([0, 1, 1, 2]), np.array([0, 0, 3, 2]),
                  [Direct(np.array([0, 1]), np.array([1, 2]), None, 1, fire_and_forget=True,
                          time=np.array([0, 3]))])[0]
    assert ok.tolist() == [True, False]
    assert eng.rounds == 4 and eng.ledger.awake_count.tolist() == [1, 2, 1]


def test_payload_must_fit_bits():
    g = Graph.from_edges(2, [(0, 1)])
    eng = Engine(g, 0, EngineConfig(on_violation="record"))
    eng.channel(g).round(np.ones(2, dtype=bool), [Direct(np.array([0]), np.array([1]), np.array([4]), 2)])
    assert eng.violations[0]["kind"] == "budget"
