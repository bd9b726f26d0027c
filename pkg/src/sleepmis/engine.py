"""Lock-step CONGEST simulator with sleeping nodes and energy accounting.

Two front ends share one accounting core (:class:`Engine`):

* :func:`run_simulation` drives per-node state machines written as plain
  Python objects.  It is the readable reference and is used for small graphs.
* :class:`Channel` executes rounds in bulk over a (sub)graph view.  The MIS
  pipelines use it; every round still goes through the same checks: only
  awake nodes send, messages reach only awake receivers, payloads respect the
  bit budget, and each awake node is charged one unit of energy per round.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Iterable

import numpy as np

from .graph import Graph
from .rng import NodeRandom


class ModelViolation(RuntimeError):
    """A protocol broke the rules of the synchronous sleeping model."""


class BudgetViolation(ModelViolation):
    pass


class ProtocolError(ModelViolation):
    pass


@dataclass
class EngineConfig:
    budget_factor: int = 4
    max_rounds: int = 10**9
    on_violation: str = "abort"          # "abort" | "record"
    check_edges: bool = False
    record_awake_sets: bool = False

    def message_bits(self, n: int) -> int:
        return self.budget_factor * max(1, math.ceil(math.log2(max(n, 2))))


@dataclass
class EnergyLedger:
    awake_count: np.ndarray
    total_rounds: int = 0


@dataclass
class Message:
    """A point-to-point message; ``payload`` is a non-negative integer of ``bits`` bits."""
    src: int
    dst: int
    payload: int
    bits: int


@dataclass
class Transcript:
    outputs: Any
    ledger: EnergyLedger
    violations: list = field(default_factory=list)
    drops: int = 0
    unintended_drops: int = 0
    messages: int = 0
    awake_sets: list | None = None
    phase_rounds: dict = field(default_factory=dict)
    phase_max_awake: dict = field(default_factory=dict)


def energy_report(t: Transcript | EnergyLedger) -> dict:
    ledger = t.ledger if isinstance(t, Transcript) else t
    a = ledger.awake_count
    return {
        "max_awake": int(a.max()) if a.size else 0,
        "mean_awake": float(a.mean()) if a.size else 0.0,
        "total_rounds": int(ledger.total_rounds),
    }


@dataclass
class Direct:
    """Point-to-point messages in the local ids of a channel."""
    src: np.ndarray
    dst: np.ndarray
    payload: np.ndarray | None = None
    bits: int = 1
    fire_and_forget: bool = False
    time: np.ndarray | None = None       # round offset inside a block


@dataclass
class Broadcast:
    """Every sender sends ``values[i]`` to all of its neighbors in the channel graph.

    Receivers that are awake get the per-node reduction (``sum`` also yields
    counts; ``max``/``min`` yield the extreme value, ``-1``/``big`` when nothing
    arrived).
    """
    senders: np.ndarray
    values: np.ndarray | None = None
    bits: int = 1
    fire_and_forget: bool = False
    reduce: str = "sum"
    targets: np.ndarray | None = None    # optional mask of addressed neighbors


@dataclass
class Received:
    count: np.ndarray
    value: np.ndarray | None = None


_BIG = np.iinfo(np.int64).max


class Engine:
    """Accounting core: global clock, energy ledger, budget and drop logs."""

    def __init__(self, graph: Graph, seed: int, config: EngineConfig | None = None):
        self.graph = graph
        self.n = graph.n
        self.seed = int(seed)
        self.config = config or EngineConfig()
        self.B = self.config.message_bits(self.n)
        self.ledger = EnergyLedger(np.zeros(self.n, dtype=np.int64))
        self.rng = NodeRandom(seed)
        self.violations: list[dict] = []
        self.drops = 0
        self.unintended_drops = 0
        self.messages = 0
        self.awake_sets: list | None = [] if self.config.record_awake_sets else None
        self.phase_rounds: dict[str, int] = {}
        self.phase_max_awake: dict[str, int] = {}
        self._edge_keys = None

    @property
    def rounds(self) -> int:
        return self.ledger.total_rounds

    # phases -------------------------------------------------------------

    @contextmanager
    def phase(self, name: str):
        r0 = self.ledger.total_rounds
        a0 = self.ledger.awake_count.copy()
        try:
            yield
        finally:
            self.phase_rounds[name] = self.phase_rounds.get(name, 0) + self.ledger.total_rounds - r0
            inc = self.ledger.awake_count - a0
            self.phase_max_awake[name] = max(self.phase_max_awake.get(name, 0),
                                             int(inc.max()) if inc.size else 0)

    # violations ---------------------------------------------------------

    def violation(self, kind: str, detail: str) -> None:
        self.violations.append({"round": self.ledger.total_rounds, "kind": kind, "detail": detail})
        if self.config.on_violation == "abort":
            cls = BudgetViolation if kind == "budget" else ProtocolError
            raise cls(f"{kind}: {detail}")

    def check_budget(self, bits: int, payload: np.ndarray | None) -> None:
        if bits > self.B:
            self.violation("budget", f"{bits}-bit message exceeds B={self.B}")
        if payload is not None and np.size(payload):
            p = np.asarray(payload)
            if p.dtype.kind == "f":
                self.violation("protocol", "payloads must be integers")
            elif p.min() < 0 or (bits < 63 and int(p.max()) >= (1 << bits)):
                self.violation("budget", f"payload does not fit its declared {bits} bits")

    def check_edges(self, src: np.ndarray, dst: np.ndarray) -> None:
        if self._edge_keys is None:
            self._edge_keys = self.graph.src.astype(np.int64) * self.n + self.graph.indices
        key = src.astype(np.int64) * self.n + dst
        pos = np.searchsorted(self._edge_keys, key)
        pos = np.minimum(pos, self._edge_keys.size - 1)
        if self._edge_keys.size == 0 or np.any(self._edge_keys[pos] != key):
            self.violation("protocol", "message sent along a non-edge")
        if key.size != np.unique(key).size:
            self.violation("protocol", "two messages on one edge in one round")

    def record_drops(self, dropped: int, fire_and_forget: bool) -> None:
        self.drops += int(dropped)
        if not fire_and_forget:
            self.unintended_drops += int(dropped)

    # clock --------------------------------------------------------------

    def tick(self, k: int = 1) -> None:
        self.ledger.total_rounds += int(k)
        if self.awake_sets is not None:
            self.awake_sets.extend([[]] * int(k))

    def idle(self, k: int) -> None:
        if k > 0:
            self.tick(k)

    def channel(self, view: Graph) -> "Channel":
        return Channel(self, view)

    def transcript(self, outputs: Any = None) -> Transcript:
        return Transcript(outputs=outputs, ledger=self.ledger, violations=list(self.violations),
                          drops=self.drops, unintended_drops=self.unintended_drops,
                          messages=self.messages, awake_sets=self.awake_sets,
                          phase_rounds=dict(self.phase_rounds),
                          phase_max_awake=dict(self.phase_max_awake))


def _as_idx(x: np.ndarray, n: int) -> np.ndarray:
    x = np.asarray(x)
    if x.dtype == bool:
        return np.flatnonzero(x)
    return x.astype(np.int64)


def _as_mask(x: np.ndarray, n: int) -> np.ndarray:
    x = np.asarray(x)
    if x.dtype == bool:
        return x
    m = np.zeros(n, dtype=bool)
    m[x.astype(np.int64)] = True
    return m


def expand_rows(view: Graph, rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(row position per entry, neighbor) for all CSR entries of ``rows``."""
    rows = np.asarray(rows, dtype=np.int64)
    deg = view.degrees[rows]
    total = int(deg.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    which = np.repeat(np.arange(rows.size), deg)
    starts = np.repeat(view.indptr[rows] - np.concatenate([[0], np.cumsum(deg)[:-1]]), deg)
    pos = starts + np.arange(total)
    return which, view.indices[pos].astype(np.int64)


class Channel:
    """Round execution over a graph view whose ``base`` ids index the engine's graph."""

    # explicit expansion below this many directed entries, sparse matvec above
    EXPAND_LIMIT = 1 << 20

    def __init__(self, engine: Engine, view: Graph):
        self.engine = engine
        self.view = view
        self.n = view.n
        self.base = view.base

    def _ledger(self, awake_mask: np.ndarray) -> None:
        eng = self.engine
        nodes = self.base[awake_mask]
        eng.ledger.awake_count[nodes] += 1
        eng.ledger.total_rounds += 1
        if eng.awake_sets is not None:
            eng.awake_sets.append(nodes.tolist())

    def round(self, awake, sends: Iterable[Direct | Broadcast] = ()) -> list:
        """One synchronous round.  Returns one result per send.

        ``Direct`` results are boolean delivered masks; ``Broadcast`` results
        are :class:`Received` aggregates over local receivers.
        """
        awake = _as_mask(awake, self.n)
        out = []
        for s in sends:
            if isinstance(s, Direct):
                out.append(self._direct(awake, s))
            else:
                out.append(self._broadcast(awake, s))
        self._ledger(awake)
        return out

    def _direct(self, awake: np.ndarray, s: Direct) -> np.ndarray:
        eng = self.engine
        src = np.asarray(s.src, dtype=np.int64)
        dst = np.asarray(s.dst, dtype=np.int64)
        if src.size == 0:
            return np.zeros(0, dtype=bool)
        eng.check_budget(s.bits, s.payload)
        if not awake[src].all():
            eng.violation("protocol", "sleeping node attempted to send")
        if eng.config.check_edges:
            eng.check_edges(self.base[src], self.base[dst])
        ok = awake[dst]
        eng.messages += int(src.size)
        eng.record_drops(int(src.size - np.count_nonzero(ok)), s.fire_and_forget)
        return ok

    def _broadcast(self, awake: np.ndarray, s: Broadcast) -> Received:
        eng = self.engine
        view = self.view
        senders = _as_idx(s.senders, self.n)
        vals = None if s.values is None else np.asarray(s.values)
        if vals is not None and vals.shape[0] != senders.size:
            raise ValueError("one value per sender expected")
        count = np.zeros(self.n, dtype=np.int64)
        if senders.size == 0:
            return Received(count, self._empty_value(s.reduce, vals))
        eng.check_budget(s.bits, vals if vals is not None and vals.dtype.kind in "iub" else None)
        if not awake[senders].all():
            eng.violation("protocol", "sleeping node attempted to send")
        deg = view.degrees[senders]
        total = int(deg.sum())
        tg = s.targets
        if total <= self.EXPAND_LIMIT or s.reduce in ("max", "min"):
            which, dst = expand_rows(view, senders)
            if tg is not None:
                keep = tg[dst]
                which, dst = which[keep], dst[keep]
                total = int(dst.size)
            eng.messages += total
            ok = awake[dst]
            eng.record_drops(total - int(np.count_nonzero(ok)), s.fire_and_forget)
            dst_ok = dst[ok]
            count = np.bincount(dst_ok, minlength=self.n).astype(np.int64)
            if vals is None:
                return Received(count, None)
            v = vals[which[ok]]
            if s.reduce in ("sum", "or"):
                value = np.bincount(dst_ok, weights=v.astype(np.float64), minlength=self.n)
                if v.dtype.kind != "f":
                    value = np.rint(value).astype(np.int64)
                if s.reduce == "or":
                    value = value > 0
                return Received(count, value)
            value = self._empty_value(s.reduce, vals)
            if s.reduce == "max":
                np.maximum.at(value, dst_ok, v)
            else:
                np.minimum.at(value, dst_ok, v)
            return Received(count, value)
        # bulk path: sparse matrix-vector products over the view
        a = view.matrix
        ind = np.zeros(self.n, dtype=np.float64)
        ind[senders] = 1.0
        count = np.rint(a @ ind).astype(np.int64)
        live = awake if tg is None else (awake & tg)
        if tg is not None:
            eng.messages += int(np.rint((a @ tg.astype(np.float64))[senders].sum()))
        else:
            eng.messages += total
        count[~live] = 0
        asleep = ~awake if tg is None else (~awake & tg)
        if asleep.any():
            dropped = int(np.rint((a @ asleep.astype(np.float64))[senders].sum()))
        else:
            dropped = 0
        eng.record_drops(dropped, s.fire_and_forget)
        if vals is None:
            return Received(count, None)
        x = np.zeros(self.n, dtype=np.float64)
        x[senders] = vals
        value = a @ x
        value[~live] = 0.0
        if vals.dtype.kind != "f":
            value = np.rint(value).astype(np.int64)
        if s.reduce == "or":
            value = value > 0
        return Received(count, value)

    def announce(self, awake, senders: np.ndarray, bits: int, fanout: np.ndarray,
                 targets: np.ndarray | None = None) -> None:
        """One round in which ``senders`` broadcast and nobody needs the result.

        Only the accounting runs.  ``fanout[v]`` is the number of addressed
        neighbors of ``v``, i.e. its degree into ``targets``.
        """
        eng = self.engine
        awake = _as_mask(awake, self.n)
        senders = _as_idx(senders, self.n)
        if senders.size:
            eng.check_budget(bits, None)
            if not awake[senders].all():
                eng.violation("protocol", "sleeping node attempted to send")
            eng.messages += int(fanout[senders].sum())
            asleep = ~awake if targets is None else (~awake & targets)
            if asleep.any():
                which, dst = expand_rows(self.view, senders)
                eng.record_drops(int(np.count_nonzero(asleep[dst])), False)
        self._ledger(awake)

    def _empty_value(self, reduce: str, vals) -> np.ndarray | None:
        if vals is None:
            return None
        if reduce == "max":
            return np.full(self.n, -1, dtype=np.int64)
        if reduce == "min":
            return np.full(self.n, _BIG, dtype=np.int64)
        if reduce == "or":
            return np.zeros(self.n, dtype=bool)
        return np.zeros(self.n, dtype=np.float64 if vals.dtype.kind == "f" else np.int64)

    def block(self, length: int, awake_nodes: np.ndarray, awake_times: np.ndarray,
              sends: Iterable[Direct] = ()) -> list[np.ndarray]:
        """Run ``length`` consecutive rounds with a precomputed wake-up table.

        ``(awake_nodes[i], awake_times[i])`` says node ``awake_nodes[i]`` is awake
        at round offset ``awake_times[i]``.  Each ``Direct`` must carry a
        ``time`` array.  Returns the delivered mask of every send.
        """
        eng = self.engine
        length = int(length)
        if length <= 0:
            return [np.zeros(np.size(s.src), dtype=bool) for s in sends]
        nodes = np.asarray(awake_nodes, dtype=np.int64)
        times = np.asarray(awake_times, dtype=np.int64)
        if nodes.size and (times.min() < 0 or times.max() >= length):
            raise ValueError("awake time outside block")
        keys = np.unique(nodes * length + times)
        out = []
        for s in sends:
            src = np.asarray(s.src, dtype=np.int64)
            dst = np.asarray(s.dst, dtype=np.int64)
            t = np.asarray(s.time, dtype=np.int64)
            if src.size == 0:
                out.append(np.zeros(0, dtype=bool))
                continue
            eng.check_budget(s.bits, s.payload)
            if eng.config.check_edges:
                eng.check_edges(self.base[src], self.base[dst])
            sk = src * length + t
            if not np.all(np.isin(sk, keys, assume_unique=False)):
                eng.violation("protocol", "sleeping node attempted to send")
            ok = np.isin(dst * length + t, keys)
            eng.messages += int(src.size)
            eng.record_drops(int(src.size - np.count_nonzero(ok)), s.fire_and_forget)
            out.append(ok)
        awake_local = keys // length
        counts = np.bincount(awake_local, minlength=self.n)
        hit = np.flatnonzero(counts)
        eng.ledger.awake_count[self.base[hit]] += counts[hit]
        eng.ledger.total_rounds += length
        if eng.awake_sets is not None:
            per_round = [[] for _ in range(length)]
            for k in keys.tolist():
                per_round[k % length].append(int(self.base[k // length]))
            eng.awake_sets.extend(per_round)
        return out


# per-node protocols ---------------------------------------------------------

class NodeProtocol:
    """Base class for per-node state machines run by :func:`run_simulation`.

    A node is awake only in rounds it scheduled for itself: ``first_wake``
    gives the first one, and after each awake round ``next_wake`` gives the
    next (``None`` means sleep forever).  In an awake round the engine calls
    ``send`` (return ``{neighbor: (payload, bits)}`` or a list of
    ``(neighbor, payload, bits)``), delivers everything addressed to awake
    nodes, then calls ``receive`` with ``{sender: payload}``.
    """

    def init(self, v: int, neighbors: list[int], uniform) -> Any:
        return {}

    def first_wake(self, v: int, state) -> int | None:
        return 1

    def send(self, v: int, state, rnd: int):
        return {}

    def receive(self, v: int, state, rnd: int, inbox: dict[int, int]) -> None:
        pass

    def next_wake(self, v: int, state, rnd: int) -> int | None:
        return None

    def output(self, v: int, state):
        return None

    def terminated(self, v: int, state) -> bool:
        return False


def run_simulation(g: Graph, protocol: NodeProtocol, seed: int,
                   config: EngineConfig | None = None) -> Transcript:
    """Execute a per-node protocol until every node is terminated or asleep for good."""
    eng = Engine(g, seed, config)
    ch = eng.channel(g)
    adj = g.adjacency
    neighbor_sets = [set(a) for a in adj]
    states = []
    for v in range(g.n):
        def uniform(tag, *counters, _v=v):
            return float(eng.rng.uniform(np.array([_v]), tag, *counters)[0])
        states.append(protocol.init(v, adj[v], uniform))
    wake: dict[int, list[int]] = {}
    for v in range(g.n):
        r = protocol.first_wake(v, states[v])
        if r is not None:
            if r < 1:
                raise ProtocolError("rounds are numbered from 1")
            wake.setdefault(r, []).append(v)
    clock = 0
    while wake:
        if all(protocol.terminated(v, states[v]) for v in range(g.n)):
            break
        rnd = min(wake)
        if rnd > eng.config.max_rounds:
            break
        eng.idle(rnd - clock - 1)
        awake = sorted(set(wake.pop(rnd)))
        src, dst, pay, bits = [], [], [], []
        for v in awake:
            msgs = protocol.send(v, states[v], rnd) or {}
            items = [(d, *m) for d, m in msgs.items()] if isinstance(msgs, dict) else list(msgs)
            seen = set()
            for d, payload, b in items:
                if d in seen:
                    eng.violation("protocol", f"node {v} sent twice to {d} in round {rnd}")
                    continue
                seen.add(d)
                if d not in neighbor_sets[v]:
                    eng.violation("protocol", f"node {v} sent to non-neighbor {d}")
                    continue
                src.append(v)
                dst.append(d)
                pay.append(int(payload))
                bits.append(int(b))
        inboxes: dict[int, dict[int, int]] = {v: {} for v in awake}
        if src:
            s_arr, d_arr, p_arr = np.array(src), np.array(dst), np.array(pay, dtype=object)
            for i, b in enumerate(bits):
                if b > eng.B or not (0 <= p_arr[i] < (1 << b)):
                    eng.violation("budget", f"message {src[i]}->{dst[i]} needs more than B={eng.B} bits")
            ok = ch.round(np.array(awake, dtype=np.int64),
                          [Direct(s_arr, d_arr, None, max(bits), fire_and_forget=False)])[0]
            for i in range(len(src)):
                if ok[i]:
                    inboxes[dst[i]][src[i]] = pay[i]
        else:
            ch.round(np.array(awake, dtype=np.int64))
        clock = rnd
        for v in awake:
            protocol.receive(v, states[v], rnd, inboxes[v])
        for v in awake:
            if protocol.terminated(v, states[v]):
                continue
            nxt = protocol.next_wake(v, states[v], rnd)
            if nxt is not None:
                if nxt <= rnd:
                    raise ProtocolError("next wake-up must lie in the future")
                wake.setdefault(nxt, []).append(v)
    outputs = [protocol.output(v, states[v]) for v in range(g.n)]
    return eng.transcript(outputs)
