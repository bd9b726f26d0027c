"""Second pipeline: estimated-degree Luby reduction, then the shared later phases.

One reduction takes a graph of maximum degree ``Delta`` to one of degree
``8 Delta^0.6``.  Nodes are sampled in two ways: *tagged* with probability
``Delta^-0.5`` per round, to let neighbors estimate their degree, and
*pre-marked* with probability ``1 / (2 Delta^0.6)``.  A node takes part in
the round of its first sampling only, and otherwise wakes in its awake set.
The later phases use the multi-step coloring, so the cluster palette is a
constant.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .alg1 import finish_phases, first_success, make_record
from .config import Profile, get_profile
from .engine import Broadcast, Direct, Engine, EngineConfig, expand_rows
from .graph import Graph
from .mis_core import status_round
from .records import RunRecord
from .rng import NodeRandom
from .schedule import build_awake_sets

TAG_EXP = 0.5
MARK_EXP = 0.6
KEEP_EXP = 0.7


def clamp_prob(x) -> np.ndarray:
    """The single clamp to [0, 1] every probability in this module goes through."""
    return np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)


def estimate_degree(A_v, delta: float):
    """``Delta^0.5 * A_v``, unrounded."""
    return math.sqrt(delta) * np.asarray(A_v, dtype=np.float64)


def resample_probability(delta: float, est):
    """``min(1, 2 Delta^0.6 / (5 est))``; an estimate of zero gives 1."""
    est = np.asarray(est, dtype=np.float64)
    num = 2.0 * delta ** MARK_EXP
    with np.errstate(divide="ignore"):
        q = np.where(est > num / 5.0, num / (5.0 * np.where(est > 0, est, 1.0)), 1.0)
    return clamp_prob(q)


def premark_probability(delta: float) -> float:
    return float(clamp_prob(1.0 / (2.0 * delta ** MARK_EXP)))


def tag_probability(delta: float) -> float:
    return float(clamp_prob(delta ** -TAG_EXP))


def next_delta(delta: int) -> int:
    """The certified bound after one reduction, ``ceil(8 Delta^0.6)``."""
    return int(math.ceil(8.0 * delta ** MARK_EXP))


@dataclass
class SamplingState:
    """Per-node sampling record of one reduction (rounds 1-based, 0 = never)."""
    tag_round: np.ndarray
    premark_round: np.ndarray
    r: np.ndarray
    A: np.ndarray
    est_degree: np.ndarray
    marked: np.ndarray

    @property
    def spoiled(self) -> np.ndarray:
        """Sampled at some point; spoiled from the round after ``r`` on."""
        return self.r > 0

    def spoiled_at(self, j: int) -> np.ndarray:
        return (self.r > 0) & (self.r < j)


@dataclass
class ReduceResult:
    in_mis: np.ndarray
    covered: np.ndarray
    residual: np.ndarray
    state: SamplingState
    residual_degree: int
    cleanup_joined: int
    high_nodes: int


def presample(ch, members: np.ndarray, delta: int, R: int, rng: NodeRandom, it: int,
              force_premark: np.ndarray | None = None) -> SamplingState:
    n = ch.n
    ta = first_success(rng.uniform(ch.base, "alg2-tag", it), tag_probability(delta), R)
    tb = first_success(rng.uniform(ch.base, "alg2-premark", it), premark_probability(delta), R)
    if force_premark is not None:
        tb = np.where(np.asarray(force_premark, dtype=bool), 0, tb)
    tag_round = np.where(members & (ta < R), ta + 1, 0)
    pm_round = np.where(members & (tb < R), tb + 1, 0)
    r = np.where(tag_round > 0, tag_round, R + 1)
    r = np.minimum(r, np.where(pm_round > 0, pm_round, R + 1))
    r = np.where(r > R, 0, r)
    z = np.zeros(n, dtype=np.float64)
    return SamplingState(tag_round, pm_round, r, np.zeros(n, dtype=np.int64), z,
                         np.zeros(n, dtype=bool))


def degree_reduce_once(ch, members: np.ndarray, delta: int, prof: Profile, it: int = 0,
                       force_premark: np.ndarray | None = None) -> ReduceResult:
    """One reduction on the nodes in ``members``; ``delta`` bounds their degree.

    ``c2 * ceil(log2 n)`` rounds of four sub-rounds: (1) tagged nodes
    announce, pre-marked nodes count tagged neighbors and re-sample into
    *marked*; (2) marked nodes send their tag count, and a node unmarks if a
    marked neighbor's estimate is at least its own; (3) marked survivors
    join and announce; (4) status exchange along the awake sets.  A
    four-round cleanup follows: MIS nodes announce, active nodes count active
    unspoiled neighbors exactly, nodes with at least ``4 Delta^0.6`` announce,
    and those above it with no announcing neighbor join.
    """
    g = ch.view
    n = ch.n
    members = np.asarray(members, dtype=bool)
    N = ch.engine.n
    R = prof.c2 * max(1, math.ceil(math.log2(max(N, 2))))
    rng = ch.engine.rng
    st = presample(ch, members, delta, R, rng, it, force_premark)
    in_mis = np.zeros(n, dtype=bool)
    known = ~members.copy()
    flag = np.zeros(n, dtype=bool)
    bits = max(1, math.ceil(math.log2(max(N, 2))) + 1)

    sampled = np.flatnonzero(st.r > 0)
    sched = build_awake_sets(R)
    rows = sched.table[st.r[sampled] - 1]
    ev_node = np.repeat(sampled, rows.shape[1])
    ev_round = rows.ravel()
    keep = ev_round > 0
    ev_node, ev_round = ev_node[keep], ev_round[keep]
    order = np.argsort(ev_round, kind="stable")
    ev_node, ev_round = ev_node[order], ev_round[order]
    ev_start = np.searchsorted(ev_round, np.arange(1, R + 2))
    by_r = sampled[np.argsort(st.r[sampled], kind="stable")]
    mk_start = np.searchsorted(st.r[by_r], np.arange(1, R + 2))

    a_nodes, a_times = [], []
    sends = []
    for k in range(1, R + 1):
        t0 = 4 * (k - 1)
        M = by_r[mk_start[k - 1]:mk_start[k]]
        M = M[~known[M]]
        if M.size:
            a_nodes.append(M)
            a_times.append(np.full(M.size, t0))
            # (1) tags; pre-marked nodes count them
            tg = M[st.tag_round[M] == k]
            pm = M[st.premark_round[M] == k]
            flag[M] = True
            if tg.size:
                which, nb = expand_rows(g, tg)
                sends.append(Direct(tg[which], nb, None, 1, fire_and_forget=True,
                                    time=np.full(nb.size, t0)))
                hit = nb[flag[nb]]
                np.add.at(st.A, hit, 1)
            flag[M] = False
            pm_A = st.A[pm]
            st.A[np.setdiff1d(M, pm)] = 0
            st.est_degree[pm] = estimate_degree(pm_A, delta)
            q = resample_probability(delta, st.est_degree[pm])
            u = rng.uniform(ch.base[pm], "alg2-resample", it)
            mk = pm[u < q]
            st.marked[mk] = True
            if mk.size:
                # (2) marked nodes exchange tag counts; ties unmark both ends
                a_nodes.append(mk)
                a_times.append(np.full(mk.size, t0 + 1))
                which, nb = expand_rows(g, mk)
                sends.append(Direct(mk[which], nb, st.A[mk[which]], bits, fire_and_forget=True,
                                    time=np.full(nb.size, t0 + 1)))
                flag[mk] = True
                both = flag[nb]
                flag[mk] = False
                lose = np.zeros(mk.size, dtype=bool)
                if both.any():
                    # receiver nb[both] hears sender mk[which[both]]
                    pos = np.full(n, -1, dtype=np.int64)
                    pos[mk] = np.arange(mk.size)
                    rcv = pos[nb[both]]
                    lose[rcv[st.A[mk[which[both]]] >= st.A[nb[both]]]] = True
                win = mk[~lose]
                # (3) winners join and announce
                if win.size:
                    in_mis[win] = True
                    a_nodes.append(win)
                    a_times.append(np.full(win.size, t0 + 2))
                    which, nb = expand_rows(g, win)
                    sends.append(Direct(win[which], nb, None, 1, fire_and_forget=True,
                                        time=np.full(nb.size, t0 + 2)))
        # (4) status exchange along the awake sets
        W = ev_node[ev_start[k - 1]:ev_start[k]]
        W = W[~known[W]]
        if W.size:
            a_nodes.append(W)
            a_times.append(np.full(W.size, t0 + 3))
            snd = W[in_mis[W]]
            if snd.size:
                which, nb = expand_rows(g, snd)
                flag[W] = True
                heard = nb[flag[nb]]
                flag[W] = False
                known[heard] = True
                sends.append(Direct(snd[which], nb, None, 1, fire_and_forget=True,
                                    time=np.full(nb.size, t0 + 3)))
    nodes = np.concatenate(a_nodes) if a_nodes else np.empty(0, dtype=np.int64)
    times = np.concatenate(a_times) if a_times else np.empty(0, dtype=np.int64)
    ch.block(4 * R, nodes, times, sends)

    # cleanup: status, exact count, high announce, join
    covered = known & members & ~in_mis
    play = members & ~known & ~in_mis
    heard = status_round(ch, play | in_mis, in_mis)
    covered |= heard & ~in_mis
    active = members & ~in_mis & ~covered
    nonsp = active & (st.r == 0)
    res = ch.round(active, [Broadcast(np.flatnonzero(nonsp), None, 1, targets=active)])[0]
    cnt = np.where(active, res.count, 0)
    thr = 4.0 * delta ** MARK_EXP
    high = active & (cnt >= thr)
    res = ch.round(active, [Broadcast(np.flatnonzero(high), None, 1, targets=active)])[0]
    join = active & (cnt > thr) & (res.count == 0)
    res = ch.round(active, [Broadcast(np.flatnonzero(join), None, 1, targets=active)])[0]
    in_mis |= join
    covered |= active & ~join & (res.count > 0)
    residual = members & ~in_mis & ~covered
    rd = g.induced(residual).max_degree() if residual.any() else 0
    return ReduceResult(in_mis, covered, residual, st, int(rd), int(join.sum()), int(high.sum()))


def threshold(n: int, prof: Profile) -> float:
    return math.log2(max(n, 2)) ** prof.threshold_exp


def planned_reductions(n: int, delta: int, prof: Profile) -> list[int]:
    """The degree bounds the reductions run with; fixed by ``n`` and ``Delta`` alone."""
    out = []
    d = int(delta)
    thr = threshold(n, prof)
    while d > thr and next_delta(d) < d:
        out.append(d)
        d = next_delta(d)
    return out


def run_alg2_phase1(eng: Engine, g: Graph, prof: Profile, in_mis: np.ndarray, flags: dict,
                    diag: dict) -> tuple[np.ndarray, int]:
    """Reductions until the certified bound is below the threshold; returns ``(residual, bound)``."""
    ch = eng.channel(g)
    members = np.ones(g.n, dtype=bool)
    plan = planned_reductions(eng.n, g.max_degree(), prof)
    diag["alg2_reductions"] = len(plan)
    degs = []
    exceeded = False
    bound = g.max_degree()
    for it, d in enumerate(plan):
        rr = degree_reduce_once(ch, members, d, prof, it)
        in_mis |= rr.in_mis
        members = rr.residual
        bound = next_delta(d)
        degs.append(rr.residual_degree)
        exceeded |= rr.residual_degree > bound
    diag["alg2_residual_degrees"] = degs
    flags["alg2_degree_exceeded"] = bool(exceeded)
    return members, bound


def run_alg2(g: Graph, config: Profile | None = None, seed: int = 0,
             engine_config: EngineConfig | None = None, graph_desc: dict | None = None,
             avg_energy: bool = False, phases: tuple = (1, 2, 3)) -> tuple[np.ndarray, RunRecord]:
    """Full second pipeline; returns the MIS mask and a run record."""
    from .avg_energy import phase1half_and_sparsify
    t0 = time.perf_counter()
    prof = config or get_profile()
    eng = Engine(g, seed, engine_config or EngineConfig(budget_factor=prof.budget_factor))
    in_mis = np.zeros(g.n, dtype=bool)
    flags: dict = {}
    diag: dict = {}
    residual, bound = np.ones(g.n, dtype=bool), g.max_degree()
    if 1 in phases:
        with eng.phase("phase1"):
            residual, bound = run_alg2_phase1(eng, g, prof, in_mis, flags, diag)
    if avg_energy:
        residual, bound = phase1half_and_sparsify(eng, g, residual, bound, prof, in_mis, flags, diag)
    if 2 in phases or 3 in phases:
        finish_phases(eng, g, residual, bound, prof, None, in_mis, flags, diag)
    rec = make_record("alg2" + ("+avg" if avg_energy else ""), g, eng, prof, seed, in_mis,
                      flags, diag, t0, graph_desc)
    return in_mis, rec
