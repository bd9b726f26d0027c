"""First pipeline: sampled Luby degree reduction, shattering, cluster merging.

Phase I lowers the degree of the undecided graph to ``O(log^2 n)`` while each
node is awake in ``O(log log n)`` rounds: a node's single sampling round is
drawn up front, and the node wakes only in the rounds of its awake set.
Phase II runs desire-level MIS with everybody awake and clusters what is
left; Phase III finishes every small component.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .config import Profile, get_profile, loglog, mis_rounds, phase_params
from .engine import Direct, Engine, EngineConfig, expand_rows
from .graph import Graph, is_independent, is_maximal_independent
from .mis_core import shatter_and_cluster, status_round
from .phase3 import Phase3Config, linial_schedule, palette_after, phase3_component_mis
from .records import RunRecord
from .rng import NodeRandom
from .schedule import build_awake_sets


# Phase I ------------------------------------------------------------------------

def phase1_iterations(n: int, delta: int) -> int:
    """floor(log2 Delta) - ceil(2 log2 log2 n); below 1 means Phase I is skipped."""
    if delta < 2:
        return 0
    return int(math.floor(math.log2(delta))) - int(math.ceil(2 * loglog(n)))


@dataclass
class Presample:
    r: np.ndarray           # sampling round per node, 0 = never
    T: int                  # iterations
    R: int                  # rounds per iteration

    @property
    def skip(self) -> bool:
        return self.T < 1

    @property
    def total_rounds(self) -> int:
        return max(self.T, 0) * self.R


def first_success(u: np.ndarray, p: float, R: int) -> np.ndarray:
    """0-based index of the first success among ``R`` coins of bias ``p``; ``R`` when none.

    Inverse-CDF of the geometric law, so one uniform per node suffices.
    """
    u = np.asarray(u, dtype=np.float64)
    if p >= 1.0:
        return np.zeros(u.shape, dtype=np.int64)
    if p <= 0.0:
        return np.full(u.shape, R, dtype=np.int64)
    with np.errstate(divide="ignore"):
        k = np.floor(np.log1p(-u) / math.log1p(-p))
    k = np.where(np.isfinite(k), np.minimum(k, R), R)
    return k.astype(np.int64)


def presample_mark_rounds(g: Graph | int, delta: int, c: int, seed: int,
                          prob_scale: float = 1.0, uniforms: np.ndarray | None = None) -> Presample:
    """First round in which each node's marking coin succeeds, drawn before the phase starts.

    In iteration ``i`` a node is marked with probability ``2^i / (10 Delta)``
    in each of ``R = c * ceil(log2 n)`` rounds.  The first success inside an
    iteration is geometric, so one uniform per (node, iteration) gives the
    exact distribution of the online process.  ``prob_scale`` and
    ``uniforms`` (shape ``(n, T)``) are test hooks.
    """
    n = g if isinstance(g, int) else g.n
    T = phase1_iterations(n, delta)
    R = c * max(1, math.ceil(math.log2(max(n, 2))))
    r = np.zeros(n, dtype=np.int64)
    if T < 1:
        return Presample(r, T, R)
    ids = np.arange(n, dtype=np.int64) if isinstance(g, int) else g.base
    rng = NodeRandom(seed)
    for i in range(T):
        p = min(1.0, prob_scale * 2.0 ** i / (10.0 * delta))
        if p <= 0.0:
            continue
        u = rng.uniform(ids, "phase1", i) if uniforms is None else np.asarray(uniforms)[:, i]
        k = first_success(u, p, R)
        hit = (r == 0) & (k < R)
        r[hit] = i * R + k[hit] + 1
    return Presample(r, T, R)


@dataclass
class Phase1Result:
    in_mis: np.ndarray
    known_covered: np.ndarray
    spoiled: np.ndarray
    sampled: int
    invariant_fail: list = field(default_factory=list)   # per iteration: fraction of active nodes failing


def run_sampled_rounds(ch, r: np.ndarray, Tr: int, in_mis: np.ndarray, known: np.ndarray,
                       spoiled: np.ndarray, hook=None) -> None:
    """``Tr`` rounds of three sub-rounds for nodes with sampling round ``r`` (1-based, 0 = never).

    Sub-round 1: nodes sampled in this round announce their mark.  Sub-round 2:
    a marked node without marked neighbors joins.  Sub-round 3: every node
    whose awake set contains this round wakes; MIS nodes announce and
    listeners that hear them are covered and sleep from then on.  Messages
    are fire-and-forget: most neighbors are asleep by design.  The whole
    stretch is charged as one engine block.  ``in_mis``, ``known`` and
    ``spoiled`` are updated in place; ``hook(k)`` runs after round ``k``.
    """
    g = ch.view
    n = ch.n
    if Tr < 1:
        return
    sampled = np.flatnonzero(r > 0)
    sched = build_awake_sets(Tr)
    rows = sched.table[r[sampled] - 1]
    ev_node = np.repeat(sampled, rows.shape[1])
    ev_round = rows.ravel()
    keep = ev_round > 0
    ev_node, ev_round = ev_node[keep], ev_round[keep]
    order = np.argsort(ev_round, kind="stable")
    ev_node, ev_round = ev_node[order], ev_round[order]
    ev_start = np.searchsorted(ev_round, np.arange(1, Tr + 2))
    by_r = sampled[np.argsort(r[sampled], kind="stable")]
    mk_start = np.searchsorted(r[by_r], np.arange(1, Tr + 2))
    flag = np.zeros(n, dtype=bool)
    a_nodes, a_times = [], []
    s_src, s_dst, s_t = [], [], []
    for k in range(1, Tr + 1):
        t1 = 3 * (k - 1)
        M = by_r[mk_start[k - 1]:mk_start[k]]
        M = M[~known[M]]
        if M.size:
            which, nb = expand_rows(g, M)
            flag[M] = True
            hit = np.bincount(which[flag[nb]], minlength=M.size) > 0
            flag[M] = False
            in_mis[M[~hit]] = True
            spoiled[M[hit]] = True
            a_nodes += [M, M]
            a_times += [np.full(M.size, t1), np.full(M.size, t1 + 1)]
            s_src.append(M[which])
            s_dst.append(nb)
            s_t.append(np.full(nb.size, t1))
        W = ev_node[ev_start[k - 1]:ev_start[k]]
        W = W[~known[W]]
        if W.size:
            a_nodes.append(W)
            a_times.append(np.full(W.size, t1 + 2))
            snd = W[in_mis[W]]
            if snd.size:
                which, nb = expand_rows(g, snd)
                flag[W] = True
                heard = nb[flag[nb]]
                flag[W] = False
                known[heard] = True
                s_src.append(snd[which])
                s_dst.append(nb)
                s_t.append(np.full(nb.size, t1 + 2))
        if hook is not None:
            hook(k)
    nodes = np.concatenate(a_nodes) if a_nodes else np.empty(0, dtype=np.int64)
    times = np.concatenate(a_times) if a_times else np.empty(0, dtype=np.int64)
    sends = []
    if s_src:
        sends.append(Direct(np.concatenate(s_src), np.concatenate(s_dst), None, 1,
                            fire_and_forget=True, time=np.concatenate(s_t)))
    ch.block(3 * Tr, nodes, times, sends)


def phase1_reduce(ch, pre: Presample, C: int, delta: int, check_invariants: bool = True) -> Phase1Result:
    """Phase I: all sampled rounds, with the per-iteration degree invariants measured on the side.

    At the end of iteration ``i`` an active node should have at most
    ``(i+1) * C * log2 n`` active spoiled neighbors and at most
    ``Delta / 2^(i+1)`` active unspoiled ones; the fraction of active nodes
    breaking either bound is recorded per iteration.
    """
    g = ch.view
    n = ch.n
    in_mis = np.zeros(n, dtype=bool)
    known = np.zeros(n, dtype=bool)
    spoiled = np.zeros(n, dtype=bool)
    fails: list = []
    A = g.matrix
    logn = max(1, math.ceil(math.log2(max(ch.engine.n, 2))))

    def hook(k):
        if k % pre.R:
            return
        i = k // pre.R - 1
        cov = in_mis | (A @ in_mis.astype(np.float64) > 0)
        active = ~cov
        sp = A @ (active & spoiled).astype(np.float64)
        ns = A @ (active & ~spoiled).astype(np.float64)
        bad = active & ((sp > (i + 1) * C * logn) | (ns > delta / 2.0 ** (i + 1)))
        fails.append(float(bad.sum() / max(1, active.sum())))

    run_sampled_rounds(ch, pre.r, pre.total_rounds, in_mis, known, spoiled,
                       hook if check_invariants else None)
    return Phase1Result(in_mis, known, spoiled, int(np.count_nonzero(pre.r)), fails)


# Phases II and III ------------------------------------------------------------------

def phase3_config(n: int, prof: Profile, coloring_steps: int | None) -> Phase3Config:
    pp = phase_params(n, prof)
    from .engine import EngineConfig as _EC
    B = _EC(budget_factor=prof.budget_factor).message_bits(n)
    sched = linial_schedule(n, coloring_steps, min(B, 62))
    return Phase3Config(D=pp.D, radius=pp.radius, iteration_budget=pp.iteration_budget,
                        linial=sched, palette=palette_after(n, sched), executions=pp.executions,
                        mis_rounds=pp.pack_rounds)


def finish_phases(eng: Engine, g: Graph, residual: np.ndarray, delta_bound: int, prof: Profile,
                  coloring_steps: int | None, in_mis: np.ndarray, flags: dict, diag: dict,
                  tag: str = "") -> None:
    """Phase II and Phase III on ``residual`` (mask over ``g``); updates ``in_mis`` in place."""
    pp = phase_params(eng.n, prof)
    with eng.phase("phase2"):
        g2 = g.induced(residual)
        ch2 = eng.channel(g2)
        R2 = mis_rounds(delta_bound, prof)
        sr = shatter_and_cluster(ch2, np.ones(g2.n, dtype=bool), R2, pp.radius,
                                 prof.cluster_iters, pp.cap, tag="p2" + tag)
        in_mis[g2.base[sr.in_mis]] = True
    diag["phase2_nodes"] = int(g2.n)
    diag["phase2_rounds_param"] = R2
    # components over the cap break Phase III's precondition; they stay undecided
    keep = sr.remaining.copy()
    if sr.failed:
        sizes = np.bincount(sr.comp[keep])
        keep &= sizes[np.maximum(sr.comp, 0)] <= pp.cap
    diag["phase3_nodes"] = int(keep.sum())
    diag["phase3_skipped_nodes"] = int(sr.remaining.sum() - keep.sum())
    diag["max_component"] = sr.max_component
    flags["shatter_failure"] = bool(sr.failed)
    with eng.phase("phase3"):
        g3 = g2.induced(keep)
        ch3 = eng.channel(g3)
        pos = np.full(g2.n, -1, dtype=np.int64)
        pos[np.flatnonzero(keep)] = np.arange(g3.n)
        labels = pos[sr.labels[keep]]
        cfg = phase3_config(eng.n, prof, coloring_steps)
        m3, st = phase3_component_mis(ch3, np.ones(g3.n, dtype=bool), labels, cfg, tag="p3" + tag)
        in_mis[g3.base[m3]] = True
    diag["phase3_iterations"] = st.iterations
    diag["phase3_cluster_counts"] = st.cluster_counts
    diag["phase3_components"] = st.components
    diag["phase3_max_depth"] = st.max_depth
    diag["palette"] = cfg.palette
    flags["phase3_over_budget"] = st.over_budget
    flags["phase3_failed_components"] = st.failed_components
    flags["halving_broken"] = not st.halving_ok
    flags["matching_broken"] = not st.matching_ok
    flags["forest_broken"] = not st.forest_ok


def make_record(alg: str, g: Graph, eng: Engine, prof: Profile, seed: int, in_mis: np.ndarray,
                flags: dict, diag: dict, t0: float, graph_desc: dict | None) -> RunRecord:
    a = eng.ledger.awake_count
    return RunRecord(
        alg=alg, seed=int(seed), graph=dict(graph_desc or {}), config=prof.to_dict(),
        n=g.n, m=g.m, max_degree=g.max_degree(),
        phase_rounds=dict(eng.phase_rounds), phase_max_awake=dict(eng.phase_max_awake),
        total_rounds=int(eng.rounds), max_awake=int(a.max()) if a.size else 0,
        mean_awake=float(a.mean()) if a.size else 0.0, mis_size=int(in_mis.sum()),
        independent=is_independent(g, in_mis), maximal=is_maximal_independent(g, in_mis),
        violations=len(eng.violations),
        budget_violations=sum(v["kind"] == "budget" for v in eng.violations),
        drops=eng.drops, unintended_drops=eng.unintended_drops,
        flags=flags, diagnostics=diag, wall_clock=time.perf_counter() - t0)


def run_alg1(g: Graph, config: Profile | None = None, seed: int = 0,
             engine_config: EngineConfig | None = None, graph_desc: dict | None = None,
             phases: tuple = (1, 2, 3), avg_energy: bool = False) -> tuple[np.ndarray, RunRecord]:
    """Full first pipeline; returns the MIS mask and a run record."""
    from .avg_energy import phase1half_and_sparsify
    t0 = time.perf_counter()
    prof = config or get_profile()
    eng = Engine(g, seed, engine_config or EngineConfig(budget_factor=prof.budget_factor))
    ch = eng.channel(g)
    n = g.n
    delta = g.max_degree()
    in_mis = np.zeros(n, dtype=bool)
    flags: dict = {}
    diag: dict = {}
    pp = phase_params(n, prof)
    cap_deg = prof.C_deg * pp.log_n ** 2
    with eng.phase("phase1"):
        pre = presample_mark_rounds(g, delta, prof.c, seed)
        diag["phase1_iterations"] = max(pre.T, 0)
        if pre.skip or 1 not in phases:
            known = np.zeros(n, dtype=bool)
        else:
            res = phase1_reduce(ch, pre, prof.C, delta)
            in_mis |= res.in_mis
            known = res.known_covered
            diag["phase1_sampled"] = res.sampled
            diag["phase1_invariant_fail"] = res.invariant_fail
    ran1 = not pre.skip and 1 in phases
    with eng.phase("phase2"):
        if ran1:
            awake = ~known | in_mis
            heard = status_round(ch, awake, in_mis)
            residual = awake & ~in_mis & ~heard
        else:
            residual = np.ones(n, dtype=bool)
    res_deg = g.induced(residual).max_degree() if residual.any() else 0
    diag["phase1_residual_degree"] = res_deg
    flags["phase1_degree_exceeded"] = bool(ran1 and res_deg > cap_deg)
    delta_bound = min(delta, cap_deg) if ran1 else delta
    if avg_energy:
        residual, delta_bound = phase1half_and_sparsify(eng, g, residual, delta_bound, prof,
                                                        in_mis, flags, diag)
    if 2 in phases or 3 in phases:
        finish_phases(eng, g, residual, delta_bound, prof, prof.alg1_coloring_steps,
                      in_mis, flags, diag)
    rec = make_record("alg1" + ("+avg" if avg_energy else ""), g, eng, prof, seed, in_mis,
                      flags, diag, t0, graph_desc)
    return in_mis, rec
