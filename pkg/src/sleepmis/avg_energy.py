"""Constant node-averaged energy on top of either pipeline.

After the first degree reduction an intermediate phase keeps sampling, with a
window of ``O(log log n)`` rounds per iteration.  At the end of each iteration
every node still in play wakes for three rounds and checks two degree bounds.
A node that breaks a bound fails, goes to sleep, and is handed to the later
phases untouched.  What survives has small degree.  A few stages of Luby with
decided nodes asleep then leave only a ``1/polylog`` fraction of the nodes for
the expensive phases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .alg1 import first_success, run_sampled_rounds
from .config import Profile, log2c, loglog
from .engine import Broadcast, Engine, EngineConfig
from .graph import Graph
from .mis_core import run_luby, status_round
from .rng import NodeRandom


def logloglog(n: int) -> float:
    return math.log2(max(loglog(n), 2.0))


def phase1half_iterations(n: int, delta: int, prof: Profile) -> int:
    """floor(log2 Delta) - ceil(cap_exp * log2 log2 log2 n); below 1 means skipped."""
    if delta < 2:
        return 0
    return int(math.floor(math.log2(delta))) - int(math.ceil(prof.avg_cap_exp * logloglog(n)))


def window(n: int, prof: Profile) -> int:
    return prof.c_h * max(1, math.ceil(loglog(n)))


@dataclass
class FailurePartition:
    """Survivors ``A`` and failed nodes ``F`` (masks over the channel view)."""
    A: np.ndarray
    F: np.ndarray
    reasons: dict = field(default_factory=dict)        # local id -> (iteration, "A" | "B")
    iterations: int = 0

    def check(self, members: np.ndarray) -> bool:
        """``A`` and ``F`` are disjoint and lie inside ``members``."""
        return bool(not (self.A & self.F).any() and not ((self.A | self.F) & ~members).any())


@dataclass
class Phase1HalfResult:
    in_mis: np.ndarray
    covered: np.ndarray
    part: FailurePartition
    sampled: int
    survivor_degree: int
    degree_cap: float


def phase1half_reduce(ch, members: np.ndarray, delta: int, prof: Profile, seed: int,
                      force_fail: np.ndarray | None = None) -> Phase1HalfResult:
    """Intermediate sampling phase on the nodes in ``members``.

    Iteration ``i`` has ``c_h * ceil(log2 log2 n)`` rounds.  A node is sampled
    with probability ``2^i / (10 Delta)`` per round, at most once overall, and
    otherwise follows its awake set inside the iteration.  End of iteration:
    (1) new MIS nodes announce, so covered nodes learn it; (2) active nodes
    exchange their spoiled bit; (3) a node with more than
    ``(i+1) * C_f * log2 log2 n`` active spoiled neighbors, or more than
    ``Delta / 2^(i+1)`` active unspoiled ones, fails, announces and sleeps.
    ``force_fail`` (mask) makes the given nodes fail at the first check.
    """
    n = ch.n
    N = ch.engine.n
    members = np.asarray(members, dtype=bool)
    T = phase1half_iterations(N, delta, prof)
    R = window(N, prof)
    in_mis = np.zeros(n, dtype=bool)
    known = ~members.copy()
    spoiled = np.zeros(n, dtype=bool)
    failed = np.zeros(n, dtype=bool)
    reasons: dict = {}
    ll = loglog(N)
    if T < 1:
        part = FailurePartition(members.copy(), failed, reasons, 0)
        return Phase1HalfResult(in_mis, np.zeros(n, dtype=bool), part, 0, 0, float(delta))
    # presample: one geometric draw per (node, iteration), first success wins
    rng = NodeRandom(seed)
    first = np.zeros(n, dtype=np.int64)           # global 1-based round over all iterations
    for i in range(T):
        p = min(1.0, 2.0 ** i / (10.0 * delta))
        k = first_success(rng.uniform(ch.base, "phase1half", i), p, R)
        hit = members & (first == 0) & (k < R)
        first[hit] = i * R + k[hit] + 1
    sampled = int(np.count_nonzero(first))
    covered = np.zeros(n, dtype=bool)
    announced = np.zeros(n, dtype=bool)
    for i in range(T):
        lo = i * R
        r = np.where((first > lo) & (first <= lo + R) & ~failed & ~known, first - lo, 0)
        run_sampled_rounds(ch, r, R, in_mis, known, spoiled)
        # (1) new MIS nodes announce; everyone still in play listens
        play = members & ~known & ~failed & ~in_mis
        fresh = in_mis & ~announced
        heard = status_round(ch, play | fresh, fresh)
        announced |= fresh
        known |= heard | in_mis
        covered |= heard
        # (2) active nodes exchange the spoiled bit
        active = members & ~known & ~failed
        ai = np.flatnonzero(active)
        res = ch.round(active, [Broadcast(ai, spoiled[ai].astype(np.int64), 1, targets=active)])[0]
        sp = np.where(active, res.value, 0)
        ns = np.where(active, res.count, 0) - sp
        bad_a = active & (sp > (i + 1) * prof.C_f * ll)
        bad_b = active & (ns > delta / 2.0 ** (i + 1))
        if i == 0 and force_fail is not None:
            bad_b |= active & np.asarray(force_fail, dtype=bool)
        bad = bad_a | bad_b
        for v in np.flatnonzero(bad):
            reasons[int(v)] = (i, "A" if bad_a[v] else "B")
        # (3) failing nodes announce; their neighbors stop counting them
        ch.round(active, [Broadcast(np.flatnonzero(bad), None, 1, fire_and_forget=True,
                                    targets=active)])
        failed |= bad
    A = members & ~known & ~failed & ~in_mis
    part = FailurePartition(A, failed, reasons, T)
    cap = delta / 2.0 ** T + T * prof.C_f * ll
    sd = 0
    if A.any():
        sd = ch.view.induced(A).max_degree()
    return Phase1HalfResult(in_mis, covered, part, sampled, int(sd), float(cap))


def sparsify_stages(n: int) -> int:
    """ceil(2 log2 log2 log2 n), at least 1."""
    return max(1, math.ceil(2 * logloglog(n)))


def stage_rounds(d: float, prof: Profile) -> int:
    return prof.c_sparse * log2c(d + 1) + 2


def sparsify_low_degree(ch, members: np.ndarray, k: int, d: float, prof: Profile,
                        tag: str = "sparse") -> tuple[np.ndarray, np.ndarray, list]:
    """``k`` stages of Luby on the survivors, decided nodes asleep.

    Returns ``(in_mis, covered, counts)`` where ``counts[j]`` is the number of
    undecided nodes after stage ``j``.
    """
    members = np.asarray(members, dtype=bool)
    left = members.copy()
    in_mis = np.zeros(ch.n, dtype=bool)
    covered = np.zeros(ch.n, dtype=bool)
    counts = []
    R = stage_rounds(d, prof)
    for j in range(k):
        m, c = run_luby(ch, left, R, tag=f"{tag}{j}", sleep_decided=True)
        in_mis |= m
        covered |= c
        left &= ~(m | c)
        counts.append(int(left.sum()))
    return in_mis, covered, counts


def phase1half_and_sparsify(eng: Engine, g: Graph, residual: np.ndarray, delta_bound: int,
                            prof: Profile, in_mis: np.ndarray, flags: dict, diag: dict,
                            force_fail: np.ndarray | None = None) -> tuple[np.ndarray, int]:
    """Intermediate phase plus sparsification on ``residual`` (mask over ``g``).

    Updates ``in_mis`` in place and returns the mask handed to the later
    phases (undecided survivors and failed nodes) with its degree bound.
    """
    with eng.phase("phase1half"):
        gh = g.induced(residual)
        ch = eng.channel(gh)
        ff = None if force_fail is None else np.asarray(force_fail, dtype=bool)[gh.base]
        h = phase1half_reduce(ch, np.ones(gh.n, dtype=bool), delta_bound, prof, eng.seed, ff)
        in_mis[gh.base[h.in_mis]] = True
    diag["phase1half_iterations"] = h.part.iterations
    diag["phase1half_sampled"] = h.sampled
    diag["phase1half_failed"] = int(h.part.F.sum())
    diag["phase1half_survivor_degree"] = h.survivor_degree
    flags["phase1half_degree_exceeded"] = bool(h.survivor_degree > h.degree_cap)
    d = min(float(delta_bound), h.degree_cap) if h.part.iterations else float(delta_bound)
    with eng.phase("sparsify"):
        k = sparsify_stages(eng.n)
        m, c, counts = sparsify_low_degree(ch, h.part.A, k, d, prof)
        in_mis[gh.base[m]] = True
        # every MIS node wakes once more so sleeping failed nodes learn their status
        awake = (h.part.A & ~m & ~c) | h.part.F | h.in_mis | m
        heard = status_round(ch, awake, h.in_mis | m)
        rest = ((h.part.A & ~m & ~c) | h.part.F) & ~heard
    diag["sparsify_stages"] = k
    diag["sparsify_counts"] = counts
    flags["phase1half_failed_exceeded"] = bool(
        h.part.F.sum() > prof.K_F * eng.n / math.log2(max(eng.n, 2)))
    flags["sparsify_residual_exceeded"] = bool(counts and counts[-1] > prof.K_s * gh.n / 2.0 ** k)
    diag["sparsify_survivors"] = int(rest.sum())
    out = np.zeros(g.n, dtype=bool)
    out[gh.base[rest]] = True
    # failed nodes keep their full degree bound; survivors have degree <= d
    bound = int(delta_bound) if h.part.F.any() else int(math.ceil(d))
    return out, bound


def run_avg_energy_pipeline(g: Graph, which: str = "alg1", config: Profile | None = None,
                            seed: int = 0, engine_config: EngineConfig | None = None,
                            graph_desc: dict | None = None):
    """Either pipeline with the average-energy augmentation switched on."""
    if which == "alg1":
        from .alg1 import run_alg1
        return run_alg1(g, config, seed, engine_config, graph_desc, avg_energy=True)
    if which == "alg2":
        from .alg2 import run_alg2
        return run_alg2(g, config, seed, engine_config, graph_desc, avg_energy=True)
    raise ValueError(f"unknown pipeline {which!r}")
