"""Cluster merging and per-component MIS on small connected components.

Clusters are rooted trees (:class:`~sleepmis.trees.Forest`).  Every merge
iteration selects one outgoing edge per cluster (towards the neighboring
cluster of minimum id), splits the selections into mutual pairs ``M``,
edges into high-indegree clusters ``E_H`` and the low-indegree remainder
``H_L``, computes a maximal matching ``M_L`` of ``H_L`` from a Linial
coloring, attaches the leftovers ``R`` and merges along all four sets.
Once a component is a single cluster, ``k`` packed desire-level executions
run in it and the root picks the first one that succeeded everywhere.

All of this is vectorized over every cluster of every component; cluster
level quantities live in node-indexed arrays at the root's position.
Every step occupies a fixed slice of a globally known schedule, so its
length does not depend on the input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .engine import Channel, Direct, expand_rows
from .graph import GraphError
from .mis_core import components, packed_parallel_mis
from .trees import (Forest, Plan, bcast_plan, check_forest, conv_plan, elect_root_and_build_tree,
                    id_bits, ldt_broadcast, ldt_convergecast, merge_star, run_plan)

HIGH_INDEGREE = 10
MAX_CLUSTER_DEGREE = 10
_BIG = np.iinfo(np.int64).max


# cluster graph ----------------------------------------------------------------

@dataclass
class ClusterGraphView:
    """Oriented cluster-graph edges realized by base edges ``tail[i] -> head[i]``.

    ``tail[i]`` lies in the tail cluster, ``head[i]`` in the head cluster.
    ``members`` marks the nodes of all clusters that take part (also those
    without incident edges).
    """
    forest: Forest
    tail: np.ndarray
    head: np.ndarray
    members: np.ndarray

    @property
    def tail_cluster(self) -> np.ndarray:
        return self.forest.root[self.tail]

    @property
    def head_cluster(self) -> np.ndarray:
        return self.forest.root[self.head]

    def degrees(self) -> np.ndarray:
        """Undirected cluster degree, indexed by root id."""
        n = self.forest.n
        return (np.bincount(self.tail_cluster, minlength=n)
                + np.bincount(self.head_cluster, minlength=n))

    def problems(self) -> list[str]:
        errs = []
        tc, hc = self.tail_cluster, self.head_cluster
        if np.any(tc == hc):
            errs.append("edge inside a cluster")
        if np.unique(tc).size != tc.size:
            errs.append("cluster with two outgoing edges")
        if tc.size and int(self.degrees().max()) > MAX_CLUSTER_DEGREE:
            errs.append("cluster degree above 10")
        if np.any(~self.members[self.tail]) or np.any(~self.members[self.head]):
            errs.append("edge endpoint outside the participating clusters")
        return errs


def check_maximal_matching(tc: np.ndarray, hc: np.ndarray, matched: np.ndarray) -> bool:
    """Deterministic oracle: ``matched`` is a maximal matching of the edges ``(tc, hc)``."""
    tc, hc = np.asarray(tc), np.asarray(hc)
    m = np.asarray(matched, dtype=bool)
    ends = np.concatenate([tc[m], hc[m]])
    if np.unique(ends).size != ends.size:
        return False
    covered = np.isin(tc, ends) | np.isin(hc, ends)
    return bool(np.all(covered | m))


# Linial ----------------------------------------------------------------------

def is_prime(x: int) -> bool:
    if x < 2:
        return False
    return all(x % p for p in range(2, math.isqrt(x) + 1))


def next_prime(x: int) -> int:
    x = max(2, int(x))
    while not is_prime(x):
        x += 1
    return x


def _root_ceil(k: int, e: int) -> int:
    """Smallest integer ``r`` with ``r ** e >= k``."""
    r = max(1, int(round(k ** (1.0 / e))))
    while r ** e < k:
        r += 1
    while r > 1 and (r - 1) ** e >= k:
        r -= 1
    return r


def linial_params(k: int, max_degree: int = MAX_CLUSTER_DEGREE,
                  max_q: int | None = None) -> tuple[int, int] | None:
    """Field size ``q`` and polynomial degree ``d`` for one reduction step from ``k`` colors.

    Colors are read as polynomials of degree ``d`` over ``GF(q)``; two distinct
    polynomials agree on at most ``d`` points, so ``q > max_degree * d`` leaves
    a good evaluation point.  Among valid pairs the one with the smallest
    new palette ``q*q`` is returned, or ``None`` when no pair shrinks the palette.
    """
    best = None
    for d in range(1, 64):
        lo = max_degree * d + 1
        if max_q is not None and lo > max_q:
            break
        q = next_prime(max(lo, _root_ceil(k, d + 1)))
        if max_q is not None and q > max_q:
            continue
        if q * q >= k:
            continue
        if best is None or q < best[0]:
            best = (q, d)
    return best


def linial_schedule(k0: int, steps: int | None, max_q: int) -> list[tuple[int, int]]:
    """Parameters of successive steps; ``steps=None`` runs while the palette shrinks."""
    out = []
    k = k0
    while steps is None or len(out) < steps:
        p = linial_params(k, MAX_CLUSTER_DEGREE, max_q)
        if p is None:
            break
        out.append(p)
        k = p[0] * p[0]
    return out


def palette_after(k0: int, schedule: list[tuple[int, int]]) -> int:
    return schedule[-1][0] ** 2 if schedule else k0


def poly_eval(c: np.ndarray, q: int, d: int, x: np.ndarray) -> np.ndarray:
    """``f_c(x) mod q`` where the base-``q`` digits of ``c`` are the coefficients (broadcasting)."""
    c = np.asarray(c, dtype=np.int64)
    x = np.asarray(x, dtype=np.int64)
    digits = [(c // q ** i) % q for i in range(d + 1)]
    acc = np.zeros(np.broadcast(c, x).shape, dtype=np.int64)
    for a in reversed(digits):
        acc = (acc * x + a) % q
    return acc


def linial_color_step(ch: Channel, view: ClusterGraphView, colors: np.ndarray, k: int,
                      params: tuple[int, int] | None = None) -> tuple[np.ndarray, int]:
    """One Linial step on the cluster graph: one cross round, one convergecast, one broadcast.

    ``colors`` is node-indexed (every member knows its cluster's color).
    Endpoints exchange colors, each endpoint builds the ``q``-bit mask of
    evaluation points where the two polynomials collide, the root ORs the
    masks and takes the smallest free point ``x``; the new color is
    ``x*q + f_c(x)``.  Returns the new colors and the new palette size.
    """
    eng = ch.engine
    f = view.forest
    if params is None:
        params = linial_params(k, MAX_CLUSTER_DEGREE, min(eng.B, 62))
        if params is None:
            return colors, k
    q, d = params
    colors = np.asarray(colors, dtype=np.int64)
    tail, head = view.tail, view.head
    c_t = colors[f.root[tail]]
    c_h = colors[f.root[head]]
    if np.any(c_t == c_h):
        raise GraphError("input coloring is not proper")
    cb = id_bits(k)
    awake = np.zeros(ch.n, dtype=bool)
    awake[tail] = True
    awake[head] = True
    ok = ch.round(awake, [Direct(tail, head, c_t, cb), Direct(head, tail, c_h, cb)])
    if not all(o.all() for o in ok):
        eng.violation("protocol", "coloring message lost")
    xs = np.arange(q, dtype=np.int64)
    mask = np.zeros(ch.n, dtype=np.int64)
    if tail.size:
        eq = poly_eval(c_t[:, None], q, d, xs) == poly_eval(c_h[:, None], q, d, xs)
        m = (eq.astype(np.int64) << xs).sum(axis=1)
        np.bitwise_or.at(mask, tail, m)
        np.bitwise_or.at(mask, head, m)
    agg = ldt_convergecast(ch, f, mask, "or", q, members=view.members)
    roots = np.flatnonzero(view.members & (f.parent < 0))
    good = ~agg[roots] & ((1 << q) - 1)
    if np.any(good == 0):
        raise GraphError("no free evaluation point; cluster degree too high")
    x = np.argmax((good[:, None] >> xs) & 1, axis=1).astype(np.int64)
    rootvals = np.zeros(ch.n, dtype=np.int64)
    rootvals[roots] = x * q + poly_eval(colors[roots], q, d, x)
    out = ldt_broadcast(ch, f, rootvals, id_bits(q * q), members=view.members)
    return np.where(view.members, out, colors), q * q


# color-class matching --------------------------------------------------------------

def matching_length(D: int, palette: int) -> int:
    return 1 + 2 * (D + 1) + palette * slot_length(D)


def slot_length(D: int) -> int:
    return 4 * D + 6


def color_class_matching(ch: Channel, view: ClusterGraphView, colors: np.ndarray,
                         palette: int) -> np.ndarray:
    """Maximal matching of the oriented cluster graph, one slot per color class.

    An info step first tells every cluster its out-neighbor's color and its
    in-degree.  In slot ``j`` unmatched clusters whose out-neighbor has color
    ``j`` send a request; every unmatched color-``j`` cluster with incoming
    edges takes the requesting tail of minimum cluster id and answers.  A
    cluster is awake only in the slots of its own color and of its
    out-neighbor's color.  Returns a boolean per edge of ``view``.
    """
    eng = ch.engine
    f = view.forest
    D = f.D
    n = ch.n
    b = id_bits(eng.n)
    colors = np.asarray(colors, dtype=np.int64)
    tail, head = view.tail, view.head
    tc, hc = f.root[tail], f.root[head]
    col_h = colors[hc]
    if np.any(colors[tc] == col_h):
        raise GraphError("input coloring is not proper")
    if tc.size and (int(colors[view.members].max()) >= palette):
        raise GraphError("color outside the palette")
    pb = id_bits(palette + 1)
    # info: tails learn the head color, heads learn the tail cluster id
    awake = np.zeros(n, dtype=bool)
    awake[tail] = True
    awake[head] = True
    ok = ch.round(awake, [Direct(tail, head, tc, b), Direct(head, tail, col_h, pb)])
    if not all(o.all() for o in ok):
        eng.violation("protocol", "matching info lost")
    val = np.zeros(n, dtype=np.int64)
    val[tail] += (col_h + 1) << 5
    np.add.at(val, head, 1)
    agg = ldt_convergecast(ch, f, val, "sum", pb + 5, members=view.members)
    info = ldt_broadcast(ch, f, agg, pb + 5, members=view.members)
    out_col = np.full(n, -1, dtype=np.int64)
    indeg = np.zeros(n, dtype=np.int64)
    mem = view.members
    out_col[mem] = (info[mem] >> 5) - 1
    indeg[mem] = info[mem] & 31
    # slots
    L = slot_length(D)
    matched_c = np.zeros(n, dtype=bool)      # by root id
    edge_matched = np.zeros(tc.size, dtype=bool)
    plan = Plan()
    sentinel = 1 << b
    roots = np.flatnonzero(mem & (f.parent < 0))
    for j in np.unique(col_h).tolist():
        base = j * L
        in_j = col_h == j
        # every head endpoint of a color-j cluster listens for requests
        plan.awake(np.unique(head[in_j]), base)
        req = in_j & ~matched_c[tc]
        plan.awake(tail[req], base)
        plan.send(tail[req], head[req], base, None, 1)
        heads_on = roots[(colors[roots] == j) & ~matched_c[roots] & (indeg[roots] > 0)]
        hmask = np.isin(f.root, heads_on)
        live = req & ~matched_c[hc]
        own = np.full(n, sentinel, dtype=np.int64)
        np.minimum.at(own, head[live], tc[live])
        p1, agg = conv_plan(f, own, "min", hmask, base + 1, b + 1)
        choice = np.full(n, sentinel, dtype=np.int64)
        choice[heads_on] = agg[heads_on]
        p2, _ = bcast_plan(f, choice, hmask, base + D + 2, b + 1)
        plan.extend(p1).extend(p2)
        acc = live & (choice[hc] == tc)
        plan.awake(head[acc], base + 2 * D + 3)
        plan.awake(tail[req], base + 2 * D + 3)
        plan.send(head[acc], tail[acc], base + 2 * D + 3, None, 1)
        tails_on = np.unique(tc[req])
        tmask = np.isin(f.root, tails_on)
        got = np.zeros(n, dtype=np.int64)
        got[tail[acc]] = 1
        p3, agg_t = conv_plan(f, got, "or", tmask, base + 2 * D + 4, 1)
        p4, _ = bcast_plan(f, agg_t, tmask, base + 3 * D + 5, 1)
        plan.extend(p3).extend(p4)
        edge_matched |= acc
        matched_c[tc[acc]] = True
        matched_c[hc[acc]] = True
    run_plan(ch, palette * L, plan)
    return edge_matched


# merge iterations --------------------------------------------------------------

@dataclass
class Phase3Config:
    D: int                         # global tree depth bound
    radius: int                    # Phase II cluster radius
    iteration_budget: int          # planned merge iterations
    linial: list                   # (q, d) per coloring step
    palette: int
    executions: int                # packed desire-level executions
    mis_rounds: int


@dataclass
class Phase3Stats:
    iterations: int = 0
    cluster_counts: list = field(default_factory=list)
    halving_ok: bool = True
    matching_ok: bool = True
    over_budget: bool = False
    failed_components: int = 0
    components: int = 0
    max_depth: int = 0
    forest_ok: bool = True


def iteration_length(cfg: Phase3Config) -> int:
    D = cfg.D
    tree = 2 * (D + 1)
    return ((1 + tree) * 2 + 1 + len(cfg.linial) * (1 + tree)
            + matching_length(D, cfg.palette) + 4 * (1 + tree) + 1)


def phase3_length(cfg: Phase3Config) -> int:
    """Rounds of the whole phase under the planned iteration budget."""
    return (2 * cfg.radius * 2 + selection_length(cfg.D)
            + cfg.iteration_budget * iteration_length(cfg)
            + cfg.mis_rounds * 3 + 1 + 2 * (cfg.D + 1))


def _select_outgoing(ch: Channel, f: Forest, done: np.ndarray) -> np.ndarray:
    """Every unfinished cluster picks its outgoing edge; clusters without one are done.

    Returns the root-indexed selection key (cluster id and edge endpoints).
    """
    eng = ch.engine
    n = ch.n
    b = id_bits(eng.n)
    sentinel = 1 << (3 * b)
    active = f.members & ~done[np.maximum(f.root, 0)]
    # outgoing edge: cluster of minimum id, then the minimum edge id
    idx = np.flatnonzero(active)
    which, dst = expand_rows(ch.view, idx)
    src = idx[which]
    keep = active[dst]
    src, dst = src[keep], dst[keep]
    ch.round(active, [Direct(src, dst, f.root[src], b)])
    foreign = f.root[src] != f.root[dst]
    s, d = src[foreign], dst[foreign]
    key = (f.root[s] << (2 * b)) | (np.minimum(s, d) << b) | np.maximum(s, d)
    node_key = np.full(n, sentinel, dtype=np.int64)
    np.minimum.at(node_key, d, key)
    agg = ldt_convergecast(ch, f, node_key, "min", 3 * b + 1, members=active)
    roots = np.flatnonzero(active & (f.parent < 0))
    rkey = np.full(n, sentinel, dtype=np.int64)
    rkey[roots] = agg[roots]
    ldt_broadcast(ch, f, rkey, 3 * b + 1, members=active)
    done[roots[rkey[roots] == sentinel]] = True
    return rkey


def selection_length(D: int) -> int:
    return 1 + 2 * (D + 1)


def _merge_iteration(ch: Channel, f: Forest, done: np.ndarray, rkey: np.ndarray,
                     cfg: Phase3Config, stats: Phase3Stats) -> Forest:
    eng = ch.engine
    n = ch.n
    b = id_bits(eng.n)
    lowmask = (1 << b) - 1
    sentinel = 1 << (3 * b)
    roots = np.flatnonzero(f.members & (f.parent < 0) & ~done)
    R = roots[rkey[roots] != sentinel]
    kr = rkey[R]
    tgt = np.full(n, -1, dtype=np.int64)
    w = np.full(n, -1, dtype=np.int64)
    z = np.full(n, -1, dtype=np.int64)
    tgt[R] = kr >> (2 * b)
    lo, hi = (kr >> b) & lowmask, kr & lowmask
    in_own = f.root[lo] == R
    w[R] = np.where(in_own, lo, hi)
    z[R] = np.where(in_own, hi, lo)
    active = f.members & ~done[np.maximum(f.root, 0)]
    # (2) selections, mutual pairs, indegree
    ch.round(active, [Direct(w[R], z[R], None, 1)])
    mutual = np.zeros(n, dtype=bool)
    mutual[R] = tgt[tgt[R]] == R
    Rn, Rm = R[~mutual[R]], R[mutual[R]]
    val = np.zeros(n, dtype=np.int64)
    np.add.at(val, z[Rn], 2)
    val[w[Rm]] += 1
    agg = ldt_convergecast(ch, f, val, "sum", b + 2, members=active)
    indeg = np.zeros(n, dtype=np.int64)
    indeg[R] = agg[R] >> 1
    if np.any((agg[R] & 1).astype(bool) != mutual[R]):
        raise GraphError("mutual selection disagrees with the cluster view")
    high = np.zeros(n, dtype=bool)
    high[R] = indeg[R] >= HIGH_INDEGREE
    ldt_broadcast(ch, f, high.astype(np.int64) * 2 + mutual, 2, members=active)
    # (3) classify non-mutual selections
    aw = np.zeros(n, dtype=bool)
    aw[w[Rn]] = True
    aw[z[Rn]] = True
    ch.round(aw, [Direct(w[Rn], z[Rn], high[Rn].astype(np.int64), 1),
                  Direct(z[Rn], w[Rn], high[tgt[Rn]].astype(np.int64), 1)])
    eh = Rn[~high[Rn] & high[tgt[Rn]]]
    hl = Rn[~high[Rn] & ~high[tgt[Rn]]]
    low = np.zeros(n, dtype=bool)
    low[R] = ~high[R]
    low_nodes = active & low[np.maximum(f.root, 0)]
    view = ClusterGraphView(f, w[hl], z[hl], low_nodes)
    errs = view.problems()
    if errs:
        raise GraphError("; ".join(errs))
    # (4) coloring and matching on H_L
    colors = np.where(low_nodes, f.root, 0).astype(np.int64)
    k = eng.n
    for p in cfg.linial:
        colors, k = linial_color_step(ch, view, colors, k, p)
    if k != cfg.palette:
        raise GraphError("palette differs from the planned schedule")
    em = color_class_matching(ch, view, colors, cfg.palette)
    if not check_maximal_matching(view.tail_cluster, view.head_cluster, em):
        stats.matching_ok = False
    matched = np.zeros(n, dtype=bool)
    matched[view.tail_cluster[em]] = True
    matched[view.head_cluster[em]] = True
    # (5) merges along M, E_H, M_L, R
    leaf_m = Rm[Rm > tgt[Rm]]
    f = merge_star(ch, f, z[leaf_m], w[leaf_m])
    f = merge_star(ch, f, z[eh], w[eh])
    ml = hl[em]
    f = merge_star(ch, f, z[ml], w[ml])
    rest = hl[~matched[hl]]
    aw = np.zeros(n, dtype=bool)
    aw[z[hl]] = True
    aw[w[rest]] = True
    ok = ch.round(aw, [Direct(w[rest], z[rest], None, 1)])[0]
    if not ok.all():
        eng.violation("protocol", "attachment request lost")
    f = merge_star(ch, f, z[rest], w[rest])
    return f


def phase3_component_mis(ch: Channel, members: np.ndarray, labels: np.ndarray,
                         cfg: Phase3Config, tag: str = "p3") -> tuple[np.ndarray, Phase3Stats]:
    """MIS of every component of ``members`` (clusters given by ``labels``)."""
    eng = ch.engine
    n = ch.n
    members = np.asarray(members, dtype=bool)
    stats = Phase3Stats()
    in_mis = np.zeros(n, dtype=bool)
    if not members.any():
        eng.idle(phase3_length(cfg))
        return in_mis, stats
    r0 = eng.rounds
    f = elect_root_and_build_tree(ch, labels, members, 2 * cfg.radius, cfg.D)
    comp = components(ch.view, members)
    ncomp = int(comp.max()) + 1
    stats.components = ncomp

    def counts(forest):
        rts = np.flatnonzero(forest.members & (forest.parent < 0))
        return np.bincount(comp[rts], minlength=ncomp)

    done = np.zeros(n, dtype=bool)
    prev = counts(f)
    stats.cluster_counts.append(int(prev.sum()))
    L = iteration_length(cfg)
    it = 0
    rkey = _select_outgoing(ch, f, done)
    while not done[f.root[members]].all():
        if it >= cfg.iteration_budget:
            stats.over_budget = True
        if it > 4 * int(np.log2(n + 1)) + 8:
            raise GraphError("cluster merging does not terminate")
        t0 = eng.rounds
        f = _merge_iteration(ch, f, done, rkey, cfg, stats)
        rkey = _select_outgoing(ch, f, done)
        used = eng.rounds - t0
        if used != L:
            raise GraphError(f"iteration used {used} rounds, planned {L}")
        it += 1
        cur = counts(f)
        big = prev > 1
        if np.any(cur[big] > -(-prev[big] // 2)):
            stats.halving_ok = False
        prev = cur
        stats.cluster_counts.append(int(cur.sum()))
        if check_forest(f):
            stats.forest_ok = False
    stats.iterations = it
    if it < cfg.iteration_budget:
        eng.idle((cfg.iteration_budget - it) * L)
    stats.max_depth = int(f.depth[members].max())
    # packed desire-level executions, then the root picks a successful one
    k = cfg.executions
    res = packed_parallel_mis(ch, members, k, cfg.mis_rounds, tag=tag)
    bits = np.zeros(n, dtype=np.int64)
    for e in range(k):
        bits |= res.success[e].astype(np.int64) << e
    agg = ldt_convergecast(ch, f, np.where(members, bits, 0), "and", k, members=members)
    roots = np.flatnonzero(members & (f.parent < 0))
    ok = agg[roots] & ((1 << k) - 1)
    first = np.where(ok > 0, np.argmax((ok[:, None] >> np.arange(k)) & 1, axis=1), k)
    choice = np.zeros(n, dtype=np.int64)
    choice[roots] = first
    pick = ldt_broadcast(ch, f, choice, id_bits(k + 1), members=members)
    stats.failed_components = int(np.count_nonzero(first == k))
    pick = np.where(pick >= k, 0, pick)
    idx = np.flatnonzero(members)
    in_mis[idx] = res.joined[pick[idx], idx]
    planned = r0 + phase3_length(cfg) + max(0, it - cfg.iteration_budget) * L
    if eng.rounds != planned:
        raise GraphError(f"phase used {eng.rounds - r0} rounds, planned {planned - r0}")
    return in_mis, stats
