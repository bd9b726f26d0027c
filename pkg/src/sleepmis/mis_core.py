"""Randomized MIS building blocks run on a channel: Luby, desire levels, packing, clustering.

All functions take a :class:`~sleepmis.engine.Channel` and a boolean ``members``
mask over the channel's local ids; nodes outside ``members`` are never woken.
Random coins come from the engine's keyed per-node streams, so results do not
depend on evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .engine import Broadcast, Channel, Direct, expand_rows
from .trees import id_bits

_BIG = np.iinfo(np.int64).max


def _uniform(ch: Channel, tag: str, *counters: int) -> np.ndarray:
    """One uniform per local node, keyed by the node's network id."""
    return ch.engine.rng.uniform(ch.base, tag, *counters)


def status_round(ch: Channel, awake: np.ndarray, in_mis: np.ndarray) -> np.ndarray:
    """MIS members announce themselves; returns the awake nodes that heard an announcement."""
    senders = np.flatnonzero(awake & in_mis)
    res = ch.round(awake, [Broadcast(senders, None, 1, fire_and_forget=True)])[0]
    return awake & (res.count > 0)


# Luby -----------------------------------------------------------------------

def run_luby(ch: Channel, members: np.ndarray, max_rounds: int, tag: str = "luby",
             sleep_decided: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Luby's algorithm with degree-biased marks.

    Round = three engine rounds: marked nodes announce ``(degree, id)``; a
    marked node keeps its mark only if it beats every marked neighbor in
    ``(degree, id)`` order (the lower endpoint unmarks), then joins and
    announces; finally active nodes announce themselves so neighbors learn
    their new degree.  Degree-0 nodes always mark.  One announcement round
    precedes the first Luby round.

    Returns ``(in_mis, covered)``.
    """
    n = ch.n
    members = np.asarray(members, dtype=bool)
    active = members.copy()
    in_mis = np.zeros(n, dtype=bool)
    covered = np.zeros(n, dtype=bool)
    b = id_bits(ch.engine.n)
    awake_all = members.copy()

    def awake_now():
        return active.copy() if sleep_decided else awake_all

    res = ch.round(awake_now(), [Broadcast(np.flatnonzero(active), None, 1, targets=active)])[0]
    deg = np.where(active, res.count, 0)
    for t in range(max_rounds):
        if not active.any():
            if sleep_decided:
                ch.engine.idle(3 * (max_rounds - t))
            else:
                for _ in range(3 * (max_rounds - t)):
                    ch.round(awake_all)
            break
        u = _uniform(ch, tag, t)
        p = np.where(deg > 0, 1.0 / (2.0 * np.maximum(deg, 1)), 1.0)
        marked = active & (u < p)
        key = deg * ch.engine.n + ch.base               # (degree, id) order
        ms = np.flatnonzero(marked)
        r1 = ch.round(awake_now(), [Broadcast(ms, key[ms], 2 * b, reduce="max", targets=active)])[0]
        keep = marked & (r1.value < key)
        js = np.flatnonzero(keep)
        r2 = ch.round(awake_now(), [Broadcast(js, None, 1, targets=active)])[0]
        in_mis |= keep
        newly = active & ~keep & (r2.count > 0)
        covered |= newly
        # newly decided nodes stay awake for the degree update round
        aw = awake_now()
        active &= ~(keep | newly)
        r3 = ch.round(aw, [Broadcast(np.flatnonzero(active), None, 1, targets=active)])[0]
        deg = np.where(active, r3.count, 0)
    return in_mis, covered


# desire levels ----------------------------------------------------------------

@dataclass
class PackedResult:
    joined: np.ndarray      # (k, n) bool
    covered: np.ndarray     # (k, n) bool
    success: np.ndarray     # (k, n) bool, local success bit per execution
    p_exp: np.ndarray       # (k, n) int, desire level is 2 ** -p_exp


def packed_parallel_mis(ch: Channel, members: np.ndarray, k: int, rounds: int,
                        tag: str = "dl", awake: np.ndarray | None = None,
                        success_round: bool = True) -> PackedResult:
    """``k`` independent desire-level executions packed into ``k``-bit messages.

    Per round: nodes mark with their desire level ``p``; a marked node with no
    marked neighbor joins; remaining active nodes report whether they halve
    ``p`` (effective degree ``sum of neighbor p >= 2``) or double it (capped at
    1/2).  A final round exchanges joined bits to compute per-execution success
    bits.  All of ``awake`` (default ``members``) stays awake throughout.
    """
    n = ch.n
    eng = ch.engine
    if 2 * k > eng.B:
        # the per-round report carries two bits per execution
        eng.violation("budget", f"{k} packed executions need {2 * k} bits, B={eng.B}")
    members = np.asarray(members, dtype=bool)
    awake = members if awake is None else awake
    idx = np.flatnonzero(members)
    # degree of every node into the addressed set, for message accounting
    sub = ch.view.induced(members)
    fanout = np.zeros(n, dtype=np.int64)
    fanout[idx] = sub.degrees
    active = np.repeat(members[None, :], k, axis=0)
    joined = np.zeros((k, n), dtype=bool)
    covered = np.zeros((k, n), dtype=bool)
    p_exp = np.ones((k, n), dtype=np.int64)
    # work on the subgraph of nodes still active in some execution; shrink as it empties
    live = idx
    a = sub.matrix
    for t in range(rounds):
        alive = active.any(axis=0)
        if live.size and np.count_nonzero(alive[live]) * 2 < live.size:
            live = np.flatnonzero(alive)
            a = ch.view.induced(alive).matrix
        act = active[:, live]
        pe = p_exp[:, live]
        pv = np.where(act, np.ldexp(1.0, -pe), 0.0)
        d = (a @ pv.T).T if live.size else pv
        u = np.stack([_uniform(ch, tag, e, t)[live] for e in range(k)]) if k else np.zeros((0, live.size))
        marked = act & (u < np.ldexp(1.0, -pe))
        ch.announce(awake, live[marked.any(axis=0)], k, fanout, members)
        nm = _count(a, marked)
        join = marked & (nm == 0)
        ch.announce(awake, live[join.any(axis=0)], k, fanout, members)
        nj = _count(a, join)
        newly = act & ~join & (nj > 0)
        joined[:, live] |= join
        covered[:, live] |= newly
        act &= ~(join | newly)
        active[:, live] = act
        up = d < 2.0
        p_exp[:, live] = np.where(act, np.where(up, np.maximum(pe - 1, 1), pe + 1), pe)
        ch.announce(awake, live[act.any(axis=0)], 2 * k, fanout, members)
    if success_round:
        # success bits: exchange joined vectors once more
        ch.announce(awake, np.flatnonzero(joined.any(axis=0)), k, fanout, members)
    nj = _neighbor_count(sub.matrix, idx, joined, n)
    success = np.where(joined, nj == 0, nj > 0) & members[None, :]
    success |= ~members[None, :]
    return PackedResult(joined, covered, success, p_exp)


def _count(a: sp.csr_matrix, x: np.ndarray) -> np.ndarray:
    if x.shape[1] == 0:
        return np.zeros(x.shape, dtype=np.int64)
    return np.rint((a @ x.T.astype(np.float64)).T).astype(np.int64)


def _neighbor_count(a: sp.csr_matrix, idx: np.ndarray, x: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros(x.shape, dtype=np.int64)
    if idx.size:
        out[:, idx] = np.rint((a @ x[:, idx].T.astype(np.float64)).T).astype(np.int64)
    return out


def desire_level_mis(ch: Channel, members: np.ndarray, rounds: int, tag: str = "dl"
                     ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Single desire-level execution: ``(in_mis, covered, remaining)`` masks."""
    res = packed_parallel_mis(ch, members, 1, rounds, tag=tag, success_round=False)
    joined, covered = res.joined[0], res.covered[0]
    remaining = np.asarray(members, dtype=bool) & ~joined & ~covered
    return joined, covered, remaining


# clustering ---------------------------------------------------------------------

def _edges_within(view, mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    idx = np.flatnonzero(mask)
    which, dst = expand_rows(view, idx)
    src = idx[which]
    keep = mask[dst]
    return src[keep], dst[keep]


def ball_growing_clusters(ch: Channel, members: np.ndarray, radius: int,
                          max_iters: int) -> np.ndarray:
    """Minimum-id ball growing.  Returns the center (local id) of every member's cluster.

    Each iteration: unclustered nodes flood the minimum id for ``radius``
    rounds; nodes that are the minimum of their radius-ball become centers and
    claim unclustered nodes by BFS for ``radius`` rounds (a contested node
    takes the smallest center, its parent is the smallest claimant).  Nodes
    left after ``max_iters`` iterations become singleton clusters.
    """
    n = ch.n
    b = id_bits(ch.engine.n)
    label = np.full(n, -1, dtype=np.int64)
    un = np.asarray(members, dtype=bool).copy()
    ids = np.arange(n, dtype=np.int64)
    for _ in range(max_iters):
        if not un.any():
            break
        src, dst = _edges_within(ch.view, un)
        cur = np.where(un, ids, _BIG)
        for _ in range(radius):
            ch.round(un, [Direct(src, dst, cur[src], b)])
            new = cur.copy()
            np.minimum.at(new, dst, cur[src])
            cur = new
        centers = un & (cur == ids)
        claim = np.where(centers, ids, -1)
        frontier = centers.copy()
        for _ in range(radius):
            sel = frontier[src] & (claim[dst] < 0)
            s, d = src[sel], dst[sel]
            ch.round(un, [Direct(s, d, claim[s], b)])
            best = np.full(n, _BIG, dtype=np.int64)
            np.minimum.at(best, d, claim[s])
            newly = np.flatnonzero(best < _BIG)
            claim[newly] = best[newly]
            frontier = np.zeros(n, dtype=bool)
            frontier[newly] = True
        got = un & (claim >= 0)
        label[got] = claim[got]
        un &= ~got
    label[un] = ids[un]
    return label


def components(view, mask: np.ndarray) -> np.ndarray:
    """Connected-component label per node of ``mask`` (``-1`` elsewhere), computed centrally."""
    idx = np.flatnonzero(mask)
    out = np.full(view.n, -1, dtype=np.int64)
    if idx.size == 0:
        return out
    sub = view.induced(mask)
    _, lab = connected_components(sub.matrix, directed=False)
    out[idx] = lab
    return out


@dataclass
class ShatterResult:
    in_mis: np.ndarray
    covered: np.ndarray
    remaining: np.ndarray
    labels: np.ndarray           # cluster center per remaining node, -1 elsewhere
    comp: np.ndarray             # component label per remaining node, -1 elsewhere
    max_component: int
    failed: bool


def shatter_and_cluster(ch: Channel, members: np.ndarray, mis_rounds: int, radius: int,
                        cluster_iters: int, cap: int, tag: str = "p2") -> ShatterResult:
    """Desire-level MIS on ``members`` followed by ball-growing clustering of what is left."""
    in_mis, covered, rem = desire_level_mis(ch, members, mis_rounds, tag=tag)
    labels = ball_growing_clusters(ch, rem, radius, cluster_iters)
    comp = components(ch.view, rem)
    sizes = np.bincount(comp[rem]) if rem.any() else np.zeros(0, dtype=np.int64)
    mc = int(sizes.max()) if sizes.size else 0
    return ShatterResult(in_mis, covered, rem, labels, comp, mc, mc > cap)
