"""Rooted spanning trees per cluster with two-awake-round broadcast and convergecast.

A forest is stored as three arrays over the local ids of a channel view:
``root`` (local id of the cluster root, ``-1`` outside the forest),
``parent`` (``-1`` at roots) and ``depth``.  The cluster id of a node is the
id of its root, i.e. the minimum id in the cluster after leader election.

Tree operations are first described as *plans* (who is awake at which offset,
which messages go where) and then executed as one engine block.  This lets a
caller pack many operations that run at different offsets of a globally known
schedule into a single block without changing what is simulated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .engine import Channel, Direct, expand_rows
from .graph import GraphError

_BIG = np.iinfo(np.int64).max
_SMALL = np.iinfo(np.int64).min

_IDENTITY = {"min": _BIG, "max": _SMALL, "sum": 0, "or": 0, "and": -1}
_UFUNC = {"min": np.minimum, "max": np.maximum, "sum": np.add,
          "or": np.bitwise_or, "and": np.bitwise_and}


@dataclass
class Forest:
    root: np.ndarray
    parent: np.ndarray
    depth: np.ndarray
    D: int

    @property
    def n(self) -> int:
        return self.root.size

    @property
    def members(self) -> np.ndarray:
        return self.root >= 0

    def copy(self) -> "Forest":
        return Forest(self.root.copy(), self.parent.copy(), self.depth.copy(), self.D)

    def cluster_ids(self) -> np.ndarray:
        r = self.root
        return np.unique(r[r >= 0])

    def tree(self, cid: int) -> "ClusterTree":
        nodes = np.flatnonzero(self.root == cid)
        return ClusterTree(int(cid), {int(v): int(self.parent[v]) for v in nodes},
                           {int(v): int(self.depth[v]) for v in nodes}, self.D)

    @classmethod
    def singletons(cls, n: int, members: np.ndarray | None, D: int) -> "Forest":
        members = np.ones(n, dtype=bool) if members is None else members
        root = np.where(members, np.arange(n), -1)
        return cls(root, np.full(n, -1, dtype=np.int64), np.zeros(n, dtype=np.int64), D)

    @classmethod
    def from_parents(cls, parent: np.ndarray, members: np.ndarray, D: int) -> "Forest":
        """Derive roots and depths from parent pointers (raises on cycles)."""
        n = parent.size
        root = np.full(n, -1, dtype=np.int64)
        depth = np.full(n, -1, dtype=np.int64)
        is_root = members & (parent < 0)
        root[is_root] = np.flatnonzero(is_root)
        depth[is_root] = 0
        todo = members & ~is_root
        for d in range(1, n + 1):
            if not todo.any():
                break
            p = parent[todo]
            ok = depth[p] == d - 1
            idx = np.flatnonzero(todo)[ok]
            depth[idx] = d
            root[idx] = root[parent[idx]]
            todo[idx] = False
        if todo.any():
            raise GraphError("parent pointers contain a cycle")
        return cls(root, parent.astype(np.int64).copy(), np.maximum(depth, 0), D)


@dataclass
class ClusterTree:
    cluster_id: int
    parent: dict
    depth: dict
    D_bound: int


def check_forest(f: Forest, view=None) -> list[str]:
    """Structural problems of a forest: broken depth chain, depth over the bound, non-edges."""
    errs = []
    m = f.members
    kids = np.flatnonzero(m & (f.parent >= 0))
    p = f.parent[kids]
    if np.any(f.depth[kids] != f.depth[p] + 1):
        errs.append("depth is not parent depth + 1")
    if np.any(f.root[kids] != f.root[p]):
        errs.append("parent lies in another cluster")
    roots = np.flatnonzero(m & (f.parent < 0))
    if np.any(f.root[roots] != roots) or np.any(f.depth[roots] != 0):
        errs.append("root inconsistent")
    if m.any() and int(f.depth[m].max()) > f.D:
        errs.append("depth exceeds D_bound")
    if view is not None and kids.size:
        for v, u in zip(kids.tolist(), p.tolist()):
            if not view.has_edge(v, u):
                errs.append("tree edge is not a graph edge")
                break
    return errs


def bfs_depths(f: Forest) -> np.ndarray:
    """Depths recomputed from scratch by BFS over tree edges from each root."""
    n = f.n
    children: list[list[int]] = [[] for _ in range(n)]
    for v in np.flatnonzero(f.members & (f.parent >= 0)).tolist():
        children[int(f.parent[v])].append(v)
    out = np.full(n, -1, dtype=np.int64)
    for r in np.flatnonzero(f.members & (f.parent < 0)).tolist():
        out[r] = 0
        stack = [r]
        while stack:
            u = stack.pop()
            for c in children[u]:
                out[c] = out[u] + 1
                stack.append(c)
    return out


# plans -------------------------------------------------------------------

@dataclass
class Plan:
    nodes: list = field(default_factory=list)
    times: list = field(default_factory=list)
    sends: list = field(default_factory=list)

    def awake(self, nodes: np.ndarray, times) -> None:
        nodes = np.asarray(nodes, dtype=np.int64)
        if nodes.size:
            self.nodes.append(nodes)
            self.times.append(np.broadcast_to(np.asarray(times, dtype=np.int64), nodes.shape).copy())

    def send(self, src, dst, times, payload=None, bits: int = 1, fire_and_forget: bool = False) -> None:
        src = np.asarray(src, dtype=np.int64)
        if src.size:
            t = np.broadcast_to(np.asarray(times, dtype=np.int64), src.shape).copy()
            self.sends.append(Direct(src, np.asarray(dst, dtype=np.int64),
                                     None if payload is None else np.asarray(payload),
                                     bits, fire_and_forget, t))

    def extend(self, other: "Plan") -> "Plan":
        self.nodes += other.nodes
        self.times += other.times
        self.sends += other.sends
        return self


def run_plan(ch: Channel, length: int, plan: Plan) -> None:
    """Execute a plan as one engine block; every plan message must arrive."""
    nodes = np.concatenate(plan.nodes) if plan.nodes else np.empty(0, dtype=np.int64)
    times = np.concatenate(plan.times) if plan.times else np.empty(0, dtype=np.int64)
    delivered = ch.block(length, nodes, times, plan.sends)
    for ok, s in zip(delivered, plan.sends):
        if not s.fire_and_forget and not ok.all():
            ch.engine.violation("protocol", "tree message reached a sleeping node")


def _children_mask(f: Forest, members: np.ndarray) -> np.ndarray:
    has = np.zeros(f.n, dtype=bool)
    kids = np.flatnonzero(members & (f.parent >= 0))
    has[f.parent[kids]] = True
    return has


def id_bits(n: int) -> int:
    return max(1, math.ceil(math.log2(max(n, 2))))


def bcast_plan(f: Forest, root_values: np.ndarray, members: np.ndarray | None,
               offset: int, bits: int) -> tuple[Plan, np.ndarray]:
    """Root value flows down; a depth-``d`` node wakes at ``offset+d`` and, with children, ``offset+d+1``."""
    members = f.members if members is None else (members & f.members)
    vals = np.asarray(root_values)
    out = np.zeros(f.n, dtype=vals.dtype)
    out[members] = vals[f.root[members]]
    plan = Plan()
    idx = np.flatnonzero(members)
    d = f.depth[idx]
    plan.awake(idx, offset + d)
    has = _children_mask(f, members)[idx]
    plan.awake(idx[has], offset + d[has] + 1)
    kids = idx[f.parent[idx] >= 0]
    plan.send(f.parent[kids], kids, offset + f.depth[kids], out[kids].astype(np.int64)
              if out.dtype.kind in "iub" else None, bits)
    # propagate level by level (the result above equals this by construction)
    got = np.zeros(f.n, dtype=vals.dtype)
    roots = idx[f.parent[idx] < 0]
    got[roots] = vals[roots]
    order = kids[np.argsort(f.depth[kids], kind="stable")]
    if order.size:
        levels = np.split(order, np.flatnonzero(np.diff(f.depth[order])) + 1)
        for lev in levels:
            got[lev] = got[f.parent[lev]]
    out[members] = got[members]
    return plan, out


def conv_plan(f: Forest, values: np.ndarray, op: str, members: np.ndarray | None,
              offset: int, bits: int, emit=None) -> tuple[Plan, np.ndarray]:
    """Fold values up to the roots.

    A depth-``d`` node with children listens at ``offset+D-d``; a non-root
    sends at ``offset+D-d+1``.  ``emit(own, agg)`` computes what a node sends
    (default: ``op(own, agg)``).  Returns the plan and per-node aggregates
    (meaningful at roots).
    """
    members = f.members if members is None else (members & f.members)
    uf = _UFUNC[op]
    vals = np.asarray(values).astype(np.int64)
    agg = np.full(f.n, _IDENTITY[op], dtype=np.int64)
    sent = np.zeros(f.n, dtype=np.int64)
    idx = np.flatnonzero(members)
    D = f.D
    plan = Plan()
    has = _children_mask(f, members)
    plan.awake(idx[has[idx]], offset + D - f.depth[idx[has[idx]]])
    kids = idx[f.parent[idx] >= 0]
    plan.awake(kids, offset + D - f.depth[kids] + 1)
    order = kids[np.argsort(-f.depth[kids], kind="stable")]
    if order.size:
        levels = np.split(order, np.flatnonzero(np.diff(f.depth[order])) + 1)
        for lev in levels:
            s = uf(vals[lev], agg[lev]) if emit is None else emit(vals[lev], agg[lev])
            sent[lev] = s
            uf.at(agg, f.parent[lev], s)
    plan.send(kids, f.parent[kids], offset + D - f.depth[kids] + 1, sent[kids], bits)
    result = agg.copy()
    result[idx] = uf(vals[idx], agg[idx]) if emit is None else emit(vals[idx], agg[idx])
    return plan, result


def _check_depth(ch: Channel, f: Forest) -> None:
    m = f.members
    if m.any() and int(f.depth[m].max()) > f.D:
        ch.engine.violation("protocol", "tree depth exceeds D_bound")


def ldt_broadcast(ch: Channel, f: Forest, root_values: np.ndarray, bits: int,
                  members: np.ndarray | None = None) -> np.ndarray:
    """Broadcast from every root to its cluster in ``D+1`` rounds, at most two awake rounds per node."""
    _check_depth(ch, f)
    plan, out = bcast_plan(f, root_values, members, 0, bits)
    run_plan(ch, f.D + 1, plan)
    return out


def ldt_convergecast(ch: Channel, f: Forest, values: np.ndarray, op: str, bits: int,
                     members: np.ndarray | None = None) -> np.ndarray:
    """Aggregate ``values`` at every root with ``op`` in ``D+1`` rounds; returns per-node partial folds."""
    _check_depth(ch, f)
    plan, out = conv_plan(f, values, op, members, 0, bits)
    run_plan(ch, f.D + 1, plan)
    return out


# leader election and tree construction --------------------------------------

def _intra_edges(view, labels: np.ndarray, members: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    idx = np.flatnonzero(members)
    which, dst = expand_rows(view, idx)
    src = idx[which]
    keep = members[dst] & (labels[src] == labels[dst])
    return src[keep], dst[keep]


def elect_root_and_build_tree(ch: Channel, labels: np.ndarray, members: np.ndarray,
                              rounds: int, D: int) -> Forest:
    """Min-id leader election by flooding, then a BFS tree from the leader.

    Every member is awake for ``2 * rounds`` rounds; ``rounds`` must be at least
    the diameter of every cluster, otherwise the clusters are reported as
    disconnected.
    """
    n = ch.n
    members = np.asarray(members, dtype=bool)
    src, dst = _intra_edges(ch.view, labels, members)
    b = id_bits(ch.engine.n)
    cur = np.where(members, np.arange(n), _BIG)
    for _ in range(rounds):
        ch.round(members, [Direct(src, dst, cur[src], b)])
        new = cur.copy()
        np.minimum.at(new, dst, cur[src])
        cur = new
    root = np.where(members, cur, -1)
    parent = np.full(n, -1, dtype=np.int64)
    depth = np.full(n, -1, dtype=np.int64)
    is_root = members & (root == np.arange(n))
    depth[is_root] = 0
    frontier = is_root.copy()
    for t in range(1, rounds + 1):
        sel = frontier[src]
        s, d = src[sel], dst[sel]
        ch.round(members, [Direct(s, d, np.full(s.size, t, dtype=np.int64), b)])
        fresh = depth[d] < 0
        s, d = s[fresh], d[fresh]
        best = np.full(n, _BIG, dtype=np.int64)
        np.minimum.at(best, d, s)
        newly = np.flatnonzero(best < _BIG)
        parent[newly] = best[newly]
        depth[newly] = t
        frontier = np.zeros(n, dtype=bool)
        frontier[newly] = True
    if np.any(members & (depth < 0)):
        raise GraphError("cluster is disconnected or wider than the flooding bound")
    lab = labels[members]
    r = root[members]
    # one leader per label
    pairs = np.unique(np.stack([lab, r]), axis=1)
    if np.unique(pairs[0]).size != pairs.shape[1]:
        raise GraphError("cluster elected more than one leader")
    return Forest(root, parent, np.maximum(depth, 0), D)


# star merges ---------------------------------------------------------------

def merge_star(ch: Channel, f: Forest, u: np.ndarray, v: np.ndarray) -> Forest:
    """Attach leaf clusters to center clusters along edges ``(u[i], v[i])``.

    ``u[i]`` lies in a center cluster, ``v[i]`` in a leaf cluster; every leaf
    cluster appears once and no leaf is also a center.  Rounds used:
    one cross round, one convergecast and one broadcast in the leaf clusters.
    """
    u = np.asarray(u, dtype=np.int64)
    v = np.asarray(v, dtype=np.int64)
    f = f.copy()
    if u.size == 0:
        ch.engine.idle(1 + 2 * (f.D + 1))
        return f
    leaf_c = f.root[v]
    center_c = f.root[u]
    if np.unique(leaf_c).size != leaf_c.size or np.intersect1d(leaf_c, center_c).size:
        raise GraphError("merge topology is not a union of stars")
    n = f.n
    D = f.D
    eng = ch.engine
    b = id_bits(eng.n)
    db = id_bits(D + 2)
    # cross round: center endpoint tells leaf endpoint its cluster id and depth
    awake = np.zeros(n, dtype=bool)
    awake[u] = True
    awake[v] = True
    ok = ch.round(awake, [Direct(u, v, f.root[u] * (1 << db) + f.depth[u], b + db)])[0]
    if not ok.all():
        eng.violation("protocol", "merge request lost")
    new_cid = np.full(n, -1, dtype=np.int64)
    new_cid[v] = f.root[u]
    att_depth = np.full(n, -1, dtype=np.int64)
    att_depth[v] = f.depth[u] + 1
    leaf_members = np.isin(f.root, leaf_c)
    # pass 1: convergecast along the old tree flips the path v -> old root
    def emit(own, agg):
        return np.where(own >= 0, own, np.where(agg >= 0, agg + 1, -1))
    plan, res = conv_plan(f, att_depth, "max", leaf_members, 0, db + 1, emit=emit)
    # shift by one so that "no value" (-1) fits an unsigned payload
    for s in plan.sends:
        s.payload = s.payload + 1
    run_plan(ch, D + 1, plan)
    on_path = leaf_members & (res >= 0)
    new_depth = np.where(on_path, res, -1)
    new_parent = f.parent.copy()
    # a path node's new parent is its child on the path (the one that reported)
    path_nodes = np.flatnonzero(on_path)
    # for each path node other than v, the child that sent a value is on the path
    child_on_path = np.full(n, -1, dtype=np.int64)
    ck = path_nodes[f.parent[path_nodes] >= 0]
    child_on_path[f.parent[ck]] = ck
    for_path = path_nodes[~np.isin(path_nodes, v)]
    new_parent[for_path] = child_on_path[for_path]
    new_parent[v] = u
    # pass 2: broadcast from the old root; off-path nodes take parent depth + 1
    plan = Plan()
    idx = np.flatnonzero(leaf_members)
    d = f.depth[idx]
    plan.awake(idx, d)
    has = _children_mask(f, leaf_members)[idx]
    plan.awake(idx[has], d[has] + 1)
    ks = idx[f.parent[idx] >= 0]
    order = ks[np.argsort(f.depth[ks], kind="stable")]
    nd = new_depth.copy()
    cid_of_leaf = np.full(n, -1, dtype=np.int64)
    cid_of_leaf[leaf_c] = new_cid[v]
    if order.size:
        levels = np.split(order, np.flatnonzero(np.diff(f.depth[order])) + 1)
        for lev in levels:
            off = nd[lev] < 0
            nd[lev[off]] = nd[f.parent[lev[off]]] + 1
    payload = cid_of_leaf[f.root[ks]] * (1 << (db + 1)) + nd[f.parent[ks]]
    plan.send(f.parent[ks], ks, f.depth[ks], payload, b + db + 1)
    run_plan(ch, D + 1, plan)
    f.root[idx] = cid_of_leaf[f.root[idx]]
    f.parent = new_parent
    f.depth[idx] = nd[idx]
    if idx.size and int(f.depth[idx].max()) > D:
        eng.violation("protocol", "merged tree deeper than D_bound")
    return f
