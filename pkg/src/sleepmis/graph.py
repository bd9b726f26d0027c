"""Undirected simple graphs in CSR form, generators, and MIS ground-truth checks."""

from __future__ import annotations

from typing import Iterable, Iterator, Sequence

import numpy as np
import scipy.sparse as sp


class GraphError(ValueError):
    """Structural problem with a graph or a node set."""


class ParameterError(ValueError):
    """Invalid generator parameters."""


class InfeasibleError(ValueError):
    """Parameters are well-formed but no such graph exists."""


class Graph:
    """Immutable undirected simple graph on nodes ``0..n-1``.

    Adjacency is stored as CSR arrays with sorted neighbor lists.  ``base``
    maps local ids to the ids of the graph this one was carved out of (the
    identity for a freshly generated graph), so induced subgraphs can always
    be traced back to the original network.
    """

    __slots__ = ("n", "indptr", "indices", "base", "_src", "_matrix", "_deg")

    def __init__(self, n: int, indptr: np.ndarray, indices: np.ndarray,
                 base: np.ndarray | None = None):
        if n < 0:
            raise GraphError("negative node count")
        self.n = int(n)
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.indices = np.asarray(indices, dtype=np.int32 if n < 2**31 else np.int64)
        self.base = np.arange(n, dtype=np.int64) if base is None else np.asarray(base, dtype=np.int64)
        self._src = None
        self._matrix = None
        self._deg = None

    # construction -----------------------------------------------------

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[Sequence[int]] | np.ndarray | None = None,
                   *, u: np.ndarray | None = None, v: np.ndarray | None = None,
                   base: np.ndarray | None = None) -> "Graph":
        """Build from undirected edges.  Duplicates are merged; self-loops rejected."""
        if u is None:
            arr = np.asarray(list(edges) if edges is not None and not isinstance(edges, np.ndarray)
                             else (edges if edges is not None else np.empty((0, 2))), dtype=np.int64)
            arr = arr.reshape(-1, 2)
            u, v = arr[:, 0], arr[:, 1]
        u = np.asarray(u, dtype=np.int64)
        v = np.asarray(v, dtype=np.int64)
        if u.size and (min(u.min(), v.min()) < 0 or max(u.max(), v.max()) >= n):
            raise GraphError("edge endpoint out of range")
        if np.any(u == v):
            raise GraphError("self-loops are not allowed")
        lo, hi = np.minimum(u, v), np.maximum(u, v)
        key = np.unique(lo * n + hi)
        lo, hi = key // n, key % n
        return cls._from_unique_pairs(n, lo, hi, base)

    @classmethod
    def _from_unique_pairs(cls, n: int, lo: np.ndarray, hi: np.ndarray,
                           base: np.ndarray | None = None) -> "Graph":
        # lo != hi and pairs unique; build symmetric CSR with sorted rows
        rows = np.concatenate([lo, hi])
        cols = np.concatenate([hi, lo])
        m = sp.csr_matrix((np.ones(rows.size, dtype=np.int8), (rows, cols)), shape=(n, n))
        m.sort_indices()
        return cls(n, m.indptr, m.indices, base)

    # basic queries ----------------------------------------------------

    @property
    def degrees(self) -> np.ndarray:
        if self._deg is None:
            self._deg = np.diff(self.indptr)
        return self._deg

    def degree(self, v: int) -> int:
        return int(self.indptr[v + 1] - self.indptr[v])

    def max_degree(self) -> int:
        return int(self.degrees.max()) if self.n else 0

    @property
    def m(self) -> int:
        return int(self.indices.size // 2)

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    @property
    def adjacency(self) -> list[list[int]]:
        return [self.neighbors(v).tolist() for v in range(self.n)]

    @property
    def src(self) -> np.ndarray:
        """Source node of every directed edge, aligned with ``indices``."""
        if self._src is None:
            self._src = np.repeat(np.arange(self.n, dtype=self.indices.dtype), self.degrees)
        return self._src

    @property
    def matrix(self) -> sp.csr_matrix:
        """0/1 adjacency as float64 CSR, used for bulk neighbor sums."""
        if self._matrix is None:
            data = np.ones(self.indices.size, dtype=np.float64)
            self._matrix = sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))
        return self._matrix

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Undirected edges as ``(u, v)`` arrays with ``u < v``."""
        s = self.src
        keep = s < self.indices
        return s[keep].astype(np.int64), self.indices[keep].astype(np.int64)

    def has_edge(self, u: int, v: int) -> bool:
        row = self.neighbors(u)
        i = np.searchsorted(row, v)
        return bool(i < row.size and row[i] == v)

    def induced(self, nodes: np.ndarray) -> "Graph":
        """Induced subgraph on ``nodes`` (bool mask or sorted id array)."""
        nodes = np.asarray(nodes)
        if nodes.dtype == bool:
            keep = nodes
            idx = np.flatnonzero(nodes)
        else:
            idx = np.unique(nodes.astype(np.int64))
            keep = np.zeros(self.n, dtype=bool)
            keep[idx] = True
        if idx.size == self.n:
            return Graph(self.n, self.indptr, self.indices, self.base)
        local = np.full(self.n, -1, dtype=np.int64)
        local[idx] = np.arange(idx.size)
        # gather only the rows of selected nodes, then filter their columns
        lens = self.degrees[idx]
        total = int(lens.sum())
        first = np.zeros(idx.size, dtype=np.int64)
        np.cumsum(lens[:-1], out=first[1:])
        pos = np.repeat(self.indptr[idx] - first, lens) + np.arange(total, dtype=np.int64)
        nb = self.indices[pos]
        e = keep[nb]
        rows = np.repeat(np.arange(idx.size, dtype=np.int64), lens)[e]
        cols = local[nb[e]]
        counts = np.bincount(rows, minlength=idx.size)
        indptr = np.zeros(idx.size + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        # rows come out grouped and sorted because the parent CSR is sorted
        return Graph(idx.size, indptr, cols, self.base[idx])

    def to_networkx(self):
        import networkx as nx
        h = nx.Graph()
        h.add_nodes_from(range(self.n))
        u, v = self.edges()
        h.add_edges_from(zip(u.tolist(), v.tolist()))
        return h

    @classmethod
    def disjoint_union(cls, graphs: Sequence["Graph"]) -> tuple["Graph", np.ndarray]:
        """One graph holding ``graphs`` side by side; also returns each part's offset."""
        sizes = np.array([h.n for h in graphs], dtype=np.int64)
        off = np.zeros(len(graphs) + 1, dtype=np.int64)
        np.cumsum(sizes, out=off[1:])
        ptr = [np.zeros(1, dtype=np.int64)]
        idx = []
        nnz = 0
        for h, o in zip(graphs, off[:-1]):
            ptr.append(h.indptr[1:] + nnz)
            idx.append(h.indices.astype(np.int64) + o)
            nnz += h.indices.size
        indices = np.concatenate(idx) if idx else np.empty(0, dtype=np.int64)
        return cls(int(off[-1]), np.concatenate(ptr), indices), off

    def validate(self) -> None:
        """Raise :class:`GraphError` unless the simple-graph invariants hold."""
        if self.indptr.size != self.n + 1 or self.indptr[0] != 0 or self.indptr[-1] != self.indices.size:
            raise GraphError("malformed CSR")
        s = self.src
        if np.any(s == self.indices):
            raise GraphError("self-loop")
        key = s.astype(np.int64) * max(self.n, 1) + self.indices
        if np.any(np.diff(key) <= 0):
            raise GraphError("rows not strictly sorted (duplicate or unsorted entries)")
        rkey = self.indices.astype(np.int64) * max(self.n, 1) + s
        if not np.array_equal(np.sort(rkey), key):
            raise GraphError("adjacency not symmetric")

    def __repr__(self) -> str:
        return f"Graph(n={self.n}, m={self.m}, max_degree={self.max_degree()})"


class NodeSet:
    """Membership bitmap over ``0..n-1``."""

    __slots__ = ("mask",)

    def __init__(self, n: int, members: Iterable[int] | np.ndarray | None = None):
        self.mask = np.zeros(n, dtype=bool)
        if members is not None:
            members = np.asarray(list(members) if not isinstance(members, np.ndarray) else members)
            if members.dtype == bool:
                self.mask[:] = members
            elif members.size:
                self.mask[members.astype(np.int64)] = True

    @classmethod
    def from_mask(cls, mask: np.ndarray) -> "NodeSet":
        s = cls(0)
        s.mask = np.asarray(mask, dtype=bool).copy()
        return s

    @property
    def n(self) -> int:
        return self.mask.size

    def add(self, v: int) -> None:
        self.mask[v] = True

    def __contains__(self, v: int) -> bool:
        return 0 <= v < self.mask.size and bool(self.mask[v])

    def __len__(self) -> int:
        return int(np.count_nonzero(self.mask))

    def __iter__(self) -> Iterator[int]:
        return iter(np.flatnonzero(self.mask).tolist())

    def __eq__(self, other: object) -> bool:
        if isinstance(other, NodeSet):
            return np.array_equal(self.mask, other.mask)
        return NotImplemented

    def to_list(self) -> list[int]:
        return np.flatnonzero(self.mask).tolist()

    def __repr__(self) -> str:
        items = self.to_list()
        shown = items if len(items) <= 12 else items[:12] + ["..."]
        return f"NodeSet({shown})"


def as_mask(s: NodeSet | np.ndarray | Iterable[int], n: int) -> np.ndarray:
    if isinstance(s, NodeSet):
        mask = s.mask
    else:
        arr = np.asarray(s if isinstance(s, np.ndarray) else list(s))
        if arr.dtype == bool:
            mask = arr
        else:
            mask = np.zeros(n, dtype=bool)
            if arr.size:
                arr = arr.astype(np.int64)
                if arr.min() < 0 or arr.max() >= n:
                    raise GraphError("node id out of range")
                mask[arr] = True
    if mask.size != n:
        raise GraphError("node set size does not match graph")
    return mask


# oracles --------------------------------------------------------------

def _neighbors_of(g: Graph, mask: np.ndarray) -> np.ndarray:
    """Concatenated neighbor lists of the nodes in ``mask``."""
    idx = np.flatnonzero(mask)
    lens = g.degrees[idx]
    first = np.zeros(idx.size, dtype=np.int64)
    np.cumsum(lens[:-1], out=first[1:])
    pos = np.repeat(g.indptr[idx] - first, lens) + np.arange(int(lens.sum()), dtype=np.int64)
    return g.indices[pos]


def is_independent(g: Graph, s) -> bool:
    mask = as_mask(s, g.n)
    return not bool(np.any(mask[_neighbors_of(g, mask)]))


def dominated(g: Graph, mask: np.ndarray) -> np.ndarray:
    """Nodes in ``mask`` or adjacent to a node in ``mask``."""
    hit = mask.copy()
    hit[_neighbors_of(g, mask)] = True
    return hit


def is_maximal_independent(g: Graph, s) -> bool:
    mask = as_mask(s, g.n)
    return is_independent(g, mask) and bool(dominated(g, mask).all())


def residual_graph(g: Graph, s) -> tuple[Graph, np.ndarray]:
    """Remove ``s`` and its neighbors.  Returns the subgraph and its ids in ``g``."""
    mask = as_mask(s, g.n)
    if not is_independent(g, mask):
        raise GraphError("residual_graph requires an independent set")
    keep = ~dominated(g, mask)
    return g.induced(keep), np.flatnonzero(keep)


# generators -----------------------------------------------------------

MODELS = ("gnp", "random_regular", "star", "path", "complete", "hubs")


def _pairs_from_lower_index(k: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # k enumerates pairs (i, j), j < i, in order i = 1, 2, ...; j = 0..i-1
    i = np.floor((1.0 + np.sqrt(1.0 + 8.0 * k.astype(np.float64))) / 2.0).astype(np.int64)
    tri = i * (i - 1) // 2
    over = tri > k
    while np.any(over):
        i[over] -= 1
        tri = i * (i - 1) // 2
        over = tri > k
    under = (i + 1) * i // 2 <= k
    while np.any(under):
        i[under] += 1
        under = (i + 1) * i // 2 <= k
    j = k - i * (i - 1) // 2
    return j, i


def _gnp(n: int, p: float, rng: np.random.Generator) -> Graph:
    total = n * (n - 1) // 2
    if p <= 0.0 or total == 0:
        return Graph(n, np.zeros(n + 1, dtype=np.int64), np.empty(0, dtype=np.int32))
    if p >= 1.0:
        k = np.arange(total, dtype=np.int64)
    else:
        # geometric skipping over the pair sequence; exact G(n, p)
        chunks = []
        pos = -1
        expect = int(total * p * 1.05) + 64
        while pos < total:
            gaps = rng.geometric(p, size=expect)
            run = pos + np.cumsum(gaps)
            chunks.append(run)
            pos = int(run[-1])
            expect = max(64, int((total - pos) * p * 1.05) + 64)
        k = np.concatenate(chunks)
        k = k[k < total]
    j, i = _pairs_from_lower_index(k)
    return Graph._from_unique_pairs(n, j, i)


def _hubs(n: int, hubs: int, hub_degree: int, avg_degree: float, rng: np.random.Generator) -> Graph:
    if hubs > n or hub_degree > n - 1:
        raise InfeasibleError("hub parameters exceed node count")
    background = _gnp(n, avg_degree / max(n - 1, 1), rng)
    bu, bv = background.edges()
    centers = rng.choice(n, size=hubs, replace=False)
    us, vs = [bu], [bv]
    for c in np.sort(centers):
        others = rng.choice(n - 1, size=hub_degree, replace=False)
        others = others + (others >= c)
        us.append(np.full(hub_degree, c, dtype=np.int64))
        vs.append(others.astype(np.int64))
    return Graph.from_edges(n, u=np.concatenate(us), v=np.concatenate(vs))


def generate_graph(model: str, params: dict, seed: int) -> Graph:
    """Deterministic graph generation.

    Models and parameters:

    - ``gnp``: ``n`` and either ``p`` or ``avg_degree``.
    - ``random_regular``: ``n``, ``d``.
    - ``star`` / ``path`` / ``complete``: ``n`` (star center is node 0).
    - ``hubs``: ``n``, ``hubs``, ``hub_degree``, ``avg_degree``; a G(n, p)
      background plus ``hubs`` nodes wired to ``hub_degree`` random nodes.
    """
    params = dict(params)
    n = params.get("n")
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ParameterError("n must be a positive integer")
    n = int(n)
    rng = np.random.default_rng([int(seed) & (2**64 - 1), MODELS.index(model) if model in MODELS else 99])
    if model == "gnp":
        if "p" in params:
            p = float(params["p"])
        elif "avg_degree" in params:
            p = float(params["avg_degree"]) / (n - 1) if n > 1 else 0.0
        else:
            raise ParameterError("gnp needs p or avg_degree")
        if not 0.0 <= p <= 1.0:
            raise ParameterError("p must lie in [0, 1]")
        return _gnp(n, p, rng)
    if model == "random_regular":
        d = params.get("d")
        if not isinstance(d, (int, np.integer)) or d < 0:
            raise ParameterError("d must be a non-negative integer")
        if (d * n) % 2:
            raise ParameterError("d * n must be even")
        if d >= n and not (d == 0):
            raise InfeasibleError(f"no {d}-regular graph on {n} nodes")
        import networkx as nx
        h = nx.random_regular_graph(int(d), n, seed=int(rng.integers(2**31)))
        e = np.array(list(h.edges()), dtype=np.int64).reshape(-1, 2)
        return Graph.from_edges(n, e)
    if model == "star":
        leaves = np.arange(1, n, dtype=np.int64)
        return Graph.from_edges(n, u=np.zeros(n - 1, dtype=np.int64), v=leaves)
    if model == "path":
        a = np.arange(n - 1, dtype=np.int64)
        return Graph.from_edges(n, u=a, v=a + 1)
    if model == "complete":
        return _gnp(n, 1.0, rng)
    if model == "hubs":
        try:
            hubs, hub_degree = int(params["hubs"]), int(params["hub_degree"])
        except KeyError as exc:
            raise ParameterError(f"hubs model needs {exc.args[0]}") from None
        if hubs < 0 or hub_degree < 0:
            raise ParameterError("hub counts must be non-negative")
        return _hubs(n, hubs, hub_degree, float(params.get("avg_degree", 0.0)), rng)
    raise ParameterError(f"unknown model {model!r}")


# edge-list format -------------------------------------------------------

def write_edgelist(g: Graph, path) -> None:
    u, v = g.edges()
    with open(path, "w") as fh:
        fh.write(f"{g.n} {g.m}\n")
        if u.size:
            np.savetxt(fh, np.column_stack([u, v]), fmt="%d")


def read_edgelist(path) -> Graph:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise GraphError("edge list header must be 'n m'")
        n, m = int(header[0]), int(header[1])
        data = np.loadtxt(fh, dtype=np.int64, ndmin=2) if m else np.empty((0, 2), dtype=np.int64)
    if data.shape[0] != m:
        raise GraphError(f"header promises {m} edges, found {data.shape[0]}")
    return Graph.from_edges(n, data.reshape(-1, 2))
