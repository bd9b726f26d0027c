"""Small-graph correctness suite.

Graphs are run as one disjoint union per (algorithm, seed): the protocols never
look across components, so each component's output is that of a run on the
component alone, except that every node sees the union's ``n``.
"""

from __future__ import annotations

import numpy as np

from .config import Profile, get_profile
from .graph import Graph
from .oracle import enumerate_small_graphs, oracle_all_mis


class SmallGraphBatch:
    """Many small graphs side by side plus per-graph verdict helpers."""

    def __init__(self, graphs: list[Graph]):
        self.graphs = graphs
        self.union, self.offsets = Graph.disjoint_union(graphs)
        self.owner = np.repeat(np.arange(len(graphs)), np.diff(self.offsets))
        self._oracle: list = [None] * len(graphs)

    def verdicts(self, in_mis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-graph ``(independent, maximal)`` boolean arrays."""
        g = self.union
        bad_edge = in_mis[g.src] & in_mis[g.indices]
        dep = np.ones(len(self.graphs), dtype=bool)
        dep[self.owner[g.src[bad_edge]]] = False
        dom = in_mis.copy()
        dom[g.indices[in_mis[g.src]]] = True
        maximal = dep.copy()
        maximal[self.owner[~dom]] = False
        return dep, maximal

    def oracle(self, i: int) -> set:
        if self._oracle[i] is None:
            self._oracle[i] = oracle_all_mis(self.graphs[i])
        return self._oracle[i]

    def in_oracle(self, in_mis: np.ndarray, which: np.ndarray) -> np.ndarray:
        """For the graphs in ``which``: is the local output one of the oracle's sets."""
        out = np.zeros(which.size, dtype=bool)
        for j, i in enumerate(which.tolist()):
            lo, hi = self.offsets[i], self.offsets[i + 1]
            out[j] = frozenset(np.flatnonzero(in_mis[lo:hi]).tolist()) in self.oracle(i)
        return out


def small_graph_batch(max_n: int = 8, samples: int = 10_000, seed: int = 0) -> SmallGraphBatch:
    graphs = [g for n in range(1, max_n + 1) for g in enumerate_small_graphs(n, samples, seed)]
    return SmallGraphBatch(graphs)


def small_graph_suite(max_n: int = 5, seeds: int = 10, algs=("1", "2"), samples: int = 10_000,
                      prof: Profile | None = None, batch: SmallGraphBatch | None = None) -> dict:
    """Run every algorithm ``seeds`` times over the batch and fold the verdicts."""
    from .harness import run_algorithm
    prof = prof or get_profile()
    batch = batch or small_graph_batch(max_n, samples)
    sizes = np.array([g.n for g in batch.graphs])
    res: dict = {"graphs": len(batch.graphs), "seeds": seeds, "per_alg": {}}
    ok = True
    for alg in algs:
        runs = dep_ok = max_ok = mismatch = 0
        per_n: dict = {}
        clean = True
        for s in range(seeds):
            m, rec = run_algorithm(batch.union, str(alg), prof, s)
            clean &= rec.violations == 0 and rec.unintended_drops == 0
            dep, mx = batch.verdicts(m)
            hit = np.flatnonzero(mx)
            mismatch += int((~batch.in_oracle(m, hit)).sum())
            runs += dep.size
            dep_ok += int(dep.sum())
            max_ok += int(mx.sum())
            for n in np.unique(sizes):
                sel = sizes == n
                c = per_n.setdefault(int(n), [0, 0, 0])
                c[0] += int(sel.sum())
                c[1] += int(dep[sel].sum())
                c[2] += int(mx[sel].sum())
        cell = {"runs": runs, "independent": dep_ok / runs, "maximal": max_ok / runs,
                "oracle_mismatch": mismatch, "clean": bool(clean),
                "per_n": {n: {"independent": c[1] / c[0], "maximal": c[2] / c[0]}
                          for n, c in per_n.items()}}
        cell["ok"] = bool(dep_ok == runs and max_ok >= 0.99 * runs and mismatch == 0 and clean)
        ok &= cell["ok"]
        res["per_alg"][str(alg)] = cell
    res["ok"] = bool(ok)
    return res
