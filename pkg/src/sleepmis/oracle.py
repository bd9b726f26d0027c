"""Brute-force oracles for small graphs."""

from __future__ import annotations

from itertools import combinations
from typing import Iterator

import networkx as nx
import numpy as np

from .graph import Graph, ParameterError

EXHAUSTIVE_MAX = 5
ENUM_MAX = 8
ORACLE_MAX = 20
SAMPLES = 10_000


def _pairs(n: int) -> np.ndarray:
    return np.array(list(combinations(range(n), 2)), dtype=np.int64).reshape(-1, 2)


def graph_from_mask(n: int, bits: np.ndarray, pairs: np.ndarray | None = None) -> Graph:
    """Graph whose edge ``j`` (in lexicographic pair order) is present iff ``bits[j]``."""
    pairs = _pairs(n) if pairs is None else pairs
    e = pairs[np.asarray(bits, dtype=bool)]
    return Graph.from_edges(n, e)


def enumerate_small_graphs(n: int, samples: int = SAMPLES, seed: int = 0) -> Iterator[Graph]:
    """Every labeled graph on ``n <= 5`` nodes; ``samples`` uniform ones for ``6 <= n <= 8``.

    Sampling is without replacement over edge masks, so no graph repeats.
    """
    if not 1 <= n <= ENUM_MAX:
        raise ParameterError(f"enumeration supports 1 <= n <= {ENUM_MAX}")
    pairs = _pairs(n)
    m = len(pairs)
    shifts = np.arange(m, dtype=np.int64)
    if n <= EXHAUSTIVE_MAX:
        codes = np.arange(1 << m, dtype=np.int64)
    else:
        rng = np.random.default_rng([seed, n])
        count = min(samples, 1 << m)
        codes = np.sort(rng.choice(1 << m, size=count, replace=False))
    for c in codes:
        yield graph_from_mask(n, (int(c) >> shifts) & 1, pairs)


def oracle_all_mis(g: Graph) -> set[frozenset]:
    """All maximal independent sets, as maximal cliques of the complement."""
    if g.n > ORACLE_MAX:
        raise ParameterError(f"oracle limited to n <= {ORACLE_MAX}")
    if g.n == 0:
        return {frozenset()}
    h = nx.complement(g.to_networkx())
    return {frozenset(int(v) for v in c) for c in nx.find_cliques(h)}


def mis_in_oracle(g: Graph, in_mis: np.ndarray, cache: dict | None = None) -> bool:
    key = None
    if cache is not None:
        key = (g.n, tuple(map(tuple, np.column_stack(g.edges()).tolist())))
        if key not in cache:
            cache[key] = oracle_all_mis(g)
        sets = cache[key]
    else:
        sets = oracle_all_mis(g)
    return frozenset(np.flatnonzero(in_mis).tolist()) in sets
