"""Awake-round sets from the recursive halving ("virtual binary tree") construction.

A node whose special round is ``k`` stays awake in the rounds of ``S_k``.
For any two rounds ``i <= j`` some round ``l`` with ``i <= l <= j`` lies in
both ``S_i`` and ``S_j``, so two nodes can always meet between their special
rounds.  When ``i < j`` the meeting round is strictly before ``j``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import ParameterError


def awake_set(T: int, k: int) -> tuple[int, ...]:
    """``S_k`` for ``T`` rounds, built lazily by walking the interval tree in O(log T)."""
    if T < 1:
        raise ParameterError("T must be at least 1")
    if not 1 <= k <= T:
        raise ParameterError(f"round {k} outside 1..{T}")
    out = set()
    lo, hi = 1, T
    while lo < hi:
        mid = lo + (hi - lo) // 2
        out.add(mid)
        if k <= mid:
            hi = mid
        else:
            lo = mid + 1
    out.add(lo)
    return tuple(sorted(out))


def size_bound(T: int) -> int:
    """floor(log2 T) + 1."""
    return int(T).bit_length()


@dataclass(frozen=True)
class AwakeSchedule:
    """``table[k-1]`` holds ``S_k`` in increasing order, right-padded with zeros."""

    T: int
    table: np.ndarray

    def __getitem__(self, k: int) -> tuple[int, ...]:
        row = self.table[k - 1]
        return tuple(int(x) for x in row[row > 0])

    @property
    def sets(self) -> list[tuple[int, ...]]:
        return [self[k] for k in range(1, self.T + 1)]

    def sizes(self) -> np.ndarray:
        return (self.table > 0).sum(axis=1)

    def max_size(self) -> int:
        return int(self.sizes().max())

    @classmethod
    def from_sets(cls, sets) -> "AwakeSchedule":
        sets = [sorted(set(int(x) for x in s)) for s in sets]
        width = max((len(s) for s in sets), default=1) or 1
        table = np.zeros((len(sets), width), dtype=np.int64)
        for i, s in enumerate(sets):
            table[i, :len(s)] = s
        return cls(len(sets), table)


def build_awake_sets(T: int) -> AwakeSchedule:
    """All ``S_k`` at once; the recursion is walked for every ``k`` in parallel."""
    if T < 1:
        raise ParameterError("T must be at least 1")
    k = np.arange(1, T + 1, dtype=np.int64)
    lo = np.ones(T, dtype=np.int64)
    hi = np.full(T, T, dtype=np.int64)
    cols = []
    while True:
        live = lo < hi
        mid = lo + (hi - lo) // 2
        cols.append(np.where(live, mid, lo))
        if not live.any():
            break
        left = k <= mid
        hi = np.where(live & left, mid, hi)
        lo = np.where(live & ~left, mid + 1, lo)
    table = np.stack(cols, axis=1)
    # a leaf repeats its own index once the walk has stopped; drop duplicates
    table.sort(axis=1)
    dup = np.zeros(table.shape, dtype=bool)
    dup[:, 1:] = table[:, 1:] == table[:, :-1]
    table[dup] = 0
    order = np.argsort(table == 0, axis=1, kind="stable")
    table = np.take_along_axis(table, order, axis=1)
    width = int((table > 0).sum(axis=1).max())
    return AwakeSchedule(T, np.ascontiguousarray(table[:, :width]))


def _basic_checks(s: AwakeSchedule, check_size: bool = True) -> bool:
    T = s.T
    if T < 1 or s.table.shape[0] != T:
        return False
    vals = s.table
    valid = vals > 0
    if np.any(vals < 0) or np.any(vals > T):
        return False
    return not check_size or bool(valid.sum(axis=1).max() <= size_bound(T))


def verify_pairs_bruteforce(s: AwakeSchedule, check_size: bool = True) -> bool:
    """Literal check of every pair ``i <= j``; quadratic memory, meant for small ``T``."""
    if not _basic_checks(s, check_size):
        return False
    T = s.T
    mem = np.zeros((T + 1, T + 1), dtype=bool)       # mem[k, l]: l in S_k
    for k in range(1, T + 1):
        mem[k, list(s[k])] = True
    for i in range(1, T + 1):
        for j in range(i, T + 1):
            if not np.any(mem[i, i:j + 1] & mem[j, i:j + 1]):
                return False
    return True


def verify_awake_sets(s: AwakeSchedule, check_size: bool = True) -> bool:
    """Exact check of the meeting property plus the ``floor(log2 T)+1`` size bound.

    For a round ``l`` let ``B_l`` be the rounds ``j >= l`` with ``l`` in ``S_j``.
    The pairs ``(i, j)`` served through ``l`` are exactly ``i`` with ``l`` in
    ``S_i``, ``i <= l``, and ``j`` in ``B_l``.  So row ``i`` is fully served iff
    the sets ``B_l`` for ``l`` in ``S_i``, ``l >= i`` cover ``[i, T]``.  When
    every ``B_l`` is an interval this is an interval-cover test; otherwise the
    literal pair check runs.  ``check_size=False`` tests the meeting property alone.
    """
    if not _basic_checks(s, check_size):
        return False
    T = s.T
    tab = s.table
    kk = np.repeat(np.arange(1, T + 1), tab.shape[1])
    ll = tab.ravel()
    keep = (ll > 0) & (kk >= ll)
    kk, ll = kk[keep], ll[keep]
    lo = np.full(T + 1, T + 1, dtype=np.int64)
    hi = np.zeros(T + 1, dtype=np.int64)
    cnt = np.bincount(ll, minlength=T + 1)
    np.minimum.at(lo, ll, kk)
    np.maximum.at(hi, ll, kk)
    has = cnt > 0
    if np.any(cnt[has] != hi[has] - lo[has] + 1):
        return verify_pairs_bruteforce(s, check_size)
    # interval cover of [i, T] per row i
    L = tab.copy()
    rows = np.arange(1, T + 1)[:, None]
    ok_l = (L >= rows) & (L > 0)
    start = np.where(ok_l, lo[L], T + 2)
    end = np.where(ok_l, hi[L], 0)
    order = np.argsort(start, axis=1, kind="stable")
    start = np.take_along_axis(start, order, axis=1)
    end = np.take_along_axis(end, order, axis=1)
    reach = rows[:, 0] - 1                            # covered up to here
    for c in range(start.shape[1]):
        usable = start[:, c] <= reach + 1
        reach = np.where(usable, np.maximum(reach, end[:, c]), reach)
    return bool(np.all(reach >= T))
