"""Minimum-cost injective assignment of rows to columns."""

from __future__ import annotations

import itertools

import numpy as np


def _as_cost(c) -> np.ndarray:
    c = np.asarray(c, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] < 1:
        raise ValueError(f"cost matrix must be 2-D with at least one row, got shape {c.shape}")
    n, m = c.shape
    if n > m:
        raise ValueError(f"cost matrix has more rows than columns ({n} > {m})")
    if not np.isfinite(c).all():
        raise ValueError("cost matrix contains non-finite entries")
    return c


def hungarian(cost) -> tuple[np.ndarray, float]:
    """Solve ``min sum_i cost[i, col[i]]`` over injective ``col``.

    Shortest augmenting paths with row/column potentials, one row at a
    time; rectangular ``n <= m`` matrices need no padding. Runs in
    O(n^2 m).

    Returns
    -------
    col : ndarray of int, shape (n,)
        Column assigned to each row.
    total : float
        ``cost[range(n), col].sum()``.
    """
    c = _as_cost(cost)
    n, m = c.shape
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    # owner[j] is the 1-based row matched to column j (1-based); column 0 is the virtual root
    owner = np.zeros(m + 1, dtype=np.int64)
    way = np.zeros(m + 1, dtype=np.int64)
    for i in range(1, n + 1):
        owner[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = owner[j0]
            cur = c[i0 - 1] - u[i0] - v[1:]
            free = ~used[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            u[owner[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if owner[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            owner[j0] = owner[j1]
            j0 = j1
    col = np.empty(n, dtype=np.int64)
    for j in range(1, m + 1):
        if owner[j]:
            col[owner[j] - 1] = j - 1
    return col, float(c[np.arange(n), col].sum())


def brute_force_assignment(cost) -> tuple[np.ndarray, float]:
    """Exhaustive minimum over all injective maps; for matrices up to 7 x 7."""
    c = _as_cost(cost)
    n, m = c.shape
    if n > 7 or m > 7:
        raise ValueError(f"brute force limited to 7 x 7, got {n} x {m}")
    best, best_cols = np.inf, None
    rows = np.arange(n)
    for cols in itertools.permutations(range(m), n):
        total = c[rows, cols].sum()
        if total < best:
            best, best_cols = total, cols
    return np.array(best_cols, dtype=np.int64), float(best)
