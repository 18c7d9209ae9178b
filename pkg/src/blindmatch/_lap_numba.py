"""Compiled kernels for dense linear assignment.

Two solvers, both returning ``(col4row, u, v)`` with dual vectors that are
exactly feasible (``cost[i, j] - u[i] - v[j] >= 0`` up to round-off):

* ``lap_jv``: exact shortest-augmenting-path solver with dual potentials
  (Jonker-Volgenant style). Ties break toward the lowest column index.
* ``lap_auction``: forward-reverse auction with epsilon scaling. Row duals are
  re-derived from the final prices (``u[i] = min_j cost[i, j] - v[j]``), which
  certifies feasibility; the dual objective is then within ``n * eps`` of the
  optimum.
"""

import numpy as np
from numba import njit

INF = np.inf


@njit(cache=True)
def lap_jv(cost):
    n = cost.shape[0]
    u = np.zeros(n, dtype=np.float64)
    v = np.zeros(n, dtype=np.float64)
    col4row = np.full(n, -1, dtype=np.int64)
    row4col = np.full(n, -1, dtype=np.int64)
    shortest = np.empty(n, dtype=np.float64)
    path = np.empty(n, dtype=np.int64)
    scanned_col = np.empty(n, dtype=np.bool_)
    scanned_row = np.empty(n, dtype=np.bool_)

    for cur_row in range(n):
        for j in range(n):
            shortest[j] = INF
            path[j] = -1
            scanned_col[j] = False
        for i in range(n):
            scanned_row[i] = False
        min_val = 0.0
        i = cur_row
        sink = -1
        while sink == -1:
            scanned_row[i] = True
            lowest = INF
            j_low = -1
            for j in range(n):
                if not scanned_col[j]:
                    r = min_val + cost[i, j] - u[i] - v[j]
                    if r < shortest[j]:
                        shortest[j] = r
                        path[j] = i
                    if shortest[j] < lowest:
                        lowest = shortest[j]
                        j_low = j
            if j_low < 0:
                raise ValueError("assignment search failed (non-finite costs?)")
            min_val = lowest
            scanned_col[j_low] = True
            if row4col[j_low] == -1:
                sink = j_low
            else:
                i = row4col[j_low]
        u[cur_row] += min_val
        for i2 in range(n):
            if scanned_row[i2] and i2 != cur_row:
                u[i2] += min_val - shortest[col4row[i2]]
        for j2 in range(n):
            if scanned_col[j2]:
                v[j2] -= min_val - shortest[j2]
        j = sink
        while True:
            i2 = path[j]
            row4col[j] = i2
            j, col4row[i2] = col4row[i2], j
            if i2 == cur_row:
                break
    return col4row, u, v


@njit(cache=True)
def _forward_bid(cost, v, u, col4row, row4col, i, eps):
    """Person i bids for its best object; returns +1 if the matching grew."""
    n = cost.shape[0]
    m1 = INF
    m2 = INF
    j_best = -1
    for j in range(n):
        val = cost[i, j] - v[j]
        if val < m1:
            m2 = m1
            m1 = val
            j_best = j
        elif val < m2:
            m2 = val
    if m2 == INF:
        m2 = m1
    v[j_best] = cost[i, j_best] - m2 - eps
    u[i] = m2 + eps
    grew = 1
    prev = row4col[j_best]
    if prev >= 0:
        col4row[prev] = -1
        grew = 0
    row4col[j_best] = i
    col4row[i] = j_best
    return grew


@njit(cache=True)
def _reverse_bid(cost, v, u, col4row, row4col, j, eps):
    """Object j bids for its best person; returns +1 if the matching grew."""
    n = cost.shape[0]
    w1 = INF
    w2 = INF
    i_best = -1
    for i in range(n):
        val = cost[i, j] - u[i]
        if val < w1:
            w2 = w1
            w1 = val
            i_best = i
        elif val < w2:
            w2 = val
    if w2 == INF:
        w2 = w1
    v[j] = w2 + eps
    u[i_best] = cost[i_best, j] - w2 - eps
    grew = 1
    prev = col4row[i_best]
    if prev >= 0:
        row4col[prev] = -1
        grew = 0
    col4row[i_best] = j
    row4col[j] = i_best
    return grew


@njit(cache=True)
def lap_auction(cost, eps_target):
    n = cost.shape[0]
    v = np.zeros(n, dtype=np.float64)
    u = np.empty(n, dtype=np.float64)
    col4row = np.full(n, -1, dtype=np.int64)
    row4col = np.full(n, -1, dtype=np.int64)

    lo = cost[0, 0]
    hi = cost[0, 0]
    for i in range(n):
        for j in range(n):
            c = cost[i, j]
            if c < lo:
                lo = c
            if c > hi:
                hi = c
    span = hi - lo
    eps = span / 8.0
    if eps < eps_target:
        eps = eps_target

    soft_limit = 1_000_000 + 200 * n * n
    hard_limit = 100_000_000

    while True:
        for i in range(n):
            col4row[i] = -1
            best = INF
            for j in range(n):
                val = cost[i, j] - v[j]
                if val < best:
                    best = val
            u[i] = best
        for j in range(n):
            row4col[j] = -1
        matched = 0
        bids = 0
        while matched < n:
            before = matched
            for i in range(n):
                if col4row[i] == -1:
                    matched += _forward_bid(cost, v, u, col4row, row4col, i, eps)
                    bids += 1
            if matched == n:
                break
            if matched == before and bids < soft_limit:
                for j in range(n):
                    if row4col[j] == -1:
                        matched += _reverse_bid(cost, v, u, col4row, row4col, j, eps)
                        bids += 1
            if bids > hard_limit:
                raise RuntimeError("auction failed to terminate")
        if eps <= eps_target:
            break
        eps /= 8.0
        if eps < eps_target:
            eps = eps_target

    # re-derive feasible row duals from the final prices
    for i in range(n):
        best = INF
        for j in range(n):
            val = cost[i, j] - v[j]
            if val < best:
                best = val
        u[i] = best
    return col4row, u, v


@njit(cache=True)
def lap_dispatch(cost, mode, eps):
    """mode 0 = exact JV, mode 1 = auction at relaxation ``eps``."""
    if mode == 0:
        return lap_jv(cost)
    return lap_auction(cost, eps)
