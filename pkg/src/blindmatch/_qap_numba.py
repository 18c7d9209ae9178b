"""Compiled kernels for Koopmans-Beckmann QAP objectives and the dual-ascent sweep.

The sweep mutates ``leader``, ``U`` and ``V`` in place and returns the amount
added to the dual bound. Bookkeeping invariant: for i != k, j != l the implicit
cost of the transformed QAP is
``2*c1[i,k]*c2[j,l] - U[i,j,k] - V[i,j,l] - U[k,l,i] - V[k,l,j]``,
which stays nonnegative because every LAP leaves exactly feasible duals behind.
Negative round-off residue is clamped to zero and its mass subtracted from the
bound increment, which keeps the accumulated constant a true lower bound.
"""

import numpy as np
from numba import njit

from ._lap_numba import lap_dispatch


@njit(cache=True)
def qap_cost(c1, c2, perm):
    n = perm.shape[0]
    total = 0.0
    for i in range(n):
        pi = perm[i]
        for k in range(n):
            total += c1[i, k] * c2[pi, perm[k]]
    return total


@njit(cache=True)
def enumerate_qap(c1, c2):
    """Exact minimum over all permutations (Heap's order); first minimum wins."""
    n = c1.shape[0]
    perm = np.arange(n)
    best_perm = perm.copy()
    best = qap_cost(c1, c2, perm)
    counters = np.zeros(n, dtype=np.int64)
    i = 0
    while i < n:
        if counters[i] < i:
            if i % 2 == 0:
                perm[0], perm[i] = perm[i], perm[0]
            else:
                j = counters[i]
                perm[j], perm[i] = perm[i], perm[j]
            val = qap_cost(c1, c2, perm)
            if val < best:
                best = val
                best_perm[:] = perm
            counters[i] += 1
            i = 0
        else:
            counters[i] = 0
            i += 1
    return best_perm, best


@njit(cache=True)
def two_opt(c1, c2, perm):
    """Best-improvement pairwise swaps until locally optimal; perm is modified."""
    n = perm.shape[0]
    while True:
        best_delta = -1e-12
        best_a = -1
        best_b = -1
        for a in range(n):
            pa = perm[a]
            for b in range(a + 1, n):
                pb = perm[b]
                delta = (c1[a, a] - c1[b, b]) * (c2[pb, pb] - c2[pa, pa])
                for k in range(n):
                    if k != a and k != b:
                        pk = perm[k]
                        delta += 2.0 * (c1[a, k] - c1[b, k]) * (c2[pb, pk] - c2[pa, pk])
                if delta < best_delta:
                    best_delta = delta
                    best_a = a
                    best_b = b
        if best_a < 0:
            break
        perm[best_a], perm[best_b] = perm[best_b], perm[best_a]
    return perm


@njit(cache=True)
def fhg_sweep(c1, c2, leader, U, V, mode, eps, best_perm, best_state):
    """One outer dual-ascent iteration; returns the dual-bound increment."""
    n = c1.shape[0]
    dl = 0.0

    # leader LAP: move linear cost into the constant term
    col, u, v = lap_dispatch(leader, mode, eps)
    cost = qap_cost(c1, c2, col)
    if cost < best_state[0]:
        best_state[0] = cost
        best_perm[:] = col
    s = u.sum() + v.sum()
    if s < 0.0:
        # wasteful auction duals: fall back to zero duals, keep the assignment
        for i in range(n):
            u[i] = 0.0
            v[i] = 0.0
        s = 0.0
    dl += s
    for i in range(n):
        for j in range(n):
            val = leader[i, j] - u[i] - v[j]
            if val < 0.0:
                dl += val
                val = 0.0
            leader[i, j] = val

    # redistribute the leader residue evenly into the quadratic term
    inv = 1.0 / (n - 1)
    for i in range(n):
        for j in range(n):
            r = leader[i, j] * inv
            if r != 0.0:
                for k in range(n):
                    if k != i:
                        U[i, j, k] -= r

    # subproblem sweep (row-major, Gauss-Seidel: later LAPs read earlier duals)
    ctmp = np.empty((n - 1, n - 1), dtype=np.float64)
    rows = np.empty(n - 1, dtype=np.int64)
    cols = np.empty(n - 1, dtype=np.int64)
    perm = np.empty(n, dtype=np.int64)
    for i in range(n):
        ri = 0
        for k in range(n):
            if k != i:
                rows[ri] = k
                ri += 1
        for j in range(n):
            ci = 0
            for l in range(n):
                if l != j:
                    cols[ci] = l
                    ci += 1
            for a in range(n - 1):
                k = rows[a]
                c1ik = c1[i, k]
                for b in range(n - 1):
                    l = cols[b]
                    val = 2.0 * c1ik * c2[j, l] - U[i, j, k] - V[i, j, l] - U[k, l, i] - V[k, l, j]
                    if val < 0.0:
                        dl += val
                        val = 0.0
                    ctmp[a, b] = val
            scol, su, sv = lap_dispatch(ctmp, mode, eps)
            s = su.sum() + sv.sum()
            if s < 0.0:
                for a in range(n - 1):
                    su[a] = 0.0
                    sv[a] = 0.0
                s = 0.0
            perm[i] = j
            for a in range(n - 1):
                perm[rows[a]] = cols[scol[a]]
            cost = qap_cost(c1, c2, perm)
            if cost < best_state[0]:
                best_state[0] = cost
                best_perm[:] = perm
            leader[i, j] = s
            for a in range(n - 1):
                U[i, j, rows[a]] += su[a]
                V[i, j, cols[a]] += sv[a]
    return dl
