"""Primal heuristics: Frank-Wolfe on the doubly-stochastic relaxation (FAQ)
and best-improvement 2-opt, plus the seeded combination used to warm-start
the dual-ascent solver."""

from __future__ import annotations

import numpy as np

from ._lap_numba import lap_jv
from ._qap_numba import qap_cost, two_opt
from .kernels import FactorizedQap

FW_MAX_ITERS = 30
FW_REL_TOL = 1e-6
SINKHORN_ROUNDS = 10


def _sinkhorn_rounds(m: np.ndarray, rounds: int = SINKHORN_ROUNDS) -> np.ndarray:
    for _ in range(rounds):
        m = m / m.sum(axis=1, keepdims=True)
        m = m / m.sum(axis=0, keepdims=True)
    return m * m.shape[0] / m.sum()


def _frank_wolfe(c1: np.ndarray, c2: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Minimize <P, c1 P c2> over the Birkhoff polytope from start point p."""
    n = c1.shape[0]
    obj = float(np.sum(p * (c1 @ p @ c2)))
    for _ in range(FW_MAX_ITERS):
        grad = 2.0 * (c1 @ p @ c2)
        direction, _, _ = lap_jv(grad)
        d = np.zeros((n, n))
        d[np.arange(n), direction] = 1.0
        delta = d - p
        b = float(np.sum(grad * delta))
        a = float(np.sum(delta * (c1 @ delta @ c2)))
        # exact line search on the quadratic segment g(t) = a t^2 + b t
        if a > 0.0:
            t = min(1.0, max(0.0, -b / (2.0 * a)))
        else:
            t = 1.0 if a + b < 0.0 else 0.0
        change = a * t * t + b * t
        if t <= 0.0 or change >= 0.0:
            break
        p = p + t * delta
        obj += change
        if abs(change) < FW_REL_TOL * max(abs(obj), 1.0):
            break
    return p


def _project_to_permutation(p: np.ndarray) -> np.ndarray:
    perm, _, _ = lap_jv(np.ascontiguousarray(-p))
    return perm


def _faq_starts(n: int, n_seeds: int, seed: int):
    """Seed 0 is the barycenter; the rest are Sinkhorn-normalized random starts."""
    rng = np.random.default_rng(seed)
    for s in range(n_seeds):
        if s == 0:
            yield np.full((n, n), 1.0 / n)
        else:
            yield _sinkhorn_rounds(rng.uniform(0.1, 1.0, size=(n, n)))


def solve_faq(qap: FactorizedQap, n_seeds: int = 1, seed: int = 0) -> np.ndarray:
    """Best FAQ permutation over ``n_seeds`` starts."""
    if n_seeds < 1:
        raise ValueError("n_seeds must be >= 1")
    best_perm = None
    best_cost = np.inf
    for start in _faq_starts(qap.n, n_seeds, seed):
        p = _frank_wolfe(qap.c1, qap.c2, start)
        perm = _project_to_permutation(p)
        cost = qap_cost(qap.c1, qap.c2, perm)
        if cost < best_cost:
            best_cost = cost
            best_perm = perm
    return best_perm


def solve_2opt(qap: FactorizedQap, init) -> np.ndarray:
    """Refine a permutation with best-improvement pairwise swaps."""
    perm = np.array(init, dtype=np.int64, copy=True)
    n = qap.n
    if perm.shape != (n,) or not np.array_equal(np.sort(perm), np.arange(n)):
        raise ValueError("init must be a permutation of 0..N-1")
    return two_opt(qap.c1, qap.c2, perm)


def primal_heuristic(qap: FactorizedQap, n_seeds: int = 100, seed: int = 0) -> np.ndarray:
    """Best of (FAQ start -> 2-opt refinement) over ``n_seeds`` starts."""
    if n_seeds < 1:
        raise ValueError("n_seeds must be >= 1")
    best_perm = None
    best_cost = np.inf
    for start in _faq_starts(qap.n, n_seeds, seed):
        p = _frank_wolfe(qap.c1, qap.c2, start)
        perm = two_opt(qap.c1, qap.c2, _project_to_permutation(p))
        cost = qap_cost(qap.c1, qap.c2, perm)
        if cost < best_cost:
            best_cost = cost
            best_perm = perm
    return best_perm
