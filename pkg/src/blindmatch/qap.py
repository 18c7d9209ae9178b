"""QAP solvers: exact enumeration, the factorized dual-ascent solver with
certified lower bounds, and the memory-heavy reference formulation used only
to cross-check the factorized one in tests.

The production solver alternates a leader LAP (moving linear cost into the
constant term, i.e. the dual bound) with one (N-1)x(N-1) LAP per matrix entry
(moving quadratic cost into the linear term). Dual vectors are stored in two
N x N x N tensors instead of updating an N^4 cost tensor in place, and every
LAP assignment is recycled as a primal candidate.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from ._lap_numba import lap_jv
from ._qap_numba import enumerate_qap, fhg_sweep, qap_cost
from .exceptions import ConfigError, ProblemTooLargeError
from .heuristics import primal_heuristic
from .kernels import FactorizedQap

ENUMERATION_LIMIT = 12
REFERENCE_LIMIT = 8

LAP_MODES = {"jv": 0, "auction": 1}


@dataclass
class HahnGrantConfig:
    """Configuration for the factorized dual-ascent solver."""

    lap: str = "jv"
    tol_abs: float = 1e-6
    tol_rel: float = 1e-6
    gap_tol: float = 1e-6
    auction_eps0: float = 0.1
    auction_decay: float = 0.9
    auction_eps_floor: float = 1e-9
    max_iters: int = 100_000
    time_limit: float | None = None
    primal_heuristic_seeds: int = 100
    heuristic_seed: int = 0

    def validate(self):
        if self.lap not in LAP_MODES:
            raise ConfigError(f"unknown lap solver {self.lap!r}; expected one of {sorted(LAP_MODES)}")
        for name in ("tol_abs", "tol_rel", "gap_tol", "auction_eps0", "auction_eps_floor"):
            if getattr(self, name) <= 0.0:
                raise ConfigError(f"{name} must be positive")
        if not 0.0 < self.auction_decay <= 1.0:
            raise ConfigError("auction_decay must lie in (0, 1]")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")
        if self.time_limit is not None and self.time_limit <= 0.0:
            raise ConfigError("time_limit must be positive")
        if self.primal_heuristic_seeds < 0:
            raise ConfigError("primal_heuristic_seeds must be >= 0")


@dataclass
class QapSolveReport:
    """Outcome of a QAP solve, in both raw shifted and original distortion units.

    ``history`` holds one ``(iteration, qap_dual, qap_primal)`` triple per outer
    iteration; ``qap_dual`` is non-decreasing. ``converged`` is set only when the
    primal-dual gap closed below the configured tolerance, so a converged report
    certifies global optimality of ``primal_perm``.
    """

    primal_perm: np.ndarray
    primal_cost: float
    dual_bound: float
    qap_primal: float
    qap_dual: float
    iterations: int
    converged: bool
    wall_time: float
    history: list = field(default_factory=list)
    solver: str = ""
    stop_reason: str = ""
    config: dict = field(default_factory=dict)

    @property
    def gap(self) -> float:
        return self.qap_primal - self.qap_dual

    def to_dict(self) -> dict:
        return {
            "solver": self.solver,
            "primal_perm": [int(x) for x in self.primal_perm],
            "primal_cost": self.primal_cost,
            "dual_bound": self.dual_bound,
            "qap_primal": self.qap_primal,
            "qap_dual": self.qap_dual,
            "iterations": self.iterations,
            "converged": self.converged,
            "stop_reason": self.stop_reason,
            "wall_time": self.wall_time,
            "history": [[int(i), float(d), float(p)] for i, d, p in self.history],
            "config": self.config,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def solve_enumeration(qap: FactorizedQap) -> QapSolveReport:
    """Exact optimum by exhaustive search. Guarded to N <= 12."""
    n = qap.n
    if n > ENUMERATION_LIMIT:
        raise ProblemTooLargeError(f"enumeration is limited to N <= {ENUMERATION_LIMIT}, got {n}")
    t0 = time.perf_counter()
    perm, shifted = enumerate_qap(qap.c1, qap.c2)
    wall = time.perf_counter() - t0
    value = qap.map_value(shifted)
    return QapSolveReport(
        primal_perm=perm,
        primal_cost=value,
        dual_bound=value,
        qap_primal=float(shifted),
        qap_dual=float(shifted),
        iterations=1,
        converged=True,
        wall_time=wall,
        history=[(0, float(shifted), float(shifted))],
        solver="enumeration",
        stop_reason="exhausted",
    )


def solve_factorized_hahn_grant(
    qap: FactorizedQap,
    cfg: HahnGrantConfig | None = None,
    on_iteration=None,
) -> QapSolveReport:
    """Dual-ascent solve of a factorized QAP with a certified lower bound.

    Stops when the primal-dual gap closes below ``gap_tol`` (converged), when
    the per-iteration dual improvement falls below ``tol_abs``/``tol_rel``
    (stalled), or on ``max_iters``/``time_limit``. The returned bound is valid
    in all cases. ``on_iteration(it, qap_dual, qap_primal)`` is called once per
    outer iteration when given.
    """
    cfg = cfg or HahnGrantConfig()
    cfg.validate()
    n = qap.n
    t0 = time.perf_counter()

    if n == 1:
        perm = np.zeros(1, dtype=np.int64)
        shifted = qap.shifted_cost(perm)
        value = qap.map_value(shifted)
        return QapSolveReport(
            primal_perm=perm, primal_cost=value, dual_bound=value,
            qap_primal=shifted, qap_dual=shifted, iterations=0, converged=True,
            wall_time=time.perf_counter() - t0, history=[(0, shifted, shifted)],
            solver="factorized_hahn_grant", stop_reason="gap",
        )

    if cfg.primal_heuristic_seeds > 0:
        best_perm = primal_heuristic(qap, n_seeds=cfg.primal_heuristic_seeds, seed=cfg.heuristic_seed)
    else:
        best_perm = np.arange(n, dtype=np.int64)
    best_state = np.array([qap_cost(qap.c1, qap.c2, best_perm)], dtype=np.float64)

    leader = np.outer(np.diag(qap.c1), np.diag(qap.c2))
    U = np.zeros((n, n, n), dtype=np.float64)
    V = np.zeros((n, n, n), dtype=np.float64)
    mode = LAP_MODES[cfg.lap]

    dual = 0.0
    history = []
    stop_reason = "max_iters"
    iterations = 0
    stalled = 0
    for it in range(cfg.max_iters):
        if cfg.time_limit is not None and time.perf_counter() - t0 >= cfg.time_limit:
            stop_reason = "time_limit"
            break
        eps = max(cfg.auction_eps0 * cfg.auction_decay**it, cfg.auction_eps_floor)
        dl = fhg_sweep(qap.c1, qap.c2, leader, U, V, mode, eps, best_perm, best_state)
        dual += dl
        iterations = it + 1
        history.append((it, dual, float(best_state[0])))
        if on_iteration is not None:
            on_iteration(it, dual, float(best_state[0]))
        gap = float(best_state[0]) - dual
        if gap <= cfg.gap_tol:
            stop_reason = "gap"
            break
        # The bound only moves at the leader LAP, one sweep after the sub-LAPs
        # created the linear cost, so a single zero-improvement sweep (e.g. the
        # very first one when the factor diagonals vanish) is not a fixed point.
        if dl < cfg.tol_abs or (abs(dual) > 0.0 and dl / abs(dual) < cfg.tol_rel):
            stalled += 1
            if stalled >= 2:
                stop_reason = "stalled_abs" if dl < cfg.tol_abs else "stalled_rel"
                break
        else:
            stalled = 0

    qap_primal = float(best_state[0])
    converged = qap_primal - dual <= cfg.gap_tol
    return QapSolveReport(
        primal_perm=best_perm.copy(),
        primal_cost=qap.map_value(qap_primal),
        dual_bound=qap.map_value(dual),
        qap_primal=qap_primal,
        qap_dual=dual,
        iterations=iterations,
        converged=converged,
        wall_time=time.perf_counter() - t0,
        history=history,
        solver="factorized_hahn_grant",
        stop_reason=stop_reason,
        config={
            "lap": cfg.lap, "tol_abs": cfg.tol_abs, "tol_rel": cfg.tol_rel,
            "gap_tol": cfg.gap_tol, "auction_eps0": cfg.auction_eps0,
            "auction_decay": cfg.auction_decay, "max_iters": cfg.max_iters,
            "time_limit": cfg.time_limit,
            "primal_heuristic_seeds": cfg.primal_heuristic_seeds,
        },
    )


def build_cost_tensor(qap: FactorizedQap) -> np.ndarray:
    """Materialize C[i,j,k,l] = c1[i,k] * c2[j,l] (test-scale sizes only)."""
    if qap.n > REFERENCE_LIMIT:
        raise ProblemTooLargeError(f"full cost tensor is limited to N <= {REFERENCE_LIMIT}")
    return np.einsum("ik,jl->ijkl", qap.c1, qap.c2)


def solve_hahn_grant_reference(cost: np.ndarray, max_iters: int):
    """Reference dual ascent on a full nonnegative N^4 cost tensor.

    Returns ``(dual_bound, trace)`` where ``trace`` holds, per outer iteration,
    the leader matrix as rebuilt at the top of the iteration and the bound
    after that iteration's leader LAP. Exists to validate the factorized
    solver; impractical beyond tiny sizes.
    """
    cost = np.array(cost, dtype=np.float64, copy=True)
    n = cost.shape[0]
    if cost.shape != (n, n, n, n):
        raise ValueError(f"expected an N^4 tensor, got shape {cost.shape}")
    if n > REFERENCE_LIMIT:
        raise ProblemTooLargeError(f"reference solver is limited to N <= {REFERENCE_LIMIT}")
    if n == 1:
        return float(cost[0, 0, 0, 0]), [(cost[0, 0, 0, 0].reshape(1, 1), float(cost[0, 0, 0, 0]))]

    masks = [np.arange(n) != i for i in range(n)]
    dual = 0.0
    trace = []
    for _ in range(max_iters):
        leader = np.ascontiguousarray(np.einsum("ijij->ij", cost))
        leader_snapshot = leader.copy()
        col, u, v = lap_jv(leader)
        dual += float(u.sum() + v.sum())
        leader = leader - u[:, None] - v[None, :]
        for i in range(n):
            for j in range(n):
                cost[i, j][np.ix_(masks[i], masks[j])] += leader[i, j] / (n - 1)
        for i in range(n):
            for j in range(n):
                block = np.ix_(masks[i], masks[j])
                comp = cost[:, :, i, j]
                cost[i, j][block] += comp[block]
                comp[block] = 0.0
                sub = np.ascontiguousarray(cost[i, j][block])
                scol, su, sv = lap_jv(sub)
                cost[i, j, i, j] = float(su.sum() + sv.sum())
                cost[i, j][block] -= su[:, None] + sv[None, :]
        trace.append((leader_snapshot, dual))
    return dual, trace
