"""Dense linear assignment solvers with dual certificates.

Both solvers return a :class:`LapSolution` whose dual vectors satisfy
``C[i, j] - u[i] - v[j] >= -1e-9`` everywhere, so downstream dual-ascent code
can subtract them from cost tensors without driving stored costs negative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._lap_numba import lap_auction, lap_jv
from .exceptions import NonFiniteError, SizeMismatchError


@dataclass
class LapSolution:
    """Assignment plus feasible dual vectors.

    ``epsilon`` is 0 for the exact solver; for the auction solver the
    objective exceeds the dual value ``sum(u) + sum(v)`` by at most
    ``n * epsilon``.
    """

    assignment: np.ndarray
    u: np.ndarray
    v: np.ndarray
    objective: float
    epsilon: float

    @property
    def dual_value(self) -> float:
        return float(self.u.sum() + self.v.sum())


def _check_cost(cost) -> np.ndarray:
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1] or cost.shape[0] < 1:
        raise SizeMismatchError(f"cost matrix must be square and non-empty, got {cost.shape}")
    if not np.isfinite(cost).all():
        raise NonFiniteError("cost matrix contains non-finite values")
    return cost


def solve_lap_jv(cost) -> LapSolution:
    """Exact minimum-cost assignment (shortest augmenting paths with potentials)."""
    cost = _check_cost(cost)
    assignment, u, v = lap_jv(cost)
    objective = float(cost[np.arange(cost.shape[0]), assignment].sum())
    return LapSolution(assignment=assignment, u=u, v=v, objective=objective, epsilon=0.0)


def solve_lap_auction(cost, epsilon: float) -> LapSolution:
    """Forward-reverse auction with epsilon scaling down to ``epsilon``."""
    cost = _check_cost(cost)
    if not epsilon > 0.0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    assignment, u, v = lap_auction(cost, float(epsilon))
    objective = float(cost[np.arange(cost.shape[0]), assignment].sum())
    return LapSolution(assignment=assignment, u=u, v=v, objective=objective, epsilon=float(epsilon))
