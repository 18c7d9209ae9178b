"""Class-subset selection: pick the N classes whose kernels agree best.

Internally this always MAXIMIZES a "goodness" matrix G over size-N subsets,
``A(S) = sum_{i,j in S} G[i, j]`` (both orders plus the diagonal). For the
inner-product distortion G is the elementwise kernel product (similarity);
for the squared-difference distortion G is the negated squared gap, so
maximizing goodness minimizes distortion either way. This is the
p-dispersion-sum problem; exact enumeration certifies the greedy + 1-swap
heuristic on small instances.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from math import comb

import numpy as np

from .exceptions import ProblemTooLargeError, SizeMismatchError
from .kernels import NEG_INNER, SQUARED_DIFF, DistortionSpec, SimilarityMatrix

logger = logging.getLogger(__name__)

EXACT_GUARD = 2_000_000


@dataclass
class AlignmentProblem:
    """Goodness matrix over all L classes plus the target subset size N."""

    scores: np.ndarray
    subset_size: int

    def __post_init__(self):
        self.scores = np.ascontiguousarray(self.scores, dtype=np.float64)
        if self.scores.ndim != 2 or self.scores.shape[0] != self.scores.shape[1]:
            raise SizeMismatchError(f"scores must be square, got {self.scores.shape}")
        if not 1 <= self.subset_size <= self.scores.shape[0]:
            raise ValueError(f"subset size must be in [1, {self.scores.shape[0]}]")

    @property
    def n_classes(self) -> int:
        return self.scores.shape[0]


@dataclass
class SubsetSearchConfig:
    restarts: int = 20
    max_swaps: int = 10_000
    seed: int = 0


def alignment_problem(x: SimilarityMatrix, y: SimilarityMatrix, spec: DistortionSpec, subset_size: int) -> AlignmentProblem:
    """Build the goodness matrix for a kernel pair under the given distortion."""
    if x.n != y.n:
        raise SizeMismatchError(f"kernel sizes differ: {x.n} vs {y.n}")
    if spec is SQUARED_DIFF:
        scores = -((x.values - y.values) ** 2)
    elif spec is NEG_INNER:
        scores = x.values * y.values
    else:
        scores = -spec.loss(x.values, y.values)
    return AlignmentProblem(scores=scores, subset_size=subset_size)


def alignment_score(prob: AlignmentProblem, subset) -> float:
    """Naive double-sum evaluation of A(S); also the test oracle for the search."""
    idx = np.asarray(sorted(int(c) for c in subset), dtype=np.int64)
    if idx.shape[0] != prob.subset_size:
        raise ValueError(f"subset must have exactly {prob.subset_size} classes, got {idx.shape[0]}")
    if len(set(idx.tolist())) != idx.shape[0]:
        raise ValueError("subset contains duplicate classes")
    if idx.min() < 0 or idx.max() >= prob.n_classes:
        raise IndexError("class index out of range")
    return float(prob.scores[np.ix_(idx, idx)].sum())


def select_subset_exact(prob: AlignmentProblem):
    """Exact argmax by enumeration; ties resolve to the lexicographically smallest subset."""
    total = comb(prob.n_classes, prob.subset_size)
    if total > EXACT_GUARD:
        raise ProblemTooLargeError(
            f"C({prob.n_classes}, {prob.subset_size}) = {total} exceeds the enumeration guard {EXACT_GUARD}"
        )
    best = None
    best_score = -np.inf
    for subset in itertools.combinations(range(prob.n_classes), prob.subset_size):
        score = float(prob.scores[np.ix_(subset, subset)].sum())
        if score > best_score:
            best_score = score
            best = subset
    return tuple(best), best_score


def _marginal_gain(scores: np.ndarray, member_sum: np.ndarray, c: int) -> float:
    # gain of adding c to S where member_sum[c] = sum_{e in S} scores[c,e]+scores[e,c]
    return float(scores[c, c] + member_sum[c])


def _greedy_from_pair(scores: np.ndarray, n_target: int, first_pair) -> list[int]:
    n = scores.shape[0]
    selected = list(first_pair[:n_target])
    member_sum = np.zeros(n)
    for e in selected:
        member_sum += scores[:, e] + scores[e, :]
    in_set = np.zeros(n, dtype=bool)
    in_set[selected] = True
    while len(selected) < n_target:
        gains = np.diag(scores) + member_sum
        gains = np.where(in_set, -np.inf, gains)
        c = int(np.argmin(-gains))  # argmax with lowest-index ties
        selected.append(c)
        in_set[c] = True
        member_sum += scores[:, c] + scores[c, :]
    return selected


def _local_search(scores: np.ndarray, selected: list[int], max_swaps: int) -> list[int]:
    n = scores.shape[0]
    in_set = np.zeros(n, dtype=bool)
    in_set[selected] = True
    member_sum = np.zeros(n)
    for e in selected:
        member_sum += scores[:, e] + scores[e, :]
    swaps = 0
    improved = True
    while improved and swaps < max_swaps:
        improved = False
        best_delta = 1e-12
        best_out = best_in = -1
        for o in selected:
            # contribution of o given S \ {o}
            out_val = scores[o, o] + member_sum[o] - 2.0 * scores[o, o]
            for c in range(n):
                if in_set[c]:
                    continue
                in_val = scores[c, c] + member_sum[c] - (scores[c, o] + scores[o, c])
                delta = in_val - out_val
                if delta > best_delta:
                    best_delta = delta
                    best_out, best_in = o, c
        if best_out >= 0:
            selected[selected.index(best_out)] = best_in
            in_set[best_out] = False
            in_set[best_in] = True
            member_sum -= scores[:, best_out] + scores[best_out, :]
            member_sum += scores[:, best_in] + scores[best_in, :]
            swaps += 1
            improved = True
    return selected


def _best_pair(scores: np.ndarray):
    n = scores.shape[0]
    pair_score = np.diag(scores)[:, None] + np.diag(scores)[None, :] + scores + scores.T
    np.fill_diagonal(pair_score, -np.inf)
    flat = int(np.argmax(pair_score))
    i, j = divmod(flat, n)
    return (min(i, j), max(i, j))


def select_subset_heuristic(prob: AlignmentProblem, cfg: SubsetSearchConfig | None = None):
    """Greedy construction plus 1-swap local search, best over seeded restarts."""
    cfg = cfg or SubsetSearchConfig()
    results = _heuristic_candidates(prob, cfg)
    return results[0]


def _heuristic_candidates(prob: AlignmentProblem, cfg: SubsetSearchConfig):
    scores = prob.scores
    n = prob.n_classes
    n_target = prob.subset_size
    rng = np.random.default_rng(cfg.seed)
    seen = {}
    for restart in range(max(1, cfg.restarts)):
        if n_target == 1:
            diag = np.diag(scores)
            start = [int(np.argmin(-diag))] if restart == 0 else [int(rng.integers(n))]
            selected = start
        else:
            if restart == 0:
                pair = _best_pair(scores)
            else:
                pair = tuple(sorted(rng.choice(n, size=2, replace=False).tolist()))
            selected = _greedy_from_pair(scores, n_target, pair)
        selected = _local_search(scores, selected, cfg.max_swaps)
        key = tuple(sorted(selected))
        if key not in seen:
            seen[key] = alignment_score(prob, key)
    ranked = sorted(seen.items(), key=lambda kv: (-kv[1], kv[0]))
    return [(subset, score) for subset, score in ranked]


def top_m_subsets(prob: AlignmentProblem, m: int, method: str = "auto", cfg: SubsetSearchConfig | None = None):
    """The m best distinct subsets, descending by score.

    ``method``: "exact" enumerates (guarded), "heuristic" ranks distinct local
    optima found across restarts, "auto" picks exact when the guard allows.
    Returns fewer than m entries (with a warning) when fewer distinct subsets
    were found.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if method == "auto":
        method = "exact" if comb(prob.n_classes, prob.subset_size) <= EXACT_GUARD else "heuristic"
    if method == "exact":
        ranked = sorted(
            ((subset, float(prob.scores[np.ix_(subset, subset)].sum()))
             for subset in itertools.combinations(range(prob.n_classes), prob.subset_size)),
            key=lambda kv: (-kv[1], kv[0]),
        )
    elif method == "heuristic":
        base = cfg or SubsetSearchConfig()
        restarts = max(base.restarts, 4 * m)
        ranked = _heuristic_candidates(prob, SubsetSearchConfig(restarts, base.max_swaps, base.seed))
    else:
        raise ValueError(f"unknown method {method!r}")
    if len(ranked) < m:
        logger.warning("only %d distinct subsets available, %d requested", len(ranked), m)
    return ranked[:m]
