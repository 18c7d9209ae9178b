"""K-Means++ with Lloyd iterations, restart selection and empty-cluster repair."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LLOYD_MAX_ITERS = 300
LLOYD_SHIFT_TOL = 1e-6


@dataclass
class ClusterModel:
    centroids: np.ndarray
    assignments: np.ndarray
    inertia: float


def _as_array(data) -> np.ndarray:
    if hasattr(data, "data"):
        data = data.data
    return np.ascontiguousarray(data, dtype=np.float64)


def _sq_dists(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # (n, k) squared distances, clipped against round-off
    d2 = (
        np.sum(x * x, axis=1)[:, None]
        - 2.0 * (x @ centroids.T)
        + np.sum(centroids * centroids, axis=1)[None, :]
    )
    return np.maximum(d2, 0.0)


def _seed_centroids(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """D^2 sampling: each new centroid is drawn proportionally to the squared
    distance from the closest centroid chosen so far."""
    n = x.shape[0]
    centroids = np.empty((k, x.shape[1]))
    first = int(rng.integers(n))
    centroids[0] = x[first]
    closest = _sq_dists(x, centroids[:1])[:, 0]
    for c in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=closest / total))
        centroids[c] = x[idx]
        closest = np.minimum(closest, _sq_dists(x, centroids[c : c + 1])[:, 0])
    return centroids


def _lloyd(x: np.ndarray, centroids: np.ndarray):
    k = centroids.shape[0]
    for _ in range(LLOYD_MAX_ITERS):
        d2 = _sq_dists(x, centroids)
        assign = np.argmin(d2, axis=1)
        new_centroids = np.empty_like(centroids)
        counts = np.bincount(assign, minlength=k)
        point_d2 = d2[np.arange(x.shape[0]), assign]
        for c in range(k):
            if counts[c] == 0:
                # repair: move the centroid onto the globally farthest point
                far = int(np.argmax(point_d2))
                new_centroids[c] = x[far]
                assign[far] = c
                point_d2[far] = 0.0
            else:
                new_centroids[c] = x[assign == c].mean(axis=0)
        shift = float(np.sqrt(((new_centroids - centroids) ** 2).sum(axis=1)).max())
        centroids = new_centroids
        if shift < LLOYD_SHIFT_TOL:
            break
    d2 = _sq_dists(x, centroids)
    assign = np.argmin(d2, axis=1)
    inertia = float(d2[np.arange(x.shape[0]), assign].sum())
    return centroids, assign, inertia


def kmeans_pp(data, k: int, n_init: int = 10, seed: int = 0) -> ClusterModel:
    """Best-of-``n_init`` K-Means++ runs (lowest inertia); deterministic per seed.

    Accepts an EmbeddingMatrix or a plain array. Lloyd iterations stop when the
    largest centroid shift drops below 1e-6 or after 300 rounds.
    """
    x = _as_array(data)
    n = x.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    if n_init < 1:
        raise ValueError("n_init must be >= 1")
    children = np.random.SeedSequence(seed).spawn(n_init)
    best = None
    for child in children:
        rng = np.random.default_rng(child)
        centroids, assign, inertia = _lloyd(x, _seed_centroids(x, k, rng))
        if best is None or inertia < best.inertia:
            best = ClusterModel(centroids=centroids, assignments=assign, inertia=inertia)
    return best
