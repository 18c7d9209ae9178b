"""Synthetic data generators: the desk-scale stand-ins for pretrained embeddings.

The correlated generator draws shared latent unit vectors, perturbs them
independently per modality, renormalizes and applies a per-modality random
orthogonal rotation. Rotations leave pairwise inner products (and hence every
kernel here) invariant, so matching stays nontrivial yet solvable; ``noise``
is the approximate noise-to-signal norm ratio.
"""

from __future__ import annotations

import numpy as np

from .embeddings import ClassPrototypes, EmbeddingMatrix
from .kernels import NEG_INNER, FactorizedQap, factorize


def _unit_rows(rows: np.ndarray) -> np.ndarray:
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


def _random_rotation(dim: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


def correlated_prototypes(n_classes: int, dim: int, noise: float, seed: int):
    """Two prototype sets sharing latent geometry up to noise and rotation."""
    rng = np.random.default_rng(seed)
    latent = _unit_rows(rng.standard_normal((n_classes, dim)))
    out = []
    for _ in range(2):
        jitter = rng.standard_normal((n_classes, dim)) / np.sqrt(dim)
        vecs = _unit_rows(latent + noise * jitter) @ _random_rotation(dim, rng)
        out.append(ClassPrototypes(vecs.astype(np.float32), np.arange(n_classes)))
    return out[0], out[1]


def correlated_embeddings(
    n_classes: int,
    rows_per_class: int,
    dim: int,
    noise: float,
    within_spread: float,
    seed: int,
):
    """Two labeled embedding matrices whose class means share latent geometry.

    Every row is ``normalize(class_latent + noise_jitter + within_jitter)``
    rotated per modality; labels run 0..n_classes-1, ``rows_per_class`` rows each.
    """
    rng = np.random.default_rng(seed)
    latent = _unit_rows(rng.standard_normal((n_classes, dim)))
    labels = np.repeat(np.arange(n_classes), rows_per_class)
    mats = []
    for _ in range(2):
        modality_jitter = rng.standard_normal((n_classes, dim)) / np.sqrt(dim)
        centers = _unit_rows(latent + noise * modality_jitter)
        rows = centers[labels] + within_spread * rng.standard_normal((labels.size, dim)) / np.sqrt(dim)
        rows = _unit_rows(rows) @ _random_rotation(dim, rng)
        mats.append(EmbeddingMatrix(rows.astype(np.float32), labels=labels.copy()))
    return mats[0], mats[1]


def blob_classifier_dataset(
    n_classes: int,
    rows_per_class: int,
    dim: int,
    within_spread: float,
    seed: int,
):
    """Well-separated image blobs plus language prototypes with matched geometry.

    Cluster centers are random unit vectors (generic position, so the matching
    optimum is unique); image rows scatter tightly around them, and the
    language side is the rotated centers themselves.
    """
    rng = np.random.default_rng(seed)
    centers = _unit_rows(rng.standard_normal((n_classes, dim)))
    labels = np.repeat(np.arange(n_classes), rows_per_class)
    rows = centers[labels] + within_spread * rng.standard_normal((labels.size, dim)) / np.sqrt(dim)
    images = EmbeddingMatrix((_unit_rows(rows) @ _random_rotation(dim, rng)).astype(np.float32), labels=labels.copy())
    language = ClassPrototypes(
        (centers @ _random_rotation(dim, rng)).astype(np.float32), np.arange(n_classes)
    )
    return images, language


def unit_gaussian_instance(n: int, dim: int, seed: int) -> FactorizedQap:
    """Matching instance between two independent sets of normalized Gaussian vectors.

    Kernels are pairwise L2 distances scaled by 1/n (the uniform-measure
    convention), combined through the inner-product distortion. For n=40,
    d=1024 the optimal cost concentrates near -2(1 - 1/n).
    """
    rng = np.random.default_rng(seed)
    kernels = []
    for _ in range(2):
        g = _unit_rows(rng.standard_normal((n, dim)))
        dist = np.sqrt(np.maximum(2.0 - 2.0 * (g @ g.T), 0.0))
        np.fill_diagonal(dist, 0.0)
        kernels.append(dist / n)
    return factorize(kernels[0], kernels[1], NEG_INNER)
