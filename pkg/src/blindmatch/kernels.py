"""Within-modality similarity kernels and pairwise-distortion machinery.

A matching instance compares two square kernels ``X`` and ``Y`` through a
decomposable elementwise distance ``l(a, b) = f1(a) + f2(b) - h1(a) h2(b)``.
Summing ``l(X[i, j], Y[perm[i], perm[j]])`` over all index pairs yields the
distortion that the solvers minimize over permutations. The same decomposition
turns the problem into a Koopmans-Beckmann QAP with factor matrices
``c1 = -h1(X)`` and ``c2 = h2(Y)`` (shifted to be nonnegative, with the shift
constants tracked exactly in an affine map back to distortion units).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embeddings import ClassPrototypes, read_manifest, save_embeddings, load_embeddings
from .exceptions import (
    AsymmetryError,
    KindMismatchError,
    ManifestError,
    SingularKernelError,
    SizeMismatchError,
)

_SYM_TOL = 1e-6


class KernelKind(enum.Enum):
    GW_DISTANCE = "gw_distance"
    CKA = "cka"
    MUTUAL_KNN = "mutual_knn"


@dataclass
class SimilarityMatrix:
    """Square pairwise kernel within one modality."""

    values: np.ndarray
    kind: KernelKind
    k: int | None = None

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[0] != self.values.shape[1]:
            raise SizeMismatchError(f"similarity matrix must be square, got {self.values.shape}")

    @property
    def n(self) -> int:
        return self.values.shape[0]


def _f_zero(a):
    return np.zeros_like(a)


def _f_square(a):
    return a * a


def _h_identity(a):
    return a


def _h_double(a):
    return 2.0 * a


@dataclass(frozen=True)
class DistortionSpec:
    """A decomposable elementwise distance together with its factor functions."""

    name: str
    f1: callable
    f2: callable
    h1: callable
    h2: callable
    compatible_kinds: tuple

    def loss(self, a, b):
        return self.f1(a) + self.f2(b) - self.h1(a) * self.h2(b)


# (A - B)^2 = A^2 + B^2 - (2A) * B; the split of the factor 2 is fixed here
# so that factorized instances are reproducible.
SQUARED_DIFF = DistortionSpec(
    name="squared_diff",
    f1=_f_square,
    f2=_f_square,
    h1=_h_double,
    h2=_h_identity,
    compatible_kinds=(KernelKind.GW_DISTANCE,),
)

NEG_INNER = DistortionSpec(
    name="neg_inner",
    f1=_f_zero,
    f2=_f_zero,
    h1=_h_identity,
    h2=_h_identity,
    compatible_kinds=(KernelKind.CKA, KernelKind.MUTUAL_KNN),
)

SPECS = {s.name: s for s in (SQUARED_DIFF, NEG_INNER)}

DEFAULT_SPEC_FOR_KIND = {
    KernelKind.GW_DISTANCE: SQUARED_DIFF,
    KernelKind.CKA: NEG_INNER,
    KernelKind.MUTUAL_KNN: NEG_INNER,
}


def gw_kernel(prototypes: ClassPrototypes) -> SimilarityMatrix:
    """Pairwise L2 distances between prototype rows."""
    x = prototypes.data.astype(np.float64)
    if x.shape[0] < 2:
        raise SizeMismatchError("need at least 2 prototypes")
    sq = np.sum(x * x, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.maximum(d2, 0.0, out=d2)
    d = np.sqrt(d2)
    d = 0.5 * (d + d.T)
    np.fill_diagonal(d, 0.0)
    return SimilarityMatrix(d, KernelKind.GW_DISTANCE)


def mutual_knn_kernel(prototypes: ClassPrototypes, k: int) -> SimilarityMatrix:
    """Directed k-nearest-neighbor indicator kernel, scaled by 1/sqrt(N*k).

    Row i holds ``1/sqrt(N*k)`` at the k columns with the highest inner product
    to row i (self excluded, ties broken by ascending index), 0 elsewhere.
    The result is generally asymmetric.
    """
    x = prototypes.data.astype(np.float64)
    n = x.shape[0]
    if not 1 <= k <= n - 1:
        raise ValueError(f"k must be in [1, {n - 1}], got {k}")
    sims = x @ x.T
    np.fill_diagonal(sims, -np.inf)
    # stable sort on negated values keeps ascending-index order among ties
    order = np.argsort(-sims, axis=1, kind="stable")
    values = np.zeros((n, n), dtype=np.float64)
    weight = 1.0 / np.sqrt(n * k)
    rows = np.repeat(np.arange(n), k)
    cols = order[:, :k].ravel()
    values[rows, cols] = weight
    return SimilarityMatrix(values, KernelKind.MUTUAL_KNN, k=k)


def cka_kernel(prototypes: ClassPrototypes) -> SimilarityMatrix:
    """Doubly-centered, trace-normalized linear Gram factor.

    The Frobenius inner product of two such factors equals the linear CKA of
    the underlying Gram matrices (double centering is equivalent under the
    trace because the centering projector is idempotent, and it keeps the
    factor symmetric, which the factorized QAP solver requires).
    """
    x = prototypes.data.astype(np.float64)
    n = x.shape[0]
    if n < 2:
        raise SizeMismatchError("need at least 2 prototypes")
    gram = x @ x.T
    centered = gram - gram.mean(axis=0, keepdims=True)
    centered -= centered.mean(axis=1, keepdims=True)
    centered = 0.5 * (centered + centered.T)
    norm_sq = float(np.sum(centered * centered))
    if norm_sq <= 1e-12:
        raise SingularKernelError("centered Gram is numerically zero (identical prototypes?)")
    return SimilarityMatrix(centered / np.sqrt(norm_sq), KernelKind.CKA)


def _check_pair(x: SimilarityMatrix, y: SimilarityMatrix, spec: DistortionSpec):
    if x.n != y.n:
        raise SizeMismatchError(f"kernel sizes differ: {x.n} vs {y.n}")
    if x.kind != y.kind:
        raise KindMismatchError(f"kernel kinds differ: {x.kind} vs {y.kind}")
    if x.kind not in spec.compatible_kinds:
        raise KindMismatchError(f"spec {spec.name!r} is incompatible with kernel kind {x.kind}")


def _check_perm(perm, n: int) -> np.ndarray:
    perm = np.asarray(perm, dtype=np.int64)
    if perm.shape != (n,):
        raise SizeMismatchError(f"permutation length {perm.shape} does not match kernel size {n}")
    if not np.array_equal(np.sort(perm), np.arange(n)):
        raise ValueError("not a permutation of 0..N-1")
    return perm


def distortion_values(xv: np.ndarray, yv: np.ndarray, spec: DistortionSpec, perm: np.ndarray) -> float:
    """Distortion on raw kernel arrays, without type checks (hot path)."""
    yp = yv[np.ix_(perm, perm)]
    if spec is SQUARED_DIFF:
        diff = xv - yp
        return float(np.sum(diff * diff))
    if spec is NEG_INNER:
        return float(-np.sum(xv * yp))
    return float(np.sum(spec.loss(xv, yp)))


def distortion(x: SimilarityMatrix, y: SimilarityMatrix, spec: DistortionSpec, perm) -> float:
    """Sum of ``l(X[i, j], Y[perm[i], perm[j]])`` over all (i, j)."""
    _check_pair(x, y, spec)
    perm = _check_perm(perm, x.n)
    return distortion_values(x.values, y.values, spec, perm)


def shuffle_curve(
    x: SimilarityMatrix,
    y: SimilarityMatrix,
    spec: DistortionSpec,
    levels,
    n_seeds: int,
    seed: int = 0,
):
    """Mean/std of the distortion when a random fraction of indices is shuffled.

    For each level ``alpha``, draws ``n_seeds`` permutations that fix all but
    ``floor(alpha * N)`` uniformly chosen indices (which are uniformly permuted
    among themselves) and evaluates the distortion.

    Returns a list of ``(alpha, mean, std)`` in the order the levels were given.
    """
    _check_pair(x, y, spec)
    levels = [float(a) for a in levels]
    if any(a < 0.0 or a > 1.0 for a in levels):
        raise ValueError("shuffle levels must lie in [0, 1]")
    if n_seeds < 1:
        raise ValueError("n_seeds must be >= 1")
    n = x.n
    rng = np.random.default_rng(seed)
    out = []
    for alpha in levels:
        m = int(np.floor(alpha * n))
        vals = np.empty(n_seeds, dtype=np.float64)
        for s in range(n_seeds):
            perm = np.arange(n)
            if m >= 2:
                chosen = rng.choice(n, size=m, replace=False)
                perm[chosen] = chosen[rng.permutation(m)]
            vals[s] = distortion_values(x.values, y.values, spec, perm)
        out.append((alpha, float(vals.mean()), float(vals.std())))
    return out


def default_shuffle_levels(count: int = 21):
    return list(np.linspace(0.0, 1.0, count))


@dataclass
class FactorizedQap:
    """Koopmans-Beckmann cost pair plus the affine map back to distortion units.

    For every permutation matrix P,
    ``distortion = affine_scale * sum_{ijkl} c1[i,k] c2[j,l] P[i,j] P[k,l] + affine_offset``.
    Both factors are symmetric and entrywise nonnegative.
    """

    c1: np.ndarray
    c2: np.ndarray
    affine_scale: float = 1.0
    affine_offset: float = 0.0

    def __post_init__(self):
        self.c1 = np.ascontiguousarray(self.c1, dtype=np.float64)
        self.c2 = np.ascontiguousarray(self.c2, dtype=np.float64)
        for name, m in (("c1", self.c1), ("c2", self.c2)):
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise SizeMismatchError(f"{name} must be square, got {m.shape}")
            if np.max(np.abs(m - m.T)) > 1e-9:
                raise AsymmetryError(f"{name} is not symmetric")
            if m.min() < 0.0:
                raise ValueError(f"{name} must be nonnegative after shifting")
        if self.c1.shape != self.c2.shape:
            raise SizeMismatchError("c1 and c2 must have the same shape")
        # kill off round-off dust so the solvers see exactly symmetric inputs
        self.c1 = 0.5 * (self.c1 + self.c1.T)
        self.c2 = 0.5 * (self.c2 + self.c2.T)

    @property
    def n(self) -> int:
        return self.c1.shape[0]

    def shifted_cost(self, perm) -> float:
        """QAP objective in raw shifted units."""
        perm = np.asarray(perm, dtype=np.int64)
        return float(np.sum(self.c1 * self.c2[np.ix_(perm, perm)]))

    def mapped_cost(self, perm) -> float:
        """QAP objective mapped back to distortion units."""
        return self.affine_scale * self.shifted_cost(perm) + self.affine_offset

    def map_value(self, shifted_value: float) -> float:
        """Map a raw shifted objective value (e.g. a dual bound) to distortion units."""
        return self.affine_scale * float(shifted_value) + self.affine_offset

    def mapped_cost_ds(self, s: np.ndarray) -> float:
        """Mapped objective of a doubly-stochastic matrix (rows/cols sum to 1).

        The affine map only relies on unit row and column sums, so it applies
        to the Birkhoff relaxation, not just to permutation matrices.
        """
        s = np.asarray(s, dtype=np.float64)
        raw = float(np.sum(s * (self.c1 @ s @ self.c2)))
        return self.affine_scale * raw + self.affine_offset


def factorize(xv: np.ndarray, yv: np.ndarray, spec: DistortionSpec) -> FactorizedQap:
    """Build a nonnegative symmetric Koopmans-Beckmann instance from raw kernels.

    Asymmetric inputs are symmetrized as ``(M + M.T) / 2`` first (the solver
    requires symmetric factors); for such inputs the affine map targets the
    distortion of the symmetrized kernels. Shift constants accumulate in
    float64, so the map is exact to round-off.
    """
    xv = np.asarray(xv, dtype=np.float64)
    yv = np.asarray(yv, dtype=np.float64)
    if xv.shape != yv.shape or xv.ndim != 2 or xv.shape[0] != xv.shape[1]:
        raise SizeMismatchError(f"kernels must be square and same size, got {xv.shape} / {yv.shape}")
    xs = 0.5 * (xv + xv.T)
    ys = 0.5 * (yv + yv.T)
    n = xs.shape[0]
    offset = float(np.sum(spec.f1(xs)) + np.sum(spec.f2(ys)))
    c1 = -spec.h1(xs)
    c2 = spec.h2(ys)
    m1 = float(c1.min())
    m2 = float(c2.min())
    c1 = c1 - m1
    c2 = c2 - m2
    offset += m1 * float(c2.sum()) + m2 * float(c1.sum()) + m1 * m2 * n * n
    return FactorizedQap(c1=c1, c2=c2, affine_scale=1.0, affine_offset=offset)


def to_qap(x: SimilarityMatrix, y: SimilarityMatrix, spec: DistortionSpec) -> FactorizedQap:
    """Compile a kernel pair into a factorized QAP.

    GW and CKA kernels must already be symmetric (within 1e-6); mutual k-NN
    kernels are symmetrized, so the instance optimizes the distortion of the
    symmetrized kernels.
    """
    _check_pair(x, y, spec)
    if x.kind in (KernelKind.GW_DISTANCE, KernelKind.CKA):
        for name, m in (("X", x.values), ("Y", y.values)):
            if np.max(np.abs(m - m.T)) > _SYM_TOL:
                raise AsymmetryError(f"{name} kernel of kind {x.kind} is asymmetric beyond {_SYM_TOL}")
    return factorize(x.values, y.values, spec)


def save_similarity(sim: SimilarityMatrix, out_dir, name) -> Path:
    """Persist a similarity matrix in the shared blob+manifest format."""
    extra = {"kind": sim.kind.value}
    if sim.k is not None:
        extra["k"] = int(sim.k)
    return save_embeddings(sim.values.astype(np.float32), out_dir, name, extra=extra)


def load_similarity(manifest_path) -> SimilarityMatrix:
    m = read_manifest(manifest_path)
    if "kind" not in m.extra:
        raise ManifestError("similarity manifest missing 'kind'")
    kind = KernelKind(m.extra["kind"])
    emb = load_embeddings(manifest_path)
    if emb.n != emb.d:
        raise SizeMismatchError("similarity blob is not square")
    k = m.extra.get("k")
    return SimilarityMatrix(emb.data.astype(np.float64), kind, k=int(k) if k is not None else None)
