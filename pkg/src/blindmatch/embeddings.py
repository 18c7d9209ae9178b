"""Loading, validation and aggregation of embedding matrices.

This module owns the on-disk format shared by all pipelines:

* a binary blob of little-endian row-major float32 values (``n * d * 4`` bytes),
* a JSON manifest next to it recording ``n``, ``d``, ``dtype``, the blob path,
  an optional label file and a sha256 checksum of the blob,
* an optional label file with one integer class id per line (``n`` lines).

Subsampling uses numpy's seeded PCG64 generator (``numpy.random.default_rng``)
so that subsets reproduce across platforms for a fixed numpy version.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import (
    ChecksumMismatchError,
    LabelError,
    ManifestError,
    MissingFileError,
    NonFiniteError,
    ShapeMismatchError,
    ZeroRowError,
)

FORMAT_VERSION = 1

_NORM_TOL = 1e-5
_ZERO_ROW_TOL = 1e-12


@dataclass
class EmbeddingMatrix:
    """Dense matrix of embedding vectors with optional per-row class labels."""

    data: np.ndarray
    labels: np.ndarray | None = None
    modality_tag: str = ""

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.ndim != 2 or self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise ShapeMismatchError(f"expected a non-empty 2d matrix, got shape {self.data.shape}")
        if not np.isfinite(self.data).all():
            raise NonFiniteError("embedding matrix contains non-finite values")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            _check_labels(self.labels, self.data.shape[0])

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    @property
    def n_classes(self) -> int:
        if self.labels is None:
            raise LabelError("embedding matrix has no labels")
        return int(self.labels.max()) + 1


@dataclass
class ClassPrototypes:
    """One aggregated, unit-norm embedding per class."""

    data: np.ndarray
    class_ids: np.ndarray
    subsample_fraction: float = 1.0
    seed: int = 0

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        self.class_ids = np.asarray(self.class_ids, dtype=np.int64)
        if self.data.shape[0] != self.class_ids.shape[0]:
            raise ShapeMismatchError("class_ids length must match prototype count")
        norms = np.linalg.norm(self.data.astype(np.float64), axis=1)
        if np.any(np.abs(norms - 1.0) > _NORM_TOL):
            raise NonFiniteError("prototype rows must be unit-norm within 1e-5")

    @property
    def n(self) -> int:
        return self.data.shape[0]

    def select(self, class_ids) -> "ClassPrototypes":
        """Row-subset the prototypes to the given class ids (in the given order)."""
        ids = np.asarray(class_ids, dtype=np.int64)
        pos = {int(c): i for i, c in enumerate(self.class_ids)}
        try:
            rows = np.array([pos[int(c)] for c in ids], dtype=np.int64)
        except KeyError as exc:
            raise LabelError(f"unknown class id {exc.args[0]}") from exc
        return ClassPrototypes(self.data[rows], ids, self.subsample_fraction, self.seed)


@dataclass
class Manifest:
    """Parsed manifest for a binary blob on disk."""

    path: Path
    n: int
    d: int
    dtype: str
    blob: Path
    checksum: str
    labels: Path | None = None
    extra: dict = field(default_factory=dict)


def _check_labels(labels: np.ndarray, n: int):
    if labels.shape != (n,):
        raise LabelError(f"expected {n} labels, got shape {labels.shape}")
    if labels.min() < 0:
        raise LabelError("labels must be non-negative")
    present = np.unique(labels)
    top = int(labels.max())
    if present.shape[0] != top + 1:
        missing = sorted(set(range(top + 1)) - set(int(x) for x in present))
        raise LabelError(f"labels must cover 0..{top} contiguously; missing {missing[:5]}")


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def read_manifest(manifest_path) -> Manifest:
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise MissingFileError(f"manifest not found: {manifest_path}")
    try:
        raw = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest is not valid JSON: {exc}") from exc
    for key in ("n", "d", "dtype", "blob", "checksum"):
        if key not in raw:
            raise ManifestError(f"manifest missing required key {key!r}")
    if raw["dtype"] != "float32":
        raise ManifestError(f"unsupported dtype {raw['dtype']!r}")
    base = manifest_path.parent
    labels = raw.get("labels")
    known = {"format_version", "n", "d", "dtype", "blob", "checksum", "labels"}
    return Manifest(
        path=manifest_path,
        n=int(raw["n"]),
        d=int(raw["d"]),
        dtype=raw["dtype"],
        blob=base / raw["blob"],
        checksum=raw["checksum"],
        labels=(base / labels) if labels else None,
        extra={k: v for k, v in raw.items() if k not in known},
    )


def load_embeddings(manifest_path) -> EmbeddingMatrix:
    """Load an embedding matrix from disk. Rows come back in file order, unnormalized."""
    m = read_manifest(manifest_path)
    if not m.blob.is_file():
        raise MissingFileError(f"blob not found: {m.blob}")
    blob = m.blob.read_bytes()
    expected = m.n * m.d * 4
    if len(blob) != expected:
        raise ShapeMismatchError(
            f"blob has {len(blob)} bytes, manifest implies {expected} (n={m.n}, d={m.d})"
        )
    digest = hashlib.sha256(blob).hexdigest()
    if m.checksum != f"sha256:{digest}":
        raise ChecksumMismatchError(f"checksum mismatch for {m.blob}")
    data = np.frombuffer(blob, dtype="<f4").reshape(m.n, m.d)
    if not np.isfinite(data).all():
        raise NonFiniteError(f"blob {m.blob} contains non-finite values")
    labels = None
    if m.labels is not None:
        if not m.labels.is_file():
            raise MissingFileError(f"label file not found: {m.labels}")
        labels = np.loadtxt(m.labels, dtype=np.int64, ndmin=1)
    return EmbeddingMatrix(data=data.copy(), labels=labels, modality_tag=str(m.extra.get("modality", "")))


def save_embeddings(data, out_dir, name, labels=None, modality: str = "", extra: dict | None = None) -> Path:
    """Write blob + manifest (+ labels) under ``out_dir``; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    arr = np.ascontiguousarray(data, dtype="<f4")
    if arr.ndim != 2:
        raise ShapeMismatchError(f"expected 2d array, got shape {arr.shape}")
    blob_name = f"{name}.f32"
    blob_path = out_dir / blob_name
    blob_path.write_bytes(arr.tobytes())
    manifest = {
        "format_version": FORMAT_VERSION,
        "n": arr.shape[0],
        "d": arr.shape[1],
        "dtype": "float32",
        "blob": blob_name,
        "checksum": f"sha256:{_sha256_file(blob_path)}",
        "labels": None,
    }
    if labels is not None:
        labels = np.asarray(labels, dtype=np.int64)
        _check_labels(labels, arr.shape[0])
        label_name = f"{name}.labels.txt"
        (out_dir / label_name).write_text("\n".join(str(int(x)) for x in labels) + "\n")
        manifest["labels"] = label_name
    if modality:
        manifest["modality"] = modality
    if extra:
        manifest.update(extra)
    manifest_path = out_dir / f"{name}.manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest_path


def normalize_rows(emb: EmbeddingMatrix) -> EmbeddingMatrix:
    """Divide every row by its L2 norm. Raises ZeroRowError on degenerate rows."""
    norms = np.linalg.norm(emb.data.astype(np.float64), axis=1)
    bad = np.where(norms < _ZERO_ROW_TOL)[0]
    if bad.size:
        raise ZeroRowError(int(bad[0]))
    out = (emb.data.astype(np.float64) / norms[:, None]).astype(np.float32)
    return EmbeddingMatrix(out, labels=emb.labels, modality_tag=emb.modality_tag)


def class_prototypes(emb: EmbeddingMatrix, fraction: float = 1.0, seed: int = 0) -> ClassPrototypes:
    """Aggregate per-class prototypes from a labeled embedding matrix.

    Per class: uniformly subsample ``max(1, floor(fraction * count))`` rows without
    replacement, average the normalized rows and renormalize the mean. Deterministic
    for a fixed seed; ``fraction=1.0`` uses every row and is seed-independent.
    """
    if emb.labels is None:
        raise LabelError("class_prototypes requires labeled embeddings")
    if not (0.0 < fraction <= 1.0):
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    normalized = normalize_rows(emb).data.astype(np.float64)
    n_classes = emb.n_classes
    rng = np.random.default_rng(seed)
    protos = np.empty((n_classes, emb.d), dtype=np.float64)
    for c in range(n_classes):
        rows = np.where(emb.labels == c)[0]
        take = max(1, int(np.floor(fraction * rows.size)))
        if take < rows.size:
            rows = np.sort(rng.choice(rows, size=take, replace=False))
        mean = normalized[rows].mean(axis=0)
        norm = np.linalg.norm(mean)
        if norm < _ZERO_ROW_TOL:
            raise ZeroRowError(c)
        protos[c] = mean / norm
    return ClassPrototypes(
        data=protos.astype(np.float32),
        class_ids=np.arange(n_classes, dtype=np.int64),
        subsample_fraction=fraction,
        seed=seed,
    )
